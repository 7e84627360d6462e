"""Validation-scenario reference generation and tracking metrics.

The road runs along +x and bends into a gentle constant-radius left curve; all
references are parameterized by travelled arc length and expressed in the road
frame (s = along the road, d = lateral offset, +d toward the work side). The
work line is the ground-fixed lateral line the manipulator end-effector has to
follow; it carries the single documented jump (hidden obstacle) and the
stretch phase. The vehicle reference carries the early lateral correction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np
from numba import njit

from . import kinematics, vehicle as veh
from .core import ScenarioParams, SimConfig, World


def _smoothstep(x: float) -> float:
    """C1 ramp on [0, 1]."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    return x * x * (3.0 - 2.0 * x)


@njit(cache=True)
def _project_world(x, mount, lengths, curve_start, curve_radius, s):
    """(vehicle d, heading error, ee road-lateral, ee plane height, forward v)
    of a world state against the road frame at arc position s."""
    if s <= curve_start:
        cx, cy = s, 0.0
        heading = 0.0
    else:
        a = (s - curve_start) / curve_radius
        cx = curve_start + curve_radius * math.sin(a)
        cy = curve_radius * (1.0 - math.cos(a))
        heading = a
    sh, ch = math.sin(heading), math.cos(heading)

    r = veh.rotation_matrix(x[3], x[4], x[5])
    d_veh = -(x[0] - cx) * sh + (x[1] - cy) * ch
    psi_err = x[5] - heading

    theta = 0.0
    u = 0.0
    v = 0.0
    for i in range(4):
        theta += x[16 + i]
        u += lengths[i] * math.cos(theta)
        v += lengths[i] * math.sin(theta)
    bx = mount[0]
    by = mount[1] + u
    bz = mount[2] + v
    ex = x[0] + r[0, 0] * bx + r[0, 1] * by + r[0, 2] * bz
    ey = x[1] + r[1, 0] * bx + r[1, 1] * by + r[1, 2] * bz
    ee_d = -(ex - cx) * sh + (ey - cy) * ch

    v_fwd = r[0, 0] * x[6] + r[1, 0] * x[7] + r[2, 0] * x[8]
    return d_veh, psi_err, ee_d, v, v_fwd


@dataclass(frozen=True)
class RefSample:
    """References at one arc-length position."""

    s: float
    d_ref: float         # vehicle lateral reference (road frame) [m]
    d_work: float        # work line / EE lateral reference (road frame) [m]
    v_work: float        # EE height reference in the arm plane [m]
    v_ref: float         # speed reference [m/s]
    curvature: float     # road curvature [1/m]
    pose: tuple          # world (x, y, heading) of the vehicle reference


@dataclass(frozen=True)
class Obstacle:
    s: float
    d: float
    extent: float


class Scenario:
    """Reference trajectories and events; a pure function of arc length."""

    def __init__(self, params: ScenarioParams):
        self.p = params
        self.obstacle = Obstacle(s=params.step_position,
                                 d=params.work_offset,
                                 extent=params.obstacle_extent)

    # -- road geometry -----------------------------------------------------

    def road_heading(self, s: float) -> float:
        p = self.p
        if s <= p.curve_start:
            return 0.0
        return (s - p.curve_start) / p.curve_radius

    def road_point(self, s: float) -> tuple[float, float]:
        p = self.p
        if s <= p.curve_start:
            return s, 0.0
        r = p.curve_radius
        a = (s - p.curve_start) / r
        return p.curve_start + r * math.sin(a), r * (1.0 - math.cos(a))

    def curvature(self, s: float) -> float:
        return 0.0 if s <= self.p.curve_start else 1.0 / self.p.curve_radius

    def lateral_of(self, x: float, y: float, s: float) -> float:
        """Road-frame lateral offset of a world point, evaluated at arc s."""
        cx, cy = self.road_point(s)
        h = self.road_heading(s)
        return -(x - cx) * math.sin(h) + (y - cy) * math.cos(h)

    # -- references ---------------------------------------------------------

    def vehicle_line(self, s: float) -> float:
        p = self.p
        return p.correction_offset * _smoothstep((s - p.correction_start)
                                                 / p.correction_length)

    def work_line(self, s: float) -> float:
        p = self.p
        d = p.work_offset
        # hidden-obstacle jump: the single discontinuity, recovered by a ramp
        if p.step_position <= s < p.step_recovery_end:
            if s < p.step_recovery_start:
                d -= p.step_height
            else:
                d -= p.step_height * (1.0 - (s - p.step_recovery_start)
                                      / (p.step_recovery_end - p.step_recovery_start))
        # stretch phase
        lift = p.work_offset_extended - p.work_offset
        if s >= p.extension_start:
            if s < p.extension_hold_end:
                d += lift * _smoothstep((s - p.extension_start) / p.extension_ramp)
            else:
                d += lift * (1.0 - _smoothstep((s - p.extension_hold_end)
                                               / (p.extension_end - p.extension_hold_end)))
        return d

    def speed_profile(self, s: float) -> float:
        return self.p.speed

    def reference_at(self, s: float) -> RefSample:
        """References at arc position s; raises ValueError outside [0, length]."""
        if not 0.0 <= s <= self.p.length:
            raise ValueError(f"arc position {s:.2f} outside scenario [0, {self.p.length}]")
        return self._sample(s)

    def clamped_refs(self, s: float) -> RefSample:
        return self._sample(min(max(s, 0.0), self.p.length))

    def _sample(self, s: float) -> RefSample:
        d_ref = self.vehicle_line(s)
        cx, cy = self.road_point(s)
        h = self.road_heading(s)
        pose = (cx - d_ref * math.sin(h), cy + d_ref * math.cos(h), h)
        return RefSample(s=s, d_ref=d_ref, d_work=self.work_line(s),
                         v_work=self.p.work_height_plane, v_ref=self.speed_profile(s),
                         curvature=self.curvature(s), pose=pose)

    # -- world-state projections --------------------------------------------

    def bind(self, cfg: SimConfig) -> None:
        """Cache the geometry arrays the fast projector needs."""
        self._mount = np.asarray(cfg.vehicle_params.mount_offset)
        self._lengths = np.asarray(cfg.manipulator_params.link_lengths)

    def project(self, world: World, cfg: SimConfig):
        """One-shot road-frame projection of the full world state.

        Returns (vehicle d, heading error, ee road-lateral, ee plane height,
        forward speed) at the world's scenario cursor.
        """
        if not hasattr(self, "_mount"):
            self.bind(cfg)
        s = min(max(world.scenario_cursor, 0.0), self.p.length)
        return _project_world(world.x, self._mount, self._lengths,
                              self.p.curve_start, self.p.curve_radius, s)

    def targets(self, s: float):
        """(d_ref, d_work, v_work, v_ref, curvature) without object building."""
        s = min(max(s, 0.0), self.p.length)
        return (self.vehicle_line(s), self.work_line(s), self.p.work_height_plane,
                self.speed_profile(s), self.curvature(s))

    def vehicle_error(self, world: World, refs: RefSample) -> tuple[float, float]:
        """(road-frame lateral position, heading error) of the vehicle."""
        x = world.x
        d = self.lateral_of(x[0], x[1], refs.s)
        psi_err = x[5] - self.road_heading(refs.s)
        return d, psi_err

    def ee_position(self, world: World, cfg: SimConfig) -> tuple[float, float]:
        """(road-frame lateral, plane height) of the manipulator end-effector."""
        x = world.x
        phi = x[16:20]
        u, v = kinematics.forward_kinematics(phi, cfg.manipulator_params.link_lengths)
        r = veh.rotation_matrix(x[3], x[4], x[5])
        mo = cfg.vehicle_params.mount_offset
        body = np.array([mo[0], mo[1] + u, mo[2] + v])
        world_pos = x[0:3] + r @ body
        return self.lateral_of(world_pos[0], world_pos[1], world.scenario_cursor), float(v)

    def forward_speed(self, world: World) -> float:
        x = world.x
        r = veh.rotation_matrix(x[3], x[4], x[5])
        return float(r[0, 0] * x[6] + r[1, 0] * x[7] + r[2, 0] * x[8])

    # -- serialization --------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps(asdict(self.p), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        data = json.loads(text)
        fields = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
        return cls(ScenarioParams(**fields))


def build_validation_scenario(cfg: SimConfig) -> Scenario:
    """The validation scenario: early vehicle correction, work-line jump at the
    obstacle, gentle curve with the stretch phase."""
    return Scenario(cfg.scenario_params)


def reference_at(scenario: Scenario, x: float):
    """(vehicle reference pose, manipulator reference position, v_ref) at arc x."""
    r = scenario.reference_at(x)
    return r.pose, (r.d_work, r.v_work), r.v_ref


def _segment_mask(s: np.ndarray, lo: float, hi: float) -> np.ndarray:
    return (s >= lo) & (s <= hi)


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(x)))) if x.size else 0.0


def tracking_metrics(telemetry, scenario: Scenario, require_coverage=True) -> dict:
    """Tracking-quality summary of a telemetry log against the scenario.

    Expects the log to expose ``column(name)`` for the documented telemetry
    columns. Raises ValueError when the log does not cover the scenario
    (disable with ``require_coverage`` for partial-run analyses).
    """
    s = telemetry.column("odo_s")
    if s.size == 0:
        raise ValueError("empty telemetry log")
    p = scenario.p
    if require_coverage and s.max() < 0.9 * p.length:
        raise ValueError(
            f"log covers only {s.max():.1f} m of a {p.length:.1f} m scenario")

    d_veh = telemetry.column("d_veh")
    ee_d = telemetry.column("ee_d")
    roll = telemetry.column("roll")
    pitch = telemetry.column("pitch")

    d_ref = np.array([scenario.vehicle_line(si) for si in s])
    d_work = np.array([scenario.work_line(si) for si in s])
    veh_err = d_veh - d_ref
    man_err = ee_d - d_work

    segments = {
        "approach": (0.0, p.correction_start),
        "correction": (p.correction_start, p.step_position),
        "step": p.step_window,
        "extension": (p.extension_start, p.extension_end),
        "hold": p.hold_window,
    }
    seg_metrics = {}
    for name, (lo, hi) in segments.items():
        m = _segment_mask(s, lo, hi)
        seg_metrics[name] = {
            "vehicle_rms": _rms(veh_err[m]),
            "vehicle_max": float(np.max(np.abs(veh_err[m]))) if m.any() else 0.0,
            "manipulator_rms": _rms(man_err[m]),
            "manipulator_max": float(np.max(np.abs(man_err[m]))) if m.any() else 0.0,
        }

    checkpoints = {}
    for c in p.checkpoints:
        m = _segment_mask(s, c - p.checkpoint_halfwidth, c + p.checkpoint_halfwidth)
        checkpoints[f"{c:g}"] = {
            "vehicle_rms": _rms(veh_err[m]),
            "manipulator_rms": _rms(man_err[m]),
        }

    return {
        "vehicle_rms": _rms(veh_err),
        "vehicle_max": float(np.max(np.abs(veh_err))),
        "manipulator_rms": _rms(man_err),
        "manipulator_max": float(np.max(np.abs(man_err))),
        "segments": seg_metrics,
        "checkpoints": checkpoints,
        "roll_min": float(roll.min()),
        "roll_max": float(roll.max()),
        "pitch_min": float(pitch.min()),
        "pitch_max": float(pitch.max()),
        "clamp_events": int(telemetry.column("clamp_events").sum()),
    }
