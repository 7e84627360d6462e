"""Domain types, physical parameter sets, config loading/validation, world container.

Everything numeric that the dynamics read comes from :class:`SimConfig`; the defaults
below are plausible heavy-machine magnitudes and are *not* calibrated to a specific
vehicle (see docs/config-schema.md).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict, replace
from typing import Any, Optional

import numpy as np

SCHEMA_VERSION = 1

Vec2 = tuple[float, float]
Vec3 = tuple[float, float, float]
Vec4 = tuple[float, float, float, float]


class ConfigError(ValueError):
    """Malformed or invalid configuration document."""


@dataclass(frozen=True)
class VehicleParams:
    """Chassis, suspension, wheel and tire parameters (SI units)."""

    mass: float = 7500.0                     # chassis mass [kg]
    inertia: Vec3 = (4000.0, 12000.0, 13000.0)   # diagonal body inertia [kg m^2]
    wheel_inertia: float = 40.0              # spin inertia per wheel incl. driveline [kg m^2]
    wheel_radius: float = 0.5                # [m]
    tire_long_stiffness: Vec4 = (6.0e4, 6.0e4, 6.0e4, 6.0e4)  # [N / unit slip], FL FR RL RR
    tire_lat_stiffness: Vec2 = (9.0e4, 9.0e4)    # [N/rad] per wheel, front/rear axle
    slip_threshold: float = 0.15             # v_N, lower bound of the slip denominator [m/s]
    susp_stiffness: Vec2 = (3.7e5, 3.7e5)    # heave spring per axle [N/m]
    susp_damping: Vec2 = (3.0e4, 3.0e4)      # heave damper per axle [N s/m]
    roll_stiffness: Vec2 = (1.4e5, 1.4e5)    # roll torsion per axle [N m/rad]
    roll_damping: Vec2 = (4.0e4, 4.0e4)      # roll damper per axle [N m s/rad]
    wheelbase_front: float = 1.8             # CoG to front axle [m]
    wheelbase_rear: float = 1.8              # CoG to rear axle [m]
    track_width: float = 2.2                 # [m]
    cog_height: float = 1.15                 # static loaded CoG height over ground [m]
    mount_offset: Vec3 = (0.6, 0.9, 0.25)    # manipulator mount in body frame rel. CoG [m]
    steer_limit: float = 0.6                 # mechanical steering limit [rad]
    drive_split: Vec4 = (0.25, 0.25, 0.25, 0.25)  # drive torque share per wheel


@dataclass(frozen=True)
class ManipulatorParams:
    """Link geometry/inertia, hydraulics, friction, limits and low-level gains."""

    link_lengths: Vec4 = (1.8, 1.4, 1.0, 0.5)          # [m]
    link_masses: Vec4 = (600.0, 500.0, 400.0, 300.0)   # [kg]
    link_com_offsets: Vec4 = (0.9, 0.7, 0.5, 0.25)     # CoG along link axis [m]
    link_inertias: Vec4 = (160.0, 80.0, 35.0, 8.0)     # about CoG, plane normal [kg m^2]
    joint_lower: Vec4 = (-0.12, -2.60, -1.80, -1.80)   # [rad]
    joint_upper: Vec4 = (1.50, -0.08, 0.60, 0.60)      # [rad]
    rate_limits: Vec4 = (0.5, 0.6, 0.8, 1.0)           # joint rate command limits [rad/s]
    ee_velocity_limit: float = 0.6                     # [m/s]
    ik_damping: float = 0.2                            # DLS damping [m]
    posture_gain: float = 0.4                          # null-space centering [1/s]
    posture_deadband: float = 0.25                     # centering ignores small errors [rad]
    posture_reference: Vec4 = (0.9, -1.6, -0.5, -0.3)  # preferred elbow-down posture [rad]
    # hydraulics (single-acting cylinder equivalent per joint)
    cylinder_area: Vec4 = (0.018, 0.012, 0.008, 0.005)         # piston area [m^2]
    lever_base: Vec4 = (0.45, 0.35, 0.28, 0.20)                # lever map c0 [m]
    lever_amplitude: Vec4 = (0.12, 0.10, 0.08, 0.06)           # lever map c1 [m]
    lever_phase: Vec4 = (-0.775, 1.325, 0.3, 0.3)              # lever map phase [rad]
    dead_volume: Vec4 = (6.0e-3, 4.0e-3, 3.0e-3, 2.0e-3)       # chamber dead volume [m^3]
    bulk_modulus: float = 1.0e9                                # oil bulk modulus [Pa]
    valve_flow_gain: Vec4 = (5.0e-3, 4.0e-3, 3.0e-3, 2.0e-3)   # full-open full-drop flow [m^3/s]
    valve_time_constant: float = 0.05                          # valve motor lag [s]
    flow_time_constant: float = 0.004                          # line flow lag [s]
    supply_pressure: float = 2.0e7                             # [Pa]
    orifice_smoothing: float = 1.0e5                           # sqrt smoothing scale [Pa]
    # LuGre friction per joint
    sigma0: Vec4 = (1.5e5, 9.0e4, 5.0e4, 2.5e4)        # bristle stiffness [N m/rad]
    sigma1: Vec4 = (400.0, 250.0, 150.0, 80.0)         # bristle damping [N m s/rad]
    sigma2: Vec4 = (400.0, 300.0, 200.0, 100.0)        # viscous [N m s/rad]
    coulomb_level: Vec4 = (1500.0, 900.0, 500.0, 250.0)    # [N m]
    static_level: Vec4 = (2250.0, 1350.0, 750.0, 375.0)    # Stribeck peak [N m]
    stribeck_velocity: Vec4 = (0.05, 0.05, 0.05, 0.05)     # [rad/s]
    # low-level joint-rate controller (valve command per rad/s of rate error)
    rate_kp: Vec4 = (1.5, 1.5, 1.5, 1.5)
    rate_ki: Vec4 = (2.0, 2.0, 2.0, 2.0)
    rate_deadband: float = 0.012               # valve center deadband [rad/s]
    rate_integrator_leak: float = 0.5          # PI integrator bleed [1/s]
    # virtual joint end stops
    stop_stiffness: float = 2.0e6                      # [N m/rad]
    stop_damping: float = 2.0e4                        # [N m s/rad]


@dataclass(frozen=True)
class LqParams:
    """Linear design model and quadratic weights for the operator model.

    Matrices are stored as nested tuples so configs compare and round-trip cleanly;
    consumers convert with ``np.asarray``. Dimensions: A is n x n, b_human n x m_h,
    b_automation n x m_a, weights accordingly.
    """

    a: tuple = ((0.0, 2.0, 0.0, 0.0),
                (0.0, 0.0, 0.0, 0.0),
                (0.0, 2.0, 0.0, 0.0),
                (0.0, 0.0, 0.0, 0.0))
    b_human: tuple = ((0.0, 0.0),
                      (0.0, 0.0),
                      (1.0, 0.0),
                      (0.0, 1.0))
    b_automation: tuple = ((0.0,), (0.5555555555555556,), (0.0,), (0.0,))
    q: tuple = ((0.0, 0.0, 0.0, 0.0),
                (0.0, 0.0, 0.0, 0.0),
                (0.0, 0.0, 1.2, 0.0),
                (0.0, 0.0, 0.0, 1.2))
    r_human: tuple = ((1.0, 0.0), (0.0, 1.0))
    r_automation: tuple = ((1.0,),)
    horizon: float = 80.0         # tau_end [s]
    gain_dt: float = 0.05         # gain-grid discretization [s]
    action_threshold: float = 0.03  # operator ignores commands below this norm [m/s]


@dataclass(frozen=True)
class AutomationParams:
    """Vehicle path-tracking and cooperative-assist parameters."""

    steer_kd: float = 0.5         # steering per lateral error [rad/m]
    steer_kpsi: float = 1.8       # steering per heading error [rad/rad]
    speed_kp: float = 4000.0      # drive torque per speed error [N m/(m/s)]
    speed_ki: float = 600.0
    torque_limit: float = 6000.0  # total drive torque bound [N m]
    coop_gain: float = 1.0        # lateral reference offset per m of EE error
    coop_saturation: float = 1.5  # max offset [m]
    coop_filter_tau: float = 1.5  # offset low-pass [s]
    update_period_steps: int = 10  # internal recompute cadence (engine steps)


@dataclass(frozen=True)
class ScenarioParams:
    """Geometry of the validation scenario (arc-length parameterized)."""

    length: float = 140.0
    speed: float = 2.0                    # v_ref [m/s]
    correction_start: float = 20.0        # vehicle lateral correction begins [m]
    correction_length: float = 10.0
    correction_offset: float = -0.5       # lasting lateral shift [m]
    step_position: float = 45.0           # manipulator reference jump [m]
    step_height: float = 0.4              # jump magnitude, applied toward the road [m]
    step_recovery_start: float = 49.0
    step_recovery_end: float = 55.0
    extension_start: float = 60.0
    extension_ramp: float = 5.0
    extension_hold_end: float = 95.0
    extension_end: float = 100.0
    work_offset: float = 3.0              # nominal work-line lateral offset [m]
    work_offset_extended: float = 5.3     # work line during the stretch phase [m]
    work_height_plane: float = -0.6       # end-effector height target in arm plane [m]
    curve_start: float = 60.0
    curve_radius: float = 200.0
    obstacle_extent: float = 4.0
    checkpoints: Vec3 = (30.0, 75.0, 100.0)
    checkpoint_halfwidth: float = 5.0
    extended_phase: Vec2 = (65.0, 95.0)   # window for roll-band evaluation [m]
    hold_window: Vec2 = (124.0, 138.0)    # constant-angle hold window on the curve [m]
    step_window: Vec2 = (44.0, 58.0)      # step-maneuver window [m]


@dataclass(frozen=True)
class SimConfig:
    """Validated top-level simulation configuration."""

    step_size: float = 0.0005
    solver: str = "rk4"
    realtime: bool = False
    telemetry_decimation: int = 20
    gravity: float = 9.81
    scenario_name: str = "validation"
    vehicle_params: VehicleParams = field(default_factory=VehicleParams)
    manipulator_params: ManipulatorParams = field(default_factory=ManipulatorParams)
    human_model_params: LqParams = field(default_factory=LqParams)
    automation_params: AutomationParams = field(default_factory=AutomationParams)
    scenario_params: ScenarioParams = field(default_factory=ScenarioParams)


_SECTIONS = {
    "vehicle_params": VehicleParams,
    "manipulator_params": ManipulatorParams,
    "human_model_params": LqParams,
    "automation_params": AutomationParams,
    "scenario_params": ScenarioParams,
}


def _coerce(value, template):
    """Coerce JSON values onto the dataclass field shapes (lists -> tuples)."""
    if isinstance(template, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"expected a list, got {value!r}")
        if len(value) != len(template):
            raise ConfigError(f"expected {len(template)} entries, got {len(value)}")
        return tuple(_coerce(v, t) for v, t in zip(value, template))
    if isinstance(template, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"expected a boolean, got {value!r}")
        return value
    if isinstance(template, int) and not isinstance(template, bool):
        if not isinstance(value, (int, float)) or value != int(value):
            raise ConfigError(f"expected an integer, got {value!r}")
        return int(value)
    if isinstance(template, float):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"expected a number, got {value!r}")
        return float(value)
    if isinstance(template, str):
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}")
        return value
    raise ConfigError(f"unsupported field template {template!r}")


def _build_section(cls, data: dict, path: str):
    defaults = cls()
    kwargs = {}
    names = {f for f in defaults.__dataclass_fields__}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"{path}.{key}: unknown field")
        try:
            kwargs[key] = _coerce(value, getattr(defaults, key))
        except ConfigError as exc:
            raise ConfigError(f"{path}.{key}: {exc}") from None
    return replace(defaults, **kwargs)


def load_config(text: str) -> SimConfig:
    """Parse a JSON configuration document into a validated :class:`SimConfig`.

    Unspecified fields take the documented defaults. Raises :class:`ConfigError`
    on malformed documents or on the first violated invariant.
    """
    if not text.strip():
        data: dict[str, Any] = {}
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("top-level document must be a JSON object")

    defaults = SimConfig()
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"{key}: expected an object")
            kwargs[key] = _build_section(_SECTIONS[key], value, key)
        elif key in defaults.__dataclass_fields__:
            kwargs[key] = _coerce(value, getattr(defaults, key))
        else:
            raise ConfigError(f"{key}: unknown field")
    cfg = replace(defaults, **kwargs)

    violations = validate_params(cfg)
    if violations:
        raise ConfigError(violations[0])
    return cfg


def load_config_file(path) -> SimConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return load_config(fh.read())


def serialize_config(cfg: SimConfig) -> str:
    """Serialize a config to canonical JSON; ``load_config`` round-trips it."""
    return json.dumps(asdict(cfg), indent=2, sort_keys=True)


def _positive(violations, prefix, name, value):
    vals = value if isinstance(value, tuple) else (value,)
    if any(not (v > 0) for v in vals):
        violations.append(f"{prefix}.{name}: must be > 0")


def validate_params(cfg: SimConfig) -> list[str]:
    """Return all invariant violations (empty list when the config is valid)."""
    v: list[str] = []
    if not cfg.step_size > 0:
        v.append("step_size: must be > 0")
    if cfg.solver != "rk4":
        v.append("solver: must be 'rk4'")
    if cfg.telemetry_decimation < 1:
        v.append("telemetry_decimation: must be >= 1")
    if not cfg.gravity > 0:
        v.append("gravity: must be > 0")

    vp = cfg.vehicle_params
    for name in ("mass", "inertia", "wheel_inertia", "wheel_radius",
                 "tire_long_stiffness", "tire_lat_stiffness", "susp_stiffness",
                 "susp_damping", "roll_stiffness", "roll_damping", "wheelbase_front",
                 "wheelbase_rear", "track_width", "cog_height", "steer_limit"):
        _positive(v, "vehicle_params", name, getattr(vp, name))
    if not vp.slip_threshold > 0:
        v.append("vehicle_params.slip_threshold: v_N must be > 0")
    if abs(sum(vp.drive_split) - 1.0) > 1e-9:
        v.append("vehicle_params.drive_split: must sum to 1")

    mp = cfg.manipulator_params
    for name in ("link_lengths", "link_masses", "link_com_offsets", "link_inertias",
                 "rate_limits", "ee_velocity_limit", "ik_damping", "cylinder_area",
                 "lever_base", "dead_volume", "bulk_modulus", "valve_flow_gain",
                 "valve_time_constant", "flow_time_constant", "supply_pressure",
                 "orifice_smoothing", "sigma0", "sigma2", "stribeck_velocity",
                 "coulomb_level", "stop_stiffness", "stop_damping"):
        _positive(v, "manipulator_params", name, getattr(mp, name))
    for j in range(4):
        if not mp.joint_lower[j] < mp.joint_upper[j]:
            v.append(f"manipulator_params.joint_limits[{j}]: lower must be < upper")
        if mp.static_level[j] < mp.coulomb_level[j]:
            v.append(f"manipulator_params.static_level[{j}]: must be >= coulomb_level")
        if mp.lever_base[j] - abs(mp.lever_amplitude[j]) <= 0:
            v.append(f"manipulator_params.lever_base[{j}]: lever arm must stay positive")

    hp = cfg.human_model_params
    a = np.asarray(hp.a, dtype=float)
    bh = np.asarray(hp.b_human, dtype=float)
    ba = np.asarray(hp.b_automation, dtype=float)
    q = np.asarray(hp.q, dtype=float)
    rh = np.asarray(hp.r_human, dtype=float)
    ra = np.asarray(hp.r_automation, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n) or bh.shape[0] != n or ba.shape[0] != n or q.shape != (n, n):
        v.append("human_model_params: dimension mismatch between a, b_human, b_automation, q")
    else:
        if not np.allclose(q, q.T):
            v.append("human_model_params.q: must be symmetric")
        elif np.linalg.eigvalsh(q).min() < -1e-9:
            v.append("human_model_params.q: must be positive semidefinite")
        for name, mat, cols in (("r_human", rh, bh.shape[1]), ("r_automation", ra, ba.shape[1])):
            if mat.shape != (cols, cols):
                v.append(f"human_model_params.{name}: dimension mismatch")
            elif not np.allclose(mat, mat.T) or np.linalg.eigvalsh(mat).min() <= 0:
                v.append(f"human_model_params.{name}: must be symmetric positive definite")
    if not hp.horizon > 0:
        v.append("human_model_params.horizon: must be > 0")
    if not hp.gain_dt > 0:
        v.append("human_model_params.gain_dt: must be > 0")

    ap = cfg.automation_params
    for name in ("speed_kp", "torque_limit", "coop_saturation", "coop_filter_tau"):
        _positive(v, "automation_params", name, getattr(ap, name))
    if ap.update_period_steps < 1:
        v.append("automation_params.update_period_steps: must be >= 1")
    if ap.coop_gain < 0:
        v.append("automation_params.coop_gain: must be >= 0")

    sp = cfg.scenario_params
    for name in ("length", "speed", "curve_radius"):
        _positive(v, "scenario_params", name, getattr(sp, name))
    if not 0 < sp.step_position < sp.length:
        v.append("scenario_params.step_position: must lie inside the scenario")
    return v


@dataclass(frozen=True)
class OperatorCommand:
    """One operator's input sample.

    ``source`` is one of ``human-live``, ``human-model``, ``automation``.
    """

    steer: Optional[float] = None          # steering angle [rad]; None = no request
    drive_torque: float = 0.0              # total drive torque request [N m]
    ee_velocity: Vec2 = (0.0, 0.0)         # desired end-effector plane velocity [m/s]
    source: str = "automation"

    def finite(self) -> bool:
        vals = [self.drive_torque, *self.ee_velocity]
        if self.steer is not None:
            vals.append(self.steer)
        return all(math.isfinite(x) for x in vals)


ZERO_HUMAN = OperatorCommand(source="human-model")
ZERO_AUTOMATION = OperatorCommand(source="automation")


@dataclass
class World:
    """Composite simulation state: time plus the flat coupled state vector.

    The flat layout is owned by :mod:`vmsim.engine`; typed views are built on
    demand through the engine's accessors. ``x`` entries must stay finite and
    ``t`` is monotonically non-decreasing across steps.
    """

    t: float
    x: np.ndarray                           # flat state vector, float64
    last_human: OperatorCommand = ZERO_HUMAN
    last_automation: OperatorCommand = ZERO_AUTOMATION
    mode: str = "cooperative"

    @property
    def scenario_cursor(self) -> float:
        """Travelled arc length used to query scenario references [m]."""
        return float(self.x[-1])

    def copy(self) -> "World":
        return World(self.t, self.x.copy(), self.last_human, self.last_automation, self.mode)
