"""Simulated operator as a finite-horizon LQ optimal controller, and the
automation's path-tracking controller with cooperative / non-cooperative modes.

The operator model treats the automation's input as an exogenous known signal:
the backward Riccati recursion uses only the human input channel for the gains,
the automation weight prices the known signal in the cost without changing the
best response. The reduced design model is documented in docs/design-model.md.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import expm

from . import engine, kinematics
from .core import AutomationParams, LqParams, OperatorCommand, SimConfig, World

log = logging.getLogger(__name__)


class StabilizabilityError(ValueError):
    """(A, B) has an unstable mode that the input cannot reach."""


@dataclass(frozen=True)
class GainSchedule:
    """Time-indexed feedback gains with a reference feedforward term."""

    t_grid: np.ndarray       # (n,)
    gains: np.ndarray        # (n, m, nx)
    feedforward: np.ndarray  # (n, m)
    cost_to_go: np.ndarray   # (n, nx, nx), Riccati matrices on the grid

    def at(self, t: float):
        """Gain and feedforward at the nearest grid point; holds the last gain
        beyond the horizon (with a warning)."""
        if t > self.t_grid[-1]:
            log.warning("gain schedule queried beyond horizon (t=%.2f > %.2f)",
                        t, self.t_grid[-1])
            return self.gains[-1], self.feedforward[-1]
        i = int(round(t / (self.t_grid[1] - self.t_grid[0])))
        i = min(max(i, 0), len(self.t_grid) - 1)
        return self.gains[i], self.feedforward[i]

    def to_json_dict(self) -> dict:
        return {
            "t_grid": self.t_grid.tolist(),
            "gains": self.gains.tolist(),
            "feedforward": self.feedforward.tolist(),
        }


def check_stabilizable(a: np.ndarray, b: np.ndarray, tol: float = 1e-9) -> None:
    """PBH test: every eigenvalue with Re > 0 must be reachable through b.

    Marginally stable uncontrollable modes are admissible for a finite horizon.
    """
    n = a.shape[0]
    for lam in np.linalg.eigvals(a):
        if lam.real <= tol:
            continue
        m = np.hstack([a - lam * np.eye(n), b])
        if np.linalg.matrix_rank(m, tol=1e-9) < n:
            raise StabilizabilityError(
                f"unstable mode {lam:.4g} is not stabilizable through the input")


def discretize(a: np.ndarray, b: np.ndarray, dt: float):
    """Exact zero-order-hold discretization via the augmented matrix exponential."""
    n, m = b.shape
    blk = np.zeros((n + m, n + m))
    blk[:n, :n] = a
    blk[:n, n:] = b
    ed = expm(blk * dt)
    return ed[:n, :n], ed[:n, n:]


def solve_lq_human(p: LqParams) -> GainSchedule:
    """Finite-horizon Riccati recursion for the operator model.

    Discrete-time backward recursion from zero terminal cost on a uniform grid;
    returns time-varying gains for u = -K(t) x + feedforward (feedforward is
    zero here; reference-tracking sources fill it from the scenario).
    """
    a = np.asarray(p.a, dtype=float)
    bh = np.asarray(p.b_human, dtype=float)
    q = np.asarray(p.q, dtype=float)
    rh = np.asarray(p.r_human, dtype=float)
    n = a.shape[0]
    m = bh.shape[1]
    if a.shape != (n, n) or bh.shape[0] != n or q.shape != (n, n) or rh.shape != (m, m):
        raise ValueError("dimension mismatch in LqParams")
    check_stabilizable(a, bh)

    dt = p.gain_dt
    steps = max(1, int(round(p.horizon / dt)))
    ad, bd = discretize(a, bh, dt)
    qd = q * dt
    rd = rh * dt

    t_grid = np.arange(steps + 1) * dt
    gains = np.zeros((steps + 1, m, n))
    ctg = np.zeros((steps + 1, n, n))
    pk = np.zeros((n, n))  # zero terminal cost
    for k in range(steps - 1, -1, -1):
        bpb = rd + bd.T @ pk @ bd
        kk = np.linalg.solve(bpb, bd.T @ pk @ ad)
        pk = qd + ad.T @ pk @ ad - ad.T @ pk @ bd @ kk
        pk = 0.5 * (pk + pk.T)
        gains[k] = kk
        ctg[k] = pk
    gains[steps] = gains[steps - 1]
    return GainSchedule(t_grid=t_grid, gains=gains,
                        feedforward=np.zeros((steps + 1, m)), cost_to_go=ctg)


def human_input(error_state, t: float, schedule: GainSchedule,
                ee_velocity_limit: float = math.inf,
                action_threshold: float = 0.0) -> OperatorCommand:
    """Evaluate the operator model: end-effector velocity command from the
    reduced design state (the simulated human commands only the manipulator).

    Commands below the perceptual action threshold are suppressed (a human
    does not chase centimeter errors on a meter-scale arm); above it the
    threshold is subtracted so the map stays continuous.
    """
    k, ff = schedule.at(t)
    u = -k @ np.asarray(error_state, dtype=float) + ff
    norm = math.hypot(u[0], u[1])
    if norm <= action_threshold:
        u = np.zeros(2)
    else:
        u *= (norm - action_threshold) / norm
        norm -= action_threshold
        if norm > ee_velocity_limit:
            u *= ee_velocity_limit / norm
    return OperatorCommand(ee_velocity=(float(u[0]), float(u[1])), source="human-model")


class HumanModel:
    """Closed-loop operator model bound to a scenario's references."""

    def __init__(self, cfg: SimConfig, scenario):
        self.cfg = cfg
        self.scenario = scenario
        self.limit = cfg.manipulator_params.ee_velocity_limit
        self.schedule = self._with_feedforward(solve_lq_human(cfg.human_model_params))

    def _with_feedforward(self, schedule: GainSchedule) -> GainSchedule:
        """Reference-velocity feedforward from the scenario work line."""
        sp = self.cfg.scenario_params
        v0 = sp.speed
        ff = np.zeros_like(schedule.feedforward)
        eps = 0.05
        for i, t in enumerate(schedule.t_grid):
            s = min(max(t * v0, 0.0), sp.length)
            s0 = max(s - eps, 0.0)
            s1 = min(s + eps, sp.length)
            if s1 > s0:
                d0 = self.scenario.work_line(s0)
                d1 = self.scenario.work_line(s1)
                slope = (d1 - d0) / (s1 - s0)
                # the reference jump is not previewable; cap the feedforward
                ff[i, 0] = max(-self.limit, min(self.limit, slope * v0))
        return replace(schedule, feedforward=ff)

    def error_state(self, world: World) -> np.ndarray:
        d_veh, psi_err, ee_d, ee_v, _ = self.scenario.project(world, self.cfg)
        d_ref, d_work, v_work, _, _ = self.scenario.targets(world.scenario_cursor)
        return np.array([d_veh - d_ref, psi_err, ee_d - d_work, ee_v - v_work])

    def command(self, world: World, t: float) -> OperatorCommand:
        return human_input(self.error_state(world), t, self.schedule, self.limit,
                           self.cfg.human_model_params.action_threshold)


class AutomationController:
    """Vehicle path tracking with an optional cooperative lateral offset.

    noncooperative: follow the prescribed vehicle reference only.
    cooperative: add a lateral reference offset proportional to the manipulator
    end-effector tracking error (saturated), shifting the vehicle into reach.
    """

    def __init__(self, cfg: SimConfig, scenario, mode: str = "cooperative"):
        if mode not in ("cooperative", "noncooperative"):
            raise ValueError(f"unknown mode {mode!r}")
        self.p: AutomationParams = cfg.automation_params
        self.cfg = cfg
        self.scenario = scenario
        self.mode = mode
        self.speed_integral = 0.0
        self.offset = 0.0        # low-passed cooperative offset [m]

    def reset(self):
        self.speed_integral = 0.0
        self.offset = 0.0

    def command(self, world: World, dt: float) -> OperatorCommand:
        p = self.p
        d_veh, psi_err, ee_d, _, v = self.scenario.project(world, self.cfg)
        d_ref, d_work, _, v_ref, curvature = self.scenario.targets(world.scenario_cursor)

        if self.mode == "cooperative":
            e_man = d_work - ee_d
            target = max(-p.coop_saturation, min(p.coop_saturation, p.coop_gain * e_man))
            self.offset += dt / p.coop_filter_tau * (target - self.offset)
        else:
            self.offset = 0.0

        d_target = d_ref + self.offset
        wb = self.cfg.vehicle_params.wheelbase_front + self.cfg.vehicle_params.wheelbase_rear
        steer = (p.steer_kd * (d_target - d_veh) - p.steer_kpsi * psi_err
                 + math.atan(wb * curvature))
        lim = self.cfg.vehicle_params.steer_limit
        steer = max(-lim, min(lim, steer))

        err = v_ref - v
        self.speed_integral += err * dt
        torque = p.speed_kp * err + p.speed_ki * self.speed_integral
        if torque > p.torque_limit:
            torque = p.torque_limit
            self.speed_integral -= err * dt
        elif torque < -p.torque_limit:
            torque = -p.torque_limit
            self.speed_integral -= err * dt
        return OperatorCommand(steer=steer, drive_torque=torque, source="automation")


def automation_input(mode: str, world: World, cfg: SimConfig, scenario,
                     dt: float = 0.005) -> OperatorCommand:
    """One-shot automation evaluation (fresh controller state)."""
    return AutomationController(cfg, scenario, mode).command(world, dt)


class ClosedLoopSource:
    """Command source combining the LQ operator model with the automation.

    Each agent recomputes at ``update_period_steps`` engine steps (default
    200 Hz) and holds its output in between; the two updates run on different
    steps so no single engine step carries both, which keeps the per-step
    compute tail flat in realtime mode. run() still samples every step.
    """

    def __init__(self, cfg: SimConfig, scenario, mode: str = "cooperative",
                 human: HumanModel | None = None):
        self.cfg = cfg
        self.human = human or HumanModel(cfg, scenario)
        self.automation = AutomationController(cfg, scenario, mode)
        self.period = max(1, cfg.automation_params.update_period_steps)
        self.phase_a = self.period // 2
        self.dt = cfg.step_size * self.period
        self._u_h = OperatorCommand(source="human-model")
        self._u_a = OperatorCommand(source="automation")

    @property
    def mode(self) -> str:
        return self.automation.mode

    def sample(self, world: World, step: int):
        r = step % self.period
        if r == 0:
            self._u_h = self.human.command(world, world.t)
        elif r == self.phase_a:
            self._u_a = self.automation.command(world, self.dt)
        return self._u_h, self._u_a
