"""Deterministic fixed-step RK4 integration of the coupled vehicle+manipulator
system, with optional wall-clock pacing for interactive runs.

Flat world state (45 floats): vehicle block [0:16] (see vmsim.vehicle), arm block
[16:44] (see vmsim.manipulator), travelled-distance odometer [44]. Inputs are
zero-order-held across the four RK4 stages; the manipulator coupling wrench is
evaluated inside the derivative so all stages see consistent coupling.
"""

from __future__ import annotations

import gc
import math
import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import kinematics, manipulator as man, vehicle as veh
from .core import OperatorCommand, SimConfig, World

NX = 45
OFF_MAN = 16
IX_ODO = 44

# engine input vector: steering, total drive torque, four desired joint rates
NU = 6


class IntegrationError(RuntimeError):
    """The integrator produced a non-finite state entry."""

    def __init__(self, index: int, t: float):
        self.index = index
        super().__init__(f"non-finite state component {index} at t={t:.4f}")


@dataclass
class StepDiagnostics:
    max_delta: float = 0.0
    clamp_events: int = 0
    compute_time: float = 0.0


@dataclass
class StepResult:
    world: World
    diagnostics: StepDiagnostics = field(default_factory=StepDiagnostics)


@njit(cache=True)
def _world_derivative(x, u, pv, pm):
    dx = np.zeros(NX)
    xv = x[:OFF_MAN]
    xm = x[OFF_MAN:IX_ODO]

    lim = pv[veh.PV_STEER_LIM]
    steer = min(max(u[0], -lim), lim)
    torques = np.empty(4)
    for i in range(4):
        torques[i] = u[1] * pv[veh.PV_SPLIT + i]

    f_glob, m_body, domega, r = veh.vehicle_forces(xv, steer, torques, pv)

    # provisional chassis acceleration (no arm wrench) drives the mount coupling
    g = pv[veh.PV_G]
    inv_mass = 1.0 / pv[veh.PV_MASS]
    a0x = f_glob[0] * inv_mass
    a0y = f_glob[1] * inv_mass
    a0z = f_glob[2] * inv_mass
    wx, wy, wz = xv[9], xv[10], xv[11]
    mx, my, mz = pv[veh.PV_MOUNT], pv[veh.PV_MOUNT + 1], pv[veh.PV_MOUNT + 2]
    c1x = wy * mz - wz * my
    c1y = wz * mx - wx * mz
    c1z = wx * my - wy * mx
    x_ext = np.empty(9)
    x_ext[0] = -r[2, 0] * g
    x_ext[1] = -r[2, 1] * g
    x_ext[2] = -r[2, 2] * g
    x_ext[3] = r[0, 0] * a0x + r[1, 0] * a0y + r[2, 0] * a0z + (wy * c1z - wz * c1y)
    x_ext[4] = r[0, 1] * a0x + r[1, 1] * a0y + r[2, 1] * a0z + (wz * c1x - wx * c1z)
    x_ext[5] = r[0, 2] * a0x + r[1, 2] * a0y + r[2, 2] * a0z + (wx * c1y - wy * c1x)
    x_ext[6] = wx
    x_ext[7] = wy
    x_ext[8] = wz

    mount = np.empty(3)
    mount[0] = mx
    mount[1] = my
    mount[2] = mz
    dxm, phidd = man.arm_derivatives_packed(xm, u[2:6], x_ext, mount, pm)
    fw, tw = man.reaction_wrench_packed(xm, phidd, x_ext, mount, pm)

    f_glob[0] += r[0, 0] * fw[0] + r[0, 1] * fw[1] + r[0, 2] * fw[2]
    f_glob[1] += r[1, 0] * fw[0] + r[1, 1] * fw[1] + r[1, 2] * fw[2]
    f_glob[2] += r[2, 0] * fw[0] + r[2, 1] * fw[1] + r[2, 2] * fw[2]
    tx, ty, tz = veh._cross(mx, my, mz, fw[0], fw[1], fw[2])
    m_body[0] += tw[0] + tx
    m_body[1] += tw[1] + ty
    m_body[2] += tw[2] + tz

    a, alpha = veh.chassis_accelerations(f_glob, m_body, xv, pv)
    droll, dpitch, dyaw = veh.euler_rates(xv[3], xv[4], wx, wy, wz)

    dx[0] = xv[6]
    dx[1] = xv[7]
    dx[2] = xv[8]
    dx[3] = droll
    dx[4] = dpitch
    dx[5] = dyaw
    dx[6:9] = a
    dx[9:12] = alpha
    dx[12:16] = domega
    dx[OFF_MAN:IX_ODO] = dxm
    # odometer advances with forward body speed
    dx[IX_ODO] = r[0, 0] * xv[6] + r[1, 0] * xv[7] + r[2, 0] * xv[8]
    return dx


@njit(cache=True)
def _rate_commands(phi, ee, lengths, lam, ref, gain, dead, limits):
    """Damped-least-squares joint rates plus null-space posture centering.

    Same math as kinematics.velocity_ik followed by the projected posture
    bias, hand-rolled on the 2x2 normal equations for the 2 kHz loop; kept
    bit-consistent with the composed numpy path by a regression test.
    """
    theta = np.empty(4)
    acc = 0.0
    for i in range(4):
        acc += phi[i]
        theta[i] = acc
    j = np.empty((2, 4))
    su = 0.0
    sv = 0.0
    for i in range(3, -1, -1):
        su += lengths[i] * math.sin(theta[i])
        sv += lengths[i] * math.cos(theta[i])
        j[0, i] = -su
        j[1, i] = sv
    a00 = lam * lam
    a01 = 0.0
    a11 = lam * lam
    for i in range(4):
        a00 += j[0, i] * j[0, i]
        a01 += j[0, i] * j[1, i]
        a11 += j[1, i] * j[1, i]
    det = a00 * a11 - a01 * a01
    w0 = (a11 * ee[0] - a01 * ee[1]) / det
    w1 = (a00 * ee[1] - a01 * ee[0]) / det

    out = np.empty(4)
    # posture error through the soft deadband
    p = np.empty(4)
    for i in range(4):
        e = ref[i] - phi[i]
        if e > dead:
            e -= dead
        elif e < -dead:
            e += dead
        else:
            e = 0.0
        p[i] = gain * e
    jp0 = 0.0
    jp1 = 0.0
    for i in range(4):
        jp0 += j[0, i] * p[i]
        jp1 += j[1, i] * p[i]
    q0 = (a11 * jp0 - a01 * jp1) / det
    q1 = (a00 * jp1 - a01 * jp0) / det
    for i in range(4):
        v = j[0, i] * w0 + j[1, i] * w1 + p[i] - (j[0, i] * q0 + j[1, i] * q1)
        lim = limits[i]
        if v > lim:
            v = lim
        elif v < -lim:
            v = -lim
        out[i] = v
    return out


@njit(cache=True, nogil=True)
def _rk4_fused(x, u, h, pv, pm):
    k1 = _world_derivative(x, u, pv, pm)
    k2 = _world_derivative(x + 0.5 * h * k1, u, pv, pm)
    k3 = _world_derivative(x + 0.5 * h * k2, u, pv, pm)
    k4 = _world_derivative(x + h * k3, u, pv, pm)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step(f, x, u, t, h):
    """Classical 4-stage Runge-Kutta step with inputs held constant.

    Generic reference path used by tests and small models; raises
    :class:`IntegrationError` naming the first non-finite derivative component.
    """
    x = np.asarray(x, dtype=float)
    ks = []
    for c, prev in ((0.0, None), (0.5, 0), (0.5, 1), (1.0, 2)):
        xe = x if prev is None else x + c * h * ks[prev]
        k = np.asarray(f(t + c * h, xe, u), dtype=float)
        bad = np.flatnonzero(~np.isfinite(k))
        if bad.size:
            raise IntegrationError(int(bad[0]), t)
        ks.append(k)
    return x + (h / 6.0) * (ks[0] + 2.0 * ks[1] + 2.0 * ks[2] + ks[3])


class EngineRuntime:
    """Packed parameters plus scratch data for stepping one configuration."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.pv = veh.pack_params(cfg.vehicle_params, cfg.gravity)
        self.pm = man.pack_params(cfg.manipulator_params)
        self.lengths = np.asarray(cfg.manipulator_params.link_lengths)
        self.rate_limits = np.asarray(cfg.manipulator_params.rate_limits)
        self.posture_ref = np.asarray(cfg.manipulator_params.posture_reference)
        self.h = cfg.step_size

    def make_world(self, phi=(1.1, -1.9, -0.5, -0.3)) -> World:
        x = np.zeros(NX)
        x[:veh.NV] = veh.default_vehicle_state(self.cfg.vehicle_params)
        x[OFF_MAN:IX_ODO] = man.default_arm_state(self.cfg.manipulator_params, phi)
        return World(t=0.0, x=x)

    def input_vector(self, world: World, u_h: OperatorCommand,
                     u_a: OperatorCommand) -> np.ndarray:
        """Merge operator commands into the engine input vector.

        The automation drives (steering, torque); the human commands the
        end-effector, optionally overriding steering (manual mode). Desired
        joint rates come from damped-least-squares velocity IK.
        """
        mp = self.cfg.manipulator_params
        u = np.zeros(NU)
        u[0] = u_h.steer if u_h.steer is not None else (u_a.steer or 0.0)
        u[1] = u_a.drive_torque
        ee = np.asarray(u_h.ee_velocity, dtype=float)
        norm = math.hypot(ee[0], ee[1])
        if norm > mp.ee_velocity_limit:
            ee = ee * (mp.ee_velocity_limit / norm)
        phi = world.x[OFF_MAN:OFF_MAN + 4]
        # DLS velocity IK plus null-space posture centering: without the
        # centering the redundant chain drifts into stop-pinned postures at
        # the workspace boundary and the greedy task solution cannot retract
        u[2:6] = _rate_commands(phi, ee, self.lengths, mp.ik_damping,
                                self.posture_ref, mp.posture_gain,
                                mp.posture_deadband, self.rate_limits)
        return u

    def step_raw(self, world: World, u: np.ndarray) -> StepDiagnostics:
        """Advance the world in place by one step with a fixed input vector."""
        t0 = time.perf_counter()
        x_next = _rk4_fused(world.x, u, self.h, self.pv, self.pm)

        # hard pressure clamp; the derivative already projects rates at bounds
        clamps = 0
        psup = self.pm[man.PM_PSUP]
        for j in range(4):
            i = OFF_MAN + man.IM_P + j
            p = x_next[i]
            if p < 0.0:
                x_next[i] = 0.0
                clamps += 1
            elif p > psup:
                x_next[i] = psup
                clamps += 1

        if not np.isfinite(x_next).all():
            bad = int(np.flatnonzero(~np.isfinite(x_next))[0])
            raise IntegrationError(bad, world.t)
        if abs(x_next[3]) >= math.pi / 2 or abs(x_next[4]) >= math.pi / 2:
            raise veh.RollPitchDomainError(
                f"attitude out of range at t={world.t:.3f}: "
                f"roll={x_next[3]:.3f}, pitch={x_next[4]:.3f}")

        diag = StepDiagnostics(
            max_delta=float(np.max(np.abs(x_next - world.x))),
            clamp_events=clamps,
            compute_time=time.perf_counter() - t0,
        )
        world.x = x_next
        world.t += self.h
        return diag


def step_world(world: World, u_h: OperatorCommand, u_a: OperatorCommand,
               cfg_or_runtime) -> StepResult:
    """One fixed step of the coupled system under the given operator commands."""
    rt = cfg_or_runtime if isinstance(cfg_or_runtime, EngineRuntime) \
        else EngineRuntime(cfg_or_runtime)
    w = world.copy()
    u = rt.input_vector(w, u_h, u_a)
    diag = rt.step_raw(w, u)
    w.last_human = u_h
    w.last_automation = u_a
    return StepResult(world=w, diagnostics=diag)


class ConstantSource:
    """Command source holding fixed operator commands (mostly for tests)."""

    def __init__(self, u_h: OperatorCommand | None = None,
                 u_a: OperatorCommand | None = None):
        self.u_h = u_h or OperatorCommand(source="human-model")
        self.u_a = u_a or OperatorCommand(source="automation")

    def sample(self, world: World, step: int):
        return self.u_h, self.u_a


@dataclass
class RunStats:
    steps: int = 0
    wall_time: float = 0.0
    realtime_factor: float = 0.0   # simulated time / wall time (pacing included)
    capacity: float = 0.0          # simulated time / pure compute time
    overruns: int = 0
    compute_median: float = 0.0    # full per-step work incl. command processing
    compute_p99: float = 0.0
    kernel_median: float = 0.0     # integrator kernel only
    kernel_p99: float = 0.0


def run(world: World, source, duration: float, cfg: SimConfig,
        telemetry=None, runtime: EngineRuntime | None = None) -> RunStats:
    """Iterate step_world for ``duration`` seconds of simulated time.

    The command source is sampled once per step (zero-order hold between the
    source's own updates). In realtime mode steps are paced to the wall clock
    in batches of ``telemetry_decimation`` with hybrid sleep/spin; overruns are
    counted, not fatal. ``telemetry`` (a TelemetryBuffer) is fed every
    decimation-th step.
    """
    rt = runtime or EngineRuntime(cfg)
    n_steps = int(round(duration / rt.h))
    decim = max(1, cfg.telemetry_decimation)
    compute = np.zeros(n_steps)
    kernel = np.zeros(n_steps)

    gc_was_enabled = gc.isenabled()
    pacing = cfg.realtime
    if pacing:
        gc.collect()
        gc.disable()
    start = time.perf_counter()
    overruns = 0
    try:
        for i in range(n_steps):
            t_step = time.perf_counter()
            u_h, u_a = source.sample(world, i)
            u = rt.input_vector(world, u_h, u_a)
            diag = rt.step_raw(world, u)
            world.last_human = u_h
            world.last_automation = u_a
            compute[i] = time.perf_counter() - t_step
            kernel[i] = diag.compute_time
            if (i + 1) % decim == 0:
                if telemetry is not None:
                    telemetry.record(world, rt, diag, u)
                if pacing:
                    deadline = start + (i + 1) * rt.h
                    now = time.perf_counter()
                    if now > deadline + rt.h * decim:
                        overruns += 1
                    slack = deadline - now
                    if slack > 0.004:
                        time.sleep(slack - 0.003)
                    # side-effect-free warmup keeps the command path hot
                    # across the sleep (input_vector is pure)
                    rt.input_vector(world, u_h, u_a)
                    while time.perf_counter() < deadline:
                        pass
    finally:
        if pacing and gc_was_enabled:
            gc.enable()
    wall = time.perf_counter() - start

    total_compute = float(compute.sum())
    stats = RunStats(
        steps=n_steps,
        wall_time=wall,
        realtime_factor=(n_steps * rt.h) / wall if wall > 0 else math.inf,
        capacity=(n_steps * rt.h) / total_compute if total_compute > 0 else math.inf,
        overruns=overruns,
        compute_median=float(np.median(compute)) if n_steps else 0.0,
        compute_p99=float(np.percentile(compute, 99)) if n_steps else 0.0,
        kernel_median=float(np.median(kernel)) if n_steps else 0.0,
        kernel_p99=float(np.percentile(kernel, 99)) if n_steps else 0.0,
    )
    return stats
