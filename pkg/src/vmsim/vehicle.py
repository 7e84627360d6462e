"""Nonlinear vehicle dynamics: 6-DOF chassis, axle suspensions, four slipping wheels.

The chassis is a rigid body with roll-pitch-yaw Euler kinematics. Each axle carries a
preloaded heave spring-damper plus a roll torsion spring-damper acting between the
ground-following wheels and the chassis; suspension deflections are therefore derived
from chassis pose rather than integrated separately (docs/vehicle-model.md).

Local state layout (16 floats):
  0:3  position x, y, z (global)         3:6  roll, pitch, yaw
  6:9  velocity (global)                 9:12 angular rate (body)
  12:16 wheel spin speeds FL, FR, RL, RR
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .core import VehicleParams

NV = 16

# packed parameter layout (float64 vector, see pack_params)
PV_MASS, PV_IXX, PV_IYY, PV_IZZ = 0, 1, 2, 3
PV_WHEEL_INERTIA, PV_WHEEL_RADIUS, PV_VN = 4, 5, 6
PV_CLONG = 7        # 4 entries
PV_CLAT = 11        # 2 entries (front, rear axle)
PV_KSUSP = 13       # 2
PV_CSUSP = 15       # 2
PV_KROLL = 17       # 2
PV_CROLL = 19       # 2
PV_A, PV_B, PV_TRACK, PV_HCG = 21, 22, 23, 24
PV_MOUNT = 25       # 3
PV_STEER_LIM = 28
PV_SPLIT = 29       # 4
PV_G = 33
PV_F0 = 34          # 2 static heave preloads (front, rear)
PV_SIZE = 36


def pack_params(p: VehicleParams, gravity: float) -> np.ndarray:
    """Pack VehicleParams into the flat float64 vector the kernels consume."""
    pv = np.zeros(PV_SIZE)
    pv[PV_MASS] = p.mass
    pv[PV_IXX:PV_IZZ + 1] = p.inertia
    pv[PV_WHEEL_INERTIA] = p.wheel_inertia
    pv[PV_WHEEL_RADIUS] = p.wheel_radius
    pv[PV_VN] = p.slip_threshold
    pv[PV_CLONG:PV_CLONG + 4] = p.tire_long_stiffness
    pv[PV_CLAT:PV_CLAT + 2] = p.tire_lat_stiffness
    pv[PV_KSUSP:PV_KSUSP + 2] = p.susp_stiffness
    pv[PV_CSUSP:PV_CSUSP + 2] = p.susp_damping
    pv[PV_KROLL:PV_KROLL + 2] = p.roll_stiffness
    pv[PV_CROLL:PV_CROLL + 2] = p.roll_damping
    pv[PV_A] = p.wheelbase_front
    pv[PV_B] = p.wheelbase_rear
    pv[PV_TRACK] = p.track_width
    pv[PV_HCG] = p.cog_height
    pv[PV_MOUNT:PV_MOUNT + 3] = p.mount_offset
    pv[PV_STEER_LIM] = p.steer_limit
    pv[PV_SPLIT:PV_SPLIT + 4] = p.drive_split
    pv[PV_G] = gravity
    # static heave preloads balance chassis weight and pitch moment at reference pose
    w = p.mass * gravity
    pv[PV_F0] = w * p.wheelbase_rear / (p.wheelbase_front + p.wheelbase_rear)
    pv[PV_F0 + 1] = w * p.wheelbase_front / (p.wheelbase_front + p.wheelbase_rear)
    return pv


@njit(cache=True)
def tire_slip(v_travel, omega, radius, v_threshold):
    """Wheel slip with a thresholded denominator, total for all finite inputs.

    s = (v - omega*r) / max(v, omega*r, v_N). Works elementwise on arrays.
    """
    circ = omega * radius
    denom = np.maximum(np.maximum(v_travel, circ), v_threshold)
    return (v_travel - circ) / denom


@njit(cache=True)
def tire_force(stiffness, slip):
    """Linear tire model: F = c * s (odd in s)."""
    return stiffness * slip


@njit(cache=True)
def wheel_accel(f_tire, radius, drive_torque, inertia):
    """Wheel spin acceleration from the contact force and drive torque.

    ``f_tire`` is the slip-law force acting on the wheel at the patch; it is
    negative while driving, so the chassis receives ``-f_tire`` forward. Sign
    convention documented in docs/vehicle-model.md (free-body choice).
    """
    return (f_tire * radius + drive_torque) / inertia


@njit(cache=True)
def rotation_matrix(roll, pitch, yaw):
    """Body-to-global rotation, ZYX Euler (yaw about z, then pitch, then roll)."""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    r = np.empty((3, 3))
    r[0, 0] = cy * cp
    r[0, 1] = cy * sp * sr - sy * cr
    r[0, 2] = cy * sp * cr + sy * sr
    r[1, 0] = sy * cp
    r[1, 1] = sy * sp * sr + cy * cr
    r[1, 2] = sy * sp * cr - cy * sr
    r[2, 0] = -sp
    r[2, 1] = cp * sr
    r[2, 2] = cp * cr
    return r


@njit(cache=True)
def euler_rates(roll, pitch, wx, wy, wz):
    """Euler angle rates from body angular velocity (ZYX convention)."""
    cr, sr = math.cos(roll), math.sin(roll)
    cp = math.cos(pitch)
    tp = math.tan(pitch)
    droll = wx + sr * tp * wy + cr * tp * wz
    dpitch = cr * wy - sr * wz
    dyaw = (sr * wy + cr * wz) / cp
    return droll, dpitch, dyaw


@njit(cache=True)
def _cross(ax, ay, az, bx, by, bz):
    return ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx


@njit(cache=True)
def suspension_state(xv, pv):
    """Heave deflection (compression from free length) and rate per axle."""
    roll, pitch = xv[3], xv[4]
    vz = xv[8]
    wx, wy, wz = xv[9], xv[10], xv[11]
    r = rotation_matrix(roll, pitch, xv[5])
    out = np.empty(4)
    for ax in range(2):
        lx = pv[PV_A] if ax == 0 else -pv[PV_B]
        z_att = xv[2] + lx * r[2, 0]
        # velocity of the body-fixed attachment point, z component
        cx, cy, cz = _cross(wx, wy, wz, lx, 0.0, 0.0)
        zdot = vz + r[2, 0] * cx + r[2, 1] * cy + r[2, 2] * cz
        k = pv[PV_KSUSP + ax]
        # compression measured from the unloaded free length: preload/k at reference
        out[ax] = pv[PV_F0 + ax] / k - (z_att - pv[PV_HCG])
        out[2 + ax] = -zdot
    return out


@njit(cache=True)
def vehicle_forces(xv, steer, torques, pv):
    """Tire, suspension and gravity force system on the chassis.

    Returns (F_global[3], M_body[3] about CoG, wheel spin accelerations[4], R).
    The manipulator wrench is *not* included; callers add it before computing
    accelerations so all couplings act within one derivative evaluation.
    """
    roll, pitch, yaw = xv[3], xv[4], xv[5]
    wx, wy, wz = xv[9], xv[10], xv[11]
    r = rotation_matrix(roll, pitch, yaw)

    # body-frame chassis velocity
    vbx = r[0, 0] * xv[6] + r[1, 0] * xv[7] + r[2, 0] * xv[8]
    vby = r[0, 1] * xv[6] + r[1, 1] * xv[7] + r[2, 1] * xv[8]
    vbz = r[0, 2] * xv[6] + r[1, 2] * xv[7] + r[2, 2] * xv[8]

    f_glob = np.zeros(3)
    m_body = np.zeros(3)
    domega = np.empty(4)

    radius = pv[PV_WHEEL_RADIUS]
    vn = pv[PV_VN]
    track = pv[PV_TRACK]
    hcg = pv[PV_HCG]

    for i in range(4):
        lx = pv[PV_A] if i < 2 else -pv[PV_B]
        ly = 0.5 * track if (i % 2) == 0 else -0.5 * track
        lz = -hcg
        delta = steer if i < 2 else 0.0
        cd, sd = math.cos(delta), math.sin(delta)

        cxx, cxy, cxz = _cross(wx, wy, wz, lx, ly, lz)
        vcx = vbx + cxx
        vcy = vby + cxy

        v_lon = cd * vcx + sd * vcy
        v_lat = -sd * vcx + cd * vcy

        s = tire_slip(v_lon, xv[12 + i], radius, vn)
        f_rix = tire_force(pv[PV_CLONG + i], s)
        domega[i] = wheel_accel(f_rix, radius, torques[i], pv[PV_WHEEL_INERTIA])

        alpha = math.atan2(v_lat, max(abs(v_lon), vn))
        axle = 0 if i < 2 else 1
        f_lat = -pv[PV_CLAT + axle] * alpha

        fbx = -f_rix * cd - f_lat * sd
        fby = -f_rix * sd + f_lat * cd

        f_glob[0] += r[0, 0] * fbx + r[0, 1] * fby
        f_glob[1] += r[1, 0] * fbx + r[1, 1] * fby
        f_glob[2] += r[2, 0] * fbx + r[2, 1] * fby
        mx, my, mz = _cross(lx, ly, lz, fbx, fby, 0.0)
        m_body[0] += mx
        m_body[1] += my
        m_body[2] += mz

    # axle heave springs (preloaded) and roll torsion
    droll, _, _ = euler_rates(roll, pitch, wx, wy, wz)
    for ax in range(2):
        lx = pv[PV_A] if ax == 0 else -pv[PV_B]
        z_att = xv[2] + lx * r[2, 0]
        cxx, cxy, cxz = _cross(wx, wy, wz, lx, 0.0, 0.0)
        zdot = xv[8] + r[2, 0] * cxx + r[2, 1] * cxy + r[2, 2] * cxz
        fz = pv[PV_F0 + ax] - pv[PV_KSUSP + ax] * (z_att - pv[PV_HCG]) - pv[PV_CSUSP + ax] * zdot
        f_glob[2] += fz
        # moment of the global-vertical force about the CoG, in body axes
        fbx = r[2, 0] * fz
        fby = r[2, 1] * fz
        fbz = r[2, 2] * fz
        mx, my, mz = _cross(lx, 0.0, 0.0, fbx, fby, fbz)
        m_body[0] += mx
        m_body[1] += my
        m_body[2] += mz
        m_body[0] += -pv[PV_KROLL + ax] * roll - pv[PV_CROLL + ax] * droll

    f_glob[2] -= pv[PV_MASS] * pv[PV_G]
    return f_glob, m_body, domega, r


@njit(cache=True)
def chassis_accelerations(f_glob, m_body, xv, pv):
    """Translational (global) and rotational (body) accelerations."""
    a = f_glob / pv[PV_MASS]
    wx, wy, wz = xv[9], xv[10], xv[11]
    hx = pv[PV_IXX] * wx
    hy = pv[PV_IYY] * wy
    hz = pv[PV_IZZ] * wz
    gx, gy, gz = _cross(wx, wy, wz, hx, hy, hz)
    alpha = np.empty(3)
    alpha[0] = (m_body[0] - gx) / pv[PV_IXX]
    alpha[1] = (m_body[1] - gy) / pv[PV_IYY]
    alpha[2] = (m_body[2] - gz) / pv[PV_IZZ]
    return a, alpha


@njit(cache=True)
def _derivatives_core(xv, steer, torques, wrench_force_body, wrench_torque_body, pv):
    f_glob, m_body, domega, r = vehicle_forces(xv, steer, torques, pv)
    # wrench given in body frame at the mount; transfer to CoG
    fw = wrench_force_body
    f_glob[0] += r[0, 0] * fw[0] + r[0, 1] * fw[1] + r[0, 2] * fw[2]
    f_glob[1] += r[1, 0] * fw[0] + r[1, 1] * fw[1] + r[1, 2] * fw[2]
    f_glob[2] += r[2, 0] * fw[0] + r[2, 1] * fw[1] + r[2, 2] * fw[2]
    mx, my, mz = _cross(pv[PV_MOUNT], pv[PV_MOUNT + 1], pv[PV_MOUNT + 2],
                        fw[0], fw[1], fw[2])
    m_body[0] += wrench_torque_body[0] + mx
    m_body[1] += wrench_torque_body[1] + my
    m_body[2] += wrench_torque_body[2] + mz

    a, alpha = chassis_accelerations(f_glob, m_body, xv, pv)
    droll, dpitch, dyaw = euler_rates(xv[3], xv[4], xv[9], xv[10], xv[11])

    dx = np.empty(NV)
    dx[0] = xv[6]
    dx[1] = xv[7]
    dx[2] = xv[8]
    dx[3] = droll
    dx[4] = dpitch
    dx[5] = dyaw
    dx[6:9] = a
    dx[9:12] = alpha
    dx[12:16] = domega
    return dx


class RollPitchDomainError(RuntimeError):
    """Roll or pitch left the modeled regime (|angle| >= pi/2)."""


def vehicle_derivatives(xv, steer, torques, wrench_force_body=None,
                        wrench_torque_body=None, pv=None):
    """Full time derivative of the 16-entry vehicle state.

    ``wrench_*`` is the manipulator's action at the mount point, body frame.
    Raises :class:`RollPitchDomainError` outside the valid attitude range.
    """
    if abs(xv[3]) >= math.pi / 2 or abs(xv[4]) >= math.pi / 2:
        raise RollPitchDomainError(
            f"attitude out of range: roll={xv[3]:.3f}, pitch={xv[4]:.3f}")
    if wrench_force_body is None:
        wrench_force_body = np.zeros(3)
    if wrench_torque_body is None:
        wrench_torque_body = np.zeros(3)
    return _derivatives_core(np.asarray(xv, dtype=np.float64), float(steer),
                             np.asarray(torques, dtype=np.float64),
                             np.asarray(wrench_force_body, dtype=np.float64),
                             np.asarray(wrench_torque_body, dtype=np.float64), pv)


@njit(cache=True)
def simulate_vehicle(xv0, steer, torques, wrench_force_body, wrench_torque_body,
                     pv, h, n_steps):
    """Fixed-step RK4 rollout of the vehicle alone under constant inputs."""
    x = xv0.copy()
    for _ in range(n_steps):
        k1 = _derivatives_core(x, steer, torques, wrench_force_body, wrench_torque_body, pv)
        k2 = _derivatives_core(x + 0.5 * h * k1, steer, torques, wrench_force_body,
                               wrench_torque_body, pv)
        k3 = _derivatives_core(x + 0.5 * h * k2, steer, torques, wrench_force_body,
                               wrench_torque_body, pv)
        k4 = _derivatives_core(x + h * k3, steer, torques, wrench_force_body,
                               wrench_torque_body, pv)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def default_vehicle_state(p: VehicleParams) -> np.ndarray:
    """Vehicle at rest at the preloaded static equilibrium pose."""
    xv = np.zeros(NV)
    xv[2] = p.cog_height
    return xv
