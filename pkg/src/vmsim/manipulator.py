"""Hydraulic 4-joint planar manipulator: rigid-link dynamics, LuGre friction,
single-acting cylinder hydraulics, low-level joint-rate control, chassis coupling.

The arm lives in the vehicle's transverse plane: plane axis u = body +y (lateral),
plane axis v = body +z (up), plane normal = body +x. All joint angles are relative;
internally the dynamics use cumulative (absolute) link angles theta = S*phi where S
is the lower-triangular ones matrix, which gives closed-form mass-matrix and
velocity-product terms for the chain.

Local state layout (28 floats):
  0:4  joint angles phi        4:8   joint rates
  8:12 LuGre bristle states    12:16 chamber pressures P_oil
  16:20 oil flows Q_oil        20:24 valve spool states
  24:28 rate-controller integrators
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .core import ManipulatorParams

NM = 28
IM_PHI, IM_PHID, IM_Z, IM_P, IM_Q, IM_SPOOL, IM_CI = 0, 4, 8, 12, 16, 20, 24

# packed parameter layout
PM_MASS = 0          # 4
PM_ACOEF = 4         # 16, a[k,i] row-major: com position coefficients
PM_KAPPA = 20        # 16, inertia coupling constants
PM_INERTIA = 36      # 4
PM_JLO = 40          # 4
PM_JHI = 44          # 4
PM_AREA = 48         # 4
PM_LEV0 = 52         # 4
PM_LEV1 = 56         # 4
PM_LEVPH = 60        # 4
PM_V0 = 64           # 4
PM_KQ = 68           # 4
PM_BETA = 72
PM_TAUQ = 73
PM_TAUV = 74
PM_PSUP = 75
PM_QEPS = 76
PM_S0 = 77           # 4
PM_S1 = 81           # 4
PM_S2 = 85           # 4
PM_TC = 89           # 4
PM_TS = 93           # 4
PM_VS = 97           # 4
PM_KP = 101          # 4
PM_KI = 105          # 4
PM_KSTOP = 109
PM_CSTOP = 110
PM_LEN = 111         # 4 link lengths (for stroke reference)
PM_EDEAD = 115       # valve center deadband on the rate error
PM_CILEAK = 116      # PI integrator bleed rate
PM_SIZE = 117


def pack_params(p: ManipulatorParams) -> np.ndarray:
    """Pack ManipulatorParams into the flat float64 vector the kernels consume."""
    pm = np.zeros(PM_SIZE)
    pm[PM_MASS:PM_MASS + 4] = p.link_masses
    a = np.zeros((4, 4))
    for k in range(4):
        for i in range(k):
            a[k, i] = p.link_lengths[i]
        a[k, k] = p.link_com_offsets[k]
    pm[PM_ACOEF:PM_ACOEF + 16] = a.ravel()
    kappa = np.zeros((4, 4))
    for i in range(4):
        for j in range(4):
            kappa[i, j] = sum(p.link_masses[k] * a[k, i] * a[k, j] for k in range(4))
    pm[PM_KAPPA:PM_KAPPA + 16] = kappa.ravel()
    pm[PM_INERTIA:PM_INERTIA + 4] = p.link_inertias
    pm[PM_JLO:PM_JLO + 4] = p.joint_lower
    pm[PM_JHI:PM_JHI + 4] = p.joint_upper
    pm[PM_AREA:PM_AREA + 4] = p.cylinder_area
    pm[PM_LEV0:PM_LEV0 + 4] = p.lever_base
    pm[PM_LEV1:PM_LEV1 + 4] = p.lever_amplitude
    pm[PM_LEVPH:PM_LEVPH + 4] = p.lever_phase
    pm[PM_V0:PM_V0 + 4] = p.dead_volume
    pm[PM_KQ:PM_KQ + 4] = p.valve_flow_gain
    pm[PM_BETA] = p.bulk_modulus
    pm[PM_TAUQ] = p.flow_time_constant
    pm[PM_TAUV] = p.valve_time_constant
    pm[PM_PSUP] = p.supply_pressure
    pm[PM_QEPS] = p.orifice_smoothing
    pm[PM_S0:PM_S0 + 4] = p.sigma0
    pm[PM_S1:PM_S1 + 4] = p.sigma1
    pm[PM_S2:PM_S2 + 4] = p.sigma2
    pm[PM_TC:PM_TC + 4] = p.coulomb_level
    pm[PM_TS:PM_TS + 4] = p.static_level
    pm[PM_VS:PM_VS + 4] = p.stribeck_velocity
    pm[PM_KP:PM_KP + 4] = p.rate_kp
    pm[PM_KI:PM_KI + 4] = p.rate_ki
    pm[PM_KSTOP] = p.stop_stiffness
    pm[PM_CSTOP] = p.stop_damping
    pm[PM_LEN:PM_LEN + 4] = p.link_lengths
    pm[PM_EDEAD] = p.rate_deadband
    pm[PM_CILEAK] = p.rate_integrator_leak
    return pm


@njit(cache=True)
def stribeck_level(v, t_coulomb, t_static, v_stribeck):
    """Velocity-dependent break-away level g(v) of the Stribeck curve."""
    e = v / v_stribeck
    return t_coulomb + (t_static - t_coulomb) * math.exp(-e * e)


@njit(cache=True)
def lugre_friction(v, z, sigma0, sigma1, sigma2, t_coulomb, t_static, v_stribeck):
    """LuGre bristle friction.

    Returns (T, zdot) where T opposes motion (enters the torque balance with a
    minus sign). Steady sliding gives T = g(v)*sign(v) + sigma2*v.
    """
    g = stribeck_level(v, t_coulomb, t_static, v_stribeck)
    zdot = v - sigma0 * abs(v) / g * z
    t = sigma0 * z + sigma1 * zdot + sigma2 * v
    return t, zdot


@njit(cache=True)
def lever_arm(phi, lev0, lev1, phase):
    """Cylinder lever arm [m], affine in cos(phi + phase); always positive."""
    return lev0 + lev1 * math.cos(phi + phase)


@njit(cache=True)
def piston_stroke(phi, lev0, lev1, phase):
    """Piston displacement integral of the lever arm (antiderivative in phi)."""
    return lev0 * phi + lev1 * math.sin(phi + phase)


@njit(cache=True)
def _smooth_signed_sqrt(dp, eps):
    """Signed sqrt with a smooth linearization near zero pressure drop."""
    return dp / (dp * dp + eps * eps) ** 0.25


@njit(cache=True)
def orifice_flow(spool, pressure, p_supply, k_q, eps):
    """Valve orifice law, normalized so full spool at full drop gives k_q.

    Positive spool meters supply into the chamber, negative drains to tank.
    """
    if spool >= 0.0:
        dp = p_supply - pressure
    else:
        dp = pressure
    scale = _smooth_signed_sqrt(p_supply, eps)
    return k_q * spool * _smooth_signed_sqrt(dp, eps) / scale


@njit(cache=True)
def hydraulic_derivatives(pressure, flow, spool, u_valve, phi, phidot, j, pm):
    """Single actuator: torque and (dP, dQ, dspool) for joint ``j``.

    The spool follows a first-order lag toward the command; the flow state lags
    the orifice-law value; the pressure integrates oil compressibility against
    piston motion. Pressure rates are projected at the [0, supply] bounds.
    """
    lev = lever_arm(phi, pm[PM_LEV0 + j], pm[PM_LEV1 + j], pm[PM_LEVPH + j])
    torque = pressure * pm[PM_AREA + j] * lev

    dspool = (u_valve - spool) / pm[PM_TAUV]
    q_target = orifice_flow(spool, pressure, pm[PM_PSUP], pm[PM_KQ + j], pm[PM_QEPS])
    dflow = (q_target - flow) / pm[PM_TAUQ]

    stroke = piston_stroke(phi, pm[PM_LEV0 + j], pm[PM_LEV1 + j], pm[PM_LEVPH + j]) \
        - piston_stroke(pm[PM_JLO + j], pm[PM_LEV0 + j], pm[PM_LEV1 + j], pm[PM_LEVPH + j])
    volume = pm[PM_V0 + j] + pm[PM_AREA + j] * stroke
    if volume < 0.25 * pm[PM_V0 + j]:
        volume = 0.25 * pm[PM_V0 + j]
    dpressure = pm[PM_BETA] / volume * (flow - pm[PM_AREA + j] * lev * phidot)

    if pressure <= 0.0 and dpressure < 0.0:
        dpressure = 0.0
    if pressure >= pm[PM_PSUP] and dpressure > 0.0:
        dpressure = 0.0
    return torque, dpressure, dflow, dspool


@njit(cache=True)
def _theta_tables(phi):
    theta = np.empty(4)
    acc = 0.0
    for i in range(4):
        acc += phi[i]
        theta[i] = acc
    return theta


@njit(cache=True)
def mass_matrix_packed(phi, pm):
    """Joint-space mass matrix M(phi), symmetric positive definite."""
    theta = _theta_tables(phi)
    m_theta = np.empty((4, 4))
    for i in range(4):
        for j in range(4):
            m_theta[i, j] = pm[PM_KAPPA + 4 * i + j] * math.cos(theta[i] - theta[j])
        m_theta[i, i] += pm[PM_INERTIA + i]
    # M_phi = S^T M_theta S with S lower-triangular ones
    m_phi = np.empty((4, 4))
    for i in range(4):
        for j in range(4):
            acc = 0.0
            for p in range(i, 4):
                for q in range(j, 4):
                    acc += m_theta[p, q]
            m_phi[i, j] = acc
    return m_phi


@njit(cache=True)
def velocity_bias_packed(phi, phidot, pm):
    """Velocity-product (centrifugal/Coriolis) joint torques of the chain."""
    theta = _theta_tables(phi)
    thetadot = np.empty(4)
    acc = 0.0
    for i in range(4):
        acc += phidot[i]
        thetadot[i] = acc
    b_theta = np.empty(4)
    for i in range(4):
        s = 0.0
        for j in range(4):
            s += pm[PM_KAPPA + 4 * i + j] * math.sin(theta[i] - theta[j]) * thetadot[j] ** 2
        b_theta[i] = s
    bias = np.empty(4)
    for i in range(4):
        s = 0.0
        for j in range(i, 4):
            s += b_theta[j]
        bias[i] = s
    return bias


@njit(cache=True)
def link_coms(phi, pm):
    """Link CoM positions in plane coordinates, rows = links."""
    theta = _theta_tables(phi)
    c = np.zeros((4, 2))
    for k in range(4):
        for i in range(k + 1):
            a = pm[PM_ACOEF + 4 * k + i]
            c[k, 0] += a * math.cos(theta[i])
            c[k, 1] += a * math.sin(theta[i])
    return c


@njit(cache=True)
def gravity_coupling_packed(phi, x_ext, mount, pm):
    """Joint torques from gravity and mount motion in the tilted vehicle frame.

    ``x_ext`` packs (gravity_body[3], mount_accel_body[3], omega_body[3]);
    ``mount`` is the arm base offset in the body frame. Per link the effective
    acceleration field is g - a_mount - omega x (omega x d_k); angular
    acceleration cross terms are neglected (low-dynamics chassis).
    """
    theta = _theta_tables(phi)
    coms = link_coms(phi, pm)
    wx, wy, wz = x_ext[6], x_ext[7], x_ext[8]
    q_theta = np.zeros(4)
    for k in range(4):
        dx = mount[0]
        dy = mount[1] + coms[k, 0]
        dz = mount[2] + coms[k, 1]
        # omega x (omega x d)
        c1x = wy * dz - wz * dy
        c1y = wz * dx - wx * dz
        c1z = wx * dy - wy * dx
        cfx = wy * c1z - wz * c1y
        cfy = wz * c1x - wx * c1z
        cfz = wx * c1y - wy * c1x
        fu = x_ext[1] - x_ext[4] - cfy
        fv = x_ext[2] - x_ext[5] - cfz
        mk = pm[PM_MASS + k]
        for i in range(k + 1):
            a = pm[PM_ACOEF + 4 * k + i]
            q_theta[i] += mk * a * (-math.sin(theta[i]) * fu + math.cos(theta[i]) * fv)
    t_mech = np.empty(4)
    for i in range(4):
        s = 0.0
        for j in range(i, 4):
            s += q_theta[j]
        t_mech[i] = s
    return t_mech


@njit(cache=True)
def _solve_spd4(a, b):
    """Cholesky solve for a 4x4 symmetric positive definite system."""
    l = np.zeros((4, 4))
    for i in range(4):
        for j in range(i + 1):
            s = a[i, j]
            for k in range(j):
                s -= l[i, k] * l[j, k]
            if i == j:
                l[i, i] = math.sqrt(s)
            else:
                l[i, j] = s / l[j, j]
    y = np.empty(4)
    for i in range(4):
        s = b[i]
        for k in range(i):
            s -= l[i, k] * y[k]
        y[i] = s / l[i, i]
    x = np.empty(4)
    for i in range(3, -1, -1):
        s = y[i]
        for k in range(i + 1, 4):
            s -= l[k, i] * x[k]
        x[i] = s / l[i, i]
    return x


@njit(cache=True)
def arm_core_derivatives(xm, u_valve, x_ext, mount, pm):
    """State derivative of the arm given explicit valve commands.

    Returns (dxm, phidd); the controller-integrator slots of dxm are left zero,
    the caller fills them when the PI loop is active.
    """
    phi = xm[IM_PHI:IM_PHI + 4]
    phidot = xm[IM_PHID:IM_PHID + 4]

    dxm = np.zeros(NM)
    torque = np.empty(4)
    for j in range(4):
        t_hyd, dp, dq, dsp = hydraulic_derivatives(
            xm[IM_P + j], xm[IM_Q + j], xm[IM_SPOOL + j], u_valve[j],
            phi[j], phidot[j], j, pm)
        dxm[IM_P + j] = dp
        dxm[IM_Q + j] = dq
        dxm[IM_SPOOL + j] = dsp

        t_fric, zdot = lugre_friction(
            phidot[j], xm[IM_Z + j], pm[PM_S0 + j], pm[PM_S1 + j], pm[PM_S2 + j],
            pm[PM_TC + j], pm[PM_TS + j], pm[PM_VS + j])
        dxm[IM_Z + j] = zdot

        t_stop = 0.0
        if phi[j] < pm[PM_JLO + j]:
            t_stop = pm[PM_KSTOP] * (pm[PM_JLO + j] - phi[j]) - pm[PM_CSTOP] * phidot[j]
        elif phi[j] > pm[PM_JHI + j]:
            t_stop = pm[PM_KSTOP] * (pm[PM_JHI + j] - phi[j]) - pm[PM_CSTOP] * phidot[j]

        torque[j] = t_hyd - t_fric + t_stop

    t_mech = gravity_coupling_packed(phi, x_ext, mount, pm)
    bias = velocity_bias_packed(phi, phidot, pm)
    m = mass_matrix_packed(phi, pm)
    rhs = torque + t_mech - bias
    phidd = _solve_spd4(m, rhs)

    dxm[IM_PHI:IM_PHI + 4] = phidot
    dxm[IM_PHID:IM_PHID + 4] = phidd
    return dxm, phidd


LIMIT_FADE_BAND = 0.08  # rad; commanded rates toward a stop taper to zero inside


@njit(cache=True)
def rate_controller(phi, phid_des, phidot, ci, pm):
    """Per-joint PI with conditional anti-windup; returns (u_valve[4], dci[4]).

    Commanded rates driving a joint into its end stop fade out continuously
    within the approach band (valve lockout); this keeps the integrator from
    winding against the stops while leaving the IK untouched.
    """
    u = np.empty(4)
    dci = np.empty(4)
    for j in range(4):
        des = phid_des[j]
        if des > 0.0:
            margin = (pm[PM_JHI + j] - phi[j]) / LIMIT_FADE_BAND
            des *= min(max(margin, 0.0), 1.0)
        elif des < 0.0:
            margin = (phi[j] - pm[PM_JLO + j]) / LIMIT_FADE_BAND
            des *= min(max(margin, 0.0), 1.0)
        e = des - phidot[j]
        # valve center deadband: micro rate errors do not meter oil, which
        # suppresses stiction hunting during constant-angle holds
        dead = pm[PM_EDEAD]
        if e > dead:
            e -= dead
        elif e < -dead:
            e += dead
        else:
            e = 0.0
        raw = pm[PM_KP + j] * e + pm[PM_KI + j] * ci[j]
        # slow integrator bleed: without it the integrator freezes at a
        # nonzero value inside the deadband and the valve trickles forever
        leak = -pm[PM_CILEAK] * ci[j]
        if raw > 1.0:
            u[j] = 1.0
            dci[j] = (e if e < 0.0 else 0.0) + leak
        elif raw < -1.0:
            u[j] = -1.0
            dci[j] = (e if e > 0.0 else 0.0) + leak
        else:
            u[j] = raw
            dci[j] = e + leak
    return u, dci


@njit(cache=True)
def arm_derivatives_packed(xm, phid_des, x_ext, mount, pm):
    """Closed-loop arm derivative: PI rate controller feeding the actuators."""
    u_valve, dci = rate_controller(xm[IM_PHI:IM_PHI + 4], phid_des,
                                   xm[IM_PHID:IM_PHID + 4],
                                   xm[IM_CI:IM_CI + 4], pm)
    dxm, phidd = arm_core_derivatives(xm, u_valve, x_ext, mount, pm)
    dxm[IM_CI:IM_CI + 4] = dci
    return dxm, phidd


@njit(cache=True)
def reaction_wrench_packed(xm, phidd, x_ext, mount, pm):
    """Force and torque the arm exerts on the chassis mount (body frame).

    Static weight plus d'Alembert terms from link accelerations; exactly the
    negative of the mount reaction implied by the gravity-coupling field.
    """
    phi = xm[IM_PHI:IM_PHI + 4]
    phidot = xm[IM_PHID:IM_PHID + 4]
    theta = _theta_tables(phi)
    thetadot = np.empty(4)
    thetadd = np.empty(4)
    acc = 0.0
    acc2 = 0.0
    for i in range(4):
        acc += phidot[i]
        acc2 += phidd[i]
        thetadot[i] = acc
        thetadd[i] = acc2
    coms = link_coms(phi, pm)
    wx, wy, wz = x_ext[6], x_ext[7], x_ext[8]

    force = np.zeros(3)
    tau = np.zeros(3)
    for k in range(4):
        ddu = 0.0
        ddv = 0.0
        for i in range(k + 1):
            a = pm[PM_ACOEF + 4 * k + i]
            ct = math.cos(theta[i])
            st = math.sin(theta[i])
            ddu += a * (-st * thetadd[i] - ct * thetadot[i] ** 2)
            ddv += a * (ct * thetadd[i] - st * thetadot[i] ** 2)
        dx = mount[0]
        dy = mount[1] + coms[k, 0]
        dz = mount[2] + coms[k, 1]
        c1x = wy * dz - wz * dy
        c1y = wz * dx - wx * dz
        c1z = wx * dy - wy * dx
        cfx = wy * c1z - wz * c1y
        cfy = wz * c1x - wx * c1z
        cfz = wx * c1y - wy * c1x
        mk = pm[PM_MASS + k]
        fx = mk * (x_ext[0] - x_ext[3] - cfx)
        fy = mk * (x_ext[1] - x_ext[4] - cfy - ddu)
        fz = mk * (x_ext[2] - x_ext[5] - cfz - ddv)
        force[0] += fx
        force[1] += fy
        force[2] += fz
        # moment about the mount; link offset from mount in body frame
        ox = 0.0
        oy = coms[k, 0]
        oz = coms[k, 1]
        tau[0] += oy * fz - oz * fy - pm[PM_INERTIA + k] * thetadd[k]
        tau[1] += oz * fx - ox * fz
        tau[2] += ox * fy - oy * fx
    return force, tau


@njit(cache=True)
def arm_energy(xm, g_u, g_v, pm):
    """Mechanical energy of the arm in a static, tilted frame.

    Kinetic + gravity potential + bristle elastic + end-stop elastic energy,
    with (g_u, g_v) the in-plane gravity acceleration components.
    """
    phi = xm[IM_PHI:IM_PHI + 4]
    phidot = xm[IM_PHID:IM_PHID + 4]
    theta = _theta_tables(phi)
    thetadot = np.empty(4)
    acc = 0.0
    for i in range(4):
        acc += phidot[i]
        thetadot[i] = acc
    kin = 0.0
    for i in range(4):
        for j in range(4):
            kin += 0.5 * pm[PM_KAPPA + 4 * i + j] * math.cos(theta[i] - theta[j]) \
                * thetadot[i] * thetadot[j]
        kin += 0.5 * pm[PM_INERTIA + i] * thetadot[i] ** 2
    coms = link_coms(phi, pm)
    pot = 0.0
    for k in range(4):
        pot -= pm[PM_MASS + k] * (g_u * coms[k, 0] + g_v * coms[k, 1])
    elastic = 0.0
    for j in range(4):
        elastic += 0.5 * pm[PM_S0 + j] * xm[IM_Z + j] ** 2
        if phi[j] < pm[PM_JLO + j]:
            elastic += 0.5 * pm[PM_KSTOP] * (pm[PM_JLO + j] - phi[j]) ** 2
        elif phi[j] > pm[PM_JHI + j]:
            elastic += 0.5 * pm[PM_KSTOP] * (phi[j] - pm[PM_JHI + j]) ** 2
    return kin + pot + elastic


@njit(cache=True)
def simulate_arm_passive(xm0, g_u, g_v, pm, h, n_steps):
    """RK4 rollout of the passive arm (zero valve command) on a static chassis.

    Returns the per-step energy trace (n_steps + 1 samples).
    """
    x_ext = np.zeros(9)
    x_ext[1] = g_u
    x_ext[2] = g_v
    mount = np.zeros(3)
    u0 = np.zeros(4)
    x = xm0.copy()
    energies = np.empty(n_steps + 1)
    energies[0] = arm_energy(x, g_u, g_v, pm)
    for n in range(n_steps):
        k1, _ = arm_core_derivatives(x, u0, x_ext, mount, pm)
        k2, _ = arm_core_derivatives(x + 0.5 * h * k1, u0, x_ext, mount, pm)
        k3, _ = arm_core_derivatives(x + 0.5 * h * k2, u0, x_ext, mount, pm)
        k4, _ = arm_core_derivatives(x + h * k3, u0, x_ext, mount, pm)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        energies[n + 1] = arm_energy(x, g_u, g_v, pm)
    return energies


# ---------------------------------------------------------------------------
# convenience wrappers over the packed kernels

def mass_matrix(phi, params: ManipulatorParams) -> np.ndarray:
    return mass_matrix_packed(np.asarray(phi, dtype=np.float64), pack_params(params))


def gravity_coupling_torques(phi, x_ext, params: ManipulatorParams,
                             mount=(0.0, 0.0, 0.0)) -> np.ndarray:
    return gravity_coupling_packed(np.asarray(phi, dtype=np.float64),
                                   np.asarray(x_ext, dtype=np.float64),
                                   np.asarray(mount, dtype=np.float64),
                                   pack_params(params))


def static_external(gravity: float) -> np.ndarray:
    """x_ext for a level, stationary vehicle."""
    x_ext = np.zeros(9)
    x_ext[2] = -gravity
    return x_ext


def default_arm_state(params: ManipulatorParams,
                      phi=(1.1, -1.9, -0.5, -0.3)) -> np.ndarray:
    """Arm at a working pose with pressures preloaded to balance gravity."""
    xm = np.zeros(NM)
    xm[IM_PHI:IM_PHI + 4] = phi
    pm = pack_params(params)
    t_grav = gravity_coupling_packed(xm[IM_PHI:IM_PHI + 4], static_external(9.81),
                                     np.zeros(3), pm)
    for j in range(4):
        lev = lever_arm(xm[IM_PHI + j], pm[PM_LEV0 + j], pm[PM_LEV1 + j], pm[PM_LEVPH + j])
        p0 = -t_grav[j] / (pm[PM_AREA + j] * lev)
        xm[IM_P + j] = min(max(p0, 0.0), pm[PM_PSUP])
    return xm
