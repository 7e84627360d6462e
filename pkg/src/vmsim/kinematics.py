"""Planar forward kinematics, Jacobian and damped-least-squares velocity IK."""

from __future__ import annotations

import numpy as np


def forward_kinematics(phi, lengths) -> np.ndarray:
    """End-effector position (x, y) of the planar chain, vehicle-plane frame."""
    theta = np.cumsum(np.asarray(phi, dtype=float))
    l = np.asarray(lengths, dtype=float)
    return np.array([np.dot(l, np.cos(theta)), np.dot(l, np.sin(theta))])


def link_points(phi, lengths) -> np.ndarray:
    """Joint/tip positions including the base, rows = points (n+1, 2)."""
    theta = np.cumsum(np.asarray(phi, dtype=float))
    l = np.asarray(lengths, dtype=float)
    pts = np.zeros((len(l) + 1, 2))
    pts[1:, 0] = np.cumsum(l * np.cos(theta))
    pts[1:, 1] = np.cumsum(l * np.sin(theta))
    return pts


def jacobian(phi, lengths) -> np.ndarray:
    """2 x n task Jacobian of :func:`forward_kinematics`.

    Column j sums the contributions of all links distal to joint j.
    """
    theta = np.cumsum(np.asarray(phi, dtype=float))
    l = np.asarray(lengths, dtype=float)
    n = len(l)
    j = np.zeros((2, n))
    # reverse cumulative sums of l*sin, l*cos over links k >= column index
    ls = l * np.sin(theta)
    lc = l * np.cos(theta)
    j[0] = -np.cumsum(ls[::-1])[::-1]
    j[1] = np.cumsum(lc[::-1])[::-1]
    return j


def velocity_ik(phi, command, lengths, damping=0.05, rate_limits=None) -> np.ndarray:
    """Damped-least-squares joint rates for a desired end-effector velocity.

    phidot = J^T (J J^T + lambda^2 I)^-1 * command; total for any configuration;
    at singularities the output stays bounded by ||command|| / (2*lambda).
    Optionally clamps to per-joint rate limits.
    """
    j = jacobian(phi, lengths)
    cmd = np.asarray(command, dtype=float)
    a = j @ j.T + (damping * damping) * np.eye(2)
    phidot = j.T @ np.linalg.solve(a, cmd)
    if rate_limits is not None:
        lim = np.asarray(rate_limits, dtype=float)
        phidot = np.clip(phidot, -lim, lim)
    return phidot
