import math

import numpy as np
import pytest

from vmsim import kinematics as kin
from conftest import random_joint_poses

LENGTHS = (1.8, 1.4, 1.0, 0.5)


def transform_chain_fk(phi, lengths):
    """Independent oracle: full homogeneous transform chain."""
    t = np.eye(3)
    for angle, length in zip(phi, lengths):
        c, s = math.cos(angle), math.sin(angle)
        t = t @ np.array([[c, -s, length * c], [s, c, length * s], [0, 0, 1.0]])
    return t[:2, 2]


class TestForwardKinematics:
    def test_straight_arm(self):
        p = kin.forward_kinematics(np.zeros(4), LENGTHS)
        assert p == pytest.approx([sum(LENGTHS), 0.0], abs=1e-15)

    def test_rotated_straight_arm(self):
        p = kin.forward_kinematics([math.pi / 2, 0, 0, 0], LENGTHS)
        assert p == pytest.approx([0.0, sum(LENGTHS)], abs=1e-12)

    def test_matches_transform_chain_oracle(self, cfg):
        rng = np.random.default_rng(17)
        for phi in rng.uniform(-2.5, 2.5, (200, 4)):
            a = kin.forward_kinematics(phi, LENGTHS)
            b = transform_chain_fk(phi, LENGTHS)
            assert np.max(np.abs(a - b)) < 1e-12


class TestJacobian:
    def test_two_link_textbook_case(self):
        j = kin.jacobian([0.0, 0.0], (1.0, 1.0))
        assert np.allclose(j, [[0.0, 0.0], [2.0, 1.0]])

    def test_straight_arm_top_row_zero(self):
        j = kin.jacobian(np.zeros(4), LENGTHS)
        assert np.allclose(j[0], 0.0)

    def test_finite_difference_consistency(self, cfg):
        rng = np.random.default_rng(23)
        eps = 1e-7
        worst = 0.0
        for phi in rng.uniform(-2.5, 2.5, (1000, 4)):
            j = kin.jacobian(phi, LENGTHS)
            fd = np.zeros((2, 4))
            for k in range(4):
                e = np.zeros(4)
                e[k] = eps
                fd[:, k] = (kin.forward_kinematics(phi + e, LENGTHS)
                            - kin.forward_kinematics(phi - e, LENGTHS)) / (2 * eps)
            worst = max(worst, np.max(np.abs(j - fd)))
        assert worst < 1e-6


class TestVelocityIK:
    def test_zero_command(self):
        pd = kin.velocity_ik([1.1, -1.9, -0.5, -0.3], (0.0, 0.0), LENGTHS, 0.05)
        assert np.allclose(pd, 0.0)

    def test_small_damping_reproduces_command(self):
        phi = [1.1, -1.9, -0.5, -0.3]
        cmd = np.array([0.3, -0.2])
        pd = kin.velocity_ik(phi, cmd, LENGTHS, 0.01)
        residual = kin.jacobian(phi, LENGTHS) @ pd - cmd
        assert np.linalg.norm(residual) < 0.01 * np.linalg.norm(cmd)

    def test_singular_configuration_bound(self):
        lam = 0.05
        for scale in (0.1, 0.3, 0.6, 1.0):
            cmd = np.array([scale, 0.0])             # radial push on the stretched arm
            pd = kin.velocity_ik(np.zeros(4), cmd, LENGTHS, lam)
            assert np.isfinite(pd).all()
            assert np.linalg.norm(pd) <= np.linalg.norm(cmd) / (2 * lam) + 1e-12

    def test_continuity_in_state_and_command(self):
        rng = np.random.default_rng(29)
        for _ in range(50):
            phi = rng.uniform(-2, 2, 4)
            cmd = rng.uniform(-0.5, 0.5, 2)
            base = kin.velocity_ik(phi, cmd, LENGTHS, 0.05)
            a = kin.velocity_ik(phi + rng.normal(0, 1e-7, 4), cmd, LENGTHS, 0.05)
            b = kin.velocity_ik(phi, cmd + rng.normal(0, 1e-7, 2), LENGTHS, 0.05)
            assert np.max(np.abs(a - base)) < 1e-4
            assert np.max(np.abs(b - base)) < 1e-4

    def test_minimum_norm_among_equal_residual_solutions(self):
        rng = np.random.default_rng(31)
        for _ in range(50):
            phi = rng.uniform(-1.5, 1.5, 4)
            cmd = rng.uniform(-0.5, 0.5, 2)
            pd = kin.velocity_ik(phi, cmd, LENGTHS, 0.05)
            j = kin.jacobian(phi, LENGTHS)
            # null-space basis of J: alternatives share the task residual exactly
            _, _, vt = np.linalg.svd(j)
            null = vt[2:]
            for _ in range(20):
                alt = pd + null.T @ rng.normal(0, 0.2, 2)
                assert np.linalg.norm(pd) <= np.linalg.norm(alt) + 1e-12
