import math

import numpy as np
import pytest

from vmsim import engine, headless, scenario as scen, telemetry
from vmsim.core import OperatorCommand, SimConfig


class TestRk4Step:
    def test_zero_field_identity(self):
        x = np.array([1.0, -2.0, 3.0])
        out = engine.rk4_step(lambda t, x, u: np.zeros(3), x, None, 0.0, 5e-4)
        assert np.array_equal(out, x)

    def test_exponential_local_error(self):
        h = 5e-4
        out = engine.rk4_step(lambda t, x, u: -x, np.array([1.0]), None, 0.0, h)
        assert abs(out[0] - math.exp(-h)) <= h ** 5

    def test_order_four_on_decay(self):
        errors = []
        for h in (0.02, 0.01, 0.005):
            x = np.array([1.0])
            for _ in range(int(round(1.0 / h))):
                x = engine.rk4_step(lambda t, x, u: -x, x, None, 0.0, h)
            errors.append(abs(x[0] - math.exp(-1.0)))
        orders = [math.log2(errors[i] / errors[i + 1]) for i in range(2)]
        for p in orders:
            assert 3.8 <= p <= 4.2

    def test_order_four_on_oscillator(self):
        a = np.array([[0.0, 1.0], [-4.0, 0.0]])
        errors = []
        for h in (0.02, 0.01, 0.005):
            x = np.array([1.0, 0.0])
            for _ in range(int(round(1.0 / h))):
                x = engine.rk4_step(lambda t, x, u: a @ x, x, None, 0.0, h)
            exact = np.array([math.cos(2.0), -2.0 * math.sin(2.0)])
            errors.append(np.linalg.norm(x - exact))
        orders = [math.log2(errors[i] / errors[i + 1]) for i in range(2)]
        for p in orders:
            assert 3.8 <= p <= 4.2

    def test_non_finite_component_reported(self):
        def f(t, x, u):
            out = np.zeros(3)
            out[2] = math.nan
            return out

        with pytest.raises(engine.IntegrationError) as err:
            engine.rk4_step(f, np.zeros(3), None, 0.0, 1e-3)
        assert err.value.index == 2


class TestStepWorld:
    def test_zero_commands_advance_time_only(self, cfg, runtime):
        world = runtime.make_world()
        headless.settle_world(world, cfg, scen.build_validation_scenario(cfg),
                              runtime=runtime, duration=12.0)
        before = world.x.copy()
        res = engine.step_world(world, OperatorCommand(source="human-model"),
                                OperatorCommand(steer=0.0), runtime)
        assert res.world.t == pytest.approx(world.t + cfg.step_size)
        assert np.max(np.abs(res.world.x[:16] - before[:16])) < 1e-6

    def test_determinism_bitwise(self, cfg, runtime):
        w1 = runtime.make_world()
        w2 = runtime.make_world()
        u_h = OperatorCommand(ee_velocity=(0.1, -0.05), source="human-model")
        u_a = OperatorCommand(steer=0.05, drive_torque=500.0)
        for _ in range(200):
            w1 = engine.step_world(w1, u_h, u_a, runtime).world
            w2 = engine.step_world(w2, u_h, u_a, runtime).world
        assert np.array_equal(w1.x, w2.x)

    def test_rate_commands_match_composed_path(self, cfg, runtime):
        from vmsim import kinematics as kin
        mp = cfg.manipulator_params
        rng = np.random.default_rng(71)
        for _ in range(200):
            phi = rng.uniform(-1.8, 1.2, 4)
            ee = rng.uniform(-0.6, 0.6, 2)
            fast = engine._rate_commands(phi, ee, runtime.lengths, mp.ik_damping,
                                         runtime.posture_ref, mp.posture_gain,
                                         mp.posture_deadband, runtime.rate_limits)
            pd = kin.velocity_ik(phi, ee, runtime.lengths, mp.ik_damping)
            err = runtime.posture_ref - phi
            err = np.sign(err) * np.maximum(np.abs(err) - mp.posture_deadband, 0.0)
            posture = mp.posture_gain * err
            j = kin.jacobian(phi, runtime.lengths)
            a = j @ j.T + mp.ik_damping ** 2 * np.eye(2)
            posture -= j.T @ np.linalg.solve(a, j @ posture)
            composed = np.clip(pd + posture, -runtime.rate_limits, runtime.rate_limits)
            assert np.max(np.abs(fast - composed)) < 1e-12

    def test_fused_kernel_matches_generic_rk4(self, cfg, runtime):
        world = runtime.make_world()
        u = runtime.input_vector(world, OperatorCommand(ee_velocity=(0.2, 0.1),
                                                        source="human-model"),
                                 OperatorCommand(steer=0.1, drive_torque=800.0))

        def f(t, x, uu):
            return engine._world_derivative(x, uu, runtime.pv, runtime.pm)

        generic = engine.rk4_step(f, world.x, u, 0.0, runtime.h)
        fused = engine._rk4_fused(world.x, u, runtime.h, runtime.pv, runtime.pm)
        scale = np.maximum(np.abs(generic), 1.0)
        assert np.max(np.abs(generic - fused) / scale) < 1e-12

    def test_long_run_equilibrium_drift(self, cfg, runtime):
        world = runtime.make_world()
        sc = scen.build_validation_scenario(cfg)
        headless.settle_world(world, cfg, sc, runtime=runtime, duration=30.0)
        pos0 = world.x[:3].copy()
        u_h = OperatorCommand(source="human-model")
        u_a = OperatorCommand(steer=0.0)
        for _ in range(2000):
            world = engine.step_world(world, u_h, u_a, runtime).world
        assert np.max(np.abs(world.x[:3] - pos0)) < 1e-6


class TestRun:
    def test_fixed_step_count_and_final_time(self, cfg, runtime):
        world = runtime.make_world()
        buf = telemetry.TelemetryBuffer(cfg)
        stats = engine.run(world, engine.ConstantSource(), 1.0, cfg,
                           telemetry=buf, runtime=runtime)
        assert stats.steps == 2000
        assert world.t == pytest.approx(1.0, abs=1e-12)
        assert buf.count == 2000 // cfg.telemetry_decimation

    def test_batch_runs_identical(self, cfg, runtime):
        logs = []
        for _ in range(2):
            world = runtime.make_world()
            buf = telemetry.TelemetryBuffer(cfg)
            engine.run(world, engine.ConstantSource(
                u_a=OperatorCommand(steer=0.02, drive_torque=400.0)), 2.0, cfg,
                telemetry=buf, runtime=runtime)
            logs.append(buf.log().data)
        assert np.array_equal(logs[0], logs[1])

    def test_stiff_oil_modes_stay_bounded(self, cfg, runtime):
        # a full minute of holding: no growing high-frequency pressure oscillation
        world = runtime.make_world()
        sc = scen.build_validation_scenario(cfg)
        headless.settle_world(world, cfg, sc, runtime=runtime, duration=10.0)
        buf = telemetry.TelemetryBuffer(cfg)
        engine.run(world, engine.ConstantSource(u_a=OperatorCommand(steer=0.0)),
                   60.0, cfg, telemetry=buf, runtime=runtime)
        log = buf.log()
        press = np.stack([log.column(f"p_oil{j}") for j in range(1, 5)])
        half = press.shape[1] // 2
        assert press.max() <= cfg.manipulator_params.supply_pressure
        assert np.abs(press[:, half:]).max() <= np.abs(press[:, :half]).max() + 1e5

    def test_realtime_pacing_smoke(self, cfg, runtime):
        from dataclasses import replace
        rt_cfg = replace(cfg, realtime=True)
        world = runtime.make_world()
        stats = engine.run(world, engine.ConstantSource(), 2.0, rt_cfg,
                           runtime=runtime)
        assert stats.realtime_factor > 0.9
        assert stats.overruns <= 2          # smoke only; acceptance is strict
        assert stats.capacity > 1.0
