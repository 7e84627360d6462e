"""Headless batch runs: world setup, settling, closed-loop scenario execution."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass

from . import agents, engine, scenario as scen, telemetry
from .core import OperatorCommand, SimConfig, World

log = logging.getLogger(__name__)

SETTLE_TIME = 8.0


class _SettleSource:
    """Hold position: zero human command, drive torque damping residual speed.

    Free rolling is undamped (no rolling resistance in the model), so settling
    needs an active zero-speed hold or transients leave a permanent creep.
    """

    def __init__(self, cfg: SimConfig, sc):
        self.cfg = cfg
        self.scenario = sc
        self.period = max(1, cfg.automation_params.update_period_steps)
        self._u_h = OperatorCommand(source="human-model")
        self._u_a = OperatorCommand(steer=0.0, source="automation")

    def sample(self, world: World, step: int):
        if step % self.period == 0:
            v = self.scenario.forward_speed(world)
            lim = self.cfg.automation_params.torque_limit
            torque = max(-lim, min(lim, -self.cfg.automation_params.speed_kp * v))
            self._u_a = OperatorCommand(steer=0.0, drive_torque=torque,
                                        source="automation")
        return self._u_h, self._u_a


def settle_world(world: World, cfg: SimConfig, sc, runtime=None,
                 duration: float = SETTLE_TIME) -> World:
    """Let transients (suspension sag under the arm, hold pressures) die out.

    Runs with zero commands before t = 0; time and odometer are reset after.
    """
    rt = runtime or engine.EngineRuntime(cfg)
    engine.run(world, _SettleSource(cfg, sc), duration, cfg, runtime=rt)
    world.t = 0.0
    world.x[0] = 0.0          # restart at the scenario origin
    world.x[1] -= 0.0
    world.x[engine.IX_ODO] = 0.0
    return world


@dataclass
class HeadlessResult:
    log: telemetry.TelemetryLog
    metrics: dict
    stats: engine.RunStats
    mode: str


def run_scenario(cfg: SimConfig, mode: str = "cooperative",
                 duration: float | None = None,
                 realtime: bool | None = None) -> HeadlessResult:
    """Closed-loop scenario run with the simulated operator and automation."""
    sc = scen.build_validation_scenario(cfg)
    rt = engine.EngineRuntime(cfg)
    world = rt.make_world()
    world.mode = mode
    settle_world(world, cfg, sc, runtime=rt)

    full_run = duration is None
    if duration is None:
        duration = cfg.scenario_params.length / cfg.scenario_params.speed + 6.0
    if realtime is not None and realtime != cfg.realtime:
        from dataclasses import replace
        cfg = replace(cfg, realtime=realtime)

    buffer = telemetry.TelemetryBuffer(cfg, scenario=sc)
    source = agents.ClosedLoopSource(cfg, sc, mode)
    stats = engine.run(world, source, duration, cfg, telemetry=buffer, runtime=rt)
    tlog = buffer.log()
    metrics = scen.tracking_metrics(tlog, sc, require_coverage=full_run)
    return HeadlessResult(log=tlog, metrics=metrics, stats=stats, mode=mode)


def run_headless(cfg: SimConfig, mode: str, out_dir,
                 duration: float | None = None) -> int:
    """Batch run writing telemetry CSV, metrics JSON and a summary line.

    Returns the process exit status (0 on success).
    """
    os.makedirs(out_dir, exist_ok=True)
    try:
        result = run_scenario(cfg, mode, duration)
    except (engine.IntegrationError, Exception) as exc:
        error = {"error": type(exc).__name__, "message": str(exc)}
        with open(os.path.join(out_dir, "error.json"), "w", encoding="utf-8") as fh:
            json.dump(error, fh)
        print(json.dumps(error))
        return 1

    csv_path = os.path.join(out_dir, f"telemetry_{mode}.csv")
    metrics_path = os.path.join(out_dir, f"metrics_{mode}.json")
    telemetry.log_csv(result.log, csv_path)
    with open(metrics_path, "w", encoding="utf-8") as fh:
        json.dump(result.metrics, fh, indent=2, sort_keys=True)
    print(f"{mode}: {result.stats.steps} steps, "
          f"manip RMS {result.metrics['manipulator_rms']:.3f} m, "
          f"vehicle RMS {result.metrics['vehicle_rms']:.3f} m, "
          f"roll [{result.metrics['roll_min']:.3f}, {result.metrics['roll_max']:.3f}] rad, "
          f"wall {result.stats.wall_time:.1f} s")
    return 0
