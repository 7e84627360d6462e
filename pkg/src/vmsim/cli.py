"""simctl: batch runs, live session server, telemetry replay."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import headless, scenario as scen, telemetry
from .core import ConfigError, SimConfig, load_config_file


def _setup_logging():
    level = os.environ.get("SIMCTL_LOG", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _load(args) -> SimConfig:
    if args.config:
        return load_config_file(args.config)
    return SimConfig()


def main(argv=None) -> int:
    _setup_logging()
    parser = argparse.ArgumentParser(
        prog="simctl",
        description="Heavy vehicle-manipulator shared-control simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="headless batch run with the simulated operator")
    p_run.add_argument("--config", help="JSON config file")
    p_run.add_argument("--scenario", default="validation")
    p_run.add_argument("--mode", default="cooperative",
                       choices=["cooperative", "noncooperative"])
    p_run.add_argument("--duration", type=float, default=None,
                       help="simulated seconds (default: scenario length)")
    p_run.add_argument("--out-dir", default="out")

    p_serve = sub.add_parser("serve", help="live session server for an operator UI")
    p_serve.add_argument("--config", help="JSON config file")
    p_serve.add_argument("--bind", default="127.0.0.1:8732")
    p_serve.add_argument("--mode", default="cooperative",
                         choices=["cooperative", "noncooperative"])

    p_replay = sub.add_parser("replay", help="recompute metrics from a telemetry CSV")
    p_replay.add_argument("--config", help="JSON config file")
    p_replay.add_argument("--telemetry", required=True)
    p_replay.add_argument("--out-dir", default="out")

    args = parser.parse_args(argv)
    try:
        cfg = _load(args)
    except (ConfigError, OSError) as exc:
        print(json.dumps({"error": "ConfigError", "message": str(exc)}))
        return 2

    if args.command == "run":
        if args.scenario != "validation":
            print(json.dumps({"error": "UnknownScenario", "message": args.scenario}))
            return 2
        return headless.run_headless(cfg, args.mode, args.out_dir, args.duration)

    if args.command == "serve":
        from . import server
        server.serve(cfg, bind=args.bind, mode=args.mode)
        return 0

    if args.command == "replay":
        log = telemetry.read_csv(args.telemetry)
        sc = scen.build_validation_scenario(cfg)
        metrics = scen.tracking_metrics(log, sc, require_coverage=False)
        os.makedirs(args.out_dir, exist_ok=True)
        path = os.path.join(args.out_dir, "metrics_replay.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(metrics, fh, indent=2, sort_keys=True)
        print(f"replay: {len(log)} records, manip RMS {metrics['manipulator_rms']:.3f} m "
              f"-> {path}")
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
