"""Live session service: one operator client over a WebSocket, JSON text frames.

The engine loop runs in its own thread; the only shared points are the command
mailbox (latest-wins attribute swap) and the telemetry buffer (single producer,
bounded, drop-oldest). The loop never blocks on the client; on disconnect the
simulation pauses with the human command zeroed and resumes on reconnect.
Protocol details in docs/session-protocol.md.
"""

from __future__ import annotations

import asyncio
import json
import logging
import threading
import time

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from . import agents, engine, scenario as scen, telemetry
from .core import SCHEMA_VERSION, OperatorCommand, SimConfig
from .headless import settle_world

log = logging.getLogger(__name__)

KINDS_IN = {"hello", "command", "mode_set"}
FRAME_PERIOD = 0.01


class SessionState:
    """Engine-side session: command mailbox, pause flag, telemetry stream."""

    def __init__(self, cfg: SimConfig, mode: str = "cooperative"):
        self.cfg = cfg
        self.scenario = scen.build_validation_scenario(cfg)
        self.runtime = engine.EngineRuntime(cfg)
        self.world = self.runtime.make_world()
        self.world.mode = mode
        settle_world(self.world, cfg, self.scenario, runtime=self.runtime)
        self.automation = agents.AutomationController(cfg, self.scenario, mode)
        self.buffer = telemetry.TelemetryBuffer(cfg, scenario=self.scenario, capacity=512)
        self.command = OperatorCommand(source="human-live")   # latest-wins mailbox
        self.client_seq = 0          # last client sequence applied
        self.paused = True
        self.stopped = False
        self.error: str | None = None
        self._thread: threading.Thread | None = None

    # -- engine thread -------------------------------------------------------

    def start(self):
        self._thread = threading.Thread(target=self._loop, name="sim-engine", daemon=True)
        self._thread.start()

    def stop(self):
        self.stopped = True
        if self._thread is not None:
            self._thread.join(timeout=2.0)

    def set_mode(self, mode: str):
        self.automation.mode = mode
        self.world.mode = mode

    def _loop(self):
        cfg = self.cfg
        rt = self.runtime
        decim = max(1, cfg.telemetry_decimation)
        period = max(1, cfg.automation_params.update_period_steps)
        dt_auto = cfg.step_size * period
        u_a = OperatorCommand(source="automation")
        step = 0
        next_deadline = time.perf_counter()
        while not self.stopped:
            if self.paused:
                time.sleep(0.02)
                next_deadline = time.perf_counter()
                continue
            try:
                for _ in range(decim):
                    if step % period == 0:
                        u_a = self.automation.command(self.world, dt_auto)
                    u_h = self.command
                    u = rt.input_vector(self.world, u_h, u_a)
                    diag = rt.step_raw(self.world, u)
                    self.world.last_human = u_h
                    self.world.last_automation = u_a
                    step += 1
                self.buffer.record(self.world, rt, diag, u)
            except Exception as exc:   # surface integration/domain failures
                log.exception("engine loop failed")
                self.error = f"{type(exc).__name__}: {exc}"
                self.paused = True
                continue
            next_deadline += decim * cfg.step_size
            slack = next_deadline - time.perf_counter()
            if slack > 0.002:
                time.sleep(slack - 0.001)
            while time.perf_counter() < next_deadline:
                pass

    # -- frame building --------------------------------------------------------

    def hello_payload(self) -> dict:
        sp = self.cfg.scenario_params
        return {
            "schema_version": SCHEMA_VERSION,
            "step_size": self.cfg.step_size,
            "telemetry_decimation": self.cfg.telemetry_decimation,
            "mode": self.world.mode,
            "ee_velocity_limit": self.cfg.manipulator_params.ee_velocity_limit,
            "link_lengths": list(self.cfg.manipulator_params.link_lengths),
            "mount_offset": list(self.cfg.vehicle_params.mount_offset),
            "scenario": {
                "length": sp.length,
                "obstacle": {"s": self.scenario.obstacle.s, "d": self.scenario.obstacle.d,
                             "extent": self.scenario.obstacle.extent},
                "checkpoints": list(sp.checkpoints),
            },
            "columns": list(telemetry.COLUMNS),
        }


def parse_command(payload: dict) -> OperatorCommand:
    ee = payload.get("ee", [0.0, 0.0])
    steer = payload.get("steer")
    cmd = OperatorCommand(
        steer=float(steer) if steer is not None else None,
        ee_velocity=(float(ee[0]), float(ee[1])),
        source="human-live",
    )
    if not cmd.finite():
        raise ValueError("non-finite command")
    return cmd


def create_app(session: SessionState) -> FastAPI:
    app = FastAPI()
    app.state.session = session
    busy = {"client": False}

    @app.websocket("/session")
    async def session_ws(ws: WebSocket):   # noqa: C901 - protocol dispatch
        await ws.accept()
        out_seq = 0

        async def send(kind: str, payload: dict):
            nonlocal out_seq
            out_seq += 1
            await ws.send_text(json.dumps(
                {"kind": kind, "seq": out_seq, "payload": payload}))

        if busy["client"]:
            await send("error", {"message": "session already has an operator"})
            await ws.close()
            return
        busy["client"] = True
        drained = session.buffer.count
        try:
            await send("hello", session.hello_payload())
            session.paused = False

            async def reader():
                while True:
                    text = await ws.receive_text()
                    try:
                        msg = json.loads(text)
                        kind = msg.get("kind")
                        seq = int(msg.get("seq", 0))
                        if kind not in KINDS_IN:
                            raise ValueError(f"unknown message kind {kind!r}")
                        if kind == "command":
                            session.command = parse_command(msg.get("payload", {}))
                        elif kind == "mode_set":
                            mode = msg.get("payload", {}).get("mode")
                            if mode not in ("cooperative", "noncooperative"):
                                raise ValueError(f"unknown mode {mode!r}")
                            session.set_mode(mode)
                            await send("event", {"event": "mode", "mode": mode, "ack": seq})
                        session.client_seq = max(session.client_seq, seq)
                    except (ValueError, KeyError, TypeError) as exc:
                        await send("error", {"message": str(exc)})

            async def writer():
                nonlocal drained
                while True:
                    await asyncio.sleep(FRAME_PERIOD)
                    if session.error:
                        await send("error", {"message": session.error})
                        session.error = None
                    count, rows = session.buffer.drain(drained)
                    drained = count
                    if rows.shape[0]:
                        rec = telemetry.TelemetryRecord(tuple(rows[-1]))
                        await send("state", {"ack": session.client_seq,
                                             **rec.as_dict()})

            read_task = asyncio.create_task(reader())
            write_task = asyncio.create_task(writer())
            done, pending = await asyncio.wait(
                {read_task, write_task}, return_when=asyncio.FIRST_EXCEPTION)
            for task in pending:
                task.cancel()
            for task in done:
                exc = task.exception()
                if exc is not None and not isinstance(exc, WebSocketDisconnect):
                    raise exc
        except WebSocketDisconnect:
            pass
        finally:
            busy["client"] = False
            session.paused = True
            session.command = OperatorCommand(source="human-live")

    return app


def serve(cfg: SimConfig, bind: str = "127.0.0.1:8732", mode: str = "cooperative"):
    """Run the session service until interrupted."""
    import uvicorn

    host, _, port = bind.partition(":")
    session = SessionState(cfg, mode)
    session.start()
    app = create_app(session)
    try:
        uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8732),
                    log_level="warning")
    finally:
        session.stop()
