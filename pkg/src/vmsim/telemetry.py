"""Telemetry record schema, bounded buffering and CSV logging.

Column order is fixed and documented in docs/telemetry-schema.md; every record
is schema-complete. Floats are written with shortest round-trip formatting so
identical runs produce byte-identical files and parsing recovers full precision.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import kinematics, vehicle as veh
from .core import SimConfig, World

MODE_CODES = {"noncooperative": 0.0, "cooperative": 1.0}

COLUMNS = (
    "t",
    "veh_x", "veh_y", "veh_z", "roll", "pitch", "yaw",
    "vx", "vy", "vz", "wx", "wy", "wz",
    "wheel_fl", "wheel_fr", "wheel_rl", "wheel_rr",
    "susp_defl_f", "susp_defl_r", "susp_rate_f", "susp_rate_r",
    "phi1", "phi2", "phi3", "phi4",
    "phid1", "phid2", "phid3", "phid4",
    "ee_u", "ee_v", "ee_d",
    "p_oil1", "p_oil2", "p_oil3", "p_oil4",
    "q_oil1", "q_oil2", "q_oil3", "q_oil4",
    "spool1", "spool2", "spool3", "spool4",
    "uh_ee_du", "uh_ee_dv", "uh_steer",
    "ua_steer", "ua_torque",
    "mode", "odo_s", "d_veh",
    "clamp_events", "max_delta",
)
_IDX = {name: i for i, name in enumerate(COLUMNS)}


@dataclass(frozen=True)
class TelemetryRecord:
    """One decimated sample of everything the analysis and UI consume."""

    values: tuple

    def __getattr__(self, name):
        try:
            return self.values[_IDX[name]]
        except KeyError:
            raise AttributeError(name) from None

    def as_dict(self) -> dict:
        return dict(zip(COLUMNS, self.values))


class TelemetryLog:
    """Immutable column-oriented view of recorded telemetry."""

    def __init__(self, data: np.ndarray):
        self.data = data

    def __len__(self) -> int:
        return self.data.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.data[:, _IDX[name]]

    def record(self, i: int) -> TelemetryRecord:
        return TelemetryRecord(tuple(self.data[i]))


class TelemetryBuffer:
    """Single-producer bounded buffer filled by the engine loop.

    In bounded mode the oldest rows are dropped (lossy, never blocking); in
    unbounded batch mode it grows as needed.
    """

    def __init__(self, cfg: SimConfig, scenario=None, capacity: int | None = None):
        self.cfg = cfg
        self.scenario = scenario
        self.capacity = capacity
        n0 = capacity if capacity else 4096
        self.data = np.zeros((n0, len(COLUMNS)))
        self.count = 0
        self.dropped = 0

    def record(self, world: World, rt, diag, u) -> None:
        if self.count == self.data.shape[0]:
            if self.capacity:
                self.data[:-1] = self.data[1:]
                self.count -= 1
                self.dropped += 1
            else:
                grown = np.zeros((2 * self.data.shape[0], len(COLUMNS)))
                grown[:self.count] = self.data
                self.data = grown
        row = self.data[self.count]
        x = world.x
        row[_IDX["t"]] = world.t
        row[1:7] = x[0:6]
        row[7:13] = x[6:12]
        row[13:17] = x[12:16]
        susp = veh.suspension_state(x[:16], rt.pv)
        row[_IDX["susp_defl_f"]:_IDX["susp_defl_f"] + 4] = susp
        row[_IDX["phi1"]:_IDX["phi1"] + 4] = x[16:20]
        row[_IDX["phid1"]:_IDX["phid1"] + 4] = x[20:24]
        ee = kinematics.forward_kinematics(x[16:20], rt.lengths)
        row[_IDX["ee_u"]] = ee[0]
        row[_IDX["ee_v"]] = ee[1]
        if self.scenario is not None:
            ee_d, _ = self.scenario.ee_position(world, self.cfg)
            row[_IDX["ee_d"]] = ee_d
            row[_IDX["d_veh"]] = self.scenario.lateral_of(x[0], x[1], world.scenario_cursor)
        else:
            row[_IDX["ee_d"]] = x[1] + ee[0]
            row[_IDX["d_veh"]] = x[1]
        row[_IDX["p_oil1"]:_IDX["p_oil1"] + 4] = x[16 + 12:16 + 16]
        row[_IDX["q_oil1"]:_IDX["q_oil1"] + 4] = x[16 + 16:16 + 20]
        row[_IDX["spool1"]:_IDX["spool1"] + 4] = x[16 + 20:16 + 24]
        uh = world.last_human
        ua = world.last_automation
        row[_IDX["uh_ee_du"]] = uh.ee_velocity[0]
        row[_IDX["uh_ee_dv"]] = uh.ee_velocity[1]
        row[_IDX["uh_steer"]] = uh.steer if uh.steer is not None else 0.0
        row[_IDX["ua_steer"]] = ua.steer if ua.steer is not None else 0.0
        row[_IDX["ua_torque"]] = ua.drive_torque
        row[_IDX["mode"]] = MODE_CODES.get(world.mode, -1.0)
        row[_IDX["odo_s"]] = x[44]
        row[_IDX["clamp_events"]] = diag.clamp_events
        row[_IDX["max_delta"]] = diag.max_delta
        self.count += 1

    def log(self) -> TelemetryLog:
        return TelemetryLog(self.data[:self.count].copy())

    def drain(self, start: int) -> tuple[int, np.ndarray]:
        """Rows recorded since ``start`` (for streaming consumers)."""
        return self.count, self.data[max(start, 0):self.count].copy()


def log_csv(log: TelemetryLog, path) -> None:
    """Write the log as an RFC-4180 CSV with one header row."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(COLUMNS)
        for row in log.data:
            writer.writerow([repr(float(v)) for v in row])


def read_csv(path) -> TelemetryLog:
    """Parse a telemetry CSV back into a log (full printed precision)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != COLUMNS:
            raise ValueError("telemetry CSV header does not match the schema")
        rows = [[float(v) for v in row] for row in reader]
    data = np.array(rows) if rows else np.zeros((0, len(COLUMNS)))
    return TelemetryLog(data)
