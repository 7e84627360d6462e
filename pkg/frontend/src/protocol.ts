/**
 * Session protocol: JSON text frames over a WebSocket, strictly increasing
 * sequence numbers per direction. Mirrors docs/session-protocol.md.
 */

export const SCHEMA_VERSION = 1;

export type FrameKind = "hello" | "command" | "mode_set" | "state" | "event" | "metrics" | "error";

export interface Frame {
  kind: FrameKind;
  seq: number;
  payload: Record<string, unknown>;
}

export interface HelloPayload {
  schema_version: number;
  step_size: number;
  telemetry_decimation: number;
  mode: string;
  ee_velocity_limit: number;
  link_lengths: number[];
  mount_offset: number[];
  scenario: {
    length: number;
    obstacle: { s: number; d: number; extent: number };
    checkpoints: number[];
  };
  columns: string[];
}

/** One decimated state sample; flat copy of the telemetry record plus ack. */
export interface StateFrame {
  ack: number;
  t: number;
  veh_x: number;
  veh_y: number;
  yaw: number;
  roll: number;
  pitch: number;
  phi1: number;
  phi2: number;
  phi3: number;
  phi4: number;
  ee_u: number;
  ee_v: number;
  ee_d: number;
  d_veh: number;
  odo_s: number;
  mode: number;
  p_oil3: number;
  q_oil3: number;
  [key: string]: number;
}

export class ProtocolError extends Error {}

export function decodeFrame(text: string): Frame {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch {
    throw new ProtocolError("frame is not valid JSON");
  }
  const obj = raw as Partial<Frame>;
  if (typeof obj !== "object" || obj === null) throw new ProtocolError("frame is not an object");
  if (typeof obj.kind !== "string") throw new ProtocolError("frame has no kind");
  if (typeof obj.seq !== "number") throw new ProtocolError("frame has no sequence number");
  const known: FrameKind[] = ["hello", "command", "mode_set", "state", "event", "metrics", "error"];
  if (!known.includes(obj.kind as FrameKind)) throw new ProtocolError(`unknown frame kind ${obj.kind}`);
  return { kind: obj.kind as FrameKind, seq: obj.seq, payload: (obj.payload ?? {}) as Record<string, unknown> };
}

export function encodeCommand(seq: number, ee: [number, number], steer: number | null): string {
  return JSON.stringify({ kind: "command", seq, payload: { ee, steer } });
}

export function encodeModeSet(seq: number, mode: "cooperative" | "noncooperative"): string {
  return JSON.stringify({ kind: "mode_set", seq, payload: { mode } });
}

/** Guards the strictly-increasing sequence invariant of inbound frames. */
export class SequenceTracker {
  private last = 0;

  accept(frame: Frame): boolean {
    if (frame.seq <= this.last) return false;
    this.last = frame.seq;
    return true;
  }

  get current(): number {
    return this.last;
  }
}

export function checkHello(payload: HelloPayload): string | null {
  if (payload.schema_version !== SCHEMA_VERSION) {
    return `incompatible schema version ${payload.schema_version} (expected ${SCHEMA_VERSION})`;
  }
  return null;
}
