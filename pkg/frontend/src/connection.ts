/**
 * Cockpit-side session handling: connect/handshake, automatic reconnect with
 * backoff, stale-frame detection and outbound sequence numbering. The socket
 * factory is injectable so tests can run against the node `ws` client or a
 * fake; the browser passes the global WebSocket.
 */

import {
  Frame, HelloPayload, StateFrame, SequenceTracker,
  decodeFrame, encodeCommand, encodeModeSet, checkHello,
} from "./protocol.js";

export type ConnectionStatus = "connecting" | "connected" | "incompatible" | "disconnected";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ConnectionEvents {
  onStatus?(status: ConnectionStatus, detail?: string): void;
  onHello?(hello: HelloPayload): void;
  onState?(state: StateFrame): void;
  onEvent?(payload: Record<string, unknown>): void;
  onError?(message: string): void;
}

export const STALE_AFTER_MS = 250;

export class CockpitConnection {
  status: ConnectionStatus = "disconnected";
  hello: HelloPayload | null = null;
  lastState: StateFrame | null = null;
  lastFrameAt = 0;
  lastAck = 0;

  private socket: SocketLike | null = null;
  private outSeq = 0;
  private tracker = new SequenceTracker();
  private retryDelay = 500;
  private closedByUser = false;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private url: string,
    private factory: SocketFactory,
    private events: ConnectionEvents = {},
    private now: () => number = () => Date.now(),
  ) {}

  connect(): void {
    this.closedByUser = false;
    this.open();
  }

  private open(): void {
    this.setStatus("connecting");
    this.tracker = new SequenceTracker();
    const sock = this.factory(this.url);
    this.socket = sock;
    sock.onopen = () => {
      this.retryDelay = 500;
    };
    sock.onmessage = (ev) => this.handleMessage(String(ev.data));
    sock.onclose = () => this.handleClose();
    sock.onerror = () => { /* onclose follows */ };
  }

  private handleMessage(text: string): void {
    let frame: Frame;
    try {
      frame = decodeFrame(text);
    } catch (err) {
      this.events.onError?.(String(err));
      return;
    }
    if (!this.tracker.accept(frame)) {
      this.events.onError?.(`out-of-order frame seq ${frame.seq}`);
      return;
    }
    this.lastFrameAt = this.now();
    switch (frame.kind) {
      case "hello": {
        const hello = frame.payload as unknown as HelloPayload;
        const incompatible = checkHello(hello);
        if (incompatible) {
          this.setStatus("incompatible", incompatible);
          this.socket?.close();
          return;
        }
        this.hello = hello;
        this.setStatus("connected");
        this.events.onHello?.(hello);
        break;
      }
      case "state": {
        const state = frame.payload as unknown as StateFrame;
        this.lastState = state;
        this.lastAck = state.ack ?? this.lastAck;
        this.events.onState?.(state);
        break;
      }
      case "event":
        this.events.onEvent?.(frame.payload);
        break;
      case "error":
        this.events.onError?.(String(frame.payload["message"] ?? "server error"));
        break;
      default:
        break;
    }
  }

  private handleClose(): void {
    this.socket = null;
    if (this.status !== "incompatible") this.setStatus("disconnected");
    if (this.closedByUser || this.status === "incompatible") return;
    this.retryTimer = setTimeout(() => this.open(), this.retryDelay);
    this.retryDelay = Math.min(this.retryDelay * 2, 10000);
  }

  private setStatus(status: ConnectionStatus, detail?: string): void {
    this.status = status;
    this.events.onStatus?.(status, detail);
  }

  /** Frames older than STALE_AFTER_MS mark the display as stale. */
  isStale(): boolean {
    return this.status === "connected" && this.now() - this.lastFrameAt > STALE_AFTER_MS;
  }

  sendCommand(ee: [number, number], steer: number | null = null): number {
    if (this.status !== "connected" || !this.socket) return -1;
    this.outSeq += 1;
    this.socket.send(encodeCommand(this.outSeq, ee, steer));
    return this.outSeq;
  }

  sendModeSet(mode: "cooperative" | "noncooperative"): number {
    if (this.status !== "connected" || !this.socket) return -1;
    this.outSeq += 1;
    this.socket.send(encodeModeSet(this.outSeq, mode));
    return this.outSeq;
  }

  close(): void {
    this.closedByUser = true;
    if (this.retryTimer) clearTimeout(this.retryTimer);
    this.socket?.close();
  }
}
