/**
 * 2-D schematic cockpit rendering: top-down path view, transverse arm view,
 * strip charts, status row. Draws only numbers taken from server frames.
 * The drawing surface is an injectable subset of CanvasRenderingContext2D so
 * node tests can drive the renderer with a recording stub; render errors are
 * isolated per widget.
 */

import { HelloPayload, StateFrame } from "./protocol.js";
import { PlotBuffer } from "./plotbuffer.js";

export interface Ctx2D {
  canvas?: { width: number; height: number };
  fillStyle: string | unknown;
  strokeStyle: string | unknown;
  lineWidth: number;
  font: string;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  stroke(): void;
  fill(): void;
  fillText(text: string, x: number, y: number): void;
  save(): void;
  restore(): void;
  translate(x: number, y: number): void;
  rotate(a: number): void;
}

export interface CockpitView {
  hello: HelloPayload | null;
  state: StateFrame | null;
  stale: boolean;
  status: string;
  banner: string | null;
  roll: PlotBuffer;
  pitch: PlotBuffer;
  pressure: PlotBuffer;
  flow: PlotBuffer;
}

const W = 960;
const H = 640;

export class Renderer {
  widgetErrors: Record<string, string> = {};
  framesRendered = 0;

  constructor(private ctx: Ctx2D) {}

  render(view: CockpitView): void {
    const ctx = this.ctx;
    ctx.fillStyle = "#10141a";
    ctx.fillRect(0, 0, W, H);
    const widgets: Array<[string, () => void]> = [
      ["topdown", () => this.topDown(view, 10, 10, 600, 300)],
      ["arm", () => this.armView(view, 620, 10, 330, 300)],
      ["charts", () => this.charts(view, 10, 320, 940, 270)],
      ["statusbar", () => this.statusBar(view, 10, 600, 940, 30)],
    ];
    for (const [name, draw] of widgets) {
      try {
        this.ctx.save();
        draw();
        this.ctx.restore();
        delete this.widgetErrors[name];
      } catch (err) {
        this.ctx.restore();
        this.widgetErrors[name] = String(err);
      }
    }
    this.framesRendered += 1;
  }

  private frame(x: number, y: number, w: number, h: number, title: string): void {
    const ctx = this.ctx;
    ctx.fillStyle = "#1a2028";
    ctx.fillRect(x, y, w, h);
    ctx.strokeStyle = "#2e3a46";
    ctx.lineWidth = 1;
    ctx.strokeRect(x, y, w, h);
    ctx.fillStyle = "#8fa3b8";
    ctx.font = "12px sans-serif";
    ctx.fillText(title, x + 8, y + 16);
  }

  private topDown(view: CockpitView, x: number, y: number, w: number, h: number): void {
    const ctx = this.ctx;
    this.frame(x, y, w, h, "top-down");
    const hello = view.hello;
    const s = view.state;
    if (!hello || !s) return;
    const length = hello.scenario.length;
    const sx = (v: number) => x + 20 + (v / length) * (w - 40);
    const sy = (d: number) => y + h / 2 - d * 22;

    // road centerline and the work side
    ctx.strokeStyle = "#3d4c5c";
    ctx.beginPath();
    ctx.moveTo(sx(0), sy(0));
    ctx.lineTo(sx(length), sy(0));
    ctx.stroke();

    // checkpoints
    ctx.strokeStyle = "#59514a";
    for (const c of hello.scenario.checkpoints) {
      ctx.beginPath();
      ctx.moveTo(sx(c), y + 24);
      ctx.lineTo(sx(c), y + h - 8);
      ctx.stroke();
    }

    // obstacle
    const ob = hello.scenario.obstacle;
    ctx.fillStyle = "#a33";
    ctx.fillRect(sx(ob.s) - 4, sy(ob.d) - 4, 8 + ob.extent, 8);

    // end-effector trace target: work line sample at the vehicle position
    ctx.fillStyle = "#e0b94a";
    ctx.beginPath();
    ctx.arc(sx(s.odo_s), sy(s.ee_d), 4, 0, Math.PI * 2);
    ctx.fill();

    // vehicle pose
    ctx.save();
    ctx.translate(sx(s.odo_s), sy(s.d_veh));
    ctx.rotate(-(s.yaw - roadHeading(hello, s.odo_s)));
    ctx.fillStyle = view.stale ? "#666" : "#4a90d9";
    ctx.fillRect(-10, -5, 20, 10);
    ctx.restore();
  }

  private armView(view: CockpitView, x: number, y: number, w: number, h: number): void {
    const ctx = this.ctx;
    this.frame(x, y, w, h, "transverse arm");
    const hello = view.hello;
    const s = view.state;
    if (!hello || !s) return;
    const scale = 40;
    const ox = x + 60;
    const oy = y + h - 80;
    const px = (u: number) => ox + u * scale;
    const py = (v: number) => oy - v * scale;

    // ground
    ctx.strokeStyle = "#3d4c5c";
    ctx.beginPath();
    ctx.moveTo(x + 8, py(-(hello.mount_offset[2] + 1.15)));
    ctx.lineTo(x + w - 8, py(-(hello.mount_offset[2] + 1.15)));
    ctx.stroke();

    // links from the mount, cumulative angles
    const phis = [s.phi1, s.phi2, s.phi3, s.phi4];
    let theta = 0;
    let u = 0;
    let v = 0;
    ctx.strokeStyle = view.stale ? "#666" : "#d9804a";
    ctx.lineWidth = 3;
    ctx.beginPath();
    ctx.moveTo(px(0), py(0));
    for (let i = 0; i < 4; i++) {
      theta += phis[i];
      u += hello.link_lengths[i] * Math.cos(theta);
      v += hello.link_lengths[i] * Math.sin(theta);
      ctx.lineTo(px(u), py(v));
    }
    ctx.stroke();
    ctx.lineWidth = 1;

    // end-effector and its height reference
    ctx.fillStyle = "#e0b94a";
    ctx.beginPath();
    ctx.arc(px(s.ee_u), py(s.ee_v), 4, 0, Math.PI * 2);
    ctx.fill();
  }

  private charts(view: CockpitView, x: number, y: number, w: number, h: number): void {
    const half = (w - 10) / 2;
    this.chart(view.roll, view.pitch, x, y, half, h, "roll / pitch [rad]");
    this.chart(view.pressure, view.flow, x + half + 10, y, half, h, "P_oil(3) [Pa] / Q_oil(3) [m3/s]");
  }

  private chart(a: PlotBuffer, b: PlotBuffer, x: number, y: number,
                w: number, h: number, title: string): void {
    const ctx = this.ctx;
    this.frame(x, y, w, h, title);
    const colors = ["#4a90d9", "#d9804a"];
    [a, b].forEach((buf, idx) => {
      if (buf.length < 2) return;
      const { t, v } = buf.series();
      const [lo, hi] = buf.range();
      const t0 = t[0];
      const t1 = t[t.length - 1] || 1;
      ctx.strokeStyle = colors[idx];
      ctx.beginPath();
      for (let i = 0; i < t.length; i++) {
        const sx = x + 8 + ((t[i] - t0) / Math.max(t1 - t0, 1e-9)) * (w - 16);
        const sy = y + h - 10 - ((v[i] - lo) / (hi - lo)) * (h - 36);
        if (i === 0) ctx.moveTo(sx, sy);
        else ctx.lineTo(sx, sy);
      }
      ctx.stroke();
    });
  }

  private statusBar(view: CockpitView, x: number, y: number, w: number, h: number): void {
    const ctx = this.ctx;
    ctx.fillStyle = "#1a2028";
    ctx.fillRect(x, y, w, h);
    ctx.font = "13px sans-serif";
    const mode = view.state ? (view.state.mode >= 0.5 ? "cooperative" : "noncooperative") : "-";
    ctx.fillStyle = mode === "cooperative" ? "#5ec46a" : "#d9804a";
    ctx.fillText(`mode: ${mode}`, x + 8, y + 20);
    ctx.fillStyle = view.stale ? "#d9534f" : "#8fa3b8";
    const t = view.state ? view.state.t.toFixed(2) : "-";
    ctx.fillText(`status: ${view.status}${view.stale ? " (stale)" : ""}  t=${t}s`, x + 160, y + 20);
    if (view.banner) {
      ctx.fillStyle = "#d9534f";
      ctx.fillText(view.banner, x + 480, y + 20);
    }
  }
}

/** Road heading of the gentle curve; mirrors the server's scenario geometry. */
export function roadHeading(hello: HelloPayload, s: number): number {
  // the server draws the curve into the reference poses; for the schematic
  // top-down view a straightened road frame is used, so heading offset is 0
  return 0;
}
