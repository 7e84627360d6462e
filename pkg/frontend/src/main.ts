/**
 * Browser wiring: connection, input devices, frame-coalescing render loop.
 * Single thread of control; socket events and input polling feed the newest
 * state, the animation loop always renders the latest frame.
 */

import { CockpitConnection } from "./connection.js";
import { InputState } from "./input.js";
import { PlotBuffer } from "./plotbuffer.js";
import { Renderer, CockpitView, Ctx2D } from "./render.js";

function startCockpit(): void {
  const canvas = document.getElementById("cockpit") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d") as unknown as Ctx2D;
  const renderer = new Renderer(ctx);
  const input = new InputState();

  const view: CockpitView = {
    hello: null,
    state: null,
    stale: false,
    status: "disconnected",
    banner: null,
    roll: new PlotBuffer(),
    pitch: new PlotBuffer(),
    pressure: new PlotBuffer(),
    flow: new PlotBuffer(),
  };

  const url = `ws://${location.host || "127.0.0.1:8732"}/session`;
  const conn = new CockpitConnection(url, (u) => new WebSocket(u) as never, {
    onStatus: (s, detail) => {
      view.status = s;
      view.banner = detail ?? null;
    },
    onHello: (hello) => {
      view.hello = hello;
      input.setLimits(hello.ee_velocity_limit, 0.6);
    },
    onState: (state) => {
      view.state = state;
      view.roll.push(state.t, state.roll);
      view.pitch.push(state.t, state.pitch);
      view.pressure.push(state.t, state.p_oil3);
      view.flow.push(state.t, state.q_oil3);
      // one command per state frame keeps the command rate at the server rate
      const sample = input.sample();
      conn.sendCommand(sample.ee, sample.steer);
      view.banner = input.deviceLost ? "gamepad lost - keyboard fallback" : view.banner;
    },
    onError: (message) => {
      view.banner = message;
    },
  });
  conn.connect();

  window.addEventListener("keydown", (ev) => {
    if (ev.code === "KeyM") {
      const mode = view.state && view.state.mode >= 0.5 ? "noncooperative" : "cooperative";
      conn.sendModeSet(mode);
      return;
    }
    input.keyDown(ev.code);
  });
  window.addEventListener("keyup", (ev) => input.keyUp(ev.code));

  const pollGamepad = () => {
    const pads = navigator.getGamepads?.() ?? [];
    input.setGamepad(pads.find((p) => p && p.connected) ?? null);
  };

  const loop = () => {
    pollGamepad();
    view.stale = conn.isStale();
    renderer.render(view);
    requestAnimationFrame(loop);
  };
  requestAnimationFrame(loop);
}

window.addEventListener("DOMContentLoaded", startCockpit);
