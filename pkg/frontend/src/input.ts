/**
 * Operator input: gamepad left stick with deadzone, keyboard arrows as the
 * mandatory fallback, optional manual steering on A/D. Commands are clamped
 * client-side to the server's advertised end-effector velocity limit (the
 * server clamps again) and rate-limited to the server frame rate by the
 * cockpit loop sending one command per received state frame.
 */

export interface GamepadLike {
  axes: ReadonlyArray<number>;
  connected: boolean;
}

export interface OperatorSample {
  ee: [number, number];
  steer: number | null;
  device: "gamepad" | "keyboard" | "none";
}

export const DEADZONE = 0.12;

export class InputState {
  maxVelocity = 0.6;
  steerLimit = 0.6;
  private keys = new Set<string>();
  private pad: GamepadLike | null = null;
  deviceLost = false;
  manualSteer = false;

  setLimits(maxVelocity: number, steerLimit: number): void {
    this.maxVelocity = maxVelocity;
    this.steerLimit = steerLimit;
  }

  keyDown(code: string): void {
    this.keys.add(code);
  }

  keyUp(code: string): void {
    this.keys.delete(code);
  }

  setGamepad(pad: GamepadLike | null): void {
    if (this.pad && (!pad || !pad.connected)) this.deviceLost = true;
    if (pad && pad.connected) this.deviceLost = false;
    this.pad = pad && pad.connected ? pad : null;
  }

  /** Current command; gamepad wins over keyboard when present. */
  sample(): OperatorSample {
    if (this.pad) {
      const raw: [number, number] = [this.pad.axes[0] ?? 0, -(this.pad.axes[1] ?? 0)];
      const mag = Math.hypot(raw[0], raw[1]);
      if (mag < DEADZONE) return { ee: [0, 0], steer: this.steerSample(), device: "gamepad" };
      // rescale so the deadzone edge maps to zero and full deflection to max
      const scaled = Math.min((mag - DEADZONE) / (1 - DEADZONE), 1) * this.maxVelocity;
      return {
        ee: [(raw[0] / mag) * scaled, (raw[1] / mag) * scaled],
        steer: this.steerSample(),
        device: "gamepad",
      };
    }
    let du = 0;
    let dv = 0;
    if (this.keys.has("ArrowRight")) du += 1;
    if (this.keys.has("ArrowLeft")) du -= 1;
    if (this.keys.has("ArrowUp")) dv += 1;
    if (this.keys.has("ArrowDown")) dv -= 1;
    const mag = Math.hypot(du, dv);
    const ee: [number, number] = mag > 0
      ? [(du / mag) * this.maxVelocity, (dv / mag) * this.maxVelocity]
      : [0, 0];
    const device = this.keys.size > 0 ? "keyboard" : "none";
    return { ee: clampCommand(ee, this.maxVelocity), steer: this.steerSample(), device };
  }

  private steerSample(): number | null {
    if (!this.manualSteer) return null;
    let s = 0;
    if (this.keys.has("KeyA")) s += this.steerLimit;
    if (this.keys.has("KeyD")) s -= this.steerLimit;
    return s;
  }
}

/** Mirror of the server-side command clamp. */
export function clampCommand(ee: [number, number], limit: number): [number, number] {
  const mag = Math.hypot(ee[0], ee[1]);
  if (mag <= limit || mag === 0) return ee;
  return [(ee[0] / mag) * limit, (ee[1] / mag) * limit];
}
