/** Fixed-capacity ring buffer feeding the strip charts. */

export class PlotBuffer {
  private t: Float64Array;
  private v: Float64Array;
  private head = 0;
  private filled = 0;

  constructor(readonly capacity: number = 600) {
    this.t = new Float64Array(capacity);
    this.v = new Float64Array(capacity);
  }

  push(time: number, value: number): void {
    this.t[this.head] = time;
    this.v[this.head] = value;
    this.head = (this.head + 1) % this.capacity;
    if (this.filled < this.capacity) this.filled += 1;
  }

  get length(): number {
    return this.filled;
  }

  /** Oldest-to-newest snapshot. */
  series(): { t: Float64Array; v: Float64Array } {
    const n = this.filled;
    const t = new Float64Array(n);
    const v = new Float64Array(n);
    const start = (this.head - n + this.capacity) % this.capacity;
    for (let i = 0; i < n; i++) {
      const j = (start + i) % this.capacity;
      t[i] = this.t[j];
      v[i] = this.v[j];
    }
    return { t, v };
  }

  range(): [number, number] {
    if (this.filled === 0) return [0, 1];
    let lo = Infinity;
    let hi = -Infinity;
    const { v } = this.series();
    for (const x of v) {
      if (x < lo) lo = x;
      if (x > hi) hi = x;
    }
    if (lo === hi) {
      lo -= 0.5;
      hi += 0.5;
    }
    return [lo, hi];
  }
}
