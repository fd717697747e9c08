/**
 * Bars-and-numbers rendering of validated frames.
 *
 * No 3D, no avatar: one labeled horizontal bar per blendshape, numeric
 * readouts for jaw/head Euler angles, and a status line with seq, drop
 * count, and violation count.
 *
 * Receiving and painting are decoupled by a one-frame buffer: the
 * network handler offers frames as they arrive, an animation-frame loop
 * paints the latest one and discards anything older.
 */

import { ARKIT_BLENDSHAPE_NAMES } from "./schema.js";
import type { FrameView } from "./client.js";

/** Latest-wins single-slot buffer. */
export class FrameBuffer {
  private slot: FrameView | null = null;
  private replaced = 0;

  offer(view: FrameView): void {
    if (this.slot !== null) this.replaced += 1;
    this.slot = view;
  }

  take(): FrameView | null {
    const v = this.slot;
    this.slot = null;
    return v;
  }

  /** frames that were overwritten before ever being painted */
  get overwritten(): number {
    return this.replaced;
  }
}

export interface RendererStats {
  painted: number;
  invalid: number;
  dropped: number;
}

export class BarRenderer {
  private bars: HTMLElement[] = [];
  private numbers: HTMLElement[] = [];
  private status: HTMLElement;
  private pose: HTMLElement;
  private stats: RendererStats = { painted: 0, invalid: 0, dropped: 0 };

  constructor(root: HTMLElement, doc: Document) {
    const grid = doc.createElement("div");
    grid.className = "bars";
    for (const name of ARKIT_BLENDSHAPE_NAMES) {
      const row = doc.createElement("div");
      row.className = "row";
      const label = doc.createElement("span");
      label.className = "label";
      label.textContent = name;
      const track = doc.createElement("div");
      track.className = "track";
      const bar = doc.createElement("div");
      bar.className = "bar";
      track.appendChild(bar);
      const num = doc.createElement("span");
      num.className = "num";
      num.textContent = "0.000";
      row.append(label, track, num);
      grid.appendChild(row);
      this.bars.push(bar);
      this.numbers.push(num);
    }
    this.pose = doc.createElement("div");
    this.pose.className = "pose";
    this.status = doc.createElement("div");
    this.status.className = "status";
    root.append(this.status, this.pose, grid);
  }

  /** Paint one validated frame; invalid views only bump the status line. */
  paint(view: FrameView, droppedFrames: number): void {
    if (!view.ok || view.frame === null) {
      this.stats.invalid += 1;
      this.status.textContent =
        `INVALID frame (${this.stats.invalid} total): ${view.errors[0] ?? ""}`;
      return;
    }
    const f = view.frame;
    ARKIT_BLENDSHAPE_NAMES.forEach((name, i) => {
      const w = f.blendshapes[name] ?? 0;
      this.bars[i]!.style.width = `${(w * 100).toFixed(1)}%`;
      this.numbers[i]!.textContent = w.toFixed(3);
    });
    const e = (v: { x: number; y: number; z: number }) =>
      `x ${v.x.toFixed(3)}  y ${v.y.toFixed(3)}  z ${v.z.toFixed(3)}`;
    this.pose.textContent = `jaw  ${e(f.jaw)}    head  ${e(f.head)}`;
    this.stats.painted += 1;
    this.stats.dropped = droppedFrames;
    this.status.textContent =
      `seq ${f.seq}  t ${f.t_ms} ms  painted ${this.stats.painted}  ` +
      `dropped ${droppedFrames}  invalid ${this.stats.invalid}`;
  }

  snapshot(): RendererStats {
    return { ...this.stats };
  }
}
