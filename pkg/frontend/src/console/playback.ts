// Schematic clip playback: labeled boxes on a camera-sized canvas, stepped
// at the scenario frame rate. Frames are fetched once; the model here is
// pure so seeking and timing are testable without a canvas.

import type { ClipFrame } from "../shared/protocol.js";

export interface LabeledBox {
  label: string;
  cls: string;
  x: number;
  y: number;
  w: number;
  h: number;
}

export class PlaybackModel {
  readonly frames: ClipFrame[];
  readonly fps: number;

  constructor(frames: ClipFrame[], fps?: number) {
    if (frames.length === 0) throw new Error("empty clip");
    this.frames = frames;
    if (fps !== undefined) {
      this.fps = fps;
    } else if (frames.length >= 2) {
      this.fps = 1000.0 / (frames[1].ts - frames[0].ts);
    } else {
      this.fps = 30;
    }
  }

  get frameCount(): number {
    return this.frames.length;
  }

  /** Playback duration at the scenario frame rate, in milliseconds. */
  get durationMs(): number {
    return (this.frames.length * 1000.0) / this.fps;
  }

  /** Frame index for a playback clock; clamps at the last frame. */
  frameIndexAt(elapsedMs: number): number {
    const idx = Math.floor((elapsedMs * this.fps) / 1000.0);
    return Math.max(0, Math.min(idx, this.frames.length - 1));
  }

  boxesAt(index: number): LabeledBox[] {
    const frame = this.frames[index];
    if (!frame) throw new Error(`no frame ${index} in clip of ${this.frames.length}`);
    return frame.boxes.map(([id, cls, x, y, w, h]) => ({
      label: id,
      cls,
      x,
      y,
      w,
      h,
    }));
  }
}
