/**
 * Velocity-field presentation state. Frames arrive over the wire faster or
 * slower than the render loop runs; the view keeps only the newest frame
 * and drops anything with a non-increasing timestamp. Glyphs are decimated
 * to at most 32x32 regardless of grid resolution.
 */

import { FrameMessage, decodeGrid } from "./protocol.js";

export const MAX_GLYPHS_PER_AXIS = 32;

export interface GlyphField {
  nx: number;
  ny: number;
  stride: number;
  xs: number[];
  ys: number[];
  u: Float32Array;
  v: Float32Array;
  maxSpeed: number;
}

export class FieldView {
  latest: FrameMessage | null = null;
  particles: [number, number][] = [];
  dropped = 0;

  /** Returns true when the frame was accepted (newer than anything seen). */
  ingest(frame: FrameMessage): boolean {
    if (this.latest !== null && frame.t <= this.latest.t) {
      this.dropped += 1;
      return false;
    }
    this.latest = frame;
    this.particles = frame.particles;
    return true;
  }

  reset(): void {
    this.latest = null;
    this.particles = [];
    this.dropped = 0;
  }

  /** Decimated glyph grid of the latest frame, or null before any frame. */
  glyphs(): GlyphField | null {
    if (this.latest === null) return null;
    const { nx, ny } = this.latest.grid;
    const { u, v } = decodeGrid(this.latest.grid);
    const stride = Math.max(1, Math.ceil(Math.max(nx, ny) / MAX_GLYPHS_PER_AXIS));
    const xs: number[] = [];
    const ys: number[] = [];
    for (let i = 0; i < nx; i += stride) xs.push(nx === 1 ? 0 : i / (nx - 1));
    for (let j = 0; j < ny; j += stride) ys.push(ny === 1 ? 0 : j / (ny - 1));
    const du = new Float32Array(xs.length * ys.length);
    const dv = new Float32Array(xs.length * ys.length);
    let maxSpeed = 0;
    let out = 0;
    for (let i = 0; i < nx; i += stride) {
      for (let j = 0; j < ny; j += stride) {
        const k = i * ny + j; // row-major, x slowest
        du[out] = u[k] ?? 0;
        dv[out] = v[k] ?? 0;
        maxSpeed = Math.max(maxSpeed, Math.hypot(du[out]!, dv[out]!));
        out++;
      }
    }
    return { nx: xs.length, ny: ys.length, stride, xs, ys, u: du, v: dv, maxSpeed };
  }
}

/** Blue-to-red speed color, clamped at `vmax`. */
export function speedColor(speed: number, vmax: number): string {
  const t = vmax > 0 ? Math.min(speed / vmax, 1) : 0;
  const r = Math.round(40 + 215 * t);
  const g = Math.round(80 + 60 * (1 - Math.abs(t - 0.5) * 2));
  const b = Math.round(255 - 215 * t);
  return `rgb(${r},${g},${b})`;
}
