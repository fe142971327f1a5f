// Framebuffer rendering for the BEV surface and the range-view strip.
//
// Everything draws into a plain RGBA byte buffer so the layer logic is
// testable without a browser; the DOM layer blits buffers into canvases.

import { EditorBox, bevCorners } from "./boxes.js";
import { BevTransform, sceneToCanvas } from "./transform.js";
import { Tensor } from "./tensorfile.js";

export interface FrameBuffer {
  width: number;
  height: number;
  data: Uint8ClampedArray; // RGBA
}

export type RGBA = [number, number, number, number];

export function makeFrame(width: number, height: number, fill: RGBA = [10, 12, 16, 255]): FrameBuffer {
  const data = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < width * height; i++) data.set(fill, i * 4);
  return { width, height, data };
}

export function putPixel(fb: FrameBuffer, x: number, y: number, color: RGBA): void {
  const xi = Math.round(x);
  const yi = Math.round(y);
  if (xi < 0 || yi < 0 || xi >= fb.width || yi >= fb.height) return;
  fb.data.set(color, (yi * fb.width + xi) * 4);
}

export function getPixel(fb: FrameBuffer, x: number, y: number): RGBA {
  const off = (y * fb.width + x) * 4;
  return [fb.data[off], fb.data[off + 1], fb.data[off + 2], fb.data[off + 3]];
}

/** Occupancy raster -> grayscale layer, log-scaled so sparse cells stay visible. */
export function drawBevLayer(fb: FrameBuffer, bev: Tensor, tint: RGBA = [235, 235, 235, 255]): void {
  let peak = 0;
  for (const v of bev.data) if (v > peak) peak = v;
  if (peak <= 0) return;
  const sx = fb.width / bev.w;
  const sy = fb.height / bev.h;
  for (let r = 0; r < bev.h; r++) {
    for (let c = 0; c < bev.w; c++) {
      const v = bev.data[(r * bev.w + c) * bev.c];
      if (v <= 0) continue;
      const a = Math.log1p(v) / Math.log1p(peak);
      const color: RGBA = [tint[0] * a, tint[1] * a, tint[2] * a, 255];
      for (let y = Math.floor(r * sy); y < Math.ceil((r + 1) * sy); y++) {
        for (let x = Math.floor(c * sx); x < Math.ceil((c + 1) * sx); x++) {
          putPixel(fb, x, y, color);
        }
      }
    }
  }
}

/** Cells where two occupancy rasters differ, painted as a highlight layer. */
export function drawBevDiff(
  fb: FrameBuffer,
  before: Tensor,
  after: Tensor,
  color: RGBA = [255, 64, 32, 255],
): number {
  if (before.w !== after.w || before.h !== after.h) throw new Error("bev shape mismatch");
  const sx = fb.width / before.w;
  const sy = fb.height / before.h;
  let cells = 0;
  for (let r = 0; r < before.h; r++) {
    for (let c = 0; c < before.w; c++) {
      const i = (r * before.w + c) * before.c;
      if (before.data[i] === after.data[i]) continue;
      cells++;
      for (let y = Math.floor(r * sy); y < Math.ceil((r + 1) * sy); y++) {
        for (let x = Math.floor(c * sx); x < Math.ceil((c + 1) * sx); x++) {
          putPixel(fb, x, y, color);
        }
      }
    }
  }
  return cells;
}

export function diffCells(before: Tensor, after: Tensor): Array<[number, number]> {
  const out: Array<[number, number]> = [];
  for (let r = 0; r < before.h; r++) {
    for (let c = 0; c < before.w; c++) {
      const i = (r * before.w + c) * before.c;
      if (before.data[i] !== after.data[i]) out.push([r, c]);
    }
  }
  return out;
}

function line(fb: FrameBuffer, x0: number, y0: number, x1: number, y1: number, color: RGBA): void {
  const steps = Math.max(Math.abs(x1 - x0), Math.abs(y1 - y0), 1);
  for (let i = 0; i <= steps; i++) {
    const t = i / steps;
    putPixel(fb, x0 + (x1 - x0) * t, y0 + (y1 - y0) * t, color);
  }
}

/** Box outline plus a heading tick from the center toward +x of the box. */
export function drawBoxOutline(
  fb: FrameBuffer,
  t: BevTransform,
  box: EditorBox,
  color: RGBA = [80, 200, 255, 255],
): void {
  const pts = bevCorners(box).map(([x, y]) => sceneToCanvas(t, { x, y }));
  for (let i = 0; i < 4; i++) {
    const a = pts[i];
    const b = pts[(i + 1) % 4];
    line(fb, a.px, a.py, b.px, b.py, color);
  }
  const center = sceneToCanvas(t, { x: box.cx, y: box.cy });
  const nose = sceneToCanvas(t, {
    x: box.cx + (Math.cos(box.yaw) * box.length) / 2,
    y: box.cy + (Math.sin(box.yaw) * box.length) / 2,
  });
  line(fb, center.px, center.py, nose.px, nose.py, color);
}

/** Range-view mask strip: mask tensor (H, W, 1) -> translucent highlight. */
export function drawMaskStrip(fb: FrameBuffer, mask: Tensor, on: RGBA = [255, 190, 40, 255]): number {
  const sx = fb.width / mask.w;
  const sy = fb.height / mask.h;
  let set = 0;
  for (let r = 0; r < mask.h; r++) {
    for (let c = 0; c < mask.w; c++) {
      if (mask.data[(r * mask.w + c) * mask.c] === 0) continue;
      set++;
      for (let y = Math.floor(r * sy); y < Math.ceil((r + 1) * sy); y++) {
        for (let x = Math.floor(c * sx); x < Math.ceil((c + 1) * sx); x++) {
          putPixel(fb, x, y, on);
        }
      }
    }
  }
  return set;
}

export function framesEqual(a: FrameBuffer, b: FrameBuffer): boolean {
  if (a.width !== b.width || a.height !== b.height) return false;
  for (let i = 0; i < a.data.length; i++) if (a.data[i] !== b.data[i]) return false;
  return true;
}
