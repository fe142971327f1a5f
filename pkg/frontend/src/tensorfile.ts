// Client-side parser for the service's binary tensor bodies.
//
// Layout: 6-byte magic "RVIMG1", three little-endian uint32 dims (H, W, C),
// then H*W*C little-endian float32 values, row-major with channel fastest.

export interface Tensor {
  h: number;
  w: number;
  c: number;
  data: Float32Array;
}

const MAGIC = "RVIMG1";
const HEADER = 18;

export function parseTensor(buf: ArrayBuffer): Tensor {
  if (buf.byteLength < HEADER) throw new Error("tensor body shorter than header");
  const bytes = new Uint8Array(buf, 0, 6);
  const magic = String.fromCharCode(...bytes);
  if (magic !== MAGIC) throw new Error(`bad tensor magic ${magic}`);
  const view = new DataView(buf);
  const h = view.getUint32(6, true);
  const w = view.getUint32(10, true);
  const c = view.getUint32(14, true);
  const n = h * w * c;
  if (buf.byteLength !== HEADER + 4 * n) {
    throw new Error(`tensor payload ${buf.byteLength - HEADER} bytes, expected ${4 * n}`);
  }
  // copy so alignment is guaranteed regardless of the source buffer
  const data = new Float32Array(n);
  for (let i = 0; i < n; i++) data[i] = view.getFloat32(HEADER + 4 * i, true);
  return { h, w, c, data };
}

export function at(t: Tensor, row: number, col: number, ch = 0): number {
  return t.data[(row * t.w + col) * t.c + ch];
}

export function countNonZero(t: Tensor): number {
  let n = 0;
  for (const v of t.data) if (v !== 0) n++;
  return n;
}
