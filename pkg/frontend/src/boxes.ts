// Oriented-box model and the gesture math for placing, dragging, and
// rotating boxes on the BEV canvas.

export interface EditorBox {
  id: number;
  cx: number;   // meters, scene frame
  cy: number;
  cz: number;
  length: number;
  width: number;
  height: number;
  yaw: number;  // radians about +z, (-pi, pi]
}

export const DEFAULT_CAR = { length: 4.5, width: 1.9, height: 1.6 };
// cars sit on the ground plane at z = -1.7 relative to the sensor
export const GROUND_Z = -1.7;

let nextId = 1;

export function resetBoxIds(): void {
  nextId = 1;
}

export function wrapAngle(a: number): number {
  let r = a % (2 * Math.PI);
  if (r <= -Math.PI) r += 2 * Math.PI;
  else if (r > Math.PI) r -= 2 * Math.PI;
  return r;
}

export function defaultBoxAt(x: number, y: number): EditorBox {
  return {
    id: nextId++,
    cx: x,
    cy: y,
    cz: GROUND_Z + DEFAULT_CAR.height / 2,
    length: DEFAULT_CAR.length,
    width: DEFAULT_CAR.width,
    height: DEFAULT_CAR.height,
    yaw: 0,
  };
}

export function moveBox(box: EditorBox, dx: number, dy: number): EditorBox {
  return { ...box, cx: box.cx + dx, cy: box.cy + dy };
}

/** Rotate-handle gesture: yaw follows the vector from center to grab point. */
export function yawFromHandle(box: EditorBox, x: number, y: number): EditorBox {
  return { ...box, yaw: wrapAngle(Math.atan2(y - box.cy, x - box.cx)) };
}

export function rotateBy(box: EditorBox, delta: number): EditorBox {
  return { ...box, yaw: wrapAngle(box.yaw + delta) };
}

export function resize(box: EditorBox, length: number, width: number): EditorBox {
  if (length <= 0 || width <= 0) throw new Error("box extents must be positive");
  return { ...box, length, width };
}

/** Corner positions in scene meters (BEV outline), counter-clockwise. */
export function bevCorners(box: EditorBox): Array<[number, number]> {
  const c = Math.cos(box.yaw);
  const s = Math.sin(box.yaw);
  const hl = box.length / 2;
  const hw = box.width / 2;
  const local: Array<[number, number]> = [
    [hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw],
  ];
  return local.map(([u, v]) => [box.cx + c * u - s * v, box.cy + s * u + c * v]);
}

export function containsPoint(box: EditorBox, x: number, y: number): boolean {
  const c = Math.cos(box.yaw);
  const s = Math.sin(box.yaw);
  const dx = x - box.cx;
  const dy = y - box.cy;
  const u = c * dx + s * dy;
  const v = -s * dx + c * dy;
  return Math.abs(u) <= box.length / 2 && Math.abs(v) <= box.width / 2;
}

/** Serialize for the service: cx,cy,cz,l,w,h,yaw. */
export function boxField(box: EditorBox): string {
  return [box.cx, box.cy, box.cz, box.length, box.width, box.height, box.yaw]
    .map((v) => String(v))
    .join(",");
}
