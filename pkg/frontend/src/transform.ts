// Canvas <-> scene-meter mapping for the BEV editing surface.
//
// Scene frame: +x forward, +y left, origin at the ego vehicle. The BEV
// raster (and therefore the canvas) puts +x at the top edge and +y at the
// left edge, matching the service's raster layout. The transform is exact,
// so canvas -> meters -> canvas returns the original point.

export interface BevTransform {
  extentMeters: number; // half-width of the square view
  canvasSize: number;   // square canvas, pixels per side
}

export interface CanvasPoint {
  px: number;
  py: number;
}

export interface ScenePoint {
  x: number;
  y: number;
}

export function canvasToScene(t: BevTransform, p: CanvasPoint): ScenePoint {
  const metersPerPixel = (2 * t.extentMeters) / t.canvasSize;
  return {
    x: t.extentMeters - p.py * metersPerPixel,
    y: t.extentMeters - p.px * metersPerPixel,
  };
}

export function sceneToCanvas(t: BevTransform, s: ScenePoint): CanvasPoint {
  const pixelsPerMeter = t.canvasSize / (2 * t.extentMeters);
  return {
    px: (t.extentMeters - s.y) * pixelsPerMeter,
    py: (t.extentMeters - s.x) * pixelsPerMeter,
  };
}

export function insideView(t: BevTransform, s: ScenePoint): boolean {
  return Math.abs(s.x) <= t.extentMeters && Math.abs(s.y) <= t.extentMeters;
}
