/**
 * Round-brush rasterization, shared rule with the server:
 * a pixel is painted iff its center (x = column, y = row) lies within
 * brush_radius_px of the stroke polyline (point-to-segment distance).
 */

export type Point = [number, number]; // [x, y]

function distToSegmentSq(px: number, py: number, a: Point, b: Point): number {
  const [ax, ay] = a;
  const [bx, by] = b;
  const dx = bx - ax;
  const dy = by - ay;
  const lenSq = dx * dx + dy * dy;
  let t = 0;
  if (lenSq > 0) {
    t = ((px - ax) * dx + (py - ay) * dy) / lenSq;
    t = Math.max(0, Math.min(1, t));
  }
  const cx = ax + t * dx;
  const cy = ay + t * dy;
  return (px - cx) * (px - cx) + (py - cy) * (py - cy);
}

/**
 * Rasterize a polyline stroke into a boolean footprint over an
 * (height x width) pixel grid, row-major.
 */
export function rasterizeStroke(
  shape: [number, number],
  polyline: Point[],
  radiusPx: number,
): Uint8Array {
  if (polyline.length === 0) {
    throw new Error('stroke polyline must contain at least one point');
  }
  if (!(radiusPx > 0)) {
    throw new Error('brush radius must be positive');
  }
  const [height, width] = shape;
  const out = new Uint8Array(height * width);
  const rSq = radiusPx * radiusPx;
  const segments: Array<[Point, Point]> =
    polyline.length === 1
      ? [[polyline[0], polyline[0]]]
      : polyline.slice(1).map((p, i): [Point, Point] => [polyline[i], p]);

  for (const [a, b] of segments) {
    // bounding box of the capsule, clamped to the grid
    const x0 = Math.max(0, Math.floor(Math.min(a[0], b[0]) - radiusPx));
    const x1 = Math.min(width - 1, Math.ceil(Math.max(a[0], b[0]) + radiusPx));
    const y0 = Math.max(0, Math.floor(Math.min(a[1], b[1]) - radiusPx));
    const y1 = Math.min(height - 1, Math.ceil(Math.max(a[1], b[1]) + radiusPx));
    for (let y = y0; y <= y1; y++) {
      for (let x = x0; x <= x1; x++) {
        if (distToSegmentSq(x, y, a, b) <= rSq) {
          out[y * width + x] = 1;
        }
      }
    }
  }
  return out;
}

/** Apply a footprint to a label buffer, returning the changed indices. */
export function paintFootprint(
  mask: Uint8Array,
  footprint: Uint8Array,
  label: number,
): number[] {
  const changed: number[] = [];
  for (let i = 0; i < mask.length; i++) {
    if (footprint[i] && mask[i] !== label) {
      changed.push(i);
      mask[i] = label;
    }
  }
  return changed;
}
