/** Pointer-stroke helpers. */

export type Point = [number, number];

/**
 * Thin a raw pointer trail to a polyline whose consecutive vertices are at
 * least `minSpacing` px apart (the server treats the points as a polyline,
 * so dense duplicates only add payload).
 */
export function downsampleStroke(points: Point[], minSpacing = 2): Point[] {
  if (points.length === 0) return [];
  const out: Point[] = [points[0]];
  for (const p of points.slice(1)) {
    const last = out[out.length - 1];
    if (Math.hypot(p[0] - last[0], p[1] - last[1]) >= minSpacing) {
      out.push(p);
    }
  }
  return out;
}

/** Clamp a canvas-space point into image bounds and snap to a pixel. */
export function snapToImage(p: Point, width: number, height: number): Point {
  return [Math.min(width - 1, Math.max(0, Math.round(p[0]))),
          Math.min(height - 1, Math.max(0, Math.round(p[1])))];
}
