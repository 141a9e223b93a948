// Screen-space selection predicate, shared with the cleanup service.
//
// The service evaluates exactly these expressions, in exactly this order,
// when it applies a polygon + depth-range edit. The client runs the same
// code on its local copy of the cloud to preview a selection, so the two
// sides must not drift: any change here needs the matching change on the
// server, and vice versa. Demo-fixture points are generated with a margin
// to both the polygon edges and the depth bounds, so last-ulp differences
// between runtimes cannot flip a decision.

export interface Intrinsics {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
}

/** Row-major 4x4 rigid world-to-camera matrix, flattened to 16 numbers. */
export type ViewMatrix = number[];

export interface ProjectedPoints {
  u: Float64Array;
  v: Float64Array;
  z: Float64Array;
}

/**
 * Apply a rigid view to xyz-interleaved points. Each output coordinate is
 * the row of the matrix dotted with (x, y, z, 1), summed left to right.
 */
export function applyView(points: ArrayLike<number>, view: ViewMatrix): Float64Array {
  if (view.length !== 16) {
    throw new Error(`view must be 16 numbers, got ${view.length}`);
  }
  const n = Math.floor(points.length / 3);
  const out = new Float64Array(n * 3);
  for (let i = 0; i < n; i++) {
    const x = points[3 * i];
    const y = points[3 * i + 1];
    const z = points[3 * i + 2];
    out[3 * i] = view[0] * x + view[1] * y + view[2] * z + view[3];
    out[3 * i + 1] = view[4] * x + view[5] * y + view[6] * z + view[7];
    out[3 * i + 2] = view[8] * x + view[9] * y + view[10] * z + view[11];
  }
  return out;
}

/**
 * Pinhole projection of camera-space points to pixel-index coordinates.
 * Operation order is pinned to match the service: u = fx * (x / z) + cx.
 * Points at or behind the camera produce non-finite pixels; callers gate
 * on z > 0 before using them.
 */
export function projectPoints(camPoints: ArrayLike<number>, intr: Intrinsics): ProjectedPoints {
  const n = Math.floor(camPoints.length / 3);
  const u = new Float64Array(n);
  const v = new Float64Array(n);
  const z = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    const x = camPoints[3 * i];
    const y = camPoints[3 * i + 1];
    const zi = camPoints[3 * i + 2];
    u[i] = intr.fx * (x / zi) + intr.cx;
    v[i] = intr.fy * (y / zi) + intr.cy;
    z[i] = zi;
  }
  return { u, v, z };
}

/**
 * Even-odd crossing test against an implicitly closed polygon.
 *
 * Faithful port of the server predicate: the previous-vertex index starts
 * at the last vertex, horizontal edges are skipped, and a crossing counts
 * only when u is strictly left of the edge intersection.
 */
export function pointInPolygon(u: number, v: number, polygon: ArrayLike<ArrayLike<number>>): boolean {
  let inside = false;
  let j = polygon.length - 1;
  for (let i = 0; i < polygon.length; i++) {
    const xi = polygon[i][0];
    const yi = polygon[i][1];
    const xj = polygon[j][0];
    const yj = polygon[j][1];
    const crosses = (yi > v) !== (yj > v);
    if (yj !== yi) {
      const xcross = ((xj - xi) * (v - yi)) / (yj - yi) + xi;
      if (crosses && u < xcross) {
        inside = !inside;
      }
    }
    j = i;
  }
  return inside;
}

/**
 * Mark the points a polygon + depth-range edit would remove.
 *
 * A point is removed when it sits strictly in front of the camera, its
 * camera-space depth lies inside the inclusive [zMin, zMax] band, and its
 * projection falls inside the polygon. Points at or behind the camera are
 * never removed. Mirrors the service's removal semantics exactly.
 */
export function removalMask(
  points: ArrayLike<number>,
  view: ViewMatrix,
  intr: Intrinsics,
  polygon: ArrayLike<ArrayLike<number>>,
  depthRange: [number, number],
): Uint8Array {
  const [zMin, zMax] = depthRange;
  if (zMin > zMax) {
    throw new Error(`depth range is inverted: [${zMin}, ${zMax}]`);
  }
  const cam = applyView(points, view);
  const { u, v, z } = projectPoints(cam, intr);
  const mask = new Uint8Array(z.length);
  for (let i = 0; i < z.length; i++) {
    if (z[i] > 0 && z[i] >= zMin && z[i] <= zMax && pointInPolygon(u[i], v[i], polygon)) {
      mask[i] = 1;
    }
  }
  return mask;
}

export function countMask(mask: Uint8Array): number {
  let total = 0;
  for (let i = 0; i < mask.length; i++) {
    total += mask[i];
  }
  return total;
}
