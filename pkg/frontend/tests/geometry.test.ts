import { describe, expect, it } from "vitest";
import { applyView, countMask, pointInPolygon, projectPoints, removalMask, type Intrinsics } from "../src/geometry";

const IDENTITY = [1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1];

describe("applyView", () => {
  it("leaves points alone under the identity", () => {
    const out = applyView([1.5, -2.25, 3.125], IDENTITY);
    expect(Array.from(out)).toEqual([1.5, -2.25, 3.125]);
  });

  it("applies translation and rotation rows exactly", () => {
    const translate = [1, 0, 0, 0.5, 0, 1, 0, -1, 0, 0, 1, 2, 0, 0, 0, 1];
    expect(Array.from(applyView([1, 2, 3], translate))).toEqual([1.5, 1, 5]);

    // 90 degree rotation about z: (x, y) -> (-y, x).
    const rotZ = [0, -1, 0, 0, 1, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1];
    expect(Array.from(applyView([1, 0, 0], rotZ))).toEqual([0, 1, 0]);
    expect(Array.from(applyView([0, 1, 0], rotZ))).toEqual([-1, 0, 0]);
  });

  it("handles several interleaved points in one call", () => {
    const out = applyView([1, 2, 3, 4, 5, 6], IDENTITY);
    expect(Array.from(out)).toEqual([1, 2, 3, 4, 5, 6]);
  });

  it("rejects a view that is not 16 numbers", () => {
    expect(() => applyView([0, 0, 1], [1, 0, 0])).toThrow(/16 numbers/);
  });
});

describe("projectPoints", () => {
  const intr: Intrinsics = { fx: 100, fy: 120, cx: 32, cy: 24 };

  it("matches the pinhole formula term for term", () => {
    const { u, v, z } = projectPoints([0.5, -0.25, 2], intr);
    expect(u[0]).toBe(100 * (0.5 / 2) + 32);
    expect(v[0]).toBe(120 * (-0.25 / 2) + 24);
    expect(z[0]).toBe(2);
  });

  it("keeps camera-space depth untouched for gating", () => {
    const { z } = projectPoints([0, 0, -3, 0, 0, 0, 0, 0, 7], intr);
    expect(Array.from(z)).toEqual([-3, 0, 7]);
  });
});

describe("pointInPolygon", () => {
  const square = [
    [0, 0],
    [10, 0],
    [10, 10],
    [0, 10],
  ];

  it("accepts interior points and rejects exterior ones", () => {
    expect(pointInPolygon(5, 5, square)).toBe(true);
    expect(pointInPolygon(-1, 5, square)).toBe(false);
    expect(pointInPolygon(5, 11, square)).toBe(false);
    expect(pointInPolygon(15, 5, square)).toBe(false);
  });

  it("treats min edges as inside and max edges as outside", () => {
    // Half-open boundary semantics keep adjacent polygons from double
    // claiming shared edges; these exact outcomes match the service.
    expect(pointInPolygon(0, 5, square)).toBe(true); // left edge
    expect(pointInPolygon(5, 0, square)).toBe(true); // top edge
    expect(pointInPolygon(10, 5, square)).toBe(false); // right edge
    expect(pointInPolygon(5, 10, square)).toBe(false); // bottom edge
    expect(pointInPolygon(0, 0, square)).toBe(true); // min corner
    expect(pointInPolygon(10, 10, square)).toBe(false); // max corner
  });

  it("resolves concave notches with even-odd counting", () => {
    // U shape: two arms joined by a bridge along low v values.
    const u = [
      [0, 0],
      [30, 0],
      [30, 30],
      [20, 30],
      [20, 10],
      [10, 10],
      [10, 30],
      [0, 30],
    ];
    expect(pointInPolygon(5, 20, u)).toBe(true); // left arm
    expect(pointInPolygon(25, 20, u)).toBe(true); // right arm
    expect(pointInPolygon(15, 5, u)).toBe(true); // bridge
    expect(pointInPolygon(15, 20, u)).toBe(false); // notch
    expect(pointInPolygon(15, 35, u)).toBe(false); // below everything
  });

  it("is unfazed by duplicate and horizontal-edge vertices", () => {
    const degenerate = [
      [0, 0],
      [5, 0],
      [10, 0],
      [10, 10],
      [10, 10],
      [0, 10],
    ];
    expect(pointInPolygon(5, 5, degenerate)).toBe(true);
    expect(pointInPolygon(15, 5, degenerate)).toBe(false);
  });
});

describe("removalMask", () => {
  const intr: Intrinsics = { fx: 10, fy: 10, cx: 0, cy: 0 };
  const bigSquare = [
    [-5, -5],
    [5, -5],
    [5, 5],
    [-5, 5],
  ];

  it("removes only in-front, in-range, in-polygon points", () => {
    const points = [
      0, 0, 5, // inside everything
      0, 0, -5, // behind the camera, never removed
      0.1, 0, 0, // z == 0, projection blows up, never removed
      0, 0, 20, // beyond z max
      0, 0, 2, // exactly z min, inclusive
      0, 0, 8, // exactly z max, inclusive
      10, 0, 2, // projects at u = 50, outside the polygon
    ];
    const mask = removalMask(points, IDENTITY, intr, bigSquare, [2, 8]);
    expect(Array.from(mask)).toEqual([1, 0, 0, 0, 1, 1, 0]);
    expect(countMask(mask)).toBe(3);
  });

  it("applies the view before projecting", () => {
    // Camera shifted so the point lands at z = 4 and u = v = 0.
    const view = [1, 0, 0, -1, 0, 1, 0, -2, 0, 0, 1, 1, 0, 0, 0, 1];
    const mask = removalMask([1, 2, 3], view, intr, bigSquare, [2, 8]);
    expect(mask[0]).toBe(1);
  });

  it("rejects an inverted depth range", () => {
    expect(() => removalMask([0, 0, 5], IDENTITY, intr, bigSquare, [8, 2])).toThrow(/inverted/);
  });

  it("returns an all-zero mask for an empty cloud", () => {
    const mask = removalMask([], IDENTITY, intr, bigSquare, [0, 10]);
    expect(mask.length).toBe(0);
    expect(countMask(mask)).toBe(0);
  });
});
