// Bridge between the three.js camera and the service's pinhole model.
//
// three looks down -Z with +Y up; the service expects +Z forward, +Y down.
// Negating the middle two rows of the world-to-camera matrix converts one
// to the other. Intrinsics follow the pixel-index convention (the center
// of the top-left pixel is (0, 0)), matching the demo fixtures, so a
// width x height viewport has its principal point at ((w-1)/2, (h-1)/2).

import { Matrix4, type PerspectiveCamera } from "three";
import type { Intrinsics, ViewMatrix } from "./geometry";

export interface CameraView extends Intrinsics {
  view: ViewMatrix;
  width: number;
  height: number;
}

export function cameraToView(camera: PerspectiveCamera, width: number, height: number): CameraView {
  camera.updateMatrixWorld(true);
  const worldToCamera = new Matrix4().copy(camera.matrixWorld).invert();
  // Matrix4.elements is column-major: elements[col * 4 + row].
  const e = worldToCamera.elements;
  const row = (r: number, sign: number) => [sign * e[r], sign * e[4 + r], sign * e[8 + r], sign * e[12 + r]];
  const view = [...row(0, 1), ...row(1, -1), ...row(2, -1), 0, 0, 0, 1];

  const fy = height / 2 / Math.tan((camera.fov * Math.PI) / 360);
  return {
    view,
    // Square pixels as long as camera.aspect tracks width / height.
    fx: fy,
    fy,
    cx: (width - 1) / 2,
    cy: (height - 1) / 2,
    width,
    height,
  };
}

/**
 * Convert canvas-relative CSS coordinates (top-left corner of the canvas
 * is (0, 0), pixel centers at half-integers) to the pixel-index
 * coordinates used by the intrinsics above.
 */
export function screenToIndex(xCss: number, yCss: number): [number, number] {
  return [xCss - 0.5, yCss - 0.5];
}
