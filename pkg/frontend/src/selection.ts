// Local state for one polygon + depth-range selection.
//
// The view is frozen when the first vertex lands: preview and submission
// must evaluate against the same camera the user drew under, or the counts
// would drift the moment the orbit moves. Validation happens here so a
// degenerate selection never reaches the service.

import type { EditRequest } from "./api";
import type { CameraView } from "./camera";

export class SelectionState {
  vertices: number[][] = [];
  zMin = 0;
  zMax = 1000;
  private frozenView: CameraView | null = null;

  get view(): CameraView | null {
    return this.frozenView;
  }

  get active(): boolean {
    return this.vertices.length > 0;
  }

  addVertex(u: number, v: number, view: CameraView): void {
    if (this.frozenView === null) {
      this.frozenView = view;
    }
    this.vertices.push([u, v]);
  }

  setDepthRange(zMin: number, zMax: number): void {
    this.zMin = zMin;
    this.zMax = zMax;
  }

  reset(): void {
    this.vertices = [];
    this.frozenView = null;
  }

  /** Human-readable reason the selection cannot be submitted, or null. */
  validate(): string | null {
    if (this.vertices.length < 3) {
      return "polygon needs at least 3 vertices";
    }
    if (!Number.isFinite(this.zMin) || !Number.isFinite(this.zMax)) {
      return "depth range must be finite";
    }
    if (this.zMin > this.zMax) {
      return "depth range is inverted";
    }
    return null;
  }

  /** Build the edit payload. Throws when validate() reports a problem. */
  toEdit(): EditRequest {
    const problem = this.validate();
    if (problem !== null) {
      throw new Error(problem);
    }
    const view = this.frozenView!;
    return {
      polygon: this.vertices.map((vertex) => [vertex[0], vertex[1]]),
      depth_range: [this.zMin, this.zMax],
      view: [...view.view],
      fx: view.fx,
      fy: view.fy,
      cx: view.cx,
      cy: view.cy,
    };
  }
}
