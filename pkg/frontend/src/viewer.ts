// three.js scene wrapper: one Points object for the cloud, depth-ramp
// coloring, and an overlay tint for preview-selected points. Rendering is
// plain static BufferGeometry, which keeps million-point decimated clouds
// comfortably interactive.

import {
  BufferAttribute,
  BufferGeometry,
  Color,
  PerspectiveCamera,
  Points,
  PointsMaterial,
  Scene,
  Vector3,
  WebGLRenderer,
} from "three";
import { OrbitControls } from "three/addons/controls/OrbitControls.js";
import type { ParsedCloud } from "./ply";

const RAMP_NEAR = new Color(0.22, 0.42, 0.95);
const RAMP_FAR = new Color(0.97, 0.84, 0.25);
const PREVIEW = new Color(1.0, 0.3, 0.12);

export class CloudViewer {
  readonly camera: PerspectiveCamera;
  readonly controls: OrbitControls;
  private readonly scene = new Scene();
  private readonly renderer: WebGLRenderer;
  private points: Points | null = null;
  private baseColors: Float32Array | null = null;

  constructor(canvas: HTMLCanvasElement) {
    this.renderer = new WebGLRenderer({ canvas, antialias: true });
    this.renderer.setPixelRatio(1);
    this.camera = new PerspectiveCamera(50, 1, 0.01, 500);
    this.camera.position.set(0, -2, 2);
    this.controls = new OrbitControls(this.camera, canvas);
    this.controls.enableDamping = false;
    this.scene.background = new Color(0x10131a);

    const animate = () => {
      requestAnimationFrame(animate);
      this.controls.update();
      this.renderer.render(this.scene, this.camera);
    };
    animate();
  }

  resize(width: number, height: number): void {
    this.renderer.setSize(width, height, false);
    this.camera.aspect = width / height;
    this.camera.updateProjectionMatrix();
  }

  setCloud(cloud: ParsedCloud): void {
    if (this.points !== null) {
      this.scene.remove(this.points);
      this.points.geometry.dispose();
      (this.points.material as PointsMaterial).dispose();
      this.points = null;
      this.baseColors = null;
    }
    if (cloud.count === 0) {
      return;
    }

    const geometry = new BufferGeometry();
    geometry.setAttribute("position", new BufferAttribute(cloud.positions, 3));
    geometry.setAttribute("color", new BufferAttribute(this.rampColors(cloud.positions), 3));
    geometry.computeBoundingSphere();
    const material = new PointsMaterial({ size: 2.5, sizeAttenuation: false, vertexColors: true });
    this.points = new Points(geometry, material);
    this.scene.add(this.points);
    this.fitCamera(geometry.boundingSphere!.center, geometry.boundingSphere!.radius);
  }

  /** Tint masked points; pass null to restore the base ramp. */
  setPreviewMask(mask: Uint8Array | null): void {
    if (this.points === null || this.baseColors === null) {
      return;
    }
    const attr = this.points.geometry.getAttribute("color") as BufferAttribute;
    const colors = attr.array as Float32Array;
    colors.set(this.baseColors);
    if (mask !== null) {
      const n = Math.min(mask.length, colors.length / 3);
      for (let i = 0; i < n; i++) {
        if (mask[i]) {
          colors[3 * i] = PREVIEW.r;
          colors[3 * i + 1] = PREVIEW.g;
          colors[3 * i + 2] = PREVIEW.b;
        }
      }
    }
    attr.needsUpdate = true;
  }

  private rampColors(positions: Float32Array): Float32Array {
    const n = positions.length / 3;
    let lo = Infinity;
    let hi = -Infinity;
    for (let i = 0; i < n; i++) {
      const z = positions[3 * i + 2];
      if (z < lo) lo = z;
      if (z > hi) hi = z;
    }
    const span = hi > lo ? hi - lo : 1;
    const colors = new Float32Array(n * 3);
    const c = new Color();
    for (let i = 0; i < n; i++) {
      const t = (positions[3 * i + 2] - lo) / span;
      c.copy(RAMP_NEAR).lerp(RAMP_FAR, t);
      colors[3 * i] = c.r;
      colors[3 * i + 1] = c.g;
      colors[3 * i + 2] = c.b;
    }
    this.baseColors = colors.slice();
    return colors;
  }

  private fitCamera(center: Vector3, radius: number): void {
    const r = Math.max(radius, 0.1);
    this.controls.target.copy(center);
    this.camera.position.copy(center).add(new Vector3(0.8 * r, -1.6 * r, 1.2 * r));
    this.camera.near = r / 100;
    this.camera.far = r * 50;
    this.camera.updateProjectionMatrix();
    this.controls.update();
  }
}
