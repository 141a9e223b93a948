// Entry point: wires the viewer, the selection tool and the service client
// together. The cloud on screen is always a fetch of the server's current
// state; every mutation is POSTed and then re-fetched, never applied
// locally, so the HUD count can only disagree with the service while a
// request is in flight.

import { ApiError, CleanupClient } from "./api";
import { cameraToView, screenToIndex, type CameraView } from "./camera";
import { countMask, removalMask } from "./geometry";
import { SelectionState } from "./selection";
import { CloudViewer } from "./viewer";
import type { ParsedCloud } from "./ply";

const el = <T extends HTMLElement>(id: string): T => document.getElementById(id) as T;

const canvas = el<HTMLCanvasElement>("cloud-canvas");
const overlay = el<HTMLCanvasElement>("overlay-canvas");
const stage = el<HTMLDivElement>("stage");
const statusLine = el<HTMLDivElement>("status");
const hudPoints = el<HTMLSpanElement>("hud-points");
const hudFrame = el<HTMLSpanElement>("hud-frame");
const hudEdits = el<HTMLSpanElement>("hud-edits");
const hudVersion = el<HTMLSpanElement>("hud-version");

const drawButton = el<HTMLButtonElement>("draw-btn");
const previewButton = el<HTMLButtonElement>("preview-btn");
const submitButton = el<HTMLButtonElement>("submit-btn");
const clearButton = el<HTMLButtonElement>("clear-btn");
const undoButton = el<HTMLButtonElement>("undo-btn");
const saveButton = el<HTMLButtonElement>("save-btn");
const reloadButton = el<HTMLButtonElement>("reload-btn");
const zMinInput = el<HTMLInputElement>("zmin-input");
const zMaxInput = el<HTMLInputElement>("zmax-input");
const strideInput = el<HTMLInputElement>("stride-input");

const client = new CleanupClient();
const viewer = new CloudViewer(canvas);
const selection = new SelectionState();

let currentCloud: ParsedCloud | null = null;
let currentStride = 1;
let drawing = false;

function status(message: string, kind: "ok" | "error" = "ok"): void {
  statusLine.textContent = message;
  statusLine.className = kind;
}

function describeError(err: unknown): string {
  if (err instanceof ApiError) {
    return `service rejected the request (${err.status}): ${err.message}`;
  }
  if (err instanceof Error) {
    return `service unreachable: ${err.message}`;
  }
  return String(err);
}

function viewportSize(): [number, number] {
  return [stage.clientWidth, stage.clientHeight];
}

function resize(): void {
  const [w, h] = viewportSize();
  canvas.width = w;
  canvas.height = h;
  overlay.width = w;
  overlay.height = h;
  viewer.resize(w, h);
  // A resize invalidates the frozen view the polygon was drawn under.
  if (selection.active) {
    cancelSelection("viewport resized, selection discarded");
  }
}

function liveView(): CameraView {
  const [w, h] = viewportSize();
  return cameraToView(viewer.camera, w, h);
}

function redrawOverlay(): void {
  const ctx = overlay.getContext("2d")!;
  ctx.clearRect(0, 0, overlay.width, overlay.height);
  const verts = selection.vertices;
  if (verts.length === 0) {
    return;
  }
  ctx.lineWidth = 1.5;
  ctx.strokeStyle = "#ff7b3a";
  ctx.fillStyle = "#ff7b3a";
  ctx.beginPath();
  for (let i = 0; i < verts.length; i++) {
    const x = verts[i][0] + 0.5;
    const y = verts[i][1] + 0.5;
    if (i === 0) {
      ctx.moveTo(x, y);
    } else {
      ctx.lineTo(x, y);
    }
  }
  if (verts.length >= 3) {
    ctx.closePath();
  }
  ctx.stroke();
  for (const [u, v] of verts) {
    ctx.beginPath();
    ctx.arc(u + 0.5, v + 0.5, 3, 0, 2 * Math.PI);
    ctx.fill();
  }
}

function setDrawing(on: boolean): void {
  drawing = on;
  viewer.controls.enabled = !on;
  drawButton.textContent = on ? "Drawing... (dblclick to close)" : "Draw polygon";
  drawButton.classList.toggle("active", on);
}

function cancelSelection(message?: string): void {
  selection.reset();
  viewer.setPreviewMask(null);
  setDrawing(false);
  redrawOverlay();
  if (message) {
    status(message);
  }
}

function readDepthRange(): string | null {
  const zMin = parseFloat(zMinInput.value);
  const zMax = parseFloat(zMaxInput.value);
  selection.setDepthRange(zMin, zMax);
  return selection.validate();
}

async function refresh(): Promise<void> {
  const stride = Math.max(1, parseInt(strideInput.value, 10) || 1);
  currentStride = stride;
  const info = await client.info();
  const { cloud, pointCount, totalCount } = await client.cloud(stride);
  currentCloud = cloud;
  viewer.setCloud(cloud);
  redrawOverlay();
  hudPoints.textContent = `${totalCount} points (${pointCount} shown)`;
  hudFrame.textContent = `frame ${cloud.frame}`;
  hudEdits.textContent = `${info.edits} edit${info.edits === 1 ? "" : "s"}${info.dirty ? ", unsaved" : ""}`;
  hudVersion.textContent = `focuskit ${info.tool_version}`;
  undoButton.disabled = info.edits === 0;
  if (totalCount === 0) {
    status("cloud is empty");
  }
}

function preview(): void {
  if (currentCloud === null) {
    status("no cloud loaded", "error");
    return;
  }
  const problem = readDepthRange();
  if (problem !== null) {
    status(problem, "error");
    return;
  }
  const view = selection.view!;
  const mask = removalMask(
    currentCloud.positions,
    view.view,
    { fx: view.fx, fy: view.fy, cx: view.cx, cy: view.cy },
    selection.vertices,
    [selection.zMin, selection.zMax],
  );
  viewer.setPreviewMask(mask);
  const count = countMask(mask);
  const note = currentStride > 1 ? ` (decimated copy, stride ${currentStride})` : "";
  status(`preview: ${count} of ${mask.length} points selected${note}`);
}

async function submit(): Promise<void> {
  const problem = readDepthRange();
  if (problem !== null) {
    status(problem, "error");
    return;
  }
  submitButton.disabled = true;
  try {
    const result = await client.edit(selection.toEdit());
    cancelSelection();
    await refresh();
    status(`removed ${result.removed} points, ${result.remaining} remain (edit #${result.edits})`);
  } catch (err) {
    // A rejected edit leaves both the server cloud and this view untouched.
    status(describeError(err), "error");
  } finally {
    submitButton.disabled = false;
  }
}

async function undo(): Promise<void> {
  try {
    const result = await client.undo();
    cancelSelection();
    await refresh();
    status(`undid last edit, ${result.remaining} points (${result.edits} edits left)`);
  } catch (err) {
    status(describeError(err), "error");
  }
}

async function save(): Promise<void> {
  try {
    const result = await client.save();
    await refresh();
    status(`saved ${result.points} points to ${result.cloud_path}`);
  } catch (err) {
    status(describeError(err), "error");
  }
}

overlay.addEventListener("click", (e) => {
  if (!drawing) {
    return;
  }
  const [u, v] = screenToIndex(e.offsetX, e.offsetY);
  selection.addVertex(u, v, liveView());
  redrawOverlay();
});

overlay.addEventListener("dblclick", () => {
  if (drawing && selection.vertices.length >= 3) {
    setDrawing(false);
    status(`polygon closed with ${selection.vertices.length} vertices`);
  }
});

window.addEventListener("keydown", (e) => {
  if (e.key === "Escape" && (drawing || selection.active)) {
    cancelSelection("selection cancelled");
  }
});

drawButton.addEventListener("click", () => {
  if (drawing) {
    setDrawing(false);
    return;
  }
  selection.reset();
  viewer.setPreviewMask(null);
  redrawOverlay();
  setDrawing(true);
  status("click to add vertices, double-click to close the polygon");
});

previewButton.addEventListener("click", preview);
submitButton.addEventListener("click", () => void submit());
clearButton.addEventListener("click", () => cancelSelection("selection cleared"));
undoButton.addEventListener("click", () => void undo());
saveButton.addEventListener("click", () => void save());
reloadButton.addEventListener("click", () =>
  refresh()
    .then(() => status("cloud reloaded"))
    .catch((err) => status(describeError(err), "error")),
);

window.addEventListener("resize", resize);

resize();
refresh()
  .then(() => status("connected"))
  .catch((err) => status(describeError(err), "error"));
