// Thin typed client for the cleanup service HTTP API. All cloud mutation
// goes through POST /edit, /undo and /save; the client never edits its
// local copy, it re-fetches after every acknowledged change.

import { parsePly, type ParsedCloud } from "./ply";

export interface CloudInfo {
  points: number;
  original_points: number;
  edits: number;
  dirty: boolean;
  frame: string;
  tool_version: string;
}

export interface EditRequest {
  polygon: number[][];
  depth_range: [number, number];
  /** Row-major 4x4 world-to-camera matrix. */
  view: number[];
  fx: number;
  fy: number;
  cx: number;
  cy: number;
}

export interface EditResult {
  removed: number;
  remaining: number;
  edits: number;
}

export interface UndoResult {
  remaining: number;
  edits: number;
}

export interface SaveResult {
  cloud_path: string;
  edit_log_path: string;
  points: number;
}

export interface CloudResponse {
  cloud: ParsedCloud;
  /** Points in the decimated payload (X-Point-Count). */
  pointCount: number;
  /** Points in the full server-side cloud (X-Total-Count). */
  totalCount: number;
}

export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, detail: string) {
    super(detail);
    this.name = "ApiError";
    this.status = status;
  }
}

async function raiseForStatus(resp: Response): Promise<void> {
  if (resp.ok) {
    return;
  }
  let detail = `${resp.status} ${resp.statusText}`;
  try {
    const body = await resp.json();
    if (body && typeof body.detail === "string") {
      detail = body.detail;
    } else if (body && body.detail !== undefined) {
      detail = JSON.stringify(body.detail);
    }
  } catch {
    // non-JSON error body, keep the status line
  }
  throw new ApiError(resp.status, detail);
}

export class CleanupClient {
  private readonly baseUrl: string;
  private readonly fetchFn: typeof fetch;

  constructor(baseUrl = "", fetchFn: typeof fetch = fetch) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchFn = fetchFn;
  }

  async info(): Promise<CloudInfo> {
    const resp = await this.fetchFn(`${this.baseUrl}/info`);
    await raiseForStatus(resp);
    return (await resp.json()) as CloudInfo;
  }

  async cloud(stride = 1): Promise<CloudResponse> {
    const resp = await this.fetchFn(`${this.baseUrl}/cloud?stride=${stride}`);
    await raiseForStatus(resp);
    const buffer = await resp.arrayBuffer();
    const cloud = parsePly(buffer);
    return {
      cloud,
      pointCount: parseInt(resp.headers.get("X-Point-Count") ?? `${cloud.count}`, 10),
      totalCount: parseInt(resp.headers.get("X-Total-Count") ?? `${cloud.count}`, 10),
    };
  }

  async edit(request: EditRequest): Promise<EditResult> {
    const resp = await this.fetchFn(`${this.baseUrl}/edit`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
    });
    await raiseForStatus(resp);
    return (await resp.json()) as EditResult;
  }

  async undo(): Promise<UndoResult> {
    const resp = await this.fetchFn(`${this.baseUrl}/undo`, { method: "POST" });
    await raiseForStatus(resp);
    return (await resp.json()) as UndoResult;
  }

  async save(): Promise<SaveResult> {
    const resp = await this.fetchFn(`${this.baseUrl}/save`, { method: "POST" });
    await raiseForStatus(resp);
    return (await resp.json()) as SaveResult;
  }
}
