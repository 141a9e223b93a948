"""HTTP session service behind the browser point-cloud cleanup tool.

Single session, single writer: one cloud is loaded at startup, every mutation
(edit, undo, save) is serialized under a lock and journaled to disk before
the response is sent. The current cloud always equals the edit log replayed
over the original cloud, which is what makes undo trivially correct.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import Response

from . import __version__
from .fileio import atomic_write_bytes, canonical_json, ply_bytes, png_bytes, read_ply
from .images import RgbImage
from .pointcloud import (
    PinholeIntrinsics,
    PointCloud,
    RigidTransform,
    project_zbuffer,
    remove_by_region,
)


class CleanupSession:
    """One annotator's editing state over one cloud."""

    def __init__(self, original: PointCloud, journal_path: Path, save_dir: Path):
        self.original = original
        self.current = original
        self.edit_log: list[dict] = []
        self.dirty = False
        self.journal_path = journal_path
        self.save_dir = save_dir
        self.lock = threading.Lock()

    def _journal(self, entry: dict) -> None:
        # Journaled before the caller acknowledges; flush makes it durable
        # enough that a crashed session can be reconstructed.
        self.journal_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.journal_path, "a", encoding="utf-8") as f:
            f.write(json.dumps(entry, sort_keys=True) + "\n")
            f.flush()

    def _replay(self, edits: list[dict]) -> PointCloud:
        cloud = self.original
        for e in edits:
            cloud, _ = remove_by_region(
                cloud,
                e["polygon"],
                e["depth_range"],
                RigidTransform.from_matrix(np.asarray(e["view"], dtype=np.float64)),
                PinholeIntrinsics(e["fx"], e["fy"], e["cx"], e["cy"]),
            )
        return cloud

    def apply_edit(self, edit: dict) -> dict:
        with self.lock:
            kept, removed = remove_by_region(
                self.current,
                edit["polygon"],
                edit["depth_range"],
                RigidTransform.from_matrix(np.asarray(edit["view"], dtype=np.float64)),
                PinholeIntrinsics(edit["fx"], edit["fy"], edit["cx"], edit["cy"]),
            )
            self.edit_log.append(edit)
            self.current = kept
            self.dirty = True
            result = {"removed": int(removed.sum()), "remaining": len(kept), "edits": len(self.edit_log)}
            self._journal({"op": "edit", "edit": edit, "result": result})
            return result

    def undo(self) -> dict:
        with self.lock:
            if not self.edit_log:
                raise HTTPException(status_code=409, detail="nothing to undo")
            dropped = self.edit_log.pop()
            self.current = self._replay(self.edit_log)
            self.dirty = bool(self.edit_log)
            result = {"remaining": len(self.current), "edits": len(self.edit_log)}
            self._journal({"op": "undo", "dropped": dropped, "result": result})
            return result

    def save(self) -> dict:
        with self.lock:
            self.save_dir.mkdir(parents=True, exist_ok=True)
            cloud_path = self.save_dir / "cleaned.ply"
            log_path = self.save_dir / "edit_log.json"
            try:
                atomic_write_bytes(cloud_path, ply_bytes(self.current))
                atomic_write_bytes(
                    log_path,
                    canonical_json({"edits": self.edit_log, "tool_version": __version__}).encode("utf-8"),
                )
            except OSError as e:
                raise HTTPException(status_code=500, detail=f"save failed: {e}")
            self.dirty = False
            result = {
                "cloud_path": str(cloud_path),
                "edit_log_path": str(log_path),
                "points": len(self.current),
            }
            self._journal({"op": "save", "result": result})
            return result


def _validated_edit(body: dict) -> dict:
    polygon = body.get("polygon")
    if not isinstance(polygon, list) or len(polygon) < 3:
        raise HTTPException(status_code=400, detail="polygon needs at least 3 vertices")
    try:
        polygon = [[float(p[0]), float(p[1])] for p in polygon]
        z_min, z_max = (float(v) for v in body["depth_range"])
        view = [float(v) for v in body["view"]]
        fx, fy, cx, cy = (float(body[k]) for k in ("fx", "fy", "cx", "cy"))
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise HTTPException(status_code=400, detail=f"malformed edit payload: {e}")
    if len(view) != 16:
        raise HTTPException(status_code=400, detail="view must be 16 floats (row-major 4x4)")
    if z_min > z_max:
        raise HTTPException(status_code=400, detail="depth_range is inverted")
    if fx <= 0 or fy <= 0:
        raise HTTPException(status_code=400, detail="focal lengths must be positive")
    return {
        "polygon": polygon,
        "depth_range": [z_min, z_max],
        "view": view,
        "fx": fx,
        "fy": fy,
        "cx": cx,
        "cy": cy,
    }


def create_app(cloud_source, save_dir=None, journal_path=None) -> FastAPI:
    """Build the service around one cloud (path or in-memory PointCloud)."""
    if isinstance(cloud_source, PointCloud):
        cloud = cloud_source
        base = Path(".")
    else:
        cloud = read_ply(cloud_source)
        base = Path(cloud_source).parent
    save_to = Path(save_dir) if save_dir is not None else base
    journal = Path(journal_path) if journal_path is not None else save_to / "session_journal.jsonl"
    session = CleanupSession(cloud, journal, save_to)

    app = FastAPI(title="focuskit cleanup service", version=__version__)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.session = session

    @app.get("/info")
    def info():
        return {
            "points": len(session.current),
            "original_points": len(session.original),
            "edits": len(session.edit_log),
            "dirty": session.dirty,
            "frame": session.current.frame,
            "tool_version": __version__,
        }

    @app.get("/cloud")
    def cloud_endpoint(stride: int = Query(1, ge=1)):
        decimated = session.current.select(np.arange(len(session.current)) % stride == 0)
        return Response(
            content=ply_bytes(decimated),
            media_type="application/octet-stream",
            headers={
                "X-Point-Count": str(len(decimated)),
                "X-Total-Count": str(len(session.current)),
            },
        )

    @app.get("/render")
    def render(
        view: str,
        fx: float,
        fy: float,
        cx: float,
        cy: float,
        width: int = Query(640, ge=1, le=4096),
        height: int = Query(480, ge=1, le=4096),
        splat_radius: int = Query(3, ge=0, le=8),
    ):
        try:
            values = [float(v) for v in view.split(",")]
            transform = RigidTransform.from_matrix(np.asarray(values, dtype=np.float64))
            intr = PinholeIntrinsics(fx, fy, cx, cy)
        except ValueError as e:
            raise HTTPException(status_code=400, detail=str(e))
        cam = PointCloud(transform.apply(session.current.points), "camera")
        depth = project_zbuffer(cam, intr, width, height, splat_radius)
        img = np.zeros((height, width, 3))
        if depth.valid.any():
            vals = depth.data[depth.valid]
            lo, hi = float(vals.min()), float(vals.max())
            span = hi - lo if hi > lo else 1.0
            # nearer points render brighter
            shade = 1.0 - (depth.data - lo) / span
            for c in range(3):
                img[:, :, c] = np.where(depth.valid, shade, 0.0)
        return Response(content=png_bytes(RgbImage(np.clip(img, 0.0, 1.0))), media_type="image/png")

    @app.post("/edit")
    async def edit(request: Request):
        body = await request.json()
        validated = _validated_edit(body)
        try:
            return session.apply_edit(validated)
        except ValueError as e:
            raise HTTPException(status_code=400, detail=str(e))

    @app.post("/undo")
    def undo():
        return session.undo()

    @app.post("/save")
    def save():
        return session.save()

    return app
