"""Generate the demo cloud and the cross-client parity fixture.

The fixture freezes one region-removal request (points, camera view,
intrinsics, polygon, depth range) together with the per-point removal
decisions the service makes for it. Any client that reimplements the
selection predicate must reproduce the mask exactly.

Every projected point is required to sit a comfortable margin away from
all polygon edges and depth bounds, so last-bit arithmetic differences
between languages can never flip a decision.

Output is committed; re-run only to regenerate after fixture changes:

    python3 scripts/make_demo_fixture.py
"""

import json
import sys
from pathlib import Path

import numpy as np

from focuskit.fileio import atomic_write_bytes, canonical_json, write_ply
from focuskit.pointcloud import (
    PinholeIntrinsics,
    PointCloud,
    RigidTransform,
    point_in_polygon,
    project_points,
    remove_by_region,
)

OUT_DIR = Path(__file__).resolve().parent.parent / "fixtures" / "demo"

WIDTH = 64
HEIGHT = 64
INTRINSICS = {"fx": 48.0, "fy": 48.0, "cx": 31.5, "cy": 31.5}
DEPTH_RANGE = (1.0, 6.0)
# concave outline with horizontal and vertical edges
POLYGON = [
    [8.0, 4.0],
    [52.0, 4.0],
    [52.0, 40.0],
    [34.0, 40.0],
    [34.0, 22.0],
    [20.0, 22.0],
    [20.0, 44.0],
    [8.0, 44.0],
]
EDGE_MARGIN_PX = 1e-3
DEPTH_MARGIN_M = 1e-3
N_POINTS = 400
SEED = 2026


def sample_view() -> RigidTransform:
    theta = np.deg2rad(5.0)
    rot_y = np.array(
        [
            [np.cos(theta), 0.0, np.sin(theta)],
            [0.0, 1.0, 0.0],
            [-np.sin(theta), 0.0, np.cos(theta)],
        ]
    )
    return RigidTransform(rot_y, np.array([0.05, -0.02, 0.3]), "world", "camera")


def decision_is_stable(u, v, z) -> np.ndarray:
    """True where nudging the projection by the margin cannot flip the call."""
    votes = []
    for du in (-EDGE_MARGIN_PX, EDGE_MARGIN_PX):
        for dv in (-EDGE_MARGIN_PX, EDGE_MARGIN_PX):
            votes.append(point_in_polygon(u + du, v + dv, POLYGON))
    inside = votes[0]
    stable = np.ones_like(inside, dtype=bool)
    for vote in votes[1:]:
        stable &= vote == inside
    z_lo, z_hi = DEPTH_RANGE
    stable &= np.abs(z - z_lo) > DEPTH_MARGIN_M
    stable &= np.abs(z - z_hi) > DEPTH_MARGIN_M
    stable &= np.abs(z) > DEPTH_MARGIN_M
    return stable


def sample_points(view: RigidTransform) -> np.ndarray:
    gen = np.random.Generator(np.random.PCG64(SEED))
    kept = []
    while sum(len(k) for k in kept) < N_POINTS:
        cam = np.column_stack(
            [
                gen.uniform(-2.0, 2.0, 2048),
                gen.uniform(-2.0, 2.0, 2048),
                gen.uniform(-1.0, 8.0, 2048),
            ]
        )
        u, v, z = project_points(cam, PinholeIntrinsics(**INTRINSICS))
        ok = decision_is_stable(u, v, z)
        kept.append(cam[ok])
    cam_points = np.concatenate(kept)[:N_POINTS]
    # fixture stores world-frame points; the view maps them back to camera
    return view.inverse().apply(cam_points)


def main() -> int:
    view = sample_view()
    world = sample_points(view)
    cloud = PointCloud(world, "world", intensity=np.linspace(0.0, 1.0, len(world)).astype(np.float32))

    intr = PinholeIntrinsics(**INTRINSICS)
    kept, removed = remove_by_region(cloud, POLYGON, DEPTH_RANGE, view, intr)
    if not 0 < int(removed.sum()) < len(cloud):
        raise SystemExit("degenerate fixture: removal must be partial")

    OUT_DIR.mkdir(parents=True, exist_ok=True)
    write_ply(OUT_DIR / "demo_cloud.ply", cloud)
    fixture = {
        "description": "region-removal parity fixture; clients must reproduce removed_mask exactly",
        "points": [[float(c) for c in p] for p in world],
        "frame": "world",
        "view": [float(v) for v in view.matrix().reshape(-1)],
        "intrinsics": INTRINSICS,
        "width": WIDTH,
        "height": HEIGHT,
        "polygon": POLYGON,
        "depth_range": list(DEPTH_RANGE),
        "expected": {
            "removed_mask": [bool(b) for b in removed],
            "removed": int(removed.sum()),
            "remaining": int(len(kept)),
        },
    }
    atomic_write_bytes(OUT_DIR / "parity.json", canonical_json(fixture).encode("utf-8"))
    print(f"wrote {OUT_DIR / 'demo_cloud.ply'} ({len(cloud)} points)")
    print(f"wrote {OUT_DIR / 'parity.json'} (removed {fixture['expected']['removed']})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
