"""Dense depth ground truth from scanned point clouds.

Pipeline pieces: point-to-point ICP registration, running aggregation of a
frame sequence with adaptive density-based outlier filtering, rigid frame
chaining, z-buffer projection to a depth map, and the region+depth-range
removal filter behind the manual cleanup tool.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .images import DepthMap

log = logging.getLogger(__name__)

_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class RigidTransform:
    """Rotation plus translation, mapping source-frame points to target-frame."""

    rotation: np.ndarray
    translation: np.ndarray
    source_frame: str = "source"
    target_frame: str = "target"

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        if not np.isfinite(r).all() or not np.isfinite(t).all():
            raise ValueError("transform entries must be finite")
        if np.abs(r.T @ r - np.eye(3)).max() > _ORTHO_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation determinant must be +1 (no reflections)")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls, source_frame: str = "source", target_frame: str = "target") -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3), source_frame, target_frame)

    @classmethod
    def from_matrix(cls, m, source_frame: str = "source", target_frame: str = "target") -> "RigidTransform":
        m = np.asarray(m, dtype=np.float64)
        if m.shape == (16,):
            m = m.reshape(4, 4)
        if m.shape != (4, 4):
            raise ValueError(f"expected a 4x4 matrix, got {m.shape}")
        if np.abs(m[3] - np.array([0.0, 0.0, 0.0, 1.0])).max() > 1e-9:
            raise ValueError("bottom row must be [0, 0, 0, 1]")
        return cls(m[:3, :3], m[:3, 3], source_frame, target_frame)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    def compose(self, inner: "RigidTransform") -> "RigidTransform":
        """self after inner: (self.compose(inner)).apply(x) == self.apply(inner.apply(x))."""
        if inner.target_frame != self.source_frame:
            raise ValueError(
                f"frame mismatch: inner maps to {inner.target_frame!r} but outer expects {self.source_frame!r}"
            )
        return RigidTransform(
            self.rotation @ inner.rotation,
            self.rotation @ inner.translation + self.translation,
            inner.source_frame,
            self.target_frame,
        )

    def inverse(self) -> "RigidTransform":
        return RigidTransform(
            self.rotation.T, -self.rotation.T @ self.translation, self.target_frame, self.source_frame
        )


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    frame: str = "world"
    intensity: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.isfinite(pts).all():
            raise ValueError("point coordinates must be finite")
        if not self.frame:
            raise ValueError("frame label must be non-empty")
        object.__setattr__(self, "points", pts)
        if self.intensity is not None:
            inten = np.asarray(self.intensity, dtype=np.float32).reshape(-1)
            if inten.shape[0] != pts.shape[0]:
                raise ValueError("intensity length must match point count")
            object.__setattr__(self, "intensity", inten)

    def __len__(self) -> int:
        return self.points.shape[0]

    def transformed(self, t: RigidTransform) -> "PointCloud":
        if t.source_frame != self.frame:
            raise ValueError(f"transform source {t.source_frame!r} does not match cloud frame {self.frame!r}")
        return PointCloud(t.apply(self.points), t.target_frame, self.intensity)

    def select(self, mask: np.ndarray) -> "PointCloud":
        return PointCloud(
            self.points[mask], self.frame, None if self.intensity is None else self.intensity[mask]
        )


def merge_clouds(a: PointCloud, b: PointCloud) -> PointCloud:
    """Plain union (no dedup); intensity kept only when both sides carry it."""
    if a.frame != b.frame:
        raise ValueError(f"cannot merge clouds in frames {a.frame!r} and {b.frame!r}")
    inten = None
    if a.intensity is not None and b.intensity is not None:
        inten = np.concatenate([a.intensity, b.intensity])
    return PointCloud(np.vstack([a.points, b.points]), a.frame, inten)


@dataclass(frozen=True)
class FilterParams:
    """Adaptive density filter: a point needs at least k_neighbors other
    points within radius alpha * (its distance from the sensor)."""

    alpha: float = 0.008
    k_neighbors: int = 7
    warmup_t: int = 50
    interval_m: int = 10

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.k_neighbors < 0:
            raise ValueError("k_neighbors must be non-negative")
        if self.warmup_t < 1 or self.interval_m < 1:
            raise ValueError("warmup_t and interval_m must be >= 1")


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 30
    max_correspondence_m: float = 0.5
    rms_tolerance_m: float = 1e-6
    voxel_size_m: float | None = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.max_correspondence_m <= 0 or self.rms_tolerance_m <= 0:
            raise ValueError("gate and tolerance must be positive")
        if self.voxel_size_m is not None and self.voxel_size_m <= 0:
            raise ValueError("voxel_size_m must be positive when set")


def voxel_downsample(points: np.ndarray, voxel_size_m: float) -> np.ndarray:
    """Centroid per occupied voxel; output order follows voxel key order."""
    keys = np.floor(points / voxel_size_m).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    sums = np.zeros((counts.shape[0], 3))
    np.add.at(sums, inverse, points)
    return sums / counts[:, None]


def _check_nondegenerate(points: np.ndarray, name: str) -> None:
    if points.shape[0] < 3:
        raise ValueError(f"{name} cloud needs >= 3 points for registration")
    centered = points - points.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[1] < 1e-12 * max(sv[0], 1.0):
        raise ValueError(f"{name} cloud is degenerate (collinear or coincident points)")


def _fit_rigid(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form least-squares rigid transform mapping a onto b (SVD of the
    cross-covariance, reflection corrected)."""
    ca, cb = a.mean(axis=0), b.mean(axis=0)
    h = (a - ca).T @ (b - cb)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return r, cb - r @ ca


def icp_register(source: PointCloud, target: PointCloud, params: IcpParams = IcpParams()) -> RigidTransform:
    """Point-to-point ICP returning the transform that maps source onto target.

    Each iteration matches the currently transformed source to its nearest
    target neighbors within the correspondence gate, then refits the full
    transform in closed form. Stops when the RMS correspondence distance
    changes by less than the tolerance; hitting the iteration cap logs a
    warning with the final residual.
    """
    src = source.points
    tgt = target.points
    if params.voxel_size_m is not None:
        src = voxel_downsample(src, params.voxel_size_m)
        tgt = voxel_downsample(tgt, params.voxel_size_m)
    _check_nondegenerate(src, "source")
    _check_nondegenerate(tgt, "target")

    tree = cKDTree(tgt)
    r = np.eye(3)
    t = np.zeros(3)
    prev_rms = np.inf
    rms = np.inf
    for _ in range(params.max_iterations):
        moved = src @ r.T + t
        dist, idx = tree.query(moved, distance_upper_bound=params.max_correspondence_m)
        matched = np.isfinite(dist)
        if matched.sum() < 3:
            raise ValueError("fewer than 3 correspondences inside the gate; clouds too far apart")
        r, t = _fit_rigid(src[matched], tgt[idx[matched]])
        rms = float(np.sqrt(np.mean(dist[matched] ** 2)))
        if abs(prev_rms - rms) < params.rms_tolerance_m:
            break
        prev_rms = rms
    else:
        log.warning("icp did not converge in %d iterations; final rms %.3e m", params.max_iterations, rms)
    return RigidTransform(r, t, source.frame, target.frame)


def density_filter(
    cloud: PointCloud, sensor_origin, params: FilterParams = FilterParams()
) -> PointCloud:
    """Drop points with fewer than k other points within radius alpha times
    their distance from the sensor; survivors are unmodified."""
    if len(cloud) == 0 or params.k_neighbors == 0:
        return cloud
    origin = np.asarray(sensor_origin, dtype=np.float64).reshape(3)
    radius = params.alpha * np.linalg.norm(cloud.points - origin, axis=1)
    tree = cKDTree(cloud.points)
    counts = tree.query_ball_point(cloud.points, radius, return_length=True) - 1
    return cloud.select(counts >= params.k_neighbors)


def aggregate(
    frames,
    filter_params: FilterParams | None = FilterParams(),
    icp_params: IcpParams = IcpParams(),
    sensor_origin=(0.0, 0.0, 0.0),
) -> PointCloud:
    """Running aggregation of a frame sequence.

    The accumulated cloud is registered onto each incoming frame (that
    direction is the stable one), transformed, and unioned with the frame, so
    the result lives in the last frame's coordinates with the sensor at
    sensor_origin there. With 1-based frame counter i, the density filter
    runs when i > warmup_t and i % interval_m == 0; pass filter_params=None
    to disable filtering entirely.
    """
    frames = list(frames)
    if not frames:
        raise ValueError("aggregate needs at least one frame")
    acc = frames[0]
    for i, frame in enumerate(frames[1:], start=2):
        try:
            t = icp_register(acc, frame, icp_params)
        except ValueError as e:
            raise RuntimeError(f"icp failed on frame {i - 1} (0-based): {e}") from e
        acc = merge_clouds(acc.transformed(t), frame)
        if filter_params is not None and i > filter_params.warmup_t and i % filter_params.interval_m == 0:
            before = len(acc)
            acc = density_filter(acc, sensor_origin, filter_params)
            log.info("frame %d: density filter removed %d of %d points", i, before - len(acc), before)
    return acc


def chain_to_camera(
    p_world: PointCloud, t_cam_lidar: RigidTransform, t_lidar_world: RigidTransform
) -> PointCloud:
    """world -> lidar -> camera, applied point-wise with frame-label checks."""
    return p_world.transformed(t_lidar_world).transformed(t_cam_lidar)


@dataclass(frozen=True)
class PinholeIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy}

    @classmethod
    def from_dict(cls, d: dict) -> "PinholeIntrinsics":
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]))


def project_points(points: np.ndarray, intr: PinholeIntrinsics) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pinhole projection, operation order pinned so every consumer (including
    the browser client) reproduces identical floating-point pixel coordinates:
    u = fx * (x / z) + cx, v = fy * (y / z) + cy."""
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intr.fx * (x / z) + intr.cx
        v = intr.fy * (y / z) + intr.cy
    return u, v, z


def splat_offsets(radius_px: int) -> np.ndarray:
    """Integer offsets of the solid splat disk: du^2 + dv^2 <= (r + 0.5)^2.
    Radius 3 yields the 37-offset disk, radius 4 yields 69."""
    if radius_px < 0:
        raise ValueError("splat radius must be >= 0")
    rng = np.arange(-radius_px, radius_px + 1)
    du, dv = np.meshgrid(rng, rng, indexing="ij")
    keep = du**2 + dv**2 <= (radius_px + 0.5) ** 2
    return np.stack([du[keep], dv[keep]], axis=1)


def project_zbuffer(
    p_cam: PointCloud, intr: PinholeIntrinsics, width: int, height: int, splat_radius_px: int = 3
) -> DepthMap:
    """Splat each camera-space point (z > 0) as a solid disk; per pixel the
    minimum depth wins; untouched pixels are invalid."""
    if width < 1 or height < 1:
        raise ValueError("image dimensions must be positive")
    buf = np.full((height, width), np.inf)
    u, v, z = project_points(p_cam.points, intr)
    sel = z > 0
    if sel.any():
        ui = np.rint(u[sel]).astype(np.int64)
        vi = np.rint(v[sel]).astype(np.int64)
        zs = z[sel]
        for du, dv in splat_offsets(splat_radius_px):
            xx = ui + du
            yy = vi + dv
            ok = (xx >= 0) & (xx < width) & (yy >= 0) & (yy < height)
            np.minimum.at(buf, (yy[ok], xx[ok]), zs[ok])
    valid = np.isfinite(buf)
    return DepthMap(np.where(valid, buf, 0.0), valid)


def point_in_polygon(u: np.ndarray, v: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Even-odd rule ray crossing test, vectorized over query points.

    The arithmetic (one division per edge, strict/non-strict comparisons as
    written) is the shared contract with the browser client; both sides must
    evaluate the same expressions in the same order.
    """
    polygon = np.asarray(polygon, dtype=np.float64)
    if polygon.ndim != 2 or polygon.shape[1] != 2 or polygon.shape[0] < 3:
        raise ValueError("polygon needs at least 3 (u, v) vertices")
    inside = np.zeros(u.shape, dtype=bool)
    j = polygon.shape[0] - 1
    for i in range(polygon.shape[0]):
        xi, yi = polygon[i]
        xj, yj = polygon[j]
        crosses = (yi > v) != (yj > v)
        if yj != yi:
            xcross = (xj - xi) * (v - yi) / (yj - yi) + xi
            inside ^= crosses & (u < xcross)
        j = i
    return inside


def remove_by_region(
    cloud: PointCloud,
    polygon_uv,
    depth_range,
    view: RigidTransform,
    intr: PinholeIntrinsics,
) -> tuple[PointCloud, np.ndarray]:
    """Remove points whose projection under the given view falls inside the
    image-space polygon and whose camera depth lies within [z_min, z_max].

    Returns (kept cloud, boolean removed mask over the input order). Points
    behind the camera are never removed.
    """
    z_min, z_max = float(depth_range[0]), float(depth_range[1])
    if z_min > z_max:
        raise ValueError(f"depth range is inverted: [{z_min}, {z_max}]")
    if len(cloud) == 0:
        return cloud, np.zeros(0, dtype=bool)
    cam = view.apply(cloud.points)
    u, v, z = project_points(cam, intr)
    removed = (z > 0) & (z >= z_min) & (z <= z_max)
    removed &= point_in_polygon(u, v, np.asarray(polygon_uv, dtype=np.float64))
    return cloud.select(~removed), removed
