"""Classical depth from focus: pick, per pixel, the stack image where the
scene is sharpest and report that image's focus distance.

Serves as the learning-free round-trip check for the synthesis pipeline. The
sharpness score is the sum-modified-Laplacian of luminance over a window; the
argmax over the stack is optionally refined by fitting a parabola to the
three scores around the peak in log-disparity, where defocus grows linearly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .images import DepthMap, FocusStack

DEFAULT_WINDOW_RADIUS_PX = 4
TEXTURE_FLOOR_REL = 1e-4

_LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def luminance(rgb: np.ndarray) -> np.ndarray:
    r, g, b = _LUMA_WEIGHTS
    return r * rgb[:, :, 0] + g * rgb[:, :, 1] + b * rgb[:, :, 2]


@dataclass(frozen=True)
class FocusMeasureMap:
    """Per-pixel, per-stack-image sharpness scores, shape (M, H, W)."""

    scores: np.ndarray
    window_radius_px: int

    def __post_init__(self):
        if self.scores.ndim != 3:
            raise ValueError(f"expected (M, H, W) scores, got {self.scores.shape}")
        if (self.scores < 0).any() or not np.isfinite(self.scores).all():
            raise ValueError("scores must be finite and non-negative")


def _modified_laplacian(lum: np.ndarray) -> np.ndarray:
    """|2I - left - right| + |2I - up - down| with replicated borders."""
    p = np.pad(lum, 1, mode="edge")
    horiz = 2.0 * lum - p[1:-1, :-2] - p[1:-1, 2:]
    vert = 2.0 * lum - p[:-2, 1:-1] - p[2:, 1:-1]
    return np.abs(horiz) + np.abs(vert)


def focus_measure(stack: FocusStack, window_radius_px: int = DEFAULT_WINDOW_RADIUS_PX) -> FocusMeasureMap:
    """Sum-modified-Laplacian: the per-pixel Laplacian magnitude summed over a
    (2r+1)^2 window (borders replicated)."""
    if window_radius_px < 1:
        raise ValueError("window_radius_px must be >= 1")
    size = 2 * window_radius_px + 1
    scores = []
    for image in stack.images:
        ml = _modified_laplacian(luminance(image.data))
        sml = ndimage.uniform_filter(ml, size=size, mode="nearest") * float(size * size)
        scores.append(np.maximum(sml, 0.0))
    return FocusMeasureMap(np.stack(scores), window_radius_px)


def _parabolic_vertex(xm, x0, xp, sm, s0, sp):
    """Vertex abscissa of the parabola through three (x, score) samples; falls
    back to x0 when the three scores are flat. x0 must be the middle abscissa
    and s0 the largest score, which makes the fit concave; the vertex is
    clamped between the neighboring abscissae."""
    dm, dp = x0 - xm, x0 - xp
    denom = dm * (s0 - sp) - dp * (s0 - sm)
    if denom == 0.0:
        return x0
    num = dm * dm * (s0 - sp) - dp * dp * (s0 - sm)
    x = x0 - 0.5 * num / denom
    return min(max(x, min(xm, xp)), max(xm, xp))


def estimate_depth(
    stack: FocusStack,
    window_radius_px: int = DEFAULT_WINDOW_RADIUS_PX,
    refine: bool = True,
    texture_floor_rel: float = TEXTURE_FLOOR_REL,
) -> DepthMap:
    """Argmax-of-sharpness depth, invalid where the scene is textureless.

    Pixels whose peak score does not exceed texture_floor_rel times the
    peaked image's maximum score are marked invalid. With refine, the peak is
    interpolated parabolically in log-disparity using the two neighboring
    stack images and clamped to the focus-distance range. Stack order does
    not matter; images are sorted by focus distance internally.
    """
    if len(stack) < 2:
        raise ValueError("depth from focus needs at least 2 stack images")
    order = np.argsort(np.asarray(stack.focus_distances_m))
    fds = np.asarray(stack.focus_distances_m)[order]
    if not (np.diff(fds) > 0).all():
        raise ValueError("focus distances must be distinct")

    measure = focus_measure(stack, window_radius_px)
    scores = measure.scores[order]
    m = scores.shape[0]

    best = np.argmax(scores, axis=0)
    peak = np.take_along_axis(scores, best[None], axis=0)[0]
    floors = texture_floor_rel * scores.reshape(m, -1).max(axis=1)
    valid = peak > floors[best]

    depth = fds[best]
    if refine:
        log_disp = -np.log(fds)
        interior = valid & (best > 0) & (best < m - 1)
        ys, xs = np.nonzero(interior)
        for y, x in zip(ys.tolist(), xs.tolist()):
            i = best[y, x]
            ld = _parabolic_vertex(
                log_disp[i - 1],
                log_disp[i],
                log_disp[i + 1],
                scores[i - 1, y, x],
                scores[i, y, x],
                scores[i + 1, y, x],
            )
            depth[y, x] = np.exp(-ld)
    depth = np.clip(depth, fds[0], fds[-1])
    return DepthMap(np.where(valid, depth, 0.0), valid)
