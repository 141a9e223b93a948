"""Focus-stack synthesis from an RGB image plus dense depth.

Two paths produce a defocused image for one focus distance:

* reference: every source pixel scatters its own blur kernel (sized by that
  pixel's circle of confusion) onto its neighborhood; the output is the
  weight-normalized accumulation. Exact but slow; used as the oracle.
* layered: depth is quantized into bins uniform in disparity, each layer is
  blurred with a single kernel at the bin-center depth, and layers are
  composited back to front with blurred alpha. Fast approximation that
  approaches the reference as the layer count grows.

Sources outside the image are modeled by edge replication in both paths, so
constant images stay constant and borders pick up no vignette.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from scipy import ndimage

from .images import DepthMap, FocusStack, RgbImage
from .optics import DEFAULT_CUTOFF_REL, PsfSpec, ThinLensConfig, coc_pixels, kernel_radius, make_kernel


def _check_pair(rgb: RgbImage, depth: DepthMap) -> None:
    if (rgb.height, rgb.width) != (depth.height, depth.width):
        raise ValueError(
            f"image {rgb.data.shape[:2]} and depth {depth.data.shape} dimensions differ"
        )


def _shifted(a: np.ndarray, dy: int, dx: int, fill) -> np.ndarray:
    """out[y, x] = a[y + dy, x + dx], out-of-range entries set to fill."""
    out = np.full_like(a, fill)
    h, w = a.shape
    ys = slice(max(0, -dy), min(h, h - dy))
    xs = slice(max(0, -dx), min(w, w - dx))
    out[ys, xs] = a[max(0, dy) : h + min(0, dy), max(0, dx) : w + min(0, dx)]
    return out


# 4-neighbors take priority over diagonals when a hole sees several valid
# neighbors in the same dilation round.
_DILATION_SHIFTS = [(0, -1), (0, 1), (-1, 0), (1, 0), (-1, -1), (-1, 1), (1, -1), (1, 1)]


def fill_depth_holes(depth: DepthMap) -> DepthMap:
    """Fill invalid pixels by iterative nearest-valid dilation, then smooth
    the filled pixels with a 3x3 median. Valid pixels are returned unchanged.
    """
    if not depth.valid.any():
        raise ValueError("cannot fill a depth map with zero valid pixels")
    if depth.fully_valid:
        return DepthMap(depth.data.copy(), depth.valid.copy())
    data = np.where(depth.valid, depth.data, 0.0)
    valid = depth.valid.copy()
    while not valid.all():
        assigned = np.zeros_like(valid)
        for dy, dx in _DILATION_SHIFTS:
            src_vals = _shifted(data, dy, dx, 0.0)
            src_valid = _shifted(valid, dy, dx, False)
            take = ~valid & ~assigned & src_valid
            data[take] = src_vals[take]
            assigned |= take
        if not assigned.any():  # unreachable: some hole always borders the front
            raise RuntimeError("dilation stalled")
        valid |= assigned
    filled = ~depth.valid
    med = ndimage.median_filter(data, size=3, mode="nearest")
    data[filled] = med[filled]
    return DepthMap(data, np.ones_like(valid))


def synthesize_image_reference(
    rgb: RgbImage,
    depth: DepthMap,
    lens: ThinLensConfig,
    focus_distance_m: float,
    psf_shape_p: float,
    cutoff_rel: float = DEFAULT_CUTOFF_REL,
) -> RgbImage:
    """Scatter-normalized defocus rendering with a per-pixel kernel.

    Output pixel q is sum_s w_s(q - s) * rgb(s) / sum_s w_s(q - s), where
    w_s is the discrete kernel for source pixel s's circle of confusion and
    s ranges over the edge-replicated extension of the image.
    """
    _check_pair(rgb, depth)
    if not depth.fully_valid:
        raise ValueError("depth must be fully valid; run fill_depth_holes first")
    h, w = depth.height, depth.width
    coc = coc_pixels(depth.data, lens, focus_distance_m)

    uniq = np.unique(coc)
    kernels = {c: make_kernel(PsfSpec(psf_shape_p, c, cutoff_rel)) for c in uniq.tolist()}
    pad = max(k.radius_px for k in kernels.values())

    if pad == 0:
        return RgbImage(rgb.data.copy())

    rgb_pad = np.pad(rgb.data, ((pad, pad), (pad, pad), (0, 0)), mode="edge")
    coc_pad = np.pad(coc, pad, mode="edge")
    hp, wp = coc_pad.shape
    num = np.zeros((hp + 2 * pad, wp + 2 * pad, 3))
    den = np.zeros((hp + 2 * pad, wp + 2 * pad))

    for c, kern in kernels.items():
        r = kern.radius_px
        side = 2 * r + 1
        weights = kern.weights
        wc = weights[:, :, None]
        ys, xs = np.nonzero(coc_pad == c)
        for y, x in zip(ys.tolist(), xs.tolist()):
            ty, tx = y + pad - r, x + pad - r
            num[ty : ty + side, tx : tx + side] += wc * rgb_pad[y, x]
            den[ty : ty + side, tx : tx + side] += weights

    lo = 2 * pad
    out = num[lo : lo + h, lo : lo + w] / den[lo : lo + h, lo : lo + w, None]
    return RgbImage(np.clip(out, 0.0, 1.0))


def _convolve_edge(a: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """2D convolution with edge replication; kernels here are symmetric."""
    if a.ndim == 3:
        return ndimage.convolve(a, weights[:, :, None], mode="nearest")
    return ndimage.convolve(a, weights, mode="nearest")


def synthesize_image_layered(
    rgb: RgbImage,
    depth: DepthMap,
    lens: ThinLensConfig,
    focus_distance_m: float,
    psf_shape_p: float,
    n_layers: int,
    cutoff_rel: float = DEFAULT_CUTOFF_REL,
) -> RgbImage:
    """Layered depth-of-field approximation.

    Depth is binned uniformly in disparity; each occupied bin is blurred with
    the kernel of its bin-center depth and composited back to front with
    blurred alpha. The composite is renormalized by accumulated alpha so
    constants are preserved exactly.
    """
    if n_layers < 2:
        raise ValueError(f"n_layers must be >= 2, got {n_layers}")
    _check_pair(rgb, depth)
    if not depth.fully_valid:
        raise ValueError("depth must be fully valid; run fill_depth_holes first")

    disp = 1.0 / depth.data
    lo, hi = float(disp.min()), float(disp.max())
    if hi - lo < 1e-12:
        centers = np.array([lo])
        bin_idx = np.zeros(disp.shape, dtype=np.intp)
    else:
        edges = np.linspace(lo, hi, n_layers + 1)
        centers = 0.5 * (edges[:-1] + edges[1:])
        bin_idx = np.clip(((disp - lo) / (hi - lo) * n_layers).astype(np.intp), 0, n_layers - 1)

    out_c = np.zeros_like(rgb.data)
    out_a = np.zeros(disp.shape)
    # ascending disparity = far to near, the compositing order
    for i in range(len(centers)):
        mask = bin_idx == i
        if not mask.any():
            continue
        kern = make_kernel(PsfSpec(psf_shape_p, float(coc_pixels(1.0 / centers[i], lens, focus_distance_m)), cutoff_rel))
        alpha = mask.astype(np.float64)
        if kern.radius_px == 0:
            blurred_a, blurred_c = alpha, rgb.data * alpha[:, :, None]
        else:
            blurred_a = _convolve_edge(alpha, kern.weights)
            blurred_c = _convolve_edge(rgb.data * alpha[:, :, None], kern.weights)
        out_c = blurred_c + (1.0 - blurred_a)[:, :, None] * out_c
        out_a = blurred_a + (1.0 - blurred_a) * out_a

    out = out_c / np.maximum(out_a, 1e-12)[:, :, None]
    return RgbImage(np.clip(out, 0.0, 1.0))


def synthesize_stack(
    rgb: RgbImage,
    depth: DepthMap,
    lens: ThinLensConfig,
    focus_distances_m,
    psf_shape_p: float,
    mode: str = "reference",
    n_layers: int = 32,
    cutoff_rel: float = DEFAULT_CUTOFF_REL,
) -> FocusStack:
    """Synthesize one image per focus distance (distances must be ascending)."""
    fds = [float(d) for d in focus_distances_m]
    if sorted(fds) != fds:
        raise ValueError("focus distances must be sorted ascending")
    if mode not in ("reference", "layered"):
        raise ValueError(f"unknown mode {mode!r}")
    images = []
    for fd in fds:
        if mode == "reference":
            images.append(synthesize_image_reference(rgb, depth, lens, fd, psf_shape_p, cutoff_rel))
        else:
            images.append(synthesize_image_layered(rgb, depth, lens, fd, psf_shape_p, n_layers, cutoff_rel))
    return FocusStack(tuple(images), tuple(fds), lens, psf_shape_p, mode)


def zoom_augment(
    rgb: RgbImage, depth: DepthMap, lens: ThinLensConfig, scale_s: float
) -> tuple[RgbImage, DepthMap, ThinLensConfig]:
    """Digital zoom augmentation: bilinear upscale by scale_s about the image
    center, center-cropped back to the original size.

    Depth values keep their magnitude (the zoom is optical, not motion). The
    effective pixel pitch shrinks by scale_s, so focal_length_px grows by
    scale_s; the principal point offset from center scales accordingly.
    """
    if not (1.0 <= scale_s <= 1.5):
        raise ValueError(f"scale_s must be in [1.0, 1.5], got {scale_s}")
    _check_pair(rgb, depth)
    if scale_s == 1.0:
        return (
            RgbImage(rgb.data.copy()),
            DepthMap(depth.data.copy(), depth.valid.copy()),
            lens,
        )

    h, w = depth.height, depth.width
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    src = np.stack([(yy - cy) / scale_s + cy, (xx - cx) / scale_s + cx])

    channels = [
        ndimage.map_coordinates(rgb.data[:, :, c], src, order=1, mode="nearest")
        for c in range(3)
    ]
    rgb_out = RgbImage(np.clip(np.stack(channels, axis=-1), 0.0, 1.0))
    depth_out = ndimage.map_coordinates(depth.data, src, order=1, mode="nearest")
    valid_out = ndimage.map_coordinates(depth.valid.astype(np.uint8), src, order=0, mode="nearest").astype(bool)

    ppx, ppy = lens.principal_point
    new_lens = ThinLensConfig(
        focal_length_m=lens.focal_length_m,
        f_number=lens.f_number,
        pixel_pitch_m=lens.pixel_pitch_m / scale_s,
        principal_point=(cx + scale_s * (ppx - cx), cy + scale_s * (ppy - cy)),
    )
    return rgb_out, DepthMap(depth_out, valid_out), new_lens
