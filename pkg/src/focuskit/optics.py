"""Thin-lens circle-of-confusion model and a generalized defocus PSF family.

The PSF family interpolates between a Gaussian (shape exponent p=2) and a
uniform disk (p -> infinity) with a single formula:

    F(u, v) = (1/c^2) * exp(-2 * ((u^2 + v^2) / c^2) ** (p/2))

where c is the blur scale in pixels (derived from the circle of confusion)
and (u, v) is the pixel offset from the kernel center.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Kernels are hard-capped at this radius; blur beyond it is truncated and
# the kernel renormalized so weights still sum to 1.
MAX_KERNEL_RADIUS_PX = 64

# Blur scales below a quarter pixel are unobservable at the sampling grid
# and map to the 1x1 identity kernel.
IDENTITY_COC_PX = 0.25

DEFAULT_CUTOFF_REL = 1e-3


@dataclass(frozen=True)
class ThinLensConfig:
    """Lens and sensor geometry needed to turn scene depth into blur."""

    focal_length_m: float
    f_number: float
    pixel_pitch_m: float
    principal_point: tuple[float, float]
    focal_length_px: float = field(default=0.0)

    def __post_init__(self):
        if self.focal_length_m <= 0:
            raise ValueError(f"focal_length_m must be > 0, got {self.focal_length_m}")
        if self.f_number <= 0:
            raise ValueError(f"f_number must be > 0, got {self.f_number}")
        if self.pixel_pitch_m <= 0:
            raise ValueError(f"pixel_pitch_m must be > 0, got {self.pixel_pitch_m}")
        if self.focal_length_px == 0.0:
            object.__setattr__(
                self, "focal_length_px", self.focal_length_m / self.pixel_pitch_m
            )
        rel = abs(self.focal_length_px * self.pixel_pitch_m - self.focal_length_m)
        if rel > 1e-9 * self.focal_length_m:
            raise ValueError(
                "focal_length_px inconsistent with focal_length_m / pixel_pitch_m"
            )

    @classmethod
    def from_json(cls, path: str | Path) -> "ThinLensConfig":
        """Load a lens config from JSON with keys focal_length_m, f_number,
        pixel_pitch_m, principal_point."""
        with open(path) as f:
            d = json.load(f)
        return cls(
            focal_length_m=float(d["focal_length_m"]),
            f_number=float(d["f_number"]),
            pixel_pitch_m=float(d["pixel_pitch_m"]),
            principal_point=tuple(float(v) for v in d["principal_point"]),
        )

    def to_dict(self) -> dict:
        return {
            "focal_length_m": self.focal_length_m,
            "f_number": self.f_number,
            "pixel_pitch_m": self.pixel_pitch_m,
            "principal_point": list(self.principal_point),
            "focal_length_px": self.focal_length_px,
        }


@dataclass(frozen=True)
class PsfSpec:
    """Shape and scale of one blur kernel.

    shape_p:    family exponent, >= 1 (2 = Gaussian, large = disk)
    scale_c_px: blur scale in pixels, >= 0
    cutoff_rel: truncation threshold relative to the center value
    """

    shape_p: float
    scale_c_px: float
    cutoff_rel: float = DEFAULT_CUTOFF_REL

    def __post_init__(self):
        if self.shape_p < 1:
            raise ValueError(f"shape_p must be >= 1, got {self.shape_p}")
        if self.scale_c_px < 0:
            raise ValueError(f"scale_c_px must be >= 0, got {self.scale_c_px}")
        if not (0 < self.cutoff_rel <= 1):
            raise ValueError(f"cutoff_rel must be in (0, 1], got {self.cutoff_rel}")


@dataclass(frozen=True)
class DiscreteKernel:
    """A (2r+1) x (2r+1) blur kernel with non-negative weights summing to 1."""

    radius_px: int
    weights: np.ndarray

    def __post_init__(self):
        if self.radius_px < 0:
            raise ValueError("radius_px must be >= 0")
        side = 2 * self.radius_px + 1
        if self.weights.shape != (side, side):
            raise ValueError(
                f"weights shape {self.weights.shape} does not match radius {self.radius_px}"
            )
        if np.any(self.weights < 0):
            raise ValueError("kernel weights must be non-negative")
        s = float(self.weights.sum())
        if abs(s - 1.0) > 1e-6:
            raise ValueError(f"kernel weights must sum to 1, got {s}")


def coc_meters(depth_m: float, lens: ThinLensConfig, focus_distance_m: float) -> float:
    """Circle of confusion (meters) for a point at depth_m with the lens
    focused at focus_distance_m:

        |D - d| / D * f^2 / (N * (d - f))

    Singular when depth_m <= 0 or the focus distance is at or inside the
    focal length; both raise ValueError.
    """
    if depth_m <= 0:
        raise ValueError(f"depth_m must be > 0, got {depth_m}")
    f = lens.focal_length_m
    if focus_distance_m <= f:
        raise ValueError(
            f"focus_distance_m ({focus_distance_m}) must exceed focal length ({f})"
        )
    d = focus_distance_m
    return abs(depth_m - d) / depth_m * f * f / (lens.f_number * (d - f))


def coc_pixels(depth_m, lens: ThinLensConfig, focus_distance_m: float):
    """coc_meters expressed in sensor pixels. Accepts scalar or ndarray depth."""
    if np.isscalar(depth_m):
        return coc_meters(depth_m, lens, focus_distance_m) / lens.pixel_pitch_m
    depth = np.asarray(depth_m, dtype=np.float64)
    if np.any(depth <= 0):
        raise ValueError("all depths must be > 0")
    f = lens.focal_length_m
    if focus_distance_m <= f:
        raise ValueError(
            f"focus_distance_m ({focus_distance_m}) must exceed focal length ({f})"
        )
    d = focus_distance_m
    coc_m = np.abs(depth - d) / depth * (f * f) / (lens.f_number * (d - f))
    return coc_m / lens.pixel_pitch_m


def psf_value(u, v, spec: PsfSpec):
    """Evaluate the generalized PSF at pixel offset (u, v).

    Not normalized: the center value is 1/c^2. Accepts scalars or arrays.
    """
    c = spec.scale_c_px
    if c <= 0:
        raise ValueError("psf_value requires scale_c_px > 0; use the identity kernel")
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    r2 = (u * u + v * v) / (c * c)
    # r2**(p/2) overflows to inf for large p far outside the disk; exp(-inf)
    # is the correct limit 0, so silence the overflow warning.
    with np.errstate(over="ignore"):
        out = np.exp(-2.0 * r2 ** (spec.shape_p / 2.0)) / (c * c)
    return float(out) if out.ndim == 0 else out


def kernel_radius(spec: PsfSpec) -> int:
    """Truncation radius for make_kernel.

    Smallest integer r such that the PSF at distance r + 0.5 has dropped to
    cutoff_rel of the center value; at least ceil(c) for p >= 8 so the full
    disk support is covered. Hard-capped at MAX_KERNEL_RADIUS_PX.
    """
    c = spec.scale_c_px
    if c < IDENTITY_COC_PX:
        return 0
    # exp(-2 (x/c)^p) <= cutoff  <=>  x >= c * (ln(1/cutoff) / 2) ** (1/p)
    x = c * (math.log(1.0 / spec.cutoff_rel) / 2.0) ** (1.0 / spec.shape_p)
    r = max(0, math.ceil(x - 0.5))
    if spec.shape_p >= 8:
        r = max(r, math.ceil(c))
    return min(r, MAX_KERNEL_RADIUS_PX)


def make_kernel(spec: PsfSpec) -> DiscreteKernel:
    """Sample the PSF at integer pixel offsets and normalize to sum 1.

    Sub-quarter-pixel scales return the 1x1 identity kernel.
    """
    if spec.scale_c_px < IDENTITY_COC_PX:
        return DiscreteKernel(0, np.ones((1, 1)))
    r = kernel_radius(spec)
    if r == 0:
        return DiscreteKernel(0, np.ones((1, 1)))
    offsets = np.arange(-r, r + 1, dtype=np.float64)
    uu, vv = np.meshgrid(offsets, offsets, indexing="ij")
    w = psf_value(uu, vv, spec)
    return DiscreteKernel(r, w / w.sum())
