"""Raster containers shared across the toolkit.

Images are float arrays in [0, 1], shape (H, W, 3). Depth maps are float
meters, shape (H, W), with an explicit validity mask. Both are thin wrappers
over numpy arrays; data is not copied on construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .optics import ThinLensConfig


@dataclass(frozen=True)
class RgbImage:
    data: np.ndarray  # (H, W, 3) float64 in [0, 1]

    def __post_init__(self):
        d = self.data
        if d.ndim != 3 or d.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) array, got {d.shape}")
        if d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if d.min() < 0.0 or d.max() > 1.0:
            raise ValueError("channel values must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class DepthMap:
    data: np.ndarray  # (H, W) float64 meters
    valid: np.ndarray  # (H, W) bool

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ValueError(f"expected (H, W) array, got {self.data.shape}")
        if self.valid.shape != self.data.shape:
            raise ValueError("validity mask shape must match depth shape")
        if self.valid.dtype != np.bool_:
            raise ValueError("validity mask must be boolean")
        vals = self.data[self.valid]
        if vals.size and (not np.all(np.isfinite(vals)) or vals.min() <= 0):
            raise ValueError("valid depth entries must be finite and > 0")

    @classmethod
    def full(cls, data: np.ndarray) -> "DepthMap":
        """Depth map with every pixel valid."""
        return cls(np.asarray(data, dtype=np.float64), np.ones(data.shape, dtype=bool))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def fully_valid(self) -> bool:
        return bool(self.valid.all())


@dataclass(frozen=True)
class FocusStack:
    """M pixel-aligned images of a static scene at increasing focus distances."""

    images: tuple[RgbImage, ...]
    focus_distances_m: tuple[float, ...]
    lens: ThinLensConfig
    psf_shape_p: float = 2.0
    mode: str = "reference"
    extra_metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.images) != len(self.focus_distances_m):
            raise ValueError("one focus distance per image required")
        if len(self.images) < 1:
            raise ValueError("a stack needs at least one image")
        h, w = self.images[0].height, self.images[0].width
        for im in self.images:
            if (im.height, im.width) != (h, w):
                raise ValueError("all stack images must share dimensions")
        if any(d <= 0 for d in self.focus_distances_m):
            raise ValueError("focus distances must be positive")

    def __len__(self) -> int:
        return len(self.images)

    def metadata(self) -> dict:
        md = {
            "focus_distances_m": list(self.focus_distances_m),
            "f_number": self.lens.f_number,
            "focal_length_m": self.lens.focal_length_m,
            "pixel_pitch_m": self.lens.pixel_pitch_m,
            "psf_shape_p": self.psf_shape_p,
            "mode": self.mode,
        }
        md.update(self.extra_metadata)
        return md
