"""Shared fixtures: a small lens, textured scenes, and numeric helpers."""

import numpy as np
import pytest

from focuskit.images import DepthMap, RgbImage
from focuskit.optics import ThinLensConfig


@pytest.fixture
def lens():
    return ThinLensConfig(
        focal_length_m=0.05,
        f_number=2.8,
        pixel_pitch_m=4.3e-6,
        principal_point=(319.5, 239.5),
    )


@pytest.fixture
def synth_lens():
    """Lens scaled so meter-range scenes blur by a few pixels at 64x64."""
    return ThinLensConfig(
        focal_length_m=0.01,
        f_number=4.0,
        pixel_pitch_m=5e-6,
        principal_point=(31.5, 31.5),
    )


def make_texture(height: int, width: int, seed: int = 0) -> RgbImage:
    """High-frequency random texture, strictly inside (0, 1) so blur cannot clip."""
    gen = np.random.Generator(np.random.PCG64(seed))
    data = 0.1 + 0.8 * gen.random((height, width, 3))
    return RgbImage(data)


def make_two_plane_depth(height: int, width: int, near: float, far: float) -> DepthMap:
    """Left half at the near depth, right half at the far depth."""
    data = np.full((height, width), far)
    data[:, : width // 2] = near
    return DepthMap.full(data)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return np.inf
    return 10.0 * np.log10(1.0 / mse)


@pytest.fixture(name="psnr")
def psnr_fixture():
    return psnr


@pytest.fixture
def texture64():
    return make_texture(64, 64, seed=11)


@pytest.fixture
def two_plane_depth64():
    return make_two_plane_depth(64, 64, near=1.2, far=2.4)
