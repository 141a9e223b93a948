"""Seeded domain randomization for stack synthesis.

Covers the stochastic choices a training pipeline makes per stack: PSF shape
exponent, f-number, the near/far focus bounds, and the power-law placement of
focus distances between those bounds. All draws go through SeededRng so a
stack is reproducible from (seed, config) alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .images import DepthMap

# Pinned generator: identical integer seed gives an identical stream on every
# platform, and the name travels in output metadata.
RNG_ALGORITHM = "numpy-pcg64"


class SeededRng:
    """A named, reseedable random stream (numpy PCG64 behind the scenes).

    One stream must not be shared across concurrent consumers; call fork()
    to derive independent substreams instead.
    """

    def __init__(self, seed: int, algorithm: str = RNG_ALGORITHM):
        if algorithm != RNG_ALGORITHM:
            raise ValueError(f"unsupported rng algorithm {algorithm!r}")
        seed = int(seed)
        if not (0 <= seed < 2**64):
            raise ValueError("seed must fit in 64 unsigned bits")
        self.seed = seed
        self.algorithm = algorithm
        self._seed_seq = np.random.SeedSequence(seed)
        self.generator = np.random.Generator(np.random.PCG64(self._seed_seq))

    def fork(self, n: int) -> list["SeededRng"]:
        """Derive n independent substreams, each with its own recorded seed."""
        children = self._seed_seq.spawn(n)
        return [SeededRng(int(c.generate_state(1, np.uint64)[0])) for c in children]

    def metadata(self) -> dict:
        return {"seed": self.seed, "algorithm": self.algorithm}


@dataclass(frozen=True)
class BlurSamplerConfig:
    """Randomization law for the blur model: p = 2^u, u ~ U(p_exponent_range),
    and an f-number drawn uniformly from a fixed aperture set."""

    p_exponent_range: tuple[float, float] = (1.0, 5.0)
    f_numbers: tuple[float, ...] = (1.0, 1.4, 2.0, 2.8, 4.0)

    def __post_init__(self):
        lo, hi = self.p_exponent_range
        if not lo <= hi:
            raise ValueError("p_exponent_range must be (lo, hi) with lo <= hi")
        if not self.f_numbers or any(n <= 0 for n in self.f_numbers):
            raise ValueError("f_numbers must be a non-empty set of positive values")

    def to_dict(self) -> dict:
        return {
            "p_exponent_range": list(self.p_exponent_range),
            "f_numbers": list(self.f_numbers),
        }


@dataclass(frozen=True)
class FdSamplerConfig:
    """Randomization law for focus-distance bounds and placement.

    mode selects how (z_near, z_far) arise: scene depth percentiles,
    an automatic synthetic range, or a 1:4 mix of the two.
    """

    mode: str = "mixed"
    mix_ratio: tuple[float, float] = (1.0, 4.0)
    stack_size_s: int = 5
    percentile_bounds: tuple[float, float] = (5.0, 95.0)
    auto_near: tuple[float, float] = (0.6, 1.0)
    auto_far_multiplier: tuple[float, float] = (7.0, 15.0)
    kappa_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.mode not in ("percentile", "automatic", "mixed"):
            raise ValueError(f"unknown fd sampler mode {self.mode!r}")
        if self.stack_size_s < 2:
            raise ValueError("stack_size_s must be >= 2")
        pw, aw = self.mix_ratio
        if pw < 0 or aw < 0 or pw + aw <= 0:
            raise ValueError("mix_ratio weights must be non-negative and not both zero")
        lo, hi = self.percentile_bounds
        if not (0 <= lo < hi <= 100):
            raise ValueError("percentile_bounds must satisfy 0 <= lo < hi <= 100")
        klo, khi = self.kappa_range
        if not (0 <= klo <= khi <= 1):
            raise ValueError("kappa_range must lie within [0, 1]")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "mix_ratio": list(self.mix_ratio),
            "stack_size_s": self.stack_size_s,
            "percentile_bounds": list(self.percentile_bounds),
            "auto_near": list(self.auto_near),
            "auto_far_multiplier": list(self.auto_far_multiplier),
            "kappa_range": list(self.kappa_range),
        }


_DEFAULT_BLUR_CFG = BlurSamplerConfig()

# Percentile mode needs enough valid pixels for order statistics to mean much.
MIN_VALID_FOR_PERCENTILE = 20


def sample_psf_shape(rng: SeededRng, cfg: BlurSamplerConfig = _DEFAULT_BLUR_CFG) -> float:
    u = rng.generator.uniform(*cfg.p_exponent_range)
    return float(2.0**u)


def sample_f_number(rng: SeededRng, cfg: BlurSamplerConfig = _DEFAULT_BLUR_CFG) -> float:
    return float(rng.generator.choice(np.asarray(cfg.f_numbers, dtype=np.float64)))


def sample_kappa(rng: SeededRng, cfg: FdSamplerConfig) -> float:
    return float(rng.generator.uniform(*cfg.kappa_range))


def _percentile_bounds(depth: DepthMap, cfg: FdSamplerConfig) -> tuple[float, float]:
    vals = depth.data[depth.valid]
    if vals.size < MIN_VALID_FOR_PERCENTILE:
        raise ValueError(
            f"percentile mode needs >= {MIN_VALID_FOR_PERCENTILE} valid depth pixels, got {vals.size}"
        )
    lo, hi = np.percentile(vals, cfg.percentile_bounds)
    if not lo < hi:
        raise ValueError("depth percentiles are degenerate (near >= far)")
    return float(lo), float(hi)


def sample_fd_bounds(
    depth: DepthMap | None, cfg: FdSamplerConfig, rng: SeededRng
) -> tuple[float, float]:
    """Draw (z_near, z_far) for a stack.

    percentile mode reads the bounds off the scene's valid depths; automatic
    mode invents a range (near ~ U(auto_near), far = near * U(multiplier));
    mixed mode picks percentile with probability pw / (pw + aw) and consumes
    exactly one uniform for the branch choice.
    """
    mode = cfg.mode
    if mode == "mixed":
        pw, aw = cfg.mix_ratio
        mode = "percentile" if rng.generator.random() < pw / (pw + aw) else "automatic"
    if mode == "percentile":
        if depth is None:
            raise ValueError("percentile mode requires a depth map")
        return _percentile_bounds(depth, cfg)
    z_near = float(rng.generator.uniform(*cfg.auto_near))
    z_far = z_near * float(rng.generator.uniform(*cfg.auto_far_multiplier))
    return z_near, z_far


# Below this, the closed-form power-law exponent -1/kappa is numerically
# useless and the analytic geometric limit takes over.
KAPPA_GEOMETRIC_LIMIT = 1e-4


def interpolate_fds(z_near: float, z_far: float, s: int, kappa: float) -> list[float]:
    """Place s focus distances between the bounds, power-law in disparity.

    f_i = ((1 - t_i) z_near^-kappa + t_i z_far^-kappa)^(-1/kappa) with
    t_i = i/(s-1). kappa = 1 is uniform in disparity; kappa -> 0 tends to the
    geometric (uniform-in-log-depth) spacing, used verbatim for tiny kappa.
    Endpoints are returned exactly; the sequence is strictly increasing.
    """
    if not (0 < z_near < z_far):
        raise ValueError(f"need 0 < z_near < z_far, got ({z_near}, {z_far})")
    if s < 2:
        raise ValueError(f"stack size must be >= 2, got {s}")
    if not (0.0 <= kappa <= 1.0):
        raise ValueError(f"kappa must be in [0, 1], got {kappa}")
    t = np.linspace(0.0, 1.0, s)
    if kappa < KAPPA_GEOMETRIC_LIMIT:
        f = z_near ** (1.0 - t) * z_far**t
    else:
        f = ((1.0 - t) * z_near**-kappa + t * z_far**-kappa) ** (-1.0 / kappa)
    f[0] = z_near
    f[-1] = z_far
    return [float(v) for v in f]
