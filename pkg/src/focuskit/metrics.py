"""Depth evaluation metrics and training-loss routines.

Every routine reduces over the intersection of the two validity masks, so
padding either map with invalid pixels never moves a number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .images import DepthMap

DEFAULT_DELTA_THRESHOLDS = (1.05, 1.15, 1.25)
DEFAULT_SILOG_LAMBDA = 0.5
DEFAULT_GRAD_SCALES = 4
GRAD_MATCH_WEIGHT = 0.1


@dataclass(frozen=True)
class MetricsReport:
    abs_rel: float
    sq_rel: float
    mse: float
    rmse: float
    delta: dict
    silog: float
    grad_match: float
    total_loss: float
    n_valid: int

    def __post_init__(self):
        if self.n_valid < 1:
            raise ValueError("report requires n_valid >= 1")
        vals = [self.abs_rel, self.sq_rel, self.mse, self.rmse, self.silog, self.grad_match, self.total_loss]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("metrics must be finite")
        last = -1.0
        for k in sorted(self.delta):
            v = self.delta[k]
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"delta[{k}] = {v} outside [0, 1]")
            if v < last:
                raise ValueError("delta must be non-decreasing in the threshold")
            last = v

    def to_dict(self) -> dict:
        return {
            "abs_rel": self.abs_rel,
            "sq_rel": self.sq_rel,
            "mse": self.mse,
            "rmse": self.rmse,
            "delta": {f"{k:g}": v for k, v in sorted(self.delta.items())},
            "silog": self.silog,
            "grad_match": self.grad_match,
            "total_loss": self.total_loss,
            "n_valid": self.n_valid,
        }

    def to_text(self) -> str:
        rows = [
            ("abs_rel", self.abs_rel),
            ("sq_rel", self.sq_rel),
            ("mse", self.mse),
            ("rmse", self.rmse),
        ]
        rows += [(f"delta<{k:g}", v) for k, v in sorted(self.delta.items())]
        rows += [
            ("silog", self.silog),
            ("grad_match", self.grad_match),
            ("total_loss", self.total_loss),
            ("n_valid", float(self.n_valid)),
        ]
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value:.6f}" for name, value in rows)


def _joint_mask(pred: DepthMap, gt: DepthMap) -> np.ndarray:
    if pred.data.shape != gt.data.shape:
        raise ValueError(f"shape mismatch: pred {pred.data.shape} vs gt {gt.data.shape}")
    mask = pred.valid & gt.valid
    if not mask.any():
        raise ValueError("no jointly valid pixels")
    return mask


def _masked_pair(pred: DepthMap, gt: DepthMap):
    mask = _joint_mask(pred, gt)
    return pred.data[mask], gt.data[mask], mask


def silog_loss(pred: DepthMap, gt: DepthMap, lam: float = DEFAULT_SILOG_LAMBDA) -> float:
    """sqrt(mean(g^2) - lam * mean(g)^2) for g = log(pred) - log(gt).

    lam = 1 makes the loss invariant to a global scale on pred; the variance
    is clamped at zero so that case cannot go negative by rounding.
    """
    p, g, _ = _masked_pair(pred, gt)
    d = np.log(p) - np.log(g)
    val = float(np.mean(d * d) - lam * np.mean(d) ** 2)
    return math.sqrt(max(val, 0.0))


def grad_match_loss(pred: DepthMap, gt: DepthMap, n_scales: int = DEFAULT_GRAD_SCALES) -> float:
    """Multi-scale gradient matching on the log-depth residual.

    At each dyadic scale s the residual is subsampled by 2^s and the loss adds
    mean|forward dx| + mean|forward dy| over valid pixel pairs; the scales are
    then averaged. A constant residual (global scale error) scores zero.
    """
    if n_scales < 1:
        raise ValueError("n_scales must be >= 1")
    mask = _joint_mask(pred, gt)
    h, w = mask.shape
    if min(h, w) < 2 ** (n_scales - 1):
        raise ValueError(f"image {h}x{w} too small for {n_scales} dyadic scales")
    resid = np.zeros(mask.shape)
    resid[mask] = np.log(pred.data[mask]) - np.log(gt.data[mask])

    total = 0.0
    for s in range(n_scales):
        step = 2**s
        r = resid[::step, ::step]
        m = mask[::step, ::step]
        term = 0.0
        mx = m[:, 1:] & m[:, :-1]
        if mx.any():
            term += float(np.mean(np.abs((r[:, 1:] - r[:, :-1])[mx])))
        my = m[1:, :] & m[:-1, :]
        if my.any():
            term += float(np.mean(np.abs((r[1:, :] - r[:-1, :])[my])))
        total += term
    return total / n_scales


def total_loss(
    pred: DepthMap,
    gt: DepthMap,
    lam: float = DEFAULT_SILOG_LAMBDA,
    n_scales: int = DEFAULT_GRAD_SCALES,
) -> float:
    return silog_loss(pred, gt, lam) + GRAD_MATCH_WEIGHT * grad_match_loss(pred, gt, n_scales)


def compute_metrics(
    pred: DepthMap,
    gt: DepthMap,
    thresholds=DEFAULT_DELTA_THRESHOLDS,
    lam: float = DEFAULT_SILOG_LAMBDA,
    n_scales: int = DEFAULT_GRAD_SCALES,
) -> MetricsReport:
    """Standard depth metrics over the joint valid mask.

    AbsRel = mean(|pred - gt| / gt); SqRel = mean((pred - gt)^2 / gt);
    MSE/RMSE on raw depth; delta_k = fraction with max(pred/gt, gt/pred)
    strictly below k.
    """
    p, g, _ = _masked_pair(pred, gt)
    err = p - g
    ratio = np.maximum(p / g, g / p)
    mse = float(np.mean(err * err))
    return MetricsReport(
        abs_rel=float(np.mean(np.abs(err) / g)),
        sq_rel=float(np.mean(err * err / g)),
        mse=mse,
        rmse=math.sqrt(mse),
        delta={float(k): float(np.mean(ratio < k)) for k in thresholds},
        silog=silog_loss(pred, gt, lam),
        grad_match=grad_match_loss(pred, gt, n_scales),
        total_loss=total_loss(pred, gt, lam, n_scales),
        n_valid=int(p.size),
    )
