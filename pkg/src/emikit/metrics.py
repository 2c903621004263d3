"""Pearson, concordance, and MSE computations for evaluation passes.

All statistics here are full-split, computed at float64, and use population
(biased) moments. Degenerate zero-variance inputs return 0 by convention:
sparse labels make all-zero target slices possible, and 0 is the conservative
score for them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import EMOTION_DIMENSIONS, NUM_DIMENSIONS
from .errors import ValidationError

# Reported metrics carry no stabilizer: the zero-variance convention already
# guards the denominators, and perfect predictions must score exactly 1.
# (The differentiable training loss keeps its own 1e-8; see losses.py.)
DEFAULT_EPSILON = 0.0


@dataclass
class MetricsReport:
    """Per-dimension and averaged agreement for one evaluation pass."""

    pearson_per_dim: list[float]
    average_pearson: float
    ccc_per_dim: list[float]
    mse: float
    sample_count: int

    def as_dict(self) -> dict:
        return {
            "average_pearson": self.average_pearson,
            "pearson": dict(zip(EMOTION_DIMENSIONS, self.pearson_per_dim)),
            "ccc": dict(zip(EMOTION_DIMENSIONS, self.ccc_per_dim)),
            "mse": self.mse,
            "sample_count": self.sample_count,
        }


def _check_pair(pred, target) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    t = np.asarray(target, dtype=np.float64).reshape(-1)
    if p.shape != t.shape:
        raise ValidationError(f"length mismatch: {p.shape[0]} vs {t.shape[0]}")
    if p.shape[0] < 2:
        raise ValidationError(f"need at least 2 points, got {p.shape[0]}")
    return p, t


def pearson(pred, target, epsilon: float = DEFAULT_EPSILON) -> float:
    """Pearson correlation; 0 when either side has zero variance."""
    p, t = _check_pair(pred, target)
    pc = p - p.mean()
    tc = t - t.mean()
    var_p = float(np.mean(pc * pc))
    var_t = float(np.mean(tc * tc))
    if var_p == 0.0 or var_t == 0.0:
        return 0.0
    cov = float(np.mean(pc * tc))
    return cov / (np.sqrt(var_p) * np.sqrt(var_t) + epsilon)


def ccc(pred, target, epsilon: float = DEFAULT_EPSILON) -> float:
    """Concordance correlation with population moments; 0 when degenerate."""
    p, t = _check_pair(pred, target)
    mean_p = float(p.mean())
    mean_t = float(t.mean())
    var_p = float(np.mean((p - mean_p) ** 2))
    var_t = float(np.mean((t - mean_t) ** 2))
    if var_p == 0.0 and var_t == 0.0:
        return 0.0
    cov = float(np.mean((p - mean_p) * (t - mean_t)))
    return 2.0 * cov / (var_p + var_t + (mean_p - mean_t) ** 2 + epsilon)


def mse(pred, target) -> float:
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ValidationError(f"shape mismatch: {p.shape} vs {t.shape}")
    return float(np.mean((p - t) ** 2))


def average_pearson(preds, targets, epsilon: float = DEFAULT_EPSILON) -> MetricsReport:
    """Challenge metric: per-dimension Pearson over the full set, then their mean."""
    p = np.asarray(preds, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != NUM_DIMENSIONS or p.shape != t.shape:
        raise ValidationError(
            f"expected matching N x {NUM_DIMENSIONS} arrays, got {p.shape} and {t.shape}"
        )
    if p.shape[0] < 2:
        raise ValidationError(f"need at least 2 samples, got {p.shape[0]}")
    rs = [pearson(p[:, d], t[:, d], epsilon) for d in range(NUM_DIMENSIONS)]
    cs = [ccc(p[:, d], t[:, d], epsilon) for d in range(NUM_DIMENSIONS)]
    return MetricsReport(
        pearson_per_dim=rs,
        average_pearson=sum(rs) / float(NUM_DIMENSIONS),
        ccc_per_dim=cs,
        mse=mse(p, t),
        sample_count=int(p.shape[0]),
    )
