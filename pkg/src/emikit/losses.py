"""Training loss: a convex blend of concordance and squared error.

The concordance term is computed per output dimension over the whole batch
(batch-level moments, not per-sample), then averaged across the six
dimensions. A small epsilon stabilises only the denominator, so a batch where
both prediction and target are constant yields a concordance of exactly zero
rather than NaN.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError, ValidationError
from .tensor import Tensor


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.7
    epsilon: float = 1e-8

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"loss alpha must be in [0, 1], got {self.alpha}")
        if self.epsilon < 0.0:
            raise ConfigError(f"loss epsilon must be >= 0, got {self.epsilon}")


def batch_ccc(pred: Tensor, target: Tensor, epsilon: float = 1e-8) -> Tensor:
    """Differentiable per-dimension concordance over the batch axis.

    Returns a length-D tensor; moments are population (divide by B) and the
    epsilon enters the denominator only.
    """
    if pred.ndim != 2 or target.ndim != 2 or pred.shape != target.shape:
        raise ShapeError(f"batch ccc expects matching B x D, got {pred.shape} and {target.shape}")
    if pred.shape[0] < 2:
        raise ValidationError(
            f"batch-level concordance needs at least 2 samples, got {pred.shape[0]}"
        )
    d = pred.shape[1]
    mu_p = pred.mean(axis=0, keepdims=True)
    mu_t = target.mean(axis=0, keepdims=True)
    cp = pred - mu_p
    ct = target - mu_t
    var_p = (cp * cp).mean(axis=0)
    var_t = (ct * ct).mean(axis=0)
    cov = (cp * ct).mean(axis=0)
    gap = (mu_p - mu_t).reshape(d)
    denom = var_p + var_t + gap * gap + epsilon
    return (2.0 * cov) / denom


def combined_loss(pred: Tensor, target: np.ndarray | Tensor,
                  cfg: LossConfig = LossConfig()) -> Tensor:
    """alpha * (1 - mean concordance) + (1 - alpha) * mean squared error."""
    if not isinstance(target, Tensor):
        target = Tensor(np.asarray(target, dtype=pred.dtype))
    ccc = batch_ccc(pred, target, cfg.epsilon)
    loss_ccc = 1.0 - ccc.mean()
    diff = pred - target
    loss_mse = (diff * diff).mean()
    return cfg.alpha * loss_ccc + (1.0 - cfg.alpha) * loss_mse
