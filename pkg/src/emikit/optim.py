"""AdamW with decoupled weight decay, global-norm clipping, and LR plateau control.

Parameter groups carry their own learning rate (the fusion stage trains
encoders at a small fraction of the base rate) but share the decay, betas and
step counter. Gradient clipping measures one global norm across every group,
so the relative direction of the update is preserved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass
class ParamGroup:
    name: str
    params: list  # list of (path, Tensor)
    lr: float


@dataclass
class _AdamState:
    m: np.ndarray
    v: np.ndarray


class AdamW:
    def __init__(self, groups: list[ParamGroup], betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 1e-2, clip_norm: float | None = 1.0):
        if not groups or not any(g.params for g in groups):
            raise ConfigError("optimizer needs at least one parameter")
        for lo, hi, val, label in [(0.0, 1.0, betas[0], "beta1"), (0.0, 1.0, betas[1], "beta2")]:
            if not lo <= val < hi:
                raise ConfigError(f"{label} must be in [0, 1), got {val}")
        self.groups = groups
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.clip_norm = clip_norm
        self.t = 0
        self._state: dict[int, _AdamState] = {}

    def zero_grad(self) -> None:
        for group in self.groups:
            for _, param in group.params:
                param.grad = None

    def global_grad_norm(self) -> float:
        total = 0.0
        for group in self.groups:
            for _, param in group.params:
                if param.grad is not None:
                    g = param.grad.astype(np.float64, copy=False)
                    total += float(np.dot(g.reshape(-1), g.reshape(-1)))
        return float(np.sqrt(total))

    def clip_gradients(self) -> float:
        """Scale all gradients so their joint norm is at most clip_norm.

        Returns the pre-clip norm (useful for logging exploding steps).
        """
        norm = self.global_grad_norm()
        if self.clip_norm is not None and norm > self.clip_norm and norm > 0.0:
            scale = self.clip_norm / norm
            for group in self.groups:
                for _, param in group.params:
                    if param.grad is not None:
                        param.grad *= scale
        return norm

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for group in self.groups:
            lr = group.lr
            for _, param in group.params:
                if param.grad is None:
                    continue  # parameter did not participate this step
                state = self._state.get(id(param))
                if state is None:
                    state = _AdamState(np.zeros_like(param.data), np.zeros_like(param.data))
                    self._state[id(param)] = state
                g = param.grad
                if self.weight_decay:
                    param.data *= 1.0 - lr * self.weight_decay
                state.m = self.beta1 * state.m + (1.0 - self.beta1) * g
                state.v = self.beta2 * state.v + (1.0 - self.beta2) * (g * g)
                m_hat = state.m / bc1
                v_hat = state.v / bc2
                param.data -= (lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(param.data.dtype)

    def learning_rates(self) -> dict[str, float]:
        return {g.name: g.lr for g in self.groups}


class ReduceOnPlateau:
    """Halve every group's learning rate after `patience` epochs without
    strict improvement of a higher-is-better metric, down to a floor."""

    def __init__(self, optimizer: AdamW, factor: float = 0.5, patience: int = 5,
                 min_lr: float = 1e-7):
        if not 0.0 < factor < 1.0:
            raise ConfigError(f"plateau factor must be in (0, 1), got {factor}")
        if patience < 1:
            raise ConfigError(f"plateau patience must be >= 1, got {patience}")
        self.optimizer = optimizer
        self.factor = factor
        self.patience = patience
        self.min_lr = min_lr
        self.best: float | None = None
        self.bad_epochs = 0
        self.reductions = 0

    def step(self, metric: float) -> bool:
        """Observe one epoch's validation metric; returns True if LRs dropped."""
        if self.best is None or metric > self.best:
            self.best = metric
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            for group in self.optimizer.groups:
                if group.lr > 0.0:  # a frozen group (lr 0) must stay frozen
                    group.lr = max(group.lr * self.factor, self.min_lr)
            self.bad_epochs = 0
            self.reductions += 1
            return True
        return False


def build_groups(named_params, base_lr: float, encoder_lr_multiplier: float | None = None) -> list[ParamGroup]:
    """Split (path, tensor) pairs into encoder vs. non-encoder groups.

    With no multiplier (stage 1) everything lands in one group at base_lr.
    """
    named = list(named_params)
    if encoder_lr_multiplier is None:
        return [ParamGroup("all", named, base_lr)]
    encoder = [(p, t) for p, t in named if p.startswith("encoder.")]
    rest = [(p, t) for p, t in named if not p.startswith("encoder.")]
    groups = []
    if rest:
        groups.append(ParamGroup("fusion", rest, base_lr))
    if encoder:
        groups.append(ParamGroup("encoder", encoder, base_lr * encoder_lr_multiplier))
    return groups
