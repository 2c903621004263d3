"""Two-stage training orchestration.

Stage 1 trains each modality's encoder with a temporary linear head; stage 2
discards the heads, concatenates the pretrained encoders' embeddings and
trains the fusion regressor at the base learning rate while the encoders
fine-tune at a small fraction of it. Both stages share the same loop: seeded
shuffling, minibatch loss, global-norm clipping, AdamW, plateau LR halving,
and strict-improvement early stopping on validation average Pearson.

RNG streams are split by purpose (shuffle / elementwise dropout / modality
dropout), each seeded from (seed, stage, purpose), so toggling one feature
never shifts another's random sequence.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .config import RunConfig
from .data import EMOTION_DIMENSIONS, Sample
from .errors import ValidationError
from .losses import LossConfig, combined_loss
from .metrics import MetricsReport, average_pearson
from .models import (
    ModelBundle,
    build_fusion_bundle,
    build_unimodal_bundle,
    forward_fusion,
    forward_unimodal,
    init_parameters,
    restore_parameters,
    snapshot_parameters,
)
from .optim import AdamW, ReduceOnPlateau, build_groups


def _stream(seed: int, name: str) -> np.random.Generator:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF] + words))


def modality_drop_mask(modalities: tuple[str, ...], p: float,
                       rng: np.random.Generator) -> dict[str, bool]:
    """Independent drops at probability p, redrawn until one modality survives."""
    if not modalities:
        raise ValidationError("modality drop mask needs a nonempty modality set")
    if p <= 0.0:
        return {m: False for m in modalities}
    while True:
        draws = rng.random(len(modalities)) < p
        if not draws.all():
            return {m: bool(d) for m, d in zip(modalities, draws)}


def make_batches(order: np.ndarray, batch_size: int) -> list[list[int]]:
    """Chunk a shuffled index order; a trailing singleton joins the previous batch."""
    batches = [list(order[i : i + batch_size]) for i in range(0, len(order), batch_size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        batches[-2].extend(batches.pop())
    return [[int(i) for i in b] for b in batches]


@dataclass
class TrainState:
    stage: str
    epoch: int = 0
    best_metric: float = float("-inf")
    best_epoch: int = 0
    epochs_since_improvement: int = 0
    history: list[dict] = field(default_factory=list)


def _forward_train_batch(bundle: ModelBundle, batch: list[Sample], cfg: RunConfig,
                         dropout_rng, mdrop_rng) -> tuple[T.Tensor, np.ndarray]:
    preds = []
    targets = np.zeros((len(batch), 6), dtype=np.float32)
    for row, sample in enumerate(batch):
        if bundle.stage == "fusion":
            mask = None
            if cfg.training.modality_dropout > 0.0:
                mask = modality_drop_mask(bundle.modalities, cfg.training.modality_dropout,
                                          mdrop_rng)
            out = forward_fusion(bundle, sample, drop_mask=mask, training=True, rng=dropout_rng)
        else:
            out = forward_unimodal(bundle, bundle.modalities[0], sample,
                                   training=True, rng=dropout_rng)
        preds.append(out)
        targets[row] = sample.labels
    return T.concat(preds, axis=0), targets


def predict_matrix(bundle: ModelBundle, samples: list[Sample],
                   clamp: bool = False) -> np.ndarray:
    """Eval-mode predictions for a whole split, one row per sample."""
    out = np.zeros((len(samples), 6), dtype=np.float64)
    with T.no_grad():
        for i, sample in enumerate(samples):
            if bundle.stage == "fusion":
                pred = forward_fusion(bundle, sample, training=False)
            else:
                pred = forward_unimodal(bundle, bundle.modalities[0], sample, training=False)
            out[i] = pred.data.reshape(-1)
    if clamp:
        out = np.clip(out, 0.0, 1.0)
    return out


def evaluate(bundle: ModelBundle, samples: list[Sample], clamp: bool = False) -> MetricsReport:
    if not samples:
        raise ValidationError("cannot evaluate an empty split")
    if any(s.labels is None for s in samples):
        raise ValidationError("evaluation needs a labeled split")
    targets = np.stack([s.labels for s in samples])
    preds = predict_matrix(bundle, samples, clamp=clamp)
    return average_pearson(preds, targets)


def _fit(bundle: ModelBundle, train_samples: list[Sample], valid_samples: list[Sample],
         cfg: RunConfig, stage: str, max_epochs: int, *, early_stop: bool = True,
         log_path: str | Path | None = None) -> TrainState:
    if not train_samples:
        raise ValidationError(f"stage {stage!r} has no training samples")
    if not valid_samples:
        raise ValidationError(f"stage {stage!r} has no validation samples")
    tcfg = cfg.training
    loss_cfg = LossConfig(alpha=tcfg.alpha, epsilon=tcfg.loss_epsilon)
    multiplier = tcfg.encoder_lr_multiplier if stage == "fusion" else None
    optimizer = AdamW(
        build_groups(bundle.named_parameters(), tcfg.base_lr, multiplier),
        weight_decay=tcfg.weight_decay,
        clip_norm=tcfg.clip_norm,
    )
    scheduler = ReduceOnPlateau(optimizer, factor=tcfg.scheduler_factor,
                                patience=tcfg.scheduler_patience, min_lr=tcfg.min_lr)
    shuffle_rng = _stream(cfg.seed, f"{stage}/shuffle")
    dropout_rng = _stream(cfg.seed, f"{stage}/dropout")
    mdrop_rng = _stream(cfg.seed, f"{stage}/modality-dropout")

    state = TrainState(stage=stage)
    best_params = snapshot_parameters(bundle)
    log_fh = open(log_path, "a", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, max_epochs + 1):
            started = time.monotonic()
            order = shuffle_rng.permutation(len(train_samples))
            losses = []
            for batch_ids in make_batches(order, tcfg.batch_size):
                batch = [train_samples[i] for i in batch_ids]
                preds, targets = _forward_train_batch(bundle, batch, cfg, dropout_rng, mdrop_rng)
                loss = combined_loss(preds, targets, loss_cfg)
                optimizer.zero_grad()
                T.backward(loss)
                optimizer.clip_gradients()
                optimizer.step()
                losses.append(loss.item())
            report = evaluate(bundle, valid_samples, clamp=tcfg.clamp)
            metric = report.average_pearson
            scheduler.step(metric)  # scheduler sees the metric before the stop counter
            state.epoch = epoch
            if metric > state.best_metric:
                state.best_metric = metric
                state.best_epoch = epoch
                state.epochs_since_improvement = 0
                best_params = snapshot_parameters(bundle)
            else:
                state.epochs_since_improvement += 1
            row = {
                "epoch": epoch,
                "stage": stage,
                "train_loss": float(np.mean(losses)),
                "val_r": metric,
                "r_per_dim": {d: r for d, r in zip(EMOTION_DIMENSIONS, report.pearson_per_dim)},
                "lr": optimizer.learning_rates(),
                "seconds": round(time.monotonic() - started, 3),
            }
            state.history.append(row)
            if log_fh:
                log_fh.write(json.dumps(row) + "\n")
                log_fh.flush()
            if early_stop and state.epochs_since_improvement >= tcfg.patience:
                break
    finally:
        if log_fh:
            log_fh.close()
    restore_parameters(bundle, best_params)
    return state


def _with_modality(samples: list[Sample], modality: str) -> list[Sample]:
    if modality == "text":
        return samples  # missing text falls back to the zero vector
    kept = [s for s in samples if s.modality(modality) is not None]
    return kept


def train_unimodal(modality: str, train_samples: list[Sample], valid_samples: list[Sample],
                   cfg: RunConfig, *, log_path: str | Path | None = None,
                   early_stop: bool = True, max_epochs: int | None = None
                   ) -> tuple[ModelBundle, TrainState]:
    if modality not in cfg.data.modalities:
        raise ValidationError(f"modality {modality!r} is not in the configured set")
    train_m = _with_modality(train_samples, modality)
    valid_m = _with_modality(valid_samples, modality)
    if not train_m or not valid_m:
        raise ValidationError(f"no samples carry {modality!r} features")
    bundle = build_unimodal_bundle(modality, cfg.model.hidden_dim,
                                   cfg.model.motion_hidden_dim, cfg.model.dropout)
    init_parameters(bundle, cfg.seed)
    epochs = max_epochs if max_epochs is not None else cfg.epochs_for(modality)
    state = _fit(bundle, train_m, valid_m, cfg, modality, epochs,
                 early_stop=early_stop, log_path=log_path)
    return bundle, state


def train_fusion(stage1: dict[str, ModelBundle], train_samples: list[Sample],
                 valid_samples: list[Sample], cfg: RunConfig, *,
                 log_path: str | Path | None = None, early_stop: bool = True,
                 max_epochs: int | None = None) -> tuple[ModelBundle, TrainState]:
    """Stage 2: drop the unimodal heads, fuse the pretrained encoders."""
    missing = [m for m in cfg.data.modalities if m not in stage1]
    if missing:
        raise ValidationError(f"no stage-1 bundle for: {', '.join(missing)}")
    bundle = build_fusion_bundle(tuple(cfg.data.modalities), cfg.model.hidden_dim,
                                 cfg.model.motion_hidden_dim, cfg.model.dropout,
                                 cfg.training.encoder_lr_multiplier)
    init_parameters(bundle, cfg.seed)
    for m in cfg.data.modalities:
        donor = stage1[m]
        if donor.encoders[m].output_dim != bundle.encoders[m].output_dim:
            raise ValidationError(f"stage-1 {m} encoder width does not match the fusion config")
        for (_, src), (_, dst) in zip(donor.encoders[m].named_parameters("e"),
                                      bundle.encoders[m].named_parameters("e")):
            dst.data = src.data.copy()
    epochs = max_epochs if max_epochs is not None else cfg.epochs_for("fusion")
    state = _fit(bundle, train_samples, valid_samples, cfg, "fusion", epochs,
                 early_stop=early_stop, log_path=log_path)
    return bundle, state
