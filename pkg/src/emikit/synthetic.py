"""Seeded synthetic corpora with planted, certifiable structure.

Each sample owns a latent factor vector z. Every modality stores (a possibly
rotated slice of) z embedded into its native feature space through a fixed
orthonormal matrix, plus clip-level and frame-level Gaussian noise; labels are
an affine function of z clipped to [0, 1]. The generator writes the manifest,
feature files and labels exactly as the loader expects, plus a
``planted.json`` recording the embedding matrices, carriers and label map so
an independent ridge fit can certify how learnable each modality is.

Noise has two parts on sequence modalities: a per-clip offset shared by all
frames (which mean-pooling cannot average away, so the effective
signal-to-noise ratio stays at the configured value regardless of sequence
length) and per-frame jitter.

Setting ``interaction_mix`` > 0 plants a two-modality interaction: text
carries z1 + mix * z2, audio carries z2 alone, and labels depend only on z1 —
so no single modality can do better than partial recovery, while text and
audio jointly determine the labels exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import (
    EMOTION_DIMENSIONS,
    MODALITY_INPUT_DIMS,
    NUM_DIMENSIONS,
    ManifestEntry,
    write_labels_csv,
    write_manifest,
)
from .errors import ConfigError
from .featio import write_feature_file

TEXT_ANCHOR_NORM = 4.0


@dataclass(frozen=True)
class SyntheticSpec:
    n_samples: int = 128
    latent_dim: int = 6
    text_snr: float = 4.0
    audio_snr: float = 4.0
    vision_snr: float = 1.0
    motion_snr: float = 0.5
    include_text: bool = True
    include_motion: bool = True
    missing_text_fraction: float = 0.0
    seq_median: float = 65.0
    seq_sigma: float = 0.6
    label_scale: float = 0.12
    interaction_mix: float = 0.0
    valid_fraction: float = 1.0 / 3.0
    test_fraction: float = 0.0
    valid_label_scale: float = 1.0  # < 1 plants a train/valid label shift

    def __post_init__(self):
        if self.n_samples < 2:
            raise ConfigError(f"synthetic corpus needs >= 2 samples, got {self.n_samples}")
        if self.latent_dim < 1:
            raise ConfigError("latent_dim must be >= 1")
        if self.interaction_mix < 0:
            raise ConfigError("interaction_mix must be >= 0")
        if self.interaction_mix > 0 and self.latent_dim % 2:
            raise ConfigError("interaction corpora need an even latent_dim")
        if not 0.0 <= self.missing_text_fraction <= 1.0:
            raise ConfigError("missing_text_fraction must be in [0, 1]")
        if self.valid_fraction < 0 or self.test_fraction < 0 \
                or self.valid_fraction + self.test_fraction >= 1.0:
            raise ConfigError("valid_fraction + test_fraction must leave room for training")

    def snr(self, modality: str) -> float:
        return getattr(self, f"{modality}_snr")


def _stream(seed: int, name: str) -> np.random.Generator:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF] + words))


def _orthonormal(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    m = rng.standard_normal((rows, max(cols, 1)))
    q, r = np.linalg.qr(m)
    # Fix the sign convention so the basis is a deterministic function of m.
    q = q * np.sign(np.diag(r))[np.newaxis, :]
    return q[:, :cols]


def _carriers(spec: SyntheticSpec) -> dict[str, np.ndarray]:
    """Per-modality carrier matrix mapping the latent z to that modality's signal."""
    k = spec.latent_dim
    if spec.interaction_mix <= 0:
        eye = np.eye(k)
        return {m: eye for m in ("text", "audio", "vision", "motion")}
    h = k // 2
    c = spec.interaction_mix
    gain = 1.0 / math.sqrt(1.0 + c * c)  # keep per-coordinate variance at 1
    text = np.concatenate([np.eye(h) * gain, np.eye(h) * (c * gain)], axis=1)
    audio = np.concatenate([np.zeros((h, h)), np.eye(h)], axis=1)
    silent = np.zeros((h, k))
    return {"text": text, "audio": audio, "vision": silent, "motion": silent}


def _label_basis(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """Rows map the label-relevant latent block to one emotion dimension each."""
    k_label = spec.latent_dim // 2 if spec.interaction_mix > 0 else spec.latent_dim
    a = rng.standard_normal((NUM_DIMENSIONS, k_label))
    return a / np.linalg.norm(a, axis=1, keepdims=True)


def _noise_scale(snr: float, dim: int, k: int) -> float:
    """Per-coordinate noise std giving ‖signal‖/‖noise‖ = snr; 0 disables signal."""
    if snr == 0.0 or math.isinf(snr):
        base = 1.0 if snr == 0.0 else 0.0
    else:
        base = 1.0 / snr
    return base * math.sqrt(max(k, 1) / dim)


def generate_synthetic_corpus(spec: SyntheticSpec, seed: int, out_dir: str | Path) -> Path:
    """Write a complete corpus under out_dir; returns the manifest path.

    Byte-identical for identical (spec, seed).
    """
    out = Path(out_dir)
    feat_dir = out / "features"
    feat_dir.mkdir(parents=True, exist_ok=True)

    k = spec.latent_dim
    carriers = _carriers(spec)
    basis = _label_basis(spec, _stream(seed, "label-basis"))
    modalities = ["text", "audio", "vision", "motion"]
    if not spec.include_text:
        modalities.remove("text")
    if not spec.include_motion:
        modalities.remove("motion")
    embed = {
        m: _orthonormal(MODALITY_INPUT_DIMS[m], carriers[m].shape[0], _stream(seed, f"embed/{m}"))
        for m in modalities
    }
    anchor = None
    if "text" in modalities:
        direction = _orthonormal(MODALITY_INPUT_DIMS["text"], 1, _stream(seed, "anchor"))[:, 0]
        anchor = (TEXT_ANCHOR_NORM * direction).astype(np.float64)

    n = spec.n_samples
    ids = [f"synth{i:05d}" for i in range(n)]
    z = _stream(seed, "latent").standard_normal((n, k))
    k_label = basis.shape[1]
    z_label = z[:, :k_label]
    raw_labels = 0.5 + spec.label_scale * (z_label @ basis.T)

    lengths_rng = _stream(seed, "lengths")
    lengths = np.maximum(
        1, np.rint(lengths_rng.lognormal(math.log(spec.seq_median), spec.seq_sigma, size=n))
    ).astype(int)

    n_valid = int(round(n * spec.valid_fraction))
    n_test = int(round(n * spec.test_fraction))
    order = _stream(seed, "split").permutation(n)
    split_of = {}
    for pos, idx in enumerate(order):
        if pos < n - n_valid - n_test:
            split_of[ids[idx]] = "train"
        elif pos < n - n_test:
            split_of[ids[idx]] = "valid"
        else:
            split_of[ids[idx]] = "test"

    missing_text: set[str] = set()
    if spec.include_text and spec.missing_text_fraction > 0:
        n_missing = int(round(n * spec.missing_text_fraction))
        picked = _stream(seed, "missing-text").choice(n, size=n_missing, replace=False)
        missing_text = {ids[int(i)] for i in picked}

    labels = raw_labels.copy()
    for i, sid in enumerate(ids):
        if split_of[sid] == "valid" and spec.valid_label_scale != 1.0:
            labels[i] = 0.5 + spec.valid_label_scale * (raw_labels[i] - 0.5)
    labels = np.clip(labels, 0.0, 1.0)

    noise = {m: _stream(seed, f"noise/{m}") for m in modalities}
    entries: list[ManifestEntry] = []
    label_rows: list[tuple[str, np.ndarray]] = []
    for i, sid in enumerate(ids):
        t_len = int(lengths[i])
        paths: dict[str, str | None] = {m: None for m in ("text", "audio", "vision", "motion")}
        for m in modalities:
            if m == "text" and sid in missing_text:
                continue
            dim = MODALITY_INPUT_DIMS[m]
            sig_dim = carriers[m].shape[0]
            sigma = _noise_scale(spec.snr(m), dim, sig_dim)
            signal = embed[m] @ (carriers[m] @ z[i]) if spec.snr(m) != 0.0 else np.zeros(dim)
            if m == "text":
                vec = anchor + signal + sigma * noise[m].standard_normal(dim)
                arr = vec.astype(np.float32)
            else:
                clip_noise = sigma * noise[m].standard_normal(dim)
                frame_noise = sigma * noise[m].standard_normal((t_len, dim))
                arr = (signal + clip_noise + frame_noise).astype(np.float32)
            rel = f"features/{sid}.{m}.emif"
            write_feature_file(out / rel, arr)
            paths[m] = rel
        is_test = split_of[sid] == "test"
        entries.append(
            ManifestEntry(
                id=sid,
                split=split_of[sid],
                text=paths["text"],
                audio=paths["audio"],
                vision=paths["vision"],
                motion=paths["motion"],
                labels=None if is_test else "labels.csv",
            )
        )
        if not is_test:
            label_rows.append((sid, labels[i]))

    write_labels_csv(out / "labels.csv", label_rows)
    manifest_path = out / "manifest.jsonl"
    write_manifest(manifest_path, entries)
    _write_planted(out / "planted.json", spec, seed, basis, carriers, embed, anchor, modalities)
    return manifest_path


def _write_planted(path: Path, spec: SyntheticSpec, seed: int, basis: np.ndarray,
                   carriers: dict[str, np.ndarray], embed: dict[str, np.ndarray],
                   anchor: np.ndarray | None, modalities: list[str]) -> None:
    """Record everything an oracle needs to reconstruct or certify the plant.

    For signal-carrying modalities in a non-interaction corpus the per-modality
    affine map satisfies labels == clip(intercept + weight @ pooled_raw).
    """
    doc: dict = {
        "format": 1,
        "seed": seed,
        "spec": asdict(spec),
        "dimensions": list(EMOTION_DIMENSIONS),
        "label_basis": basis.tolist(),
        "label_scale": spec.label_scale,
        "text_anchor": anchor.tolist() if anchor is not None else None,
        "carriers": {m: carriers[m].tolist() for m in modalities},
        "embeddings": {m: embed[m].tolist() for m in modalities},
        "modality_maps": {},
    }
    if spec.interaction_mix <= 0:
        for m in modalities:
            if spec.snr(m) == 0.0:
                continue
            weight = spec.label_scale * (basis @ embed[m].T)  # 6 x D_m
            intercept = np.full(NUM_DIMENSIONS, 0.5)
            if m == "text" and anchor is not None:
                intercept = intercept - weight @ anchor
            doc["modality_maps"][m] = {
                "weight": weight.tolist(),
                "intercept": intercept.tolist(),
            }
    else:
        c = spec.interaction_mix
        gain = 1.0 / math.sqrt(1.0 + c * c)
        # z1 = u_text / gain - c * u_audio, with u_m = P_m^T (pooled - anchor_m)
        w_text = (spec.label_scale / gain) * (basis @ embed["text"].T)
        w_audio = -c * spec.label_scale * (basis @ embed["audio"].T)
        intercept = np.full(NUM_DIMENSIONS, 0.5) - w_text @ anchor
        doc["pair_map"] = {
            "modalities": ["text", "audio"],
            "weights": {"text": w_text.tolist(), "audio": w_audio.tolist()},
            "intercept": intercept.tolist(),
        }
    path.write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")


def load_planted(corpus_dir: str | Path) -> dict:
    return json.loads((Path(corpus_dir) / "planted.json").read_text(encoding="utf-8"))
