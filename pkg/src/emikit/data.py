"""Sample loading, validation, text fallback, and split management.

On-disk corpus layout:

* ``manifest.jsonl`` -- one JSON object per sample with keys
  ``id, split, text, audio, vision, motion, labels``; feature values are
  paths relative to the manifest directory, ``null`` for absent modalities.
  ``labels`` points at the labels CSV for labeled samples, ``null`` for test
  samples.
* feature files in the EMIF binary format (see :mod:`emikit.featio`)
* labels CSV with header ``id,Admiration,...,Joy`` in the canonical
  dimension order.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .featio import read_feature_file

TEXT_DIM = 768
AUDIO_DIM = 1024
VISION_DIM = 768
MOTION_DIM = 23

# Canonical label order; fixes column indexing everywhere.
EMOTION_DIMENSIONS = (
    "Admiration",
    "Amusement",
    "Determination",
    "EmpathicPain",
    "Excitement",
    "Joy",
)
NUM_DIMENSIONS = len(EMOTION_DIMENSIONS)
LABEL_HEADER = ("id",) + EMOTION_DIMENSIONS

MODALITIES = ("text", "audio", "vision", "motion")
SPLITS = ("train", "valid", "test")

MODALITY_INPUT_DIMS = {
    "text": TEXT_DIM,
    "audio": AUDIO_DIM,
    "vision": VISION_DIM,
    "motion": MOTION_DIM,
}


@dataclass
class EmotionVector:
    """One prediction or label across the six mimicry dimensions."""

    admiration: float
    amusement: float
    determination: float
    empathic_pain: float
    excitement: float
    joy: float

    @classmethod
    def from_array(cls, values) -> "EmotionVector":
        arr = np.asarray(values, dtype=np.float64).reshape(-1)
        if arr.shape != (NUM_DIMENSIONS,):
            raise ValidationError(f"emotion vector needs {NUM_DIMENSIONS} values, got {arr.shape}")
        return cls(*(float(v) for v in arr))

    def as_array(self) -> np.ndarray:
        return np.array(
            [
                self.admiration,
                self.amusement,
                self.determination,
                self.empathic_pain,
                self.excitement,
                self.joy,
            ],
            dtype=np.float32,
        )


@dataclass
class Sample:
    """One clip's pre-extracted features plus an optional label vector."""

    id: str
    audio: np.ndarray
    vision: np.ndarray
    text: np.ndarray | None = None
    motion: np.ndarray | None = None
    labels: np.ndarray | None = None

    def modality(self, name: str) -> np.ndarray | None:
        return getattr(self, name)

    @property
    def frame_count(self) -> int:
        # "Frames" means the vision sequence length.
        return self.vision.shape[0]


@dataclass
class ManifestEntry:
    id: str
    split: str
    text: str | None
    audio: str
    vision: str
    motion: str | None
    labels: str | None


@dataclass
class DatasetManifest:
    root: Path
    entries: list[ManifestEntry] = field(default_factory=list)

    def ids(self, split: str | None = None) -> list[str]:
        return [e.id for e in self.entries if split is None or e.split == split]


@dataclass
class SplitPlan:
    train_ids: list[str]
    valid_ids: list[str]
    seed: int
    ratio_label: str = "2:1"


def prepare_text(raw: np.ndarray | None) -> np.ndarray:
    """Missing-text fallback plus L2 normalization.

    Absent or zero-norm vectors map to the zero vector so the model can still
    process the sample; anything else comes out unit-norm.
    """
    if raw is None:
        return np.zeros(TEXT_DIM, dtype=np.float32)
    vec = np.asarray(raw, dtype=np.float32).reshape(-1)
    if vec.shape != (TEXT_DIM,):
        raise ValidationError(f"text vector must have {TEXT_DIM} entries, got {vec.shape}")
    norm = float(np.linalg.norm(vec.astype(np.float64)))
    if norm <= 1e-12:
        return np.zeros(TEXT_DIM, dtype=np.float32)
    return (vec / np.float32(norm)).astype(np.float32)


def write_manifest(path: str | Path, entries: list[ManifestEntry]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            row = {
                "id": e.id,
                "split": e.split,
                "text": e.text,
                "audio": e.audio,
                "vision": e.vision,
                "motion": e.motion,
                "labels": e.labels,
            }
            fh.write(json.dumps(row, sort_keys=False) + "\n")


def read_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read manifest {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path.name}:{lineno}: malformed JSON: {exc}") from exc
            sid = row.get("id")
            split = row.get("split")
            if not sid or not isinstance(sid, str):
                raise ValidationError(f"{path.name}:{lineno}: missing sample id")
            if sid in seen:
                raise ValidationError(f"{path.name}:{lineno}: duplicate id {sid!r}")
            seen.add(sid)
            if split not in SPLITS:
                raise ValidationError(f"{path.name}:{lineno}: bad split {split!r} for id {sid!r}")
            if not row.get("audio") or not row.get("vision"):
                raise ValidationError(f"{path.name}:{lineno}: id {sid!r} lacks audio or vision path")
            entries.append(
                ManifestEntry(
                    id=sid,
                    split=split,
                    text=row.get("text"),
                    audio=row["audio"],
                    vision=row["vision"],
                    motion=row.get("motion"),
                    labels=row.get("labels"),
                )
            )
    return DatasetManifest(root=path.parent, entries=entries)


def write_labels_csv(path: str | Path, rows: list[tuple[str, np.ndarray]], fmt: str = "%.6f") -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LABEL_HEADER)
        for sid, values in rows:
            writer.writerow([sid] + [fmt % v for v in np.asarray(values).reshape(-1)])


def read_labels_csv(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != LABEL_HEADER:
            raise ValidationError(f"{path.name}: labels header must be {','.join(LABEL_HEADER)}")
        out: dict[str, np.ndarray] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(LABEL_HEADER):
                raise ValidationError(f"{path.name}:{lineno}: expected {len(LABEL_HEADER)} columns")
            out[row[0]] = np.array([float(v) for v in row[1:]], dtype=np.float32)
    return out


def _validate_sequence(sid: str, name: str, arr: np.ndarray, dim: int, errors: list[str]) -> None:
    if arr.ndim != 2 or arr.shape[1] != dim:
        errors.append(f"{sid}: {name} must be T x {dim}, got {arr.shape}")
    elif arr.shape[0] < 1:
        errors.append(f"{sid}: {name} must have at least one timestep")
    if not np.isfinite(arr).all():
        errors.append(f"{sid}: {name} contains non-finite values")


def load_dataset(manifest_path: str | Path) -> tuple[DatasetManifest, list[Sample]]:
    """Load and validate every sample referenced by a manifest.

    Aborts with a per-sample error report if any invariant is violated;
    otherwise returns samples in manifest order.
    """
    manifest = read_manifest(manifest_path)
    root = manifest.root
    label_tables: dict[str, dict[str, np.ndarray]] = {}
    samples: list[Sample] = []
    errors: list[str] = []
    for entry in manifest.entries:
        try:
            audio = read_feature_file(root / entry.audio)
            vision = read_feature_file(root / entry.vision)
            text = read_feature_file(root / entry.text) if entry.text else None
            motion = read_feature_file(root / entry.motion) if entry.motion else None
        except Exception as exc:  # noqa: BLE001 - collected into the report
            errors.append(f"{entry.id}: {exc}")
            continue
        _validate_sequence(entry.id, "audio", audio, AUDIO_DIM, errors)
        _validate_sequence(entry.id, "vision", vision, VISION_DIM, errors)
        if motion is not None:
            _validate_sequence(entry.id, "motion", motion, MOTION_DIM, errors)
        if text is not None:
            flat = text.reshape(-1)
            if flat.shape != (TEXT_DIM,):
                errors.append(f"{entry.id}: text must have {TEXT_DIM} entries, got {text.shape}")
                flat = None
            elif not np.isfinite(flat).all():
                errors.append(f"{entry.id}: text contains non-finite values")
            text = flat
        labels = None
        if entry.labels is not None:
            table_key = entry.labels
            if table_key not in label_tables:
                try:
                    label_tables[table_key] = read_labels_csv(root / table_key)
                except (OSError, ValidationError) as exc:
                    errors.append(f"{entry.id}: labels: {exc}")
                    label_tables[table_key] = {}
            labels = label_tables[table_key].get(entry.id)
            if labels is None:
                errors.append(f"{entry.id}: no labels row in {table_key}")
            elif not np.isfinite(labels).all() or labels.min() < 0.0 or labels.max() > 1.0:
                errors.append(f"{entry.id}: labels outside [0, 1]")
        if entry.split in ("train", "valid") and entry.labels is None:
            errors.append(f"{entry.id}: {entry.split} sample without labels")
        samples.append(
            Sample(id=entry.id, audio=audio, vision=vision, text=text, motion=motion, labels=labels)
        )
    if errors:
        report = "\n".join(errors[:50])
        more = f"\n... and {len(errors) - 50} more" if len(errors) > 50 else ""
        raise ValidationError(f"dataset validation failed ({len(errors)} problems):\n{report}{more}")
    return manifest, samples


def missing_text_fraction(samples: list[Sample]) -> float:
    if not samples:
        return 0.0
    return sum(1 for s in samples if s.text is None) / len(samples)


def split_samples(manifest: DatasetManifest, samples: list[Sample]) -> dict[str, list[Sample]]:
    by_id = {s.id: s for s in samples}
    out: dict[str, list[Sample]] = {name: [] for name in SPLITS}
    for entry in manifest.entries:
        out[entry.split].append(by_id[entry.id])
    return out


def make_split_plan(manifest: DatasetManifest, seed: int) -> SplitPlan:
    return SplitPlan(
        train_ids=manifest.ids("train"),
        valid_ids=manifest.ids("valid"),
        seed=seed,
        ratio_label="2:1",
    )


def expand_split(plan: SplitPlan, target_train: int, seed: int) -> SplitPlan:
    """Move a seeded uniform subset of validation ids into training.

    The union of ids is preserved; only membership moves. Deterministic for a
    fixed seed.
    """
    current = len(plan.train_ids)
    deficit = target_train - current
    if deficit < 0:
        raise ValidationError(
            f"target_train {target_train} is below the current train size {current}"
        )
    if deficit > len(plan.valid_ids):
        raise ValidationError(
            f"cannot move {deficit} samples out of a {len(plan.valid_ids)}-sample validation split"
        )
    if deficit == 0:
        return replace(plan, seed=seed, ratio_label="4:1")
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(plan.valid_ids), size=deficit, replace=False)
    picked_set = set(int(i) for i in picked)
    moved = [plan.valid_ids[i] for i in sorted(picked_set)]
    remaining = [sid for i, sid in enumerate(plan.valid_ids) if i not in picked_set]
    return SplitPlan(
        train_ids=list(plan.train_ids) + moved,
        valid_ids=remaining,
        seed=seed,
        ratio_label="4:1",
    )


def apply_split_plan(manifest: DatasetManifest, samples: list[Sample], plan: SplitPlan) -> dict[str, list[Sample]]:
    """Regroup samples by a plan instead of the manifest's native split tags."""
    by_id = {s.id: s for s in samples}
    groups = split_samples(manifest, samples)
    out = {
        "train": [by_id[sid] for sid in plan.train_ids],
        "valid": [by_id[sid] for sid in plan.valid_ids],
        "test": groups["test"],
    }
    return out
