"""Unimodal encoders, temporary regression heads, and the fusion regressor.

Text is a single sentence-level vector and goes through an MLP; audio, vision
and motion are variable-length sequences pooled by masked attention (a learned
linear score per timestep, softmax restricted to valid frames) before
projection. The fusion regressor concatenates the modality embeddings into
fixed slots; a dropped or missing modality contributes a zero slot so the
input width never depends on per-sample availability.
"""

from __future__ import annotations

import hashlib
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import featio, tensor as T
from .data import MODALITY_INPUT_DIMS, NUM_DIMENSIONS, Sample, prepare_text
from .errors import FormatError, ShapeError, ValidationError
from .tensor import Tensor

HIDDEN_DIM = 384
MOTION_HIDDEN_DIM = 128
LAYER_NORM_EPS = 1e-5

STAGE_UNIMODAL = "unimodal"
STAGE_FUSION = "fusion"


class Linear:
    def __init__(self, d_in: int, d_out: int, bias: bool = True):
        self.weight = Tensor(np.zeros((d_in, d_out), dtype=np.float32), requires_grad=True)
        self.bias = Tensor(np.zeros(d_out, dtype=np.float32), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = T.matmul(x, self.weight)
        if self.bias is not None:
            out = T.add(out, self.bias)
        return out

    def named_parameters(self, prefix: str):
        yield f"{prefix}.weight", self.weight
        if self.bias is not None:
            yield f"{prefix}.bias", self.bias


class LayerNorm:
    def __init__(self, dim: int, eps: float = LAYER_NORM_EPS):
        self.gain = Tensor(np.ones(dim, dtype=np.float32), requires_grad=True)
        self.bias = Tensor(np.zeros(dim, dtype=np.float32), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain, self.bias, self.eps)

    def named_parameters(self, prefix: str):
        yield f"{prefix}.gain", self.gain
        yield f"{prefix}.bias", self.bias


class TextMLPEncoder:
    """LayerNorm -> linear to the hidden space -> GELU -> dropout -> LayerNorm."""

    def __init__(self, input_dim: int, hidden_dim: int, dropout: float = 0.45):
        self.input_dim = input_dim
        self.output_dim = hidden_dim
        self.dropout = dropout
        self.norm_in = LayerNorm(input_dim)
        self.proj = Linear(input_dim, hidden_dim)
        self.norm_out = LayerNorm(hidden_dim)

    def forward(self, vec: np.ndarray, training: bool = False, rng=None) -> Tensor:
        x = T.as_row(vec)
        if x.shape[1] != self.input_dim:
            raise ShapeError(f"text encoder expects {self.input_dim} features, got {x.shape[1]}")
        h = self.norm_in(x)
        h = self.proj(h)
        h = T.gelu(h)
        h = T.dropout(h, self.dropout, training, rng)
        return self.norm_out(h)

    def named_parameters(self, prefix: str):
        yield from self.norm_in.named_parameters(f"{prefix}.norm_in")
        yield from self.proj.named_parameters(f"{prefix}.proj")
        yield from self.norm_out.named_parameters(f"{prefix}.norm_out")


class AttentionEncoder:
    """Masked attention pooling over time, then a layer-normalised projection.

    The pooled vector is a convex combination of the unmasked timestep
    features, so masked frames provably cannot influence the output.
    """

    def __init__(self, input_dim: int, hidden_dim: int, dropout: float = 0.45):
        self.input_dim = input_dim
        self.output_dim = hidden_dim
        self.dropout = dropout
        self.score = Linear(input_dim, 1, bias=False)
        self.norm = LayerNorm(input_dim)
        self.proj = Linear(input_dim, hidden_dim)

    def forward(self, seq: np.ndarray, mask: np.ndarray | None = None,
                training: bool = False, rng=None) -> Tensor:
        frames = Tensor(seq)
        if frames.ndim != 2 or frames.shape[1] != self.input_dim:
            raise ShapeError(
                f"sequence encoder expects T x {self.input_dim}, got {frames.shape}"
            )
        t_len = frames.shape[0]
        if mask is None:
            mask = np.ones(t_len, dtype=bool)
        scores = self.score(frames).reshape(t_len)
        weights = T.masked_softmax(scores, mask)
        pooled = T.matmul(weights.reshape(1, t_len), frames)
        h = self.norm(pooled)
        h = self.proj(h)
        h = T.gelu(h)
        return T.dropout(h, self.dropout, training, rng)

    def named_parameters(self, prefix: str):
        yield from self.score.named_parameters(f"{prefix}.score")
        yield from self.norm.named_parameters(f"{prefix}.norm")
        yield from self.proj.named_parameters(f"{prefix}.proj")


class UnimodalHead:
    """Temporary linear head used only during stage-1 training."""

    def __init__(self, hidden_dim: int, out_dim: int = NUM_DIMENSIONS):
        self.out = Linear(hidden_dim, out_dim)

    def __call__(self, emb: Tensor) -> Tensor:
        return self.out(emb)

    def named_parameters(self, prefix: str):
        yield from self.out.named_parameters(f"{prefix}.out")


class FusionRegressor:
    """LayerNorm -> linear -> GELU -> dropout -> linear over concatenated slots.

    Output is linear (no squashing); clamping predictions to [0, 1] is a
    separate evaluation-time step.
    """

    def __init__(self, input_dim: int, hidden_dim: int = HIDDEN_DIM, dropout: float = 0.45):
        self.input_dim = input_dim
        self.norm = LayerNorm(input_dim)
        self.proj = Linear(input_dim, hidden_dim)
        self.out = Linear(hidden_dim, NUM_DIMENSIONS)
        self.dropout = dropout

    def __call__(self, fused: Tensor, training: bool = False, rng=None) -> Tensor:
        h = self.norm(fused)
        h = self.proj(h)
        h = T.gelu(h)
        h = T.dropout(h, self.dropout, training, rng)
        return self.out(h)

    def named_parameters(self, prefix: str):
        yield from self.norm.named_parameters(f"{prefix}.norm")
        yield from self.proj.named_parameters(f"{prefix}.proj")
        yield from self.out.named_parameters(f"{prefix}.out")


def make_encoder(modality: str, hidden_dim: int = HIDDEN_DIM,
                 motion_hidden_dim: int = MOTION_HIDDEN_DIM, dropout: float = 0.45,
                 input_dim: int | None = None):
    d_in = MODALITY_INPUT_DIMS[modality] if input_dim is None else input_dim
    if modality == "text":
        return TextMLPEncoder(d_in, hidden_dim, dropout)
    width = motion_hidden_dim if modality == "motion" else hidden_dim
    return AttentionEncoder(d_in, width, dropout)


@dataclass
class ModelBundle:
    """Encoders plus heads or fusion regressor, with parameter-group metadata."""

    modalities: tuple[str, ...]
    encoders: dict
    heads: dict = field(default_factory=dict)
    fusion: FusionRegressor | None = None
    stage: str = STAGE_UNIMODAL
    encoder_lr_multiplier: float = 0.05

    def slot_width(self, modality: str) -> int:
        return self.encoders[modality].output_dim

    def fusion_input_dim(self) -> int:
        # Pure function of the configured modality set, never of availability.
        return sum(self.slot_width(m) for m in self.modalities)

    def named_parameters(self):
        for m in self.modalities:
            yield from self.encoders[m].named_parameters(f"encoder.{m}")
        for m, head in sorted(self.heads.items()):
            yield from head.named_parameters(f"head.{m}")
        if self.fusion is not None:
            yield from self.fusion.named_parameters("fusion")

    def encoder_parameters(self):
        for m in self.modalities:
            yield from self.encoders[m].named_parameters(f"encoder.{m}")

    def fusion_parameters(self):
        if self.fusion is not None:
            yield from self.fusion.named_parameters("fusion")


def build_unimodal_bundle(modality: str, hidden_dim: int = HIDDEN_DIM,
                          motion_hidden_dim: int = MOTION_HIDDEN_DIM,
                          dropout: float = 0.45) -> ModelBundle:
    encoder = make_encoder(modality, hidden_dim, motion_hidden_dim, dropout)
    return ModelBundle(
        modalities=(modality,),
        encoders={modality: encoder},
        heads={modality: UnimodalHead(encoder.output_dim)},
        stage=STAGE_UNIMODAL,
    )


def build_fusion_bundle(modalities: tuple[str, ...], hidden_dim: int = HIDDEN_DIM,
                        motion_hidden_dim: int = MOTION_HIDDEN_DIM, dropout: float = 0.45,
                        encoder_lr_multiplier: float = 0.05) -> ModelBundle:
    encoders = {m: make_encoder(m, hidden_dim, motion_hidden_dim, dropout) for m in modalities}
    bundle = ModelBundle(
        modalities=tuple(modalities),
        encoders=encoders,
        fusion=None,
        stage=STAGE_FUSION,
        encoder_lr_multiplier=encoder_lr_multiplier,
    )
    bundle.fusion = FusionRegressor(bundle.fusion_input_dim(), hidden_dim, dropout)
    return bundle


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------


def _path_rng(seed: int, path: str) -> np.random.Generator:
    digest = hashlib.sha256(path.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF] + words))


def init_parameters(bundle: ModelBundle, seed: int) -> None:
    """Fan-in uniform linear weights, zero biases, identity layer norms.

    Each parameter draws from its own (seed, path)-keyed stream, so adding or
    removing one module never perturbs another's initial values.
    """
    for path, param in bundle.named_parameters():
        leaf = path.rsplit(".", 1)[-1]
        if leaf == "weight":
            fan_in = param.shape[0]
            bound = 1.0 / np.sqrt(fan_in)
            rng = _path_rng(seed, path)
            param.data = rng.uniform(-bound, bound, size=param.shape).astype(np.float32)
        elif leaf == "gain":
            param.data = np.ones(param.shape, dtype=np.float32)
        else:
            param.data = np.zeros(param.shape, dtype=np.float32)
        param.grad = None


# ---------------------------------------------------------------------------
# forward paths
# ---------------------------------------------------------------------------


def encode_modality(bundle: ModelBundle, modality: str, sample: Sample,
                    training: bool = False, rng=None) -> Tensor:
    encoder = bundle.encoders[modality]
    if modality == "text":
        return encoder.forward(prepare_text(sample.text), training=training, rng=rng)
    seq = sample.modality(modality)
    if seq is None:
        raise ValidationError(f"sample {sample.id!r} has no {modality} features")
    return encoder.forward(seq, training=training, rng=rng)


def forward_unimodal(bundle: ModelBundle, modality: str, sample: Sample,
                     training: bool = False, rng=None) -> Tensor:
    emb = encode_modality(bundle, modality, sample, training=training, rng=rng)
    return bundle.heads[modality](emb)


def predict_unimodal(bundle: ModelBundle, modality: str, sample: Sample):
    from .data import EmotionVector

    with T.no_grad():
        out = forward_unimodal(bundle, modality, sample, training=False)
    return EmotionVector.from_array(out.data.reshape(-1))


def forward_fusion(bundle: ModelBundle, sample: Sample,
                   drop_mask: dict[str, bool] | None = None,
                   training: bool = False, rng=None) -> Tensor:
    if bundle.fusion is None:
        raise ValidationError("bundle has no fusion regressor (stage-1 checkpoint?)")
    drop_mask = drop_mask or {}
    if all(drop_mask.get(m, False) for m in bundle.modalities):
        raise ValidationError("modality drop mask removed every modality")
    slots = []
    for m in bundle.modalities:
        dropped = drop_mask.get(m, False)
        available = m == "text" or sample.modality(m) is not None
        if dropped or not available:
            slots.append(T.zeros((1, bundle.slot_width(m))))
        else:
            slots.append(encode_modality(bundle, m, sample, training=training, rng=rng))
    fused = T.concat(slots, axis=-1)
    return bundle.fusion(fused, training=training, rng=rng)


def predict_fusion(bundle: ModelBundle, sample: Sample,
                   drop_mask: dict[str, bool] | None = None):
    from .data import EmotionVector

    with T.no_grad():
        out = forward_fusion(bundle, sample, drop_mask=drop_mask, training=False)
    return EmotionVector.from_array(out.data.reshape(-1))


# ---------------------------------------------------------------------------
# parameter snapshots and checkpoints
# ---------------------------------------------------------------------------


def snapshot_parameters(bundle: ModelBundle) -> dict[str, np.ndarray]:
    return {path: param.data.copy() for path, param in bundle.named_parameters()}


def restore_parameters(bundle: ModelBundle, snapshot: dict[str, np.ndarray]) -> None:
    for path, param in bundle.named_parameters():
        param.data = snapshot[path].copy()
        param.grad = None


CHECKPOINT_VERSION = 1
# Fixed member timestamp keeps checkpoint archives byte-identical per seed.
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


def save_checkpoint(path: str | Path, bundle: ModelBundle, config_hash: str = "",
                    rng_state: dict | None = None, meta: dict | None = None) -> None:
    index = {
        "format_version": CHECKPOINT_VERSION,
        "stage": bundle.stage,
        "modalities": list(bundle.modalities),
        "encoder_lr_multiplier": bundle.encoder_lr_multiplier,
        "hidden_dims": {m: bundle.encoders[m].output_dim for m in bundle.modalities},
        "input_dims": {m: bundle.encoders[m].input_dim for m in bundle.modalities},
        "dropout": next(iter(bundle.encoders.values())).dropout,
        "has_heads": sorted(bundle.heads.keys()),
        "has_fusion": bundle.fusion is not None,
        "fusion_hidden_dim": (
            int(bundle.fusion.proj.weight.shape[1]) if bundle.fusion is not None else None
        ),
        "config_hash": config_hash,
        "rng_state": rng_state or {},
        "meta": meta or {},
        "tensors": {},
    }
    blobs = []
    for name, param in bundle.named_parameters():
        member = f"tensors/{name}.emif"
        index["tensors"][name] = {"member": member, "shape": list(param.shape)}
        blobs.append((member, _emif_bytes(param.data)))
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        info = zipfile.ZipInfo("index.json", date_time=_ZIP_EPOCH)
        zf.writestr(info, json.dumps(index, sort_keys=True, indent=1))
        for member, blob in blobs:
            info = zipfile.ZipInfo(member, date_time=_ZIP_EPOCH)
            zf.writestr(info, blob)


def _emif_bytes(arr: np.ndarray) -> bytes:
    import io as _io
    import struct

    arr = np.ascontiguousarray(arr, dtype=np.float32)
    shape = arr.shape if arr.ndim else (1,)
    buf = _io.BytesIO()
    buf.write(featio.MAGIC)
    buf.write(struct.pack("<BBBB", featio.VERSION, featio.DTYPE_F32, len(shape), 0))
    buf.write(struct.pack(f"<{len(shape)}I", *shape))
    buf.write(arr.tobytes(order="C"))
    return buf.getvalue()


def load_checkpoint(path: str | Path) -> tuple[ModelBundle, dict]:
    path = Path(path)
    try:
        with zipfile.ZipFile(path) as zf:
            index = json.loads(zf.read("index.json"))
            if index.get("format_version") != CHECKPOINT_VERSION:
                raise FormatError(f"{path.name}: unsupported checkpoint version")
            modalities = tuple(index["modalities"])
            hidden = index["hidden_dims"]
            dropout = float(index.get("dropout", 0.45))
            encoders = {}
            for m in modalities:
                encoders[m] = make_encoder(
                    m,
                    hidden_dim=hidden[m] if m != "motion" else HIDDEN_DIM,
                    motion_hidden_dim=hidden[m] if m == "motion" else MOTION_HIDDEN_DIM,
                    dropout=dropout,
                    input_dim=index["input_dims"][m],
                )
            bundle = ModelBundle(
                modalities=modalities,
                encoders=encoders,
                heads={m: UnimodalHead(encoders[m].output_dim) for m in index.get("has_heads", [])},
                stage=index["stage"],
                encoder_lr_multiplier=float(index.get("encoder_lr_multiplier", 0.05)),
            )
            if index.get("has_fusion"):
                fusion_hidden = int(index.get("fusion_hidden_dim") or HIDDEN_DIM)
                bundle.fusion = FusionRegressor(bundle.fusion_input_dim(), fusion_hidden, dropout)
            for name, param in bundle.named_parameters():
                entry = index["tensors"].get(name)
                if entry is None:
                    raise FormatError(f"{path.name}: checkpoint missing tensor {name!r}")
                blob = zf.read(entry["member"])
                arr = _emif_from_bytes(path.name, name, blob)
                if list(arr.shape) != list(param.shape):
                    raise FormatError(
                        f"{path.name}: tensor {name!r} shape {arr.shape} != expected {param.shape}"
                    )
                param.data = arr.astype(np.float32)
            return bundle, index
    except (KeyError, zipfile.BadZipFile, OSError) as exc:
        raise FormatError(f"{path.name}: unreadable checkpoint archive: {exc}") from exc


def _emif_from_bytes(archive: str, name: str, blob: bytes) -> np.ndarray:
    import struct

    if blob[:4] != featio.MAGIC:
        raise FormatError(f"{archive}: tensor {name!r}: bad magic")
    version, dtype, rank, _ = struct.unpack("<BBBB", blob[4:8])
    if version != featio.VERSION or dtype != featio.DTYPE_F32:
        raise FormatError(f"{archive}: tensor {name!r}: unsupported encoding")
    dims = struct.unpack(f"<{rank}I", blob[8 : 8 + 4 * rank])
    payload = blob[8 + 4 * rank :]
    count = int(np.prod(dims))
    if len(payload) != 4 * count:
        raise FormatError(f"{archive}: tensor {name!r}: truncated payload")
    return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
