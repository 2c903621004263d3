"""emikit: staged multimodal regression of emotional mimicry intensity.

Pre-extracted text / audio / vision / motion features go through per-modality
encoders (trained standalone first), then a late-fusion regressor fine-tunes
the stack to predict six continuous emotion intensities. Ships with its own
reverse-mode autodiff tape, AdamW, CCC+MSE loss, KS-based dataset analysis,
a binary feature-file format, and a seeded synthetic-corpus generator.
"""

from .config import DataConfig, ModelConfig, RunConfig, TrainingConfig, load_config, parse_config
from .data import (
    EMOTION_DIMENSIONS,
    EmotionVector,
    Sample,
    SplitPlan,
    expand_split,
    load_dataset,
    prepare_text,
)
from .errors import (
    ConfigError,
    DataError,
    DegenerateMaskError,
    EmikitError,
    FormatError,
    NumericError,
    ShapeError,
    TapeError,
    ValidationError,
)
from .featio import read_feature_file, write_feature_file
from .losses import LossConfig, batch_ccc, combined_loss
from .metrics import MetricsReport, average_pearson, ccc, mse, pearson
from .models import (
    AttentionEncoder,
    FusionRegressor,
    ModelBundle,
    TextMLPEncoder,
    UnimodalHead,
    build_fusion_bundle,
    build_unimodal_bundle,
    init_parameters,
    load_checkpoint,
    save_checkpoint,
)
from .optim import AdamW, ParamGroup, ReduceOnPlateau, build_groups
from .synthetic import SyntheticSpec, generate_synthetic_corpus, load_planted
from .tensor import Tensor, backward, no_grad
from .training import (
    evaluate,
    make_batches,
    modality_drop_mask,
    predict_matrix,
    train_fusion,
    train_unimodal,
)

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "AttentionEncoder",
    "ConfigError",
    "DataConfig",
    "DataError",
    "DegenerateMaskError",
    "EMOTION_DIMENSIONS",
    "EmikitError",
    "EmotionVector",
    "FormatError",
    "FusionRegressor",
    "LossConfig",
    "MetricsReport",
    "ModelBundle",
    "ModelConfig",
    "NumericError",
    "ParamGroup",
    "ReduceOnPlateau",
    "RunConfig",
    "Sample",
    "ShapeError",
    "SplitPlan",
    "SyntheticSpec",
    "TapeError",
    "Tensor",
    "TextMLPEncoder",
    "TrainingConfig",
    "UnimodalHead",
    "ValidationError",
    "average_pearson",
    "backward",
    "batch_ccc",
    "build_fusion_bundle",
    "build_groups",
    "build_unimodal_bundle",
    "ccc",
    "combined_loss",
    "evaluate",
    "expand_split",
    "generate_synthetic_corpus",
    "init_parameters",
    "load_checkpoint",
    "load_config",
    "load_dataset",
    "load_planted",
    "make_batches",
    "modality_drop_mask",
    "mse",
    "no_grad",
    "parse_config",
    "pearson",
    "predict_matrix",
    "prepare_text",
    "read_feature_file",
    "save_checkpoint",
    "train_fusion",
    "train_unimodal",
    "write_feature_file",
]
