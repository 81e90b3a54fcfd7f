"""Self-supervised multi-activity temporal sequence alignment."""

from .augment import AugmentConfig, AugmentedView, SpatialConfig, dual_augment
from .data import FeatureSequence, Manifest, PaddedBatch, load_manifest, pad_batch
from .errors import (
    AugmentationError,
    ConfigError,
    ContainerFormatError,
    ManifestError,
    SeqAlignError,
    TrainingError,
)
from .estimator import SequenceAligner
from .losses import LossConfig, LossReport, compute_pair_loss
from .metrics import MetricsConfig, MetricsReport, evaluate_suite, kendall_tau
from .model import EmbeddingSequence, Model, ModelConfig, positional_encoding
from .synthetic import SynthConfig, generate_synthetic
from .trainer import (
    AlignResult,
    TrainConfig,
    TrainLog,
    TrainResult,
    align,
    export_embeddings,
    load_checkpoint,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AlignResult",
    "AugmentConfig",
    "AugmentationError",
    "AugmentedView",
    "ConfigError",
    "ContainerFormatError",
    "EmbeddingSequence",
    "FeatureSequence",
    "LossConfig",
    "LossReport",
    "Manifest",
    "ManifestError",
    "MetricsConfig",
    "MetricsReport",
    "Model",
    "ModelConfig",
    "PaddedBatch",
    "SeqAlignError",
    "SequenceAligner",
    "SpatialConfig",
    "SynthConfig",
    "TrainConfig",
    "TrainLog",
    "TrainResult",
    "TrainingError",
    "align",
    "compute_pair_loss",
    "dual_augment",
    "evaluate_suite",
    "export_embeddings",
    "generate_synthetic",
    "kendall_tau",
    "load_checkpoint",
    "load_manifest",
    "pad_batch",
    "positional_encoding",
    "save_checkpoint",
    "train",
    "__version__",
]
