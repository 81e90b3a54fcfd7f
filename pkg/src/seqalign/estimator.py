"""Scikit-learn style front end: fit on raw sequences, transform to
per-frame embeddings.

fit() runs the self-supervised training loop (no labels); transform()
returns one embedding matrix per input sequence. Alignment between two
sequences is exposed as ``align``. All constructor arguments are plain
hyperparameters, so ``get_params``/``set_params``/``clone`` behave as
usual.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .augment import AugmentConfig
from .losses import LossConfig
from .model import ModelConfig
from .trainer import (
    AlignResult,
    TrainConfig,
    align as align_pair,
    export_embeddings,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .validation import as_feature_sequences


class SequenceAligner(TransformerMixin, BaseEstimator):
    """Self-supervised temporal alignment embeddings for sequence lists."""

    def __init__(
        self,
        embed_dim: int = 32,
        mlp_hidden: int = 64,
        projection_dim: int | None = None,
        encoder_layers: int = 4,
        predictor_layers: int = 2,
        attention_heads: int = 4,
        ff_multiplier: int = 2,
        use_batch_norm: bool = True,
        epochs: int = 150,
        batch_size: int = 8,
        base_lr: float = 3e-3,
        temperature: float = 1.0,
        index_error: str = "absolute",
        normalize_by_length: bool = False,
        trim_min_fraction: float = 0.5,
        keep_prob_min: float = 0.5,
        keep_prob_max: float = 1.0,
        min_overlap_frames: int = 8,
        modality: str = "dense",
        embedding_space: str = "u",
        checkpoint_every: int = 0,
        seed: int = 0,
        disable_stop_gradient: bool = False,
        disable_cluster_predictor: bool = False,
        disable_dual_augmentation: bool = False,
        disable_trim: bool = False,
        disable_cross_attention: bool = False,
        disable_self_attention: bool = False,
    ):
        self.embed_dim = embed_dim
        self.mlp_hidden = mlp_hidden
        self.projection_dim = projection_dim
        self.encoder_layers = encoder_layers
        self.predictor_layers = predictor_layers
        self.attention_heads = attention_heads
        self.ff_multiplier = ff_multiplier
        self.use_batch_norm = use_batch_norm
        self.epochs = epochs
        self.batch_size = batch_size
        self.base_lr = base_lr
        self.temperature = temperature
        self.index_error = index_error
        self.normalize_by_length = normalize_by_length
        self.trim_min_fraction = trim_min_fraction
        self.keep_prob_min = keep_prob_min
        self.keep_prob_max = keep_prob_max
        self.min_overlap_frames = min_overlap_frames
        self.modality = modality
        self.embedding_space = embedding_space
        self.checkpoint_every = checkpoint_every
        self.seed = seed
        self.disable_stop_gradient = disable_stop_gradient
        self.disable_cluster_predictor = disable_cluster_predictor
        self.disable_dual_augmentation = disable_dual_augmentation
        self.disable_trim = disable_trim
        self.disable_cross_attention = disable_cross_attention
        self.disable_self_attention = disable_self_attention

    # -- config assembly ----------------------------------------------------

    def _model_config(self, input_dim: int) -> ModelConfig:
        return ModelConfig(
            input_dim=input_dim,
            embed_dim=self.embed_dim,
            mlp_hidden=self.mlp_hidden,
            projection_dim=self.projection_dim,
            encoder_layers=self.encoder_layers,
            predictor_layers=self.predictor_layers,
            attention_heads=self.attention_heads,
            ff_multiplier=self.ff_multiplier,
            use_batch_norm=self.use_batch_norm,
        )

    def _augment_config(self) -> AugmentConfig:
        return AugmentConfig(
            trim_min_fraction=self.trim_min_fraction,
            keep_prob_min=self.keep_prob_min,
            keep_prob_max=self.keep_prob_max,
            min_overlap_frames=self.min_overlap_frames,
            modality=self.modality,
        )

    def _loss_config(self) -> LossConfig:
        return LossConfig(
            index_error=self.index_error,
            temperature=self.temperature,
            normalize_by_length=self.normalize_by_length,
        )

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            base_lr=self.base_lr,
            seed=self.seed,
            checkpoint_every=self.checkpoint_every,
            embedding_space=self.embedding_space,
            disable_stop_gradient=self.disable_stop_gradient,
            disable_cluster_predictor=self.disable_cluster_predictor,
            disable_dual_augmentation=self.disable_dual_augmentation,
            disable_trim=self.disable_trim,
            disable_cross_attention=self.disable_cross_attention,
            disable_self_attention=self.disable_self_attention,
        )

    # -- estimator API --------------------------------------------------------

    def fit(self, X, y=None):
        sequences = as_feature_sequences(X)
        self.n_features_in_ = sequences[0].feature_dim
        result = train(
            sequences,
            self._model_config(self.n_features_in_),
            self._augment_config(),
            self._loss_config(),
            self._train_config(),
        )
        self.model_ = result.model
        self.log_ = result.log
        return self

    def transform(self, X) -> list[np.ndarray]:
        check_is_fitted(self, "model_")
        sequences = as_feature_sequences(X, expected_dim=self.n_features_in_)
        embeddings = export_embeddings(self.model_, sequences, space=self.embedding_space)
        return [embeddings[s.sequence_id] for s in sequences]

    def align(self, a, b) -> AlignResult:
        check_is_fitted(self, "model_")
        seq_a, seq_b = as_feature_sequences([a, b], expected_dim=self.n_features_in_)
        return align_pair(
            self.model_,
            seq_a.features,
            seq_b.features,
            space=self.embedding_space,
            temperature=self.temperature,
        )

    # -- persistence ----------------------------------------------------------

    def save(self, path) -> None:
        check_is_fitted(self, "model_")
        save_checkpoint(self.model_, path, embedding_space=self.embedding_space)
        meta_path = Path(str(path) + ".meta.json")
        meta = json.loads(meta_path.read_text())
        meta["estimator_params"] = self.get_params()
        meta["n_features_in"] = int(self.n_features_in_)
        meta_path.write_text(json.dumps(meta, indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "SequenceAligner":
        model, meta = load_checkpoint(path)
        if "estimator_params" not in meta:
            raise ValueError(f"{path} was not saved by {cls.__name__}.save")
        est = cls(**meta["estimator_params"])
        est.model_ = model
        est.n_features_in_ = int(meta["n_features_in"])
        return est
