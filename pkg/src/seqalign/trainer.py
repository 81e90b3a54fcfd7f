"""Self-supervised training loop, alignment inference, and embedding export.

Training never touches labels: the supervision signal is the pair of
index maps produced by dual augmentation. Batches are processed item by
item on separate graphs (the per-item loss is scaled by 1/batch before
backward, so gradients accumulate to the batch mean in a fixed order);
one Adam step follows per batch. All randomness flows through seed
streams derived from (seed, purpose, epoch, item), making runs with the
same config bit-reproducible single-threaded.

Each ablation flag rewires exactly one mechanism:

- disable_stop_gradient: clustering targets keep their gradient path.
- disable_cluster_predictor: matching-only objective (no cluster term).
- disable_dual_augmentation: one augmented view against the raw sequence,
  matching loss in one direction only.
- disable_trim: frame dropping still applies, trimming does not.
- disable_cross_attention / disable_self_attention: the encoder's blocks
  all become self- (respectively cross-) attention.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .augment import (
    AugmentConfig,
    VIEW_DOUBLE_PRIME,
    augment_view,
    dual_augment,
    identity_view,
)
from .data import FeatureSequence
from .errors import ConfigError, TrainingError
from .losses import LossConfig, LossReport, compute_pair_loss
from .model import Model, ModelConfig
from .optim import adam_step, lr_schedule
from .tensor import backward, scale
from .metrics import unit_normalize


@dataclass
class TrainConfig:
    epochs: int = 150
    batch_size: int = 8
    base_lr: float = 3e-3
    seed: int = 0
    checkpoint_every: int = 50
    embedding_space: str = "u"
    disable_stop_gradient: bool = False
    disable_cluster_predictor: bool = False
    disable_dual_augmentation: bool = False
    disable_trim: bool = False
    disable_cross_attention: bool = False
    disable_self_attention: bool = False

    def validate(self) -> None:
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.base_lr <= 0:
            raise ConfigError("base_lr must be > 0")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0")
        if self.embedding_space not in ("u", "z"):
            raise ConfigError("embedding_space must be 'u' or 'z'")
        if self.disable_cross_attention and self.disable_self_attention:
            raise ConfigError("cannot disable both self- and cross-attention")

    def attention_mode(self) -> str:
        if self.disable_cross_attention:
            return "self_only"
        if self.disable_self_attention:
            return "cross_only"
        return "alternate"


@dataclass
class StepRecord:
    step: int
    epoch: int
    lr: float
    l_forward: float
    l_backward: float
    l_m: float
    l_c: float
    multiplier: float
    total: float


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    mean_total: float
    mean_l_m: float
    mean_l_c: float
    mean_multiplier: float


@dataclass
class TrainLog:
    steps: list[StepRecord] = field(default_factory=list)
    epochs: list[EpochRecord] = field(default_factory=list)
    wall_clock_s: float = 0.0

    def write_csv(self, steps_path, epochs_path) -> None:
        with Path(steps_path).open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(
                ["step", "epoch", "lr", "l_forward", "l_backward", "l_m", "l_c",
                 "multiplier", "total"]
            )
            for r in self.steps:
                writer.writerow(
                    [r.step, r.epoch, f"{r.lr:.8g}", f"{r.l_forward:.8g}",
                     f"{r.l_backward:.8g}", f"{r.l_m:.8g}", f"{r.l_c:.8g}",
                     f"{r.multiplier:.8g}", f"{r.total:.8g}"]
                )
        with Path(epochs_path).open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(
                ["epoch", "lr", "mean_total", "mean_l_m", "mean_l_c", "mean_multiplier"]
            )
            for r in self.epochs:
                writer.writerow(
                    [r.epoch, f"{r.lr:.8g}", f"{r.mean_total:.8g}", f"{r.mean_l_m:.8g}",
                     f"{r.mean_l_c:.8g}", f"{r.mean_multiplier:.8g}"]
                )


@dataclass
class TrainResult:
    model: Model
    log: TrainLog
    checkpoint_path: Path | None = None


def _mean(values) -> float:
    finite = [v for v in values if math.isfinite(v)]
    return float(np.mean(finite)) if finite else math.nan


def _item_rng(seed: int, epoch: int, item: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, 2, epoch, item]))


def _item_loss(
    model: Model,
    seq: FeatureSequence,
    aug_cfg: AugmentConfig,
    loss_cfg: LossConfig,
    train_cfg: TrainConfig,
    rng: np.random.Generator,
):
    if train_cfg.disable_dual_augmentation:
        view_a = augment_view(seq, aug_cfg, rng)
        view_b = identity_view(seq, VIEW_DOUBLE_PRIME)
    else:
        view_a, view_b = dual_augment(seq, aug_cfg, rng)

    u_a, u_b = model.encode_pair(view_a.features, view_b.features)
    z_a = model.project(u_a, training=True)
    z_b = model.project(u_b, training=True)
    include_cluster = not train_cfg.disable_cluster_predictor
    h_a = model.cluster_predict(z_a) if include_cluster else None
    h_b = model.cluster_predict(z_b) if include_cluster else None
    return compute_pair_loss(
        z_a,
        z_b,
        h_a,
        h_b,
        view_a.index_map,
        view_b.index_map,
        loss_cfg,
        use_stop_gradient=not train_cfg.disable_stop_gradient,
        bidirectional=not train_cfg.disable_dual_augmentation,
        include_cluster=include_cluster,
        original_length=seq.length,
    )


def train(
    sequences: list[FeatureSequence],
    model_cfg: ModelConfig,
    aug_cfg: AugmentConfig | None = None,
    loss_cfg: LossConfig | None = None,
    train_cfg: TrainConfig | None = None,
    checkpoint_path=None,
) -> TrainResult:
    """Train from scratch on in-memory sequences.

    When ``checkpoint_path`` is given, periodic and final checkpoints plus
    CSV logs are written next to it.
    """
    aug_cfg = aug_cfg or AugmentConfig()
    loss_cfg = loss_cfg or LossConfig()
    train_cfg = train_cfg or TrainConfig()
    train_cfg.validate()
    loss_cfg.validate()
    if not sequences:
        raise ValueError("no training sequences")
    ids = [s.sequence_id for s in sequences]
    if len(set(ids)) != len(ids):
        raise ValueError("sequence ids must be unique")

    if train_cfg.disable_trim:
        aug_cfg = replace(aug_cfg, trim_enabled=False)
    aug_cfg.validate()
    model_cfg = replace(model_cfg, attention_mode=train_cfg.attention_mode())
    model = Model.build(model_cfg, seed=train_cfg.seed)
    store = model.store

    log = TrainLog()
    started = time.perf_counter()
    step = 0
    n = len(sequences)
    for epoch in range(train_cfg.epochs):
        lr = lr_schedule(epoch, train_cfg.base_lr)
        shuffle_rng = np.random.default_rng(
            np.random.SeedSequence([train_cfg.seed, 1, epoch])
        )
        order = shuffle_rng.permutation(n)
        epoch_steps: list[StepRecord] = []
        for start in range(0, n, train_cfg.batch_size):
            chunk = order[start : start + train_cfg.batch_size]
            store.zero_grad()
            reports: list[LossReport] = []
            for item in chunk:
                item = int(item)
                seq = sequences[item]
                rng = _item_rng(train_cfg.seed, epoch, item)
                total, report = _item_loss(model, seq, aug_cfg, loss_cfg, train_cfg, rng)
                if not math.isfinite(report.total):
                    raise TrainingError(
                        f"non-finite loss at epoch {epoch} step {step} on sequence "
                        f"{seq.sequence_id!r}; replay rng stream "
                        f"[{train_cfg.seed}, 2, {epoch}, {item}]"
                    )
                backward(scale(total, 1.0 / len(chunk)))
                reports.append(report)
            adam_step(store, lr)
            record = StepRecord(
                step=step,
                epoch=epoch,
                lr=lr,
                l_forward=_mean([r.l_forward for r in reports]),
                l_backward=_mean([r.l_backward for r in reports]),
                l_m=_mean([r.l_m for r in reports]),
                l_c=_mean([r.l_c for r in reports]),
                multiplier=_mean([r.multiplier for r in reports]),
                total=_mean([r.total for r in reports]),
            )
            log.steps.append(record)
            epoch_steps.append(record)
            step += 1
        log.epochs.append(
            EpochRecord(
                epoch=epoch,
                lr=lr,
                mean_total=_mean([r.total for r in epoch_steps]),
                mean_l_m=_mean([r.l_m for r in epoch_steps]),
                mean_l_c=_mean([r.l_c for r in epoch_steps]),
                mean_multiplier=_mean([r.multiplier for r in epoch_steps]),
            )
        )
        if (
            checkpoint_path is not None
            and train_cfg.checkpoint_every > 0
            and (epoch + 1) % train_cfg.checkpoint_every == 0
            and (epoch + 1) < train_cfg.epochs
        ):
            p = Path(checkpoint_path)
            save_checkpoint(
                model,
                p.with_name(f"{p.stem}_epoch{epoch + 1:04d}{p.suffix}"),
                embedding_space=train_cfg.embedding_space,
            )

    log.wall_clock_s = time.perf_counter() - started
    final_path = None
    if checkpoint_path is not None:
        final_path = Path(checkpoint_path)
        save_checkpoint(model, final_path, embedding_space=train_cfg.embedding_space)
        log.write_csv(
            final_path.with_name(final_path.stem + "_steps.csv"),
            final_path.with_name(final_path.stem + "_epochs.csv"),
        )
    return TrainResult(model=model, log=log, checkpoint_path=final_path)


def save_checkpoint(model: Model, path, embedding_space: str = "u") -> None:
    """Write parameters (+ optimizer state) and a JSON config sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    model.store.save(path)
    meta = {"model": model.cfg.to_dict(), "embedding_space": embedding_space}
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def load_checkpoint(path) -> tuple[Model, dict]:
    """Rebuild a model from a checkpoint and its config sidecar."""
    path = Path(path)
    meta_path = Path(str(path) + ".meta.json")
    if not meta_path.exists():
        raise ConfigError(f"missing checkpoint metadata {meta_path}")
    meta = json.loads(meta_path.read_text())
    model = Model.build(ModelConfig.from_dict(meta["model"]), seed=0)
    model.store.load(path)
    return model, meta


@dataclass
class AlignResult:
    assignment: np.ndarray  # (T_a,) indices into sequence B
    gamma: np.ndarray  # (T_a, T_b) row-stochastic soft matches

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["frame_a", "frame_b", "confidence"])
            for i, j in enumerate(self.assignment):
                writer.writerow([i, int(j), f"{self.gamma[i, int(j)]:.6f}"])


def align(
    model: Model,
    features_a: np.ndarray,
    features_b: np.ndarray,
    space: str = "u",
    temperature: float = 1.0,
) -> AlignResult:
    """Frame correspondence between two raw (un-augmented) sequences."""
    emb_a, emb_b = model.embed_joint(features_a, features_b, space=space)
    sims = unit_normalize(emb_a) @ unit_normalize(emb_b).T / temperature
    sims -= sims.max(axis=1, keepdims=True)
    gamma = np.exp(sims)
    gamma /= gamma.sum(axis=1, keepdims=True)
    return AlignResult(assignment=np.argmax(gamma, axis=1), gamma=gamma)


def export_embeddings(
    model: Model, sequences: list[FeatureSequence], space: str = "u"
) -> dict[str, np.ndarray]:
    """Deterministic per-sequence embeddings keyed by sequence id."""
    out: dict[str, np.ndarray] = {}
    for seq in sequences:
        if not seq.sequence_id:
            raise ValueError("sequences need ids for embedding export")
        if seq.sequence_id in out:
            raise ValueError(f"duplicate sequence id {seq.sequence_id!r}")
        emb = model.embed_sequence(seq.features, space=space)
        out[seq.sequence_id] = emb.space(space).astype(np.float32)
    return out
