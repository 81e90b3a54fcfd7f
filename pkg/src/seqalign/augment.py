"""Dual augmentation: two views of one sequence with exact index maps.

Each view records, per retained frame, the original frame index it came
from (a strictly increasing index map). Temporal operations (trim, frame
drop) never alter feature values; spatial transforms (skeleton modality
only) alter values but not the map. The two views must share a minimum
number of original indices so matched-pair objectives are well defined;
``dual_augment`` resamples until the overlap holds and errors out after a
bounded number of attempts.

Trimming applies to the "dense" modality only; skeleton data keeps full
temporal extent and gets rotation / mirror / translation instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import FeatureSequence
from .errors import AugmentationError, ConfigError

VIEW_PRIME = "prime"
VIEW_DOUBLE_PRIME = "double_prime"


@dataclass
class SpatialConfig:
    angle_max_deg: float = 15.0
    translation_sigma: float = 0.05
    flip_probability: float = 0.0
    joint_mirror_permutation: list[int] | None = None


@dataclass
class AugmentConfig:
    trim_enabled: bool = True
    trim_min_fraction: float = 0.5
    keep_prob_min: float = 0.5
    keep_prob_max: float = 1.0
    min_overlap_frames: int = 8
    max_attempts: int = 32
    modality: str = "dense"  # "dense" | "skeleton"
    spatial: SpatialConfig = field(default_factory=SpatialConfig)

    def validate(self) -> None:
        if not (0.0 < self.trim_min_fraction <= 1.0):
            raise ConfigError("trim_min_fraction must be in (0, 1]")
        if not (0.0 < self.keep_prob_min <= self.keep_prob_max <= 1.0):
            raise ConfigError("keep probability range must satisfy 0 < min <= max <= 1")
        if self.min_overlap_frames < 1:
            raise ConfigError("min_overlap_frames must be >= 1")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")
        if self.modality not in ("dense", "skeleton"):
            raise ConfigError(f"unknown modality {self.modality!r}")
        s = self.spatial
        if s.angle_max_deg < 0 or s.translation_sigma < 0:
            raise ConfigError("spatial magnitudes must be non-negative")
        if not (0.0 <= s.flip_probability <= 1.0):
            raise ConfigError("flip_probability must be in [0, 1]")
        if (
            self.modality == "skeleton"
            and s.flip_probability > 0
            and s.joint_mirror_permutation is None
        ):
            raise ConfigError("mirror flip requires joint_mirror_permutation")


@dataclass
class AugmentedView:
    """Features of retained frames plus their original indices."""

    features: np.ndarray  # (M, D) float32
    index_map: np.ndarray  # (M,) int64, strictly increasing
    view_tag: str = VIEW_PRIME

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float32)
        self.index_map = np.asarray(self.index_map, dtype=np.int64)
        if self.features.shape[0] != self.index_map.shape[0]:
            raise ValueError("index map length must equal the view's frame count")

    @property
    def length(self) -> int:
        return self.features.shape[0]


def identity_view(seq: FeatureSequence, view_tag: str = VIEW_PRIME) -> AugmentedView:
    return AugmentedView(
        features=seq.features.copy(),
        index_map=np.arange(seq.length, dtype=np.int64),
        view_tag=view_tag,
    )


def trim(view: AugmentedView, window: tuple[int, int]) -> AugmentedView:
    """Keep the contiguous half-open window [a, b) of the view's frames."""
    a, b = window
    if not (0 <= a < b <= view.length):
        raise ValueError(f"trim window [{a}, {b}) invalid for view of length {view.length}")
    if b - a < 2:
        raise ValueError("trim window must keep at least 2 frames")
    return AugmentedView(
        features=view.features[a:b].copy(),
        index_map=view.index_map[a:b].copy(),
        view_tag=view.view_tag,
    )


def temporal_drop(
    view: AugmentedView, keep_prob: float, rng: np.random.Generator
) -> AugmentedView:
    """Per-frame Bernoulli keep; first and last frames forced when < 2 survive."""
    if not (0.0 < keep_prob <= 1.0):
        raise ValueError("keep_prob must be in (0, 1]")
    keep = rng.random(view.length) < keep_prob
    if keep.sum() < 2:
        keep[0] = True
        keep[-1] = True
    return AugmentedView(
        features=view.features[keep].copy(),
        index_map=view.index_map[keep].copy(),
        view_tag=view.view_tag,
    )


def spatial_transform(
    view: AugmentedView, cfg: SpatialConfig, rng: np.random.Generator
) -> AugmentedView:
    """Rotate about the vertical axis, optionally mirror, then translate.

    Feature layout is J joints by 3 coordinates (x lateral, y vertical,
    z depth). One transform is drawn per view and applied to every frame;
    the index map is untouched.
    """
    if view.features.shape[1] % 3 != 0:
        raise ConfigError("skeleton features must have dimension divisible by 3")
    joints = view.features.shape[1] // 3
    coords = view.features.reshape(view.length, joints, 3).astype(np.float64)

    angle = rng.uniform(-np.deg2rad(cfg.angle_max_deg), np.deg2rad(cfg.angle_max_deg))
    c, s = np.cos(angle), np.sin(angle)
    rotation = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    coords = coords @ rotation.T

    if cfg.flip_probability > 0 and rng.random() < cfg.flip_probability:
        perm = cfg.joint_mirror_permutation
        if perm is None:
            raise ConfigError("mirror flip requires joint_mirror_permutation")
        perm = np.asarray(perm, dtype=np.int64)
        if sorted(perm.tolist()) != list(range(joints)):
            raise ConfigError(
                f"joint_mirror_permutation must permute 0..{joints - 1}, got {perm.tolist()}"
            )
        coords = coords[:, perm, :]
        coords[:, :, 0] *= -1.0

    coords = coords + rng.normal(0.0, cfg.translation_sigma, size=3)

    return AugmentedView(
        features=coords.reshape(view.length, joints * 3).astype(np.float32),
        index_map=view.index_map.copy(),
        view_tag=view.view_tag,
    )


def _single_view(
    seq: FeatureSequence, cfg: AugmentConfig, rng: np.random.Generator, view_tag: str
) -> AugmentedView:
    keep_prob = rng.uniform(cfg.keep_prob_min, cfg.keep_prob_max)
    view = identity_view(seq, view_tag)
    if cfg.trim_enabled and cfg.modality == "dense":
        t = seq.length
        lo = max(2, int(np.ceil(cfg.trim_min_fraction * t)))
        m = int(rng.integers(lo, t + 1))
        start = int(rng.integers(0, t - m + 1))
        view = trim(view, (start, start + m))
    view = temporal_drop(view, keep_prob, rng)
    if cfg.modality == "skeleton":
        view = spatial_transform(view, cfg.spatial, rng)
    return view


def augment_view(
    seq: FeatureSequence,
    cfg: AugmentConfig,
    rng: np.random.Generator,
    view_tag: str = VIEW_PRIME,
) -> AugmentedView:
    """One augmented view (no overlap constraint); used by ablations."""
    cfg.validate()
    return _single_view(seq, cfg, rng, view_tag)


def dual_augment(
    seq: FeatureSequence, cfg: AugmentConfig, rng: np.random.Generator
) -> tuple[AugmentedView, AugmentedView]:
    """Draw two independent views whose index maps share enough frames."""
    if seq.length < 4:
        raise ValueError("dual_augment needs sequences of at least 4 frames")
    cfg.validate()
    best_overlap = 0
    for _ in range(cfg.max_attempts):
        view_a = _single_view(seq, cfg, rng, VIEW_PRIME)
        view_b = _single_view(seq, cfg, rng, VIEW_DOUBLE_PRIME)
        overlap = int(np.intersect1d(view_a.index_map, view_b.index_map).size)
        if overlap >= cfg.min_overlap_frames:
            return view_a, view_b
        best_overlap = max(best_overlap, overlap)
    raise AugmentationError(
        f"sequence {seq.sequence_id or '<unnamed>'}: overlap "
        f"{best_overlap} < {cfg.min_overlap_frames} after {cfg.max_attempts} attempts"
    )


def copy_config(cfg: AugmentConfig, **changes) -> AugmentConfig:
    return replace(cfg, **changes)
