"""Synthetic multi-activity dataset generator.

Each activity has a canonical latent trajectory: a cubic spline through
random control points grouped into phases, so frames from the same phase
occupy the same latent region. Instances sample a length, warp canonical
time with a piecewise-linear monotone map (segment slopes drawn from
[speed_min, speed_max], then normalized to end at 1), evaluate the spline,
project into feature space with an activity-specific matrix, and add
Gaussian noise.

Ground truth (phase per frame, canonical progress per frame) is written to
a labels directory next to the sequences; the manifest never exposes it to
training code. Generation is byte-for-byte reproducible from the seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .data import Manifest, MANIFEST_VERSION, SequenceRecord, save_manifest, save_sequence
from .data import FeatureSequence
from .errors import ConfigError

_STREAM_ACTIVITY = 0
_STREAM_PROJECTION = 1
_STREAM_INSTANCE = 2


@dataclass
class SynthConfig:
    num_activities: int = 4
    sequences_per_activity: int = 40
    feature_dim: int = 16
    latent_dim: int = 4
    phases_min: int = 3
    phases_max: int = 6
    length_min: int = 40
    length_max: int = 80
    speed_min: float = 0.5
    speed_max: float = 2.0
    noise_std: float = 0.05
    warp_segments: int = 5
    control_points_per_phase: int = 3
    phase_spread: float = 1.5
    orthogonal_projections: bool = False
    seed: int = 0

    def validate(self) -> None:
        if self.num_activities < 1 or self.sequences_per_activity < 1:
            raise ConfigError("need at least one activity and one sequence per activity")
        if self.feature_dim < 1 or self.latent_dim < 1:
            raise ConfigError("feature_dim and latent_dim must be positive")
        if not (2 <= self.phases_min <= self.phases_max):
            raise ConfigError("phase counts must satisfy 2 <= phases_min <= phases_max")
        if not (8 <= self.length_min <= self.length_max):
            raise ConfigError("lengths must satisfy 8 <= length_min <= length_max")
        if not (0 < self.speed_min <= self.speed_max):
            raise ConfigError("speeds must satisfy 0 < speed_min <= speed_max")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be non-negative")
        if self.warp_segments < 1 or self.control_points_per_phase < 1:
            raise ConfigError("warp_segments and control_points_per_phase must be positive")
        if self.orthogonal_projections and self.num_activities * self.latent_dim > self.feature_dim:
            raise ConfigError(
                "orthogonal projections need num_activities * latent_dim <= feature_dim"
            )


def _stream(cfg: SynthConfig, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, *key]))


@dataclass
class _ActivityModel:
    spline: CubicSpline
    boundaries: np.ndarray  # inner phase boundaries in (0, 1)
    phase_count: int
    projection: np.ndarray  # (latent_dim, feature_dim)


def _build_activity(cfg: SynthConfig, activity: int, projection: np.ndarray) -> _ActivityModel:
    rng = _stream(cfg, _STREAM_ACTIVITY, activity)
    phase_count = int(rng.integers(cfg.phases_min, cfg.phases_max + 1))
    durations = rng.uniform(0.5, 1.5, size=phase_count)
    boundaries = np.concatenate([[0.0], np.cumsum(durations) / durations.sum()])
    boundaries[-1] = 1.0

    centers = rng.normal(0.0, cfg.phase_spread, size=(phase_count, cfg.latent_dim))
    knot_ts = [0.0]
    knot_values = [centers[0] + 0.3 * rng.standard_normal(cfg.latent_dim)]
    n = cfg.control_points_per_phase
    for p in range(phase_count):
        a, b = boundaries[p], boundaries[p + 1]
        width = b - a
        ts = a + width * (np.arange(n) + 0.5) / n
        for t in ts:
            knot_ts.append(float(t))
            knot_values.append(centers[p] + 0.3 * rng.standard_normal(cfg.latent_dim))
    knot_ts.append(1.0)
    knot_values.append(centers[-1] + 0.3 * rng.standard_normal(cfg.latent_dim))

    spline = CubicSpline(np.asarray(knot_ts), np.asarray(knot_values), axis=0)
    return _ActivityModel(
        spline=spline,
        boundaries=boundaries[1:-1],
        phase_count=phase_count,
        projection=projection,
    )


def _projections(cfg: SynthConfig) -> list[np.ndarray]:
    rng = _stream(cfg, _STREAM_PROJECTION)
    if cfg.orthogonal_projections:
        square = rng.standard_normal((cfg.feature_dim, cfg.feature_dim))
        q, _ = np.linalg.qr(square)
        return [
            q[:, a * cfg.latent_dim : (a + 1) * cfg.latent_dim].T.copy()
            for a in range(cfg.num_activities)
        ]
    return [
        rng.standard_normal((cfg.latent_dim, cfg.feature_dim)) / np.sqrt(cfg.latent_dim)
        for _ in range(cfg.num_activities)
    ]


def _monotone_warp(rng: np.random.Generator, cfg: SynthConfig, t: np.ndarray) -> np.ndarray:
    slopes = rng.uniform(cfg.speed_min, cfg.speed_max, size=cfg.warp_segments)
    y = np.concatenate([[0.0], np.cumsum(slopes)])
    y /= y[-1]
    x = np.linspace(0.0, 1.0, cfg.warp_segments + 1)
    return np.interp(t, x, y)


def _instance(
    cfg: SynthConfig, model: _ActivityModel, activity: int, index: int
) -> tuple[FeatureSequence, np.ndarray, np.ndarray]:
    rng = _stream(cfg, _STREAM_INSTANCE, activity, index)
    length = int(rng.integers(cfg.length_min, cfg.length_max + 1))
    frame_pos = np.arange(length, dtype=np.float64) / (length - 1)
    progress = _monotone_warp(rng, cfg, frame_pos)
    latent = model.spline(progress)
    features = latent @ model.projection
    if cfg.noise_std > 0:
        features = features + cfg.noise_std * rng.standard_normal(features.shape)
    phases = np.searchsorted(model.boundaries, progress, side="right").astype(np.int64)
    seq = FeatureSequence(
        features=features.astype(np.float32),
        sequence_id=f"act{activity:02d}_seq{index:03d}",
        activity_id=activity,
        phase_labels=phases,
    )
    return seq, phases, progress


def generate_synthetic(cfg: SynthConfig, out_dir) -> Path:
    """Write a dataset under ``out_dir`` and return the manifest path."""
    cfg.validate()
    out_dir = Path(out_dir)
    seq_dir = out_dir / "sequences"
    labels_dir = out_dir / "labels"
    seq_dir.mkdir(parents=True, exist_ok=True)
    labels_dir.mkdir(parents=True, exist_ok=True)

    projections = _projections(cfg)
    activity_names = [f"activity_{a:02d}" for a in range(cfg.num_activities)]
    manifest = Manifest(
        version=MANIFEST_VERSION,
        feature_dim=cfg.feature_dim,
        max_length=cfg.length_max,
        activities=activity_names,
        base_dir=out_dir,
    )

    activity_lines = []
    for a in range(cfg.num_activities):
        model = _build_activity(cfg, a, projections[a])
        for i in range(cfg.sequences_per_activity):
            seq, phases, progress = _instance(cfg, model, a, i)
            rel_file = f"sequences/{seq.sequence_id}.seq"
            rel_phases = f"labels/{seq.sequence_id}.phases"
            save_sequence(seq, out_dir / rel_file)
            (out_dir / rel_phases).write_text("".join(f"{p}\n" for p in phases))
            (labels_dir / f"{seq.sequence_id}.progress").write_text(
                "".join(f"{v:.10f}\n" for v in progress)
            )
            activity_lines.append(f"{seq.sequence_id} {activity_names[a]}\n")
            manifest.sequences.append(
                SequenceRecord(
                    id=seq.sequence_id,
                    file=rel_file,
                    activity=activity_names[a],
                    length=seq.length,
                    phases=rel_phases,
                )
            )
    (labels_dir / "activities.txt").write_text("".join(activity_lines))
    manifest_path = out_dir / "manifest.json"
    save_manifest(manifest, manifest_path)
    return manifest_path
