"""Sequence data types, dataset manifests, and on-disk formats.

A dataset on disk is a manifest JSON plus one container file per sequence
(single tensor named ``features``, shape (T, D)). Evaluation labels live in
a sidecar directory: ``<id>.phases`` (one integer per line),
``<id>.progress`` (one float per line), and ``activities.txt`` (one
``<sequence_id> <activity_name>`` pair per line). Training never reads
the sidecars.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .container import read_container, read_container_shapes, write_container
from .errors import ManifestError

MANIFEST_VERSION = 1
FEATURES_KEY = "features"


@dataclass
class FeatureSequence:
    """One variable-length sequence of per-frame feature vectors."""

    features: np.ndarray
    sequence_id: str = ""
    activity_id: int = -1
    phase_labels: np.ndarray | None = None

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float32)
        if feats.ndim != 2:
            raise ValueError(f"features must be 2-D (frames, dims), got shape {feats.shape}")
        if feats.shape[0] < 2:
            raise ValueError("a sequence needs at least 2 frames")
        if feats.shape[1] < 1:
            raise ValueError("feature dimension must be positive")
        if not np.all(np.isfinite(feats)):
            raise ValueError("features contain non-finite values")
        self.features = feats
        if self.phase_labels is not None:
            labels = np.asarray(self.phase_labels, dtype=np.int64)
            if labels.shape != (feats.shape[0],):
                raise ValueError("phase labels must have one entry per frame")
            self.phase_labels = labels

    @property
    def length(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


@dataclass
class PaddedBatch:
    """Zero-padded stack of sequences with a validity mask."""

    features: np.ndarray  # (B, T_max, D) float32
    mask: np.ndarray  # (B, T_max) bool, True on real frames
    lengths: np.ndarray  # (B,) int64


def pad_batch(sequences: list[FeatureSequence], t_max: int | None = None) -> PaddedBatch:
    if not sequences:
        limit = int(t_max) if t_max is not None else 0
        return PaddedBatch(
            features=np.zeros((0, limit, 0), dtype=np.float32),
            mask=np.zeros((0, limit), dtype=bool),
            lengths=np.zeros(0, dtype=np.int64),
        )
    lengths = np.array([s.length for s in sequences], dtype=np.int64)
    dims = {s.feature_dim for s in sequences}
    if len(dims) != 1:
        raise ValueError(f"mixed feature dimensions in batch: {sorted(dims)}")
    limit = int(lengths.max()) if t_max is None else int(t_max)
    too_long = [s.sequence_id or str(i) for i, s in enumerate(sequences) if s.length > limit]
    if too_long:
        raise ValueError(f"sequences exceed max length {limit}: {too_long}")
    d = dims.pop()
    feats = np.zeros((len(sequences), limit, d), dtype=np.float32)
    mask = np.zeros((len(sequences), limit), dtype=bool)
    for i, s in enumerate(sequences):
        feats[i, : s.length] = s.features
        mask[i, : s.length] = True
    return PaddedBatch(features=feats, mask=mask, lengths=lengths)


def save_sequence(seq: FeatureSequence, path) -> None:
    write_container(path, {FEATURES_KEY: seq.features})


def load_sequence(path, sequence_id: str | None = None) -> FeatureSequence:
    entries = read_container(path)
    if FEATURES_KEY not in entries:
        raise ManifestError(f"{path}: missing {FEATURES_KEY!r} tensor")
    sid = sequence_id if sequence_id is not None else Path(path).stem
    return FeatureSequence(features=entries[FEATURES_KEY], sequence_id=sid)


@dataclass
class SequenceRecord:
    id: str
    file: str
    activity: str
    length: int
    phases: str | None = None  # optional path to a phase-label sidecar


@dataclass
class Manifest:
    version: int
    feature_dim: int
    max_length: int
    activities: list[str]
    sequences: list[SequenceRecord] = field(default_factory=list)
    base_dir: Path = field(default_factory=Path)

    def activity_id(self, name: str) -> int:
        return self.activities.index(name)

    def sequence_path(self, record: SequenceRecord) -> Path:
        return self.base_dir / record.file


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ManifestError(f"{where}: missing required field {key!r}")
    return mapping[key]


def load_manifest(path) -> Manifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ManifestError(f"{path}: manifest must be a JSON object")
    version = _require(raw, "version", str(path))
    if version != MANIFEST_VERSION:
        raise ManifestError(f"{path}: unsupported manifest version {version}")
    manifest = Manifest(
        version=version,
        feature_dim=int(_require(raw, "feature_dim", str(path))),
        max_length=int(_require(raw, "max_length", str(path))),
        activities=list(_require(raw, "activities", str(path))),
        base_dir=path.parent,
    )
    if manifest.feature_dim < 1 or manifest.max_length < 2:
        raise ManifestError(f"{path}: feature_dim/max_length out of range")
    if len(set(manifest.activities)) != len(manifest.activities):
        raise ManifestError(f"{path}: duplicate activity names")
    seen_ids = set()
    for i, entry in enumerate(_require(raw, "sequences", str(path))):
        where = f"{path}: sequences[{i}]"
        phases = _require(entry, "phases", where)
        record = SequenceRecord(
            id=str(_require(entry, "id", where)),
            file=str(_require(entry, "file", where)),
            activity=str(_require(entry, "activity", where)),
            length=int(_require(entry, "length", where)),
            phases=str(phases) if phases is not None else None,
        )
        if record.id in seen_ids:
            raise ManifestError(f"{where}: duplicate sequence id {record.id!r}")
        seen_ids.add(record.id)
        if record.activity not in manifest.activities:
            raise ManifestError(f"{where}: unknown activity {record.activity!r}")
        if not (2 <= record.length <= manifest.max_length):
            raise ManifestError(
                f"{where}: length {record.length} outside [2, {manifest.max_length}]"
            )
        manifest.sequences.append(record)
    if not manifest.sequences:
        raise ManifestError(f"{path}: manifest lists no sequences")
    return manifest


def save_manifest(manifest: Manifest, path) -> None:
    raw = {
        "version": manifest.version,
        "feature_dim": manifest.feature_dim,
        "max_length": manifest.max_length,
        "activities": manifest.activities,
        "sequences": [
            {
                "id": r.id,
                "file": r.file,
                "activity": r.activity,
                "length": r.length,
                "phases": r.phases,
            }
            for r in manifest.sequences
        ],
    }
    Path(path).write_text(json.dumps(raw, indent=2) + "\n")


def validate_manifest_files(manifest: Manifest) -> None:
    """Check that every referenced file exists and matches declared shape."""
    for record in manifest.sequences:
        file_path = manifest.sequence_path(record)
        if not file_path.exists():
            raise ManifestError(f"{record.id}: missing sequence file {file_path}")
        shapes = read_container_shapes(file_path)
        if FEATURES_KEY not in shapes:
            raise ManifestError(f"{record.id}: {file_path} lacks a {FEATURES_KEY!r} tensor")
        shape = shapes[FEATURES_KEY]
        if shape != (record.length, manifest.feature_dim):
            raise ManifestError(
                f"{record.id}: declared shape ({record.length}, {manifest.feature_dim}) "
                f"but file holds {shape}"
            )
        if record.phases is not None:
            phase_path = manifest.base_dir / record.phases
            if not phase_path.exists():
                raise ManifestError(f"{record.id}: missing phase label file {phase_path}")


def load_sequences(manifest: Manifest, validate: bool = True) -> list[FeatureSequence]:
    """Load all sequences named by a manifest (features only, no labels)."""
    if validate:
        validate_manifest_files(manifest)
    out = []
    for record in manifest.sequences:
        seq = load_sequence(manifest.sequence_path(record), sequence_id=record.id)
        seq.activity_id = manifest.activity_id(record.activity)
        out.append(seq)
    return out


def load_phase_labels(labels_dir, sequence_id: str) -> np.ndarray:
    path = Path(labels_dir) / f"{sequence_id}.phases"
    if not path.exists():
        raise ManifestError(f"missing phase label file {path}")
    values = [int(line) for line in path.read_text().split()]
    return np.asarray(values, dtype=np.int64)


def load_progress(labels_dir, sequence_id: str) -> np.ndarray:
    path = Path(labels_dir) / f"{sequence_id}.progress"
    if not path.exists():
        raise ManifestError(f"missing progress file {path}")
    values = [float(line) for line in path.read_text().split()]
    return np.asarray(values, dtype=np.float64)


def load_activity_map(labels_dir) -> dict[str, str]:
    """Read ``activities.txt``: one ``<sequence_id> <activity_name>`` per line."""
    path = Path(labels_dir) / "activities.txt"
    if not path.exists():
        raise ManifestError(f"missing activity map {path}")
    mapping: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ManifestError(f"{path}:{lineno}: expected '<sequence_id> <activity>'")
        mapping[parts[0]] = parts[1]
    return mapping


def activity_ids(activity_map: dict[str, str]) -> tuple[dict[str, int], list[str]]:
    """Assign stable integer ids to activity names (sorted order)."""
    names = sorted(set(activity_map.values()))
    index = {name: i for i, name in enumerate(names)}
    return {sid: index[name] for sid, name in activity_map.items()}, names


def save_embeddings(path, embeddings: dict[str, np.ndarray]) -> None:
    write_container(path, {k: np.asarray(v, dtype=np.float32) for k, v in embeddings.items()})


def load_embeddings(path) -> dict[str, np.ndarray]:
    return read_container(path)
