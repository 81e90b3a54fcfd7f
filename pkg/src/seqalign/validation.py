"""Input validation helpers for the estimator-facing API."""

from __future__ import annotations

import numpy as np

from .data import FeatureSequence


def as_feature_sequences(X, expected_dim: int | None = None) -> list[FeatureSequence]:
    """Coerce estimator input into a list of FeatureSequence.

    Accepts a list/tuple of FeatureSequence or (T_i, D) arrays, or one
    (B, T, D) array. Sequences get synthetic ids when they lack one.
    """
    if isinstance(X, FeatureSequence):
        X = [X]
    elif isinstance(X, np.ndarray):
        if X.ndim != 3:
            raise ValueError(
                f"array input must be (batch, frames, dims), got shape {X.shape}"
            )
        X = list(X)
    elif not isinstance(X, (list, tuple)):
        raise TypeError(f"expected a list of sequences, got {type(X).__name__}")
    if len(X) == 0:
        raise ValueError("need at least one sequence")

    sequences: list[FeatureSequence] = []
    for i, item in enumerate(X):
        if isinstance(item, FeatureSequence):
            seq = item
        else:
            seq = FeatureSequence(features=np.asarray(item))
        if not seq.sequence_id:
            seq = FeatureSequence(
                features=seq.features,
                sequence_id=f"seq_{i:04d}",
                activity_id=seq.activity_id,
                phase_labels=seq.phase_labels,
            )
        sequences.append(seq)

    dims = {s.feature_dim for s in sequences}
    if len(dims) != 1:
        raise ValueError(f"sequences have mixed feature dimensions: {sorted(dims)}")
    dim = dims.pop()
    if expected_dim is not None and dim != expected_dim:
        raise ValueError(f"expected feature dimension {expected_dim}, got {dim}")
    return sequences
