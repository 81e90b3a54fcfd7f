"""Alignment and clustering objectives over projected frame embeddings.

Matching: each frame of one view predicts its original frame index as a
softmax-weighted average of the other view's original indices, weighted
by cosine similarity; the loss is the mean index error, averaged over
both directions.

Clustering: frames of the two views that come from the same original
frame form matched pairs; the clustering term is the mean cosine
agreement between one view's (gradient-stopped) projections and the other
view's cluster-predictor outputs, symmetrized. Agreement of +1 means the
clips already agree; the composite loss divides the matching loss by
(1 + epsilon) + agreement so that raising agreement lowers the total.
The denominator is floored to keep the degenerate fully-disagreeing case
finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .tensor import (
    Tensor,
    abs_,
    add,
    constant,
    matmul,
    mean,
    mul,
    reciprocal_clamped,
    reshape,
    scale,
    shift,
    softmax_rows,
    square,
    stop_gradient,
    sum_,
    take_rows,
    transpose,
    unit_rows,
)

INDEX_ERRORS = ("absolute", "squared")


@dataclass
class LossConfig:
    epsilon: float = 1e-7
    index_error: str = "absolute"
    denominator_floor: float = 1e-3
    temperature: float = 1.0
    normalize_by_length: bool = False

    def validate(self) -> None:
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be > 0")
        if self.denominator_floor <= 0:
            raise ConfigError("denominator_floor must be > 0")
        if self.temperature <= 0:
            raise ConfigError("temperature must be > 0")
        if self.index_error not in INDEX_ERRORS:
            raise ConfigError(f"index_error must be one of {INDEX_ERRORS}")


@dataclass
class LossReport:
    """Scalar diagnostics for one view pair (python-float arithmetic)."""

    l_forward: float
    l_backward: float
    l_m: float
    l_c: float
    multiplier: float
    total: float
    matched_pair_count: int


def match_matrix(z_a: Tensor, z_b: Tensor, cfg: LossConfig | None = None) -> Tensor:
    """Row-stochastic soft matches: softmax over cosine(z_a[j], z_b[k])."""
    cfg = cfg or LossConfig()
    sims = matmul(unit_rows(z_a), transpose(unit_rows(z_b), (1, 0)))
    if cfg.temperature != 1.0:
        sims = scale(sims, 1.0 / cfg.temperature)
    return softmax_rows(sims)


def predict_indices(gamma: Tensor, map_b: np.ndarray) -> Tensor:
    """Soft index predictions: each row's expectation over map_b values."""
    targets = np.asarray(map_b, dtype=gamma.data.dtype).reshape(-1, 1)
    if gamma.data.shape[1] != targets.shape[0]:
        raise ValueError(
            f"gamma has {gamma.data.shape[1]} columns but map_b has {targets.shape[0]} entries"
        )
    return reshape(matmul(gamma, constant(targets)), (gamma.data.shape[0],))


def directional_matching_loss(
    gamma: Tensor, map_a: np.ndarray, map_b: np.ndarray, cfg: LossConfig | None = None
) -> Tensor:
    """Mean index error of predictions against the query view's own map."""
    cfg = cfg or LossConfig()
    predicted = predict_indices(gamma, map_b)
    targets = constant(np.asarray(map_a, dtype=gamma.data.dtype))
    err = add(predicted, scale(targets, -1.0))
    err = square(err) if cfg.index_error == "squared" else abs_(err)
    return mean(err)


def matching_loss(
    z_a: Tensor,
    z_b: Tensor,
    map_a: np.ndarray,
    map_b: np.ndarray,
    cfg: LossConfig | None = None,
) -> tuple[Tensor, Tensor, Tensor]:
    """Bidirectional matching loss: (l_m, l_forward, l_backward)."""
    cfg = cfg or LossConfig()
    l_forward = directional_matching_loss(match_matrix(z_a, z_b, cfg), map_a, map_b, cfg)
    l_backward = directional_matching_loss(match_matrix(z_b, z_a, cfg), map_b, map_a, cfg)
    l_m = scale(add(l_forward, l_backward), 0.5)
    return l_m, l_forward, l_backward


def matched_pairs(map_a: np.ndarray, map_b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Positions (rows_a, rows_b) whose original indices coincide."""
    _, rows_a, rows_b = np.intersect1d(
        np.asarray(map_a), np.asarray(map_b), assume_unique=True, return_indices=True
    )
    return rows_a, rows_b


def cluster_agreement(
    v: Tensor, w: Tensor, map_v: np.ndarray, map_w: np.ndarray
) -> tuple[Tensor, int]:
    """Mean cosine over matched pairs; (0, 0) when no indices coincide."""
    rows_v, rows_w = matched_pairs(map_v, map_w)
    if rows_v.size == 0:
        return constant(np.asarray(0.0, dtype=v.data.dtype)), 0
    uv = unit_rows(take_rows(v, rows_v))
    uw = unit_rows(take_rows(w, rows_w))
    cosines = sum_(mul(uv, uw), axis=1)
    return mean(cosines), int(rows_v.size)


def clustering_loss(
    z_a: Tensor,
    z_b: Tensor,
    h_a: Tensor,
    h_b: Tensor,
    map_a: np.ndarray,
    map_b: np.ndarray,
    use_stop_gradient: bool = True,
) -> tuple[Tensor, int]:
    """Symmetrized agreement with gradient-stopped projection targets."""
    target_a = stop_gradient(z_a) if use_stop_gradient else z_a
    target_b = stop_gradient(z_b) if use_stop_gradient else z_b
    first, count = cluster_agreement(target_a, h_b, map_a, map_b)
    second, _ = cluster_agreement(target_b, h_a, map_b, map_a)
    return scale(add(first, second), 0.5), count


def combined_loss(
    l_m: Tensor, l_c: Tensor, cfg: LossConfig | None = None
) -> tuple[Tensor, float]:
    """total = l_m * 2 / max(floor, (1 + epsilon) + l_c); returns multiplier."""
    cfg = cfg or LossConfig()
    denominator = shift(l_c, 1.0 + cfg.epsilon)
    total = scale(mul(l_m, reciprocal_clamped(denominator, cfg.denominator_floor)), 2.0)
    multiplier = 2.0 / max(cfg.denominator_floor, (1.0 + cfg.epsilon) + float(l_c.item()))
    return total, multiplier


def compute_pair_loss(
    z_a: Tensor,
    z_b: Tensor,
    h_a: Tensor | None,
    h_b: Tensor | None,
    map_a: np.ndarray,
    map_b: np.ndarray,
    cfg: LossConfig | None = None,
    *,
    use_stop_gradient: bool = True,
    bidirectional: bool = True,
    include_cluster: bool = True,
    original_length: int | None = None,
) -> tuple[Tensor, LossReport]:
    """Assemble the full objective for one augmented pair.

    ``include_cluster=False`` trains on the matching loss alone;
    ``bidirectional=False`` uses only the a->b direction (the backward
    entry of the report becomes NaN). Index targets are the raw original
    frame indices unless the config normalizes them by sequence length.
    """
    cfg = cfg or LossConfig()
    cfg.validate()

    map_a = np.asarray(map_a, dtype=np.int64)
    map_b = np.asarray(map_b, dtype=np.int64)
    if cfg.normalize_by_length:
        if original_length is None:
            raise ValueError("normalize_by_length requires original_length")
        target_a = map_a / float(original_length)
        target_b = map_b / float(original_length)
    else:
        target_a, target_b = map_a, map_b

    l_forward = directional_matching_loss(
        match_matrix(z_a, z_b, cfg), target_a, target_b, cfg
    )
    if bidirectional:
        l_backward = directional_matching_loss(
            match_matrix(z_b, z_a, cfg), target_b, target_a, cfg
        )
        l_m = scale(add(l_forward, l_backward), 0.5)
        forward_value = float(l_forward.item())
        backward_value = float(l_backward.item())
        l_m_value = (forward_value + backward_value) / 2.0
    else:
        l_backward = None
        l_m = l_forward
        forward_value = float(l_forward.item())
        backward_value = math.nan
        l_m_value = forward_value

    if include_cluster:
        if h_a is None or h_b is None:
            raise ValueError("cluster term requested but predictor outputs are missing")
        l_c, pair_count = clustering_loss(
            z_a, z_b, h_a, h_b, map_a, map_b, use_stop_gradient=use_stop_gradient
        )
        total, multiplier = combined_loss(l_m, l_c, cfg)
        l_c_value = float(l_c.item())
    else:
        total = l_m
        multiplier = 1.0
        l_c_value = math.nan
        pair_count = 0

    report = LossReport(
        l_forward=forward_value,
        l_backward=backward_value,
        l_m=l_m_value,
        l_c=l_c_value,
        multiplier=multiplier,
        total=l_m_value * multiplier,
        matched_pair_count=pair_count,
    )
    return total, report
