"""Evaluation suite over frozen embeddings and label sidecars.

Five metrics: per-frame phase classification with a linear probe at
several label fractions, phase-progress regression (R² of predicting the
normalized frame index), nearest-neighbor Kendall's tau between sequence
pairs, frame retrieval AP@K, and clip-level action recognition. Plus a
collapse indicator: the mean pairwise cosine between unit-normalized
frames of different activities (near 1 means activities collapsed into
one region).

Everything here consumes exported embeddings and labels only, never model
parameters. Sequences are split 70/30 into probe-train and evaluation
sets, stratified per activity, deterministically from the seed.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError

_NORM_GUARD = 1e-12


@dataclass
class MetricsConfig:
    label_fractions: tuple = (0.10, 0.50, 1.00)
    probe_epochs: int = 500
    probe_lr: float = 0.1
    ridge_strength: float = 0.0
    retrieval_ks: tuple = (5, 10, 15)
    clip_frames: int = 16
    clip_pool: str = "mean"  # "mean" | "concat"
    train_fraction: float = 0.7
    seed: int = 0

    def validate(self) -> None:
        if not self.label_fractions or any(not (0 < f <= 1) for f in self.label_fractions):
            raise ConfigError("label_fractions must lie in (0, 1]")
        if self.probe_epochs < 1 or self.probe_lr <= 0:
            raise ConfigError("probe_epochs must be >= 1 and probe_lr > 0")
        if self.ridge_strength < 0:
            raise ConfigError("ridge_strength must be >= 0")
        if not self.retrieval_ks or any(k < 1 for k in self.retrieval_ks):
            raise ConfigError("retrieval_ks must be positive")
        if self.clip_frames < 1:
            raise ConfigError("clip_frames must be >= 1")
        if self.clip_pool not in ("mean", "concat"):
            raise ConfigError("clip_pool must be 'mean' or 'concat'")
        if not (0 < self.train_fraction < 1):
            raise ConfigError("train_fraction must be in (0, 1)")


def unit_normalize(rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    norms = np.linalg.norm(rows, axis=-1, keepdims=True)
    return rows / (norms + _NORM_GUARD)


def split_sequences(
    activities: dict[str, int], train_fraction: float = 0.7, seed: int = 0
) -> tuple[list[str], list[str]]:
    """Stratified per-activity sequence split; every activity keeps >= 1
    sequence on each side when it has >= 2."""
    train_ids: list[str] = []
    eval_ids: list[str] = []
    for activity in sorted(set(activities.values())):
        ids = sorted(sid for sid, a in activities.items() if a == activity)
        rng = np.random.default_rng(np.random.SeedSequence([seed, 5, activity]))
        order = rng.permutation(len(ids))
        n_train = int(round(train_fraction * len(ids)))
        n_train = min(max(n_train, 1), max(len(ids) - 1, 1))
        chosen = set(order[:n_train].tolist())
        for i, sid in enumerate(ids):
            (train_ids if i in chosen else eval_ids).append(sid)
    return train_ids, eval_ids


def fit_linear_classifier(
    x: np.ndarray, y: np.ndarray, num_classes: int, epochs: int = 500, lr: float = 0.1
) -> tuple[np.ndarray, np.ndarray]:
    """Full-batch gradient descent on softmax regression (deterministic)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n, d = x.shape
    weights = np.zeros((d, num_classes))
    bias = np.zeros(num_classes)
    onehot = np.zeros((n, num_classes))
    onehot[np.arange(n), y] = 1.0
    for _ in range(epochs):
        logits = x @ weights + bias
        logits -= logits.max(axis=1, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=1, keepdims=True)
        grad = (probs - onehot) / n
        weights -= lr * (x.T @ grad)
        bias -= lr * grad.sum(axis=0)
    return weights, bias


def classifier_predict(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    return np.argmax(np.asarray(x, dtype=np.float64) @ weights + bias, axis=1)


def phase_classification(
    embeddings: dict[str, np.ndarray],
    phase_labels: dict[str, np.ndarray],
    activities: dict[str, int],
    cfg: MetricsConfig,
    split: tuple[list[str], list[str]] | None = None,
) -> dict[float, float]:
    """Per-activity linear probes; micro-averaged frame accuracy per fraction."""
    cfg.validate()
    train_ids, eval_ids = split or split_sequences(activities, cfg.train_fraction, cfg.seed)
    result: dict[float, float] = {}
    for fraction in cfg.label_fractions:
        correct = 0
        total = 0
        for activity in sorted(set(activities.values())):
            tr = [s for s in train_ids if activities[s] == activity]
            ev = [s for s in eval_ids if activities[s] == activity]
            if not tr or not ev:
                warnings.warn(f"activity {activity}: missing train or eval sequences")
                continue
            x_train = unit_normalize(np.vstack([embeddings[s] for s in tr]))
            y_train = np.concatenate([phase_labels[s] for s in tr])
            num_classes = (
                int(max(phase_labels[s].max() for s in tr + ev)) + 1
            )
            if fraction < 1.0:
                rng = np.random.default_rng(
                    np.random.SeedSequence(
                        [cfg.seed, 3, activity, int(round(fraction * 1000))]
                    )
                )
                keep = max(1, int(round(fraction * len(y_train))))
                idx = np.sort(rng.choice(len(y_train), size=keep, replace=False))
                x_train, y_train = x_train[idx], y_train[idx]
            if len(np.unique(y_train)) < num_classes:
                warnings.warn(
                    f"activity {activity}: fraction {fraction} probe is missing "
                    f"{num_classes - len(np.unique(y_train))} phase class(es)"
                )
            weights, bias = fit_linear_classifier(
                x_train, y_train, num_classes, cfg.probe_epochs, cfg.probe_lr
            )
            for s in ev:
                pred = classifier_predict(unit_normalize(embeddings[s]), weights, bias)
                correct += int((pred == phase_labels[s]).sum())
                total += len(pred)
        result[fraction] = correct / total if total else math.nan
    return result


def phase_progress(
    embeddings: dict[str, np.ndarray],
    cfg: MetricsConfig,
    split: tuple[list[str], list[str]] | None = None,
    activities: dict[str, int] | None = None,
) -> float:
    """R² of linear regression onto the normalized frame index, floored at 0.

    Plain least squares by default (scale-invariant and absorbs constant
    columns into the intercept exactly); ridge_strength > 0 adds an
    L2 penalty on the non-intercept weights.
    """
    cfg.validate()
    if split is None:
        if activities is None:
            raise ValueError("phase_progress needs either a split or activities")
        split = split_sequences(activities, cfg.train_fraction, cfg.seed)
    train_ids, eval_ids = split

    def frames_and_targets(ids):
        xs, ys = [], []
        for s in ids:
            emb = np.asarray(embeddings[s], dtype=np.float64)
            t = emb.shape[0]
            xs.append(emb)
            ys.append(np.arange(t) / (t - 1) if t > 1 else np.zeros(1))
        return np.vstack(xs), np.concatenate(ys)

    x_train, y_train = frames_and_targets(train_ids)
    x_eval, y_eval = frames_and_targets(eval_ids)
    if np.var(y_train) == 0:
        raise ValueError("progress targets are constant; regression is degenerate")

    design = np.hstack([x_train, np.ones((len(x_train), 1))])
    if cfg.ridge_strength > 0:
        penalty = cfg.ridge_strength * np.eye(design.shape[1])
        penalty[-1, -1] = 0.0  # never penalize the intercept
        coef = np.linalg.solve(design.T @ design + penalty, design.T @ y_train)
    else:
        coef, *_ = np.linalg.lstsq(design, y_train, rcond=None)

    pred = np.hstack([x_eval, np.ones((len(x_eval), 1))]) @ coef
    ss_res = float(((y_eval - pred) ** 2).sum())
    ss_tot = float(((y_eval - y_eval.mean()) ** 2).sum())
    return max(0.0, 1.0 - ss_res / ss_tot)


def nearest_neighbor_assignment(emb_a: np.ndarray, emb_b: np.ndarray) -> np.ndarray:
    """Cosine nearest neighbor in B for each frame of A; ties take the
    smaller index."""
    sims = unit_normalize(emb_a) @ unit_normalize(emb_b).T
    return np.argmax(sims, axis=1)


def tau_from_assignment(assignment: np.ndarray) -> float:
    """Kendall's tau of an index assignment; ties count as discordant."""
    n = np.asarray(assignment)
    m = n.shape[0]
    if m < 2:
        raise ValueError("kendall tau needs at least 2 frames")
    diff = n[None, :] - n[:, None]
    concordant = int(np.triu(diff > 0, k=1).sum())
    pairs = m * (m - 1) // 2
    return (2 * concordant - pairs) / pairs


def kendall_tau(emb_a: np.ndarray, emb_b: np.ndarray) -> float:
    """Alignment-order correlation, averaged over both directions."""
    forward = tau_from_assignment(nearest_neighbor_assignment(emb_a, emb_b))
    backward = tau_from_assignment(nearest_neighbor_assignment(emb_b, emb_a))
    return (forward + backward) / 2.0


def frame_retrieval_ap(
    embeddings: dict[str, np.ndarray],
    phase_labels: dict[str, np.ndarray],
    activities: dict[str, int],
    ks: tuple = (5, 10, 15),
    ids: list[str] | None = None,
) -> tuple[dict[int, float], list[str]]:
    """AP@K: fraction of the K nearest same-activity other-video frames
    sharing the query's phase label, averaged over all query frames."""
    ids = sorted(embeddings) if ids is None else list(ids)
    notes: list[str] = []
    scores = {k: [] for k in ks}
    for activity in sorted(set(activities[s] for s in ids)):
        group = [s for s in ids if activities[s] == activity]
        if len(group) < 2:
            notes.append(f"activity {activity}: fewer than 2 videos, retrieval skipped")
            continue
        mats = {s: unit_normalize(embeddings[s]) for s in group}
        labels = {s: np.asarray(phase_labels[s]) for s in group}
        for query in group:
            cand_mat = np.vstack([mats[s] for s in group if s != query])
            cand_lab = np.concatenate([labels[s] for s in group if s != query])
            sims = mats[query] @ cand_mat.T
            order = np.argsort(-sims, axis=1, kind="stable")
            for k in ks:
                use = min(k, cand_mat.shape[0])
                if use < k:
                    note = f"activity {activity}: only {use} candidates for K={k}"
                    if note not in notes:
                        notes.append(note)
                top = order[:, :use]
                hits = cand_lab[top] == labels[query][:, None]
                scores[k].extend(hits.mean(axis=1).tolist())
    return {k: (float(np.mean(v)) if v else math.nan) for k, v in scores.items()}, notes


def clip_vector(embedding: np.ndarray, clip_frames: int, pool: str) -> np.ndarray:
    """Pool 16 (by default) uniformly sampled frames; short clips repeat."""
    t = embedding.shape[0]
    idx = np.round(np.linspace(0, t - 1, clip_frames)).astype(int)
    frames = np.asarray(embedding, dtype=np.float64)[idx]
    pooled = frames.mean(axis=0) if pool == "mean" else frames.reshape(-1)
    return pooled


def action_recognition(
    embeddings: dict[str, np.ndarray],
    activities: dict[str, int],
    cfg: MetricsConfig,
    split: tuple[list[str], list[str]] | None = None,
) -> float:
    """Linear probe on pooled clip vectors; accuracy over eval clips."""
    cfg.validate()
    train_ids, eval_ids = split or split_sequences(activities, cfg.train_fraction, cfg.seed)
    num_classes = max(activities.values()) + 1

    def matrix(ids):
        rows = [clip_vector(embeddings[s], cfg.clip_frames, cfg.clip_pool) for s in ids]
        return unit_normalize(np.vstack(rows))

    y_train = np.array([activities[s] for s in train_ids])
    counts = np.bincount(y_train, minlength=num_classes)
    if np.any(counts == 1):
        warnings.warn("some activities have a single training clip")
    weights, bias = fit_linear_classifier(
        matrix(train_ids), y_train, num_classes, cfg.probe_epochs, cfg.probe_lr
    )
    pred = classifier_predict(matrix(eval_ids), weights, bias)
    truth = np.array([activities[s] for s in eval_ids])
    return float((pred == truth).mean())


def cross_activity_cosine(
    embeddings: dict[str, np.ndarray], activities: dict[str, int]
) -> float:
    """Collapse indicator: mean cosine over frame pairs from different
    activities (1.0 means all activities share one embedding direction)."""
    sums: dict[int, np.ndarray] = {}
    counts: dict[int, int] = {}
    for sid in sorted(embeddings):
        a = activities[sid]
        units = unit_normalize(embeddings[sid])
        sums[a] = sums.get(a, 0) + units.sum(axis=0)
        counts[a] = counts.get(a, 0) + units.shape[0]
    keys = sorted(sums)
    dot_total = 0.0
    pair_total = 0
    for i, a in enumerate(keys):
        for b in keys[i + 1 :]:
            dot_total += float(sums[a] @ sums[b])
            pair_total += counts[a] * counts[b]
    return dot_total / pair_total if pair_total else math.nan


@dataclass
class MetricsReport:
    phase_accuracy: dict[float, float]
    progress_r2: float
    kendall_tau: float
    retrieval_ap: dict[int, float]
    action_accuracy: float
    collapse_cross_cosine: float
    pair_taus: list[tuple[str, str, float]] = field(default_factory=list)
    train_ids: list[str] = field(default_factory=list)
    eval_ids: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def to_flat(self) -> dict[str, float]:
        flat = {}
        for fraction in sorted(self.phase_accuracy):
            flat[f"phase_accuracy@{fraction:.2f}"] = self.phase_accuracy[fraction]
        flat["progress_r2"] = self.progress_r2
        flat["kendall_tau"] = self.kendall_tau
        for k in sorted(self.retrieval_ap):
            flat[f"ap@{k}"] = self.retrieval_ap[k]
        flat["action_accuracy"] = self.action_accuracy
        flat["collapse_cross_cosine"] = self.collapse_cross_cosine
        return flat

    def save(self, report_path) -> None:
        """Write key=value text to ``report_path`` plus .json and .pairs.csv
        siblings."""
        path = Path(report_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        flat = self.to_flat()
        path.write_text("".join(f"{k}={v:.6f}\n" for k, v in flat.items()))
        payload = {
            "metrics": flat,
            "train_ids": self.train_ids,
            "eval_ids": self.eval_ids,
            "notes": self.notes,
        }
        path.with_suffix(".json").write_text(json.dumps(payload, indent=2) + "\n")
        with path.with_suffix(".pairs.csv").open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["sequence_a", "sequence_b", "kendall_tau"])
            for a, b, tau in self.pair_taus:
                writer.writerow([a, b, f"{tau:.6f}"])


def evaluate_suite(
    embeddings: dict[str, np.ndarray],
    phase_labels: dict[str, np.ndarray],
    activities: dict[str, int],
    cfg: MetricsConfig | None = None,
) -> MetricsReport:
    """Run all metrics on one embedding corpus."""
    cfg = cfg or MetricsConfig()
    cfg.validate()
    missing = sorted(set(embeddings) - set(activities))
    if missing:
        raise ValueError(f"sequences lack activity labels: {missing}")
    split = split_sequences(activities, cfg.train_fraction, cfg.seed)
    _, eval_ids = split

    pair_taus: list[tuple[str, str, float]] = []
    for activity in sorted(set(activities.values())):
        group = [s for s in eval_ids if activities[s] == activity]
        for i, a in enumerate(group):
            for b in group[i + 1 :]:
                pair_taus.append((a, b, kendall_tau(embeddings[a], embeddings[b])))
    mean_tau = float(np.mean([t for _, _, t in pair_taus])) if pair_taus else math.nan

    retrieval, notes = frame_retrieval_ap(
        embeddings, phase_labels, activities, tuple(cfg.retrieval_ks), ids=eval_ids
    )
    return MetricsReport(
        phase_accuracy=phase_classification(embeddings, phase_labels, activities, cfg, split),
        progress_r2=phase_progress(embeddings, cfg, split),
        kendall_tau=mean_tau,
        retrieval_ap=retrieval,
        action_accuracy=action_recognition(embeddings, activities, cfg, split),
        collapse_cross_cosine=cross_activity_cosine(
            {s: embeddings[s] for s in eval_ids}, activities
        ),
        pair_taus=pair_taus,
        train_ids=split[0],
        eval_ids=eval_ids,
        notes=notes,
    )
