"""Tests for the frozen-embedding evaluation suite."""

import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from seqalign.errors import ConfigError
from seqalign.metrics import (
    MetricsConfig,
    MetricsReport,
    action_recognition,
    clip_vector,
    cross_activity_cosine,
    evaluate_suite,
    fit_linear_classifier,
    frame_retrieval_ap,
    kendall_tau,
    nearest_neighbor_assignment,
    phase_classification,
    phase_progress,
    split_sequences,
    tau_from_assignment,
    unit_normalize,
)


def tau_oracle(assignment) -> float:
    """Double-loop pair enumeration; ties count as discordant."""
    n = len(assignment)
    concordant = 0
    discordant = 0
    for i in range(n):
        for j in range(i + 1, n):
            if assignment[i] < assignment[j]:
                concordant += 1
            else:
                discordant += 1
    return (concordant - discordant) / (n * (n - 1) / 2)


def one_hot_corpus(num_activities=2, seqs_per=6, t=30, phases=3):
    embeddings, labels, activities = {}, {}, {}
    for a in range(num_activities):
        for i in range(seqs_per):
            sid = f"a{a}_s{i}"
            lab = np.repeat(np.arange(phases), t // phases)
            embeddings[sid] = np.eye(phases, dtype=np.float64)[lab]
            labels[sid] = lab
            activities[sid] = a
    return embeddings, labels, activities


# ---------------------------------------------------------------- kendall tau


def test_tau_identity_is_one():
    assert tau_from_assignment(np.arange(6)) == 1.0


def test_tau_reversed_is_minus_one():
    assert tau_from_assignment(np.arange(6)[::-1]) == -1.0


def test_tau_mixed_assignment_matches_hand_count():
    # pairs of [1,0,2,2]: (1,0) discordant, (1,2) x2 and (0,2) x2
    # concordant, the tied (2,2) discordant -> (4-2)/6
    assert tau_from_assignment(np.array([1, 0, 2, 2])) == pytest.approx(1 / 3)


def test_tau_matches_pair_enumeration_oracle_on_random_assignments():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(2, 21))
        assignment = rng.integers(0, 21, size=n)
        assert tau_from_assignment(assignment) == tau_oracle(assignment.tolist())


@given(st.lists(st.integers(0, 30), min_size=2, max_size=25))
def test_tau_stays_in_range_and_matches_oracle(assignment):
    tau = tau_from_assignment(np.array(assignment))
    assert -1.0 <= tau <= 1.0
    assert tau == tau_oracle(assignment)


def test_tau_rejects_single_frame():
    with pytest.raises(ValueError):
        tau_from_assignment(np.array([3]))


def test_nearest_neighbor_tie_takes_smaller_index():
    query = np.array([[3.0, 0.0]])
    bank = np.array([[1.0, 0.0], [1.0, 0.0]])
    assert nearest_neighbor_assignment(query, bank).tolist() == [0]


def test_kendall_tau_identity_embeddings():
    emb = np.eye(5)
    assert kendall_tau(emb, emb) == 1.0


def test_kendall_tau_reversed_embeddings():
    emb = np.eye(5)
    assert kendall_tau(emb, emb[::-1]) == -1.0


def test_kendall_tau_self_alignment_on_distinct_frames():
    rng = np.random.default_rng(3)
    emb = rng.normal(size=(9, 4))
    assert kendall_tau(emb, emb) == 1.0


def test_kendall_tau_averages_both_directions():
    rng = np.random.default_rng(5)
    a = rng.normal(size=(6, 3))
    b = rng.normal(size=(7, 3))
    forward = tau_from_assignment(nearest_neighbor_assignment(a, b))
    backward = tau_from_assignment(nearest_neighbor_assignment(b, a))
    assert kendall_tau(a, b) == (forward + backward) / 2


def test_kendall_tau_scale_invariant():
    rng = np.random.default_rng(8)
    a = rng.normal(size=(5, 4))
    b = rng.normal(size=(6, 4))
    assert kendall_tau(7.0 * a, 0.2 * b) == kendall_tau(a, b)


# ------------------------------------------------------- phase classification


def test_phase_probe_separable_embeddings_reach_full_accuracy():
    embeddings, labels, activities = one_hot_corpus()
    cfg = MetricsConfig(label_fractions=(1.0,), probe_epochs=200)
    acc = phase_classification(embeddings, labels, activities, cfg)
    assert acc[1.0] == 1.0


def test_phase_probe_noise_embeddings_sit_at_chance():
    rng = np.random.default_rng(11)
    phases, t = 3, 60
    embeddings, labels, activities = {}, {}, {}
    for i in range(10):
        sid = f"s{i}"
        embeddings[sid] = rng.normal(size=(t, 8))
        labels[sid] = np.repeat(np.arange(phases), t // phases)
        activities[sid] = 0
    cfg = MetricsConfig(label_fractions=(1.0,))
    acc = phase_classification(embeddings, labels, activities, cfg)[1.0]
    eval_frames = 3 * t  # 30% of 10 sequences
    sigma = math.sqrt((1 / phases) * (1 - 1 / phases) / eval_frames)
    assert abs(acc - 1 / phases) <= 3 * sigma


def test_phase_probe_warns_when_a_phase_is_missing_from_training():
    embeddings, labels, activities = {}, {}, {}
    for sid in ("tr0", "tr1", "ev0"):
        lab = np.array([0, 0, 0, 1, 1, 1] if sid != "ev0" else [0, 0, 1, 1, 2, 2])
        embeddings[sid] = np.eye(3, dtype=np.float64)[lab]
        labels[sid] = lab
        activities[sid] = 0
    cfg = MetricsConfig(label_fractions=(1.0,))
    with pytest.warns(UserWarning, match="missing"):
        phase_classification(
            embeddings, labels, activities, cfg, split=(["tr0", "tr1"], ["ev0"])
        )


def test_phase_probe_scale_invariant():
    embeddings, labels, activities = one_hot_corpus(seqs_per=4, t=12)
    rng = np.random.default_rng(2)
    for sid in embeddings:
        embeddings[sid] = embeddings[sid] + 0.1 * rng.normal(size=embeddings[sid].shape)
    scaled = {sid: 37.0 * emb for sid, emb in embeddings.items()}
    cfg = MetricsConfig(label_fractions=(0.5, 1.0), probe_epochs=100)
    assert phase_classification(embeddings, labels, activities, cfg) == pytest.approx(
        phase_classification(scaled, labels, activities, cfg)
    )


def test_probe_training_is_deterministic():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(30, 4))
    y = rng.integers(0, 3, size=30)
    w1, b1 = fit_linear_classifier(x, y, 3)
    w2, b2 = fit_linear_classifier(x, y, 3)
    assert np.array_equal(w1, w2)
    assert np.array_equal(b1, b2)


# --------------------------------------------------------- progress regression


def make_progress_corpus(signal: bool, seed: int = 4):
    rng = np.random.default_rng(seed)
    embeddings = {}
    ids = []
    for i in range(6):
        sid = f"s{i}"
        t = 20 + 3 * i
        noise = rng.normal(size=(t, 3))
        if signal:
            coord = np.arange(t) / (t - 1)
            embeddings[sid] = np.column_stack([coord, noise])
        else:
            embeddings[sid] = noise
        ids.append(sid)
    return embeddings, (ids[:4], ids[4:])


def test_progress_regression_recovers_embedded_coordinate():
    embeddings, split = make_progress_corpus(signal=True)
    assert phase_progress(embeddings, MetricsConfig(), split=split) == pytest.approx(
        1.0, abs=1e-9
    )


def test_progress_regression_ignores_constant_columns():
    embeddings, split = make_progress_corpus(signal=False)
    padded = {
        sid: np.hstack([emb, np.full((len(emb), 1), 5.0)])
        for sid, emb in embeddings.items()
    }
    base = phase_progress(embeddings, MetricsConfig(), split=split)
    assert abs(phase_progress(padded, MetricsConfig(), split=split) - base) <= 1e-9


def test_progress_regression_noise_scores_near_zero():
    embeddings, split = make_progress_corpus(signal=False)
    r2 = phase_progress(embeddings, MetricsConfig(), split=split)
    assert 0.0 <= r2 <= 0.15


def test_progress_regression_ridge_matches_plain_for_tiny_penalty():
    embeddings, split = make_progress_corpus(signal=True)
    plain = phase_progress(embeddings, MetricsConfig(), split=split)
    ridged = phase_progress(embeddings, MetricsConfig(ridge_strength=1e-10), split=split)
    assert ridged == pytest.approx(plain, abs=1e-6)


def test_progress_regression_rejects_constant_targets():
    embeddings = {"a": np.ones((1, 4)), "b": np.ones((1, 4)), "c": np.ones((3, 4))}
    with pytest.raises(ValueError, match="constant"):
        phase_progress(embeddings, MetricsConfig(), split=(["a", "b"], ["c"]))


def test_progress_regression_requires_split_or_activities():
    with pytest.raises(ValueError, match="split or activities"):
        phase_progress({"a": np.ones((3, 2))}, MetricsConfig())


# -------------------------------------------------------------- retrieval AP@K


def test_retrieval_identical_videos_hit_every_phase():
    lab = np.repeat(np.arange(3), 5)
    emb = np.eye(3, dtype=np.float64)[lab]
    ap, notes = frame_retrieval_ap(
        {"u": emb, "v": emb.copy()}, {"u": lab, "v": lab}, {"u": 0, "v": 0}, ks=(5,)
    )
    assert ap[5] == 1.0
    assert notes == []


def test_retrieval_excludes_own_video():
    emb = np.tile(np.array([1.0, 0.0]), (6, 1))
    ap, _ = frame_retrieval_ap(
        {"u": emb, "v": emb.copy()},
        {"u": np.zeros(6, dtype=int), "v": np.ones(6, dtype=int)},
        {"u": 0, "v": 0},
        ks=(3,),
    )
    assert ap[3] == 0.0


def test_retrieval_chance_level_with_random_labels():
    rng = np.random.default_rng(13)
    phases, t = 4, 40
    embeddings, labels, activities = {}, {}, {}
    for i in range(4):
        sid = f"s{i}"
        embeddings[sid] = rng.normal(size=(t, 6))
        labels[sid] = rng.permutation(np.repeat(np.arange(phases), t // phases))
        activities[sid] = 0
    ap, _ = frame_retrieval_ap(embeddings, labels, activities, ks=(5,))
    sigma = math.sqrt((1 / phases) * (1 - 1 / phases) / (4 * t * 5))
    assert abs(ap[5] - 1 / phases) <= 3 * sigma


def test_retrieval_notes_when_candidates_fall_short_of_k():
    lab = np.arange(3)
    emb = np.eye(3, dtype=np.float64)
    ap, notes = frame_retrieval_ap(
        {"u": emb, "v": emb.copy()}, {"u": lab, "v": lab}, {"u": 0, "v": 0}, ks=(5,)
    )
    # all 3 candidates get used; exactly one of them shares the query phase
    assert ap[5] == pytest.approx(1 / 3)
    assert any("only 3 candidates" in n for n in notes)


def test_retrieval_skips_singleton_activities():
    ap, notes = frame_retrieval_ap(
        {"u": np.eye(3)}, {"u": np.arange(3)}, {"u": 0}, ks=(2,)
    )
    assert math.isnan(ap[2])
    assert any("fewer than 2" in n for n in notes)


# ----------------------------------------------------------- action recognition


def test_clip_vector_mean_pool_of_constant_rows():
    emb = np.tile(np.array([2.0, 4.0]), (20, 1))
    assert clip_vector(emb, 16, "mean").tolist() == [2.0, 4.0]


def test_clip_vector_concat_samples_uniformly():
    emb = np.arange(40, dtype=np.float64).reshape(20, 2)
    vec = clip_vector(emb, 16, "concat")
    idx = np.round(np.linspace(0, 19, 16)).astype(int)
    assert vec.shape == (32,)
    assert vec.tolist() == emb[idx].reshape(-1).tolist()


def test_clip_vector_short_clip_repeats_frames():
    emb = np.arange(10, dtype=np.float64).reshape(5, 2)
    vec = clip_vector(emb, 16, "concat")
    assert vec.shape == (32,)
    assert vec[:2].tolist() == [0.0, 1.0]
    assert vec[-2:].tolist() == [8.0, 9.0]


def test_action_probe_constant_embeddings_reach_full_accuracy():
    embeddings, activities = {}, {}
    for a in range(3):
        for i in range(4):
            sid = f"a{a}_s{i}"
            embeddings[sid] = np.tile(np.eye(3)[a], (12, 1))
            activities[sid] = a
    assert action_recognition(embeddings, activities, MetricsConfig()) == 1.0


def test_action_probe_noise_embeddings_sit_at_chance():
    rng = np.random.default_rng(21)
    embeddings, activities = {}, {}
    for a in range(2):
        for i in range(40):
            sid = f"a{a}_s{i:02d}"
            embeddings[sid] = rng.normal(size=(20, 6))
            activities[sid] = a
    acc = action_recognition(embeddings, activities, MetricsConfig())
    eval_clips = 2 * 12  # 30% of 40 per activity
    sigma = math.sqrt(0.5 * 0.5 / eval_clips)
    assert abs(acc - 0.5) <= 3 * sigma


def test_action_probe_warns_on_single_training_clip():
    embeddings, activities = {}, {}
    for a in range(2):
        for i in range(2):
            sid = f"a{a}_s{i}"
            embeddings[sid] = np.tile(np.eye(2)[a], (8, 1))
            activities[sid] = a
    with pytest.warns(UserWarning, match="single training clip"):
        action_recognition(embeddings, activities, MetricsConfig())


# ------------------------------------------------------------ collapse indicator


def test_collapse_indicator_is_one_when_directions_coincide():
    emb = np.tile(np.array([1.0, 1.0]), (5, 1))
    value = cross_activity_cosine({"u": emb, "v": 3.0 * emb}, {"u": 0, "v": 1})
    assert value == pytest.approx(1.0, abs=1e-9)


def test_collapse_indicator_zero_for_orthogonal_activities():
    u = np.tile(np.array([1.0, 0.0]), (4, 1))
    v = np.tile(np.array([0.0, 1.0]), (6, 1))
    value = cross_activity_cosine({"u": u, "v": v}, {"u": 0, "v": 1})
    assert value == pytest.approx(0.0, abs=1e-12)


def test_collapse_indicator_matches_pairwise_oracle():
    rng = np.random.default_rng(30)
    embeddings = {f"s{i}": rng.normal(size=(int(rng.integers(3, 7)), 4)) for i in range(5)}
    activities = {f"s{i}": i % 3 for i in range(5)}
    groups: dict[int, list[np.ndarray]] = {}
    for sid in sorted(embeddings):
        groups.setdefault(activities[sid], []).append(unit_normalize(embeddings[sid]))
    stacked = {a: np.vstack(mats) for a, mats in groups.items()}
    keys = sorted(stacked)
    total, count = 0.0, 0
    for i, a in enumerate(keys):
        for b in keys[i + 1 :]:
            for x in stacked[a]:
                for y in stacked[b]:
                    total += float(x @ y)
                    count += 1
    value = cross_activity_cosine(embeddings, activities)
    assert value == pytest.approx(total / count, abs=1e-12)


def test_collapse_indicator_single_activity_is_nan():
    assert math.isnan(cross_activity_cosine({"u": np.eye(2)}, {"u": 0}))


# ------------------------------------------------------------------- plumbing


def test_unit_normalize_handles_zero_rows():
    out = unit_normalize(np.zeros((2, 3)))
    assert np.all(np.isfinite(out))
    assert out.tolist() == [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]


def test_split_is_disjoint_and_stratified():
    activities = {f"a{a}_s{i}": a for a in range(3) for i in range(10)}
    train_ids, eval_ids = split_sequences(activities, 0.7, seed=0)
    assert sorted(train_ids + eval_ids) == sorted(activities)
    assert not set(train_ids) & set(eval_ids)
    for a in range(3):
        assert sum(activities[s] == a for s in train_ids) == 7
        assert sum(activities[s] == a for s in eval_ids) == 3


def test_split_is_deterministic():
    activities = {f"s{i}": i % 2 for i in range(8)}
    assert split_sequences(activities, 0.7, 5) == split_sequences(activities, 0.7, 5)


def test_split_keeps_both_sides_nonempty_for_pairs():
    train_ids, eval_ids = split_sequences({"u": 0, "v": 0}, 0.9, seed=1)
    assert len(train_ids) == 1
    assert len(eval_ids) == 1


@pytest.mark.parametrize(
    "kwargs",
    [
        {"label_fractions": ()},
        {"label_fractions": (0.0,)},
        {"label_fractions": (1.5,)},
        {"probe_epochs": 0},
        {"probe_lr": 0.0},
        {"ridge_strength": -1.0},
        {"retrieval_ks": ()},
        {"retrieval_ks": (0,)},
        {"clip_frames": 0},
        {"clip_pool": "max"},
        {"train_fraction": 1.0},
    ],
)
def test_config_rejects_bad_values(kwargs):
    with pytest.raises(ConfigError):
        MetricsConfig(**kwargs).validate()


def test_report_save_writes_text_json_and_csv(tmp_path):
    report = MetricsReport(
        phase_accuracy={1.0: 0.9, 0.1: 0.5},
        progress_r2=0.8,
        kendall_tau=0.75,
        retrieval_ap={5: 0.6},
        action_accuracy=1.0,
        collapse_cross_cosine=0.1,
        pair_taus=[("u", "v", 0.75)],
        train_ids=["u"],
        eval_ids=["v"],
        notes=["note"],
    )
    path = tmp_path / "metrics.txt"
    report.save(path)
    text = path.read_text()
    assert "phase_accuracy@0.10=0.500000\n" in text
    assert "kendall_tau=0.750000\n" in text
    payload = json.loads((tmp_path / "metrics.json").read_text())
    assert payload["metrics"]["ap@5"] == 0.6
    assert payload["eval_ids"] == ["v"]
    rows = (tmp_path / "metrics.pairs.csv").read_text().splitlines()
    assert rows[0] == "sequence_a,sequence_b,kendall_tau"
    assert rows[1] == "u,v,0.750000"


def test_evaluate_suite_end_to_end_on_separable_corpus():
    rng = np.random.default_rng(2)
    embeddings, labels, activities = {}, {}, {}
    t = 24
    for a in range(2):
        for i in range(6):
            sid = f"a{a}_s{i}"
            lab = np.repeat(np.arange(3), t // 3)
            emb = np.column_stack(
                [
                    np.eye(3)[lab] + 0.01 * rng.normal(size=(t, 3)),
                    np.arange(t) / (t - 1),
                    np.full(t, float(a)),
                ]
            )
            embeddings[sid] = emb
            labels[sid] = lab
            activities[sid] = a
    cfg = MetricsConfig(retrieval_ks=(5,), label_fractions=(0.5, 1.0))
    report = evaluate_suite(embeddings, labels, activities, cfg)
    assert report.phase_accuracy[1.0] >= 0.9
    assert report.progress_r2 >= 0.99
    assert report.kendall_tau >= 0.9
    assert report.retrieval_ap[5] >= 0.9
    assert report.action_accuracy >= 0.99
    assert -1.0 <= report.collapse_cross_cosine <= 1.0
    assert len(report.train_ids) == 8
    assert len(report.eval_ids) == 4
    # pair taus cover exactly the same-activity eval pairs
    assert len(report.pair_taus) == 2
    for a, b, tau in report.pair_taus:
        assert activities[a] == activities[b]
        assert -1.0 <= tau <= 1.0


def test_evaluate_suite_requires_activity_for_every_sequence():
    with pytest.raises(ValueError, match="lack activity"):
        evaluate_suite(
            {"u": np.eye(3), "v": np.eye(3)},
            {"u": np.arange(3), "v": np.arange(3)},
            {"u": 0},
        )
