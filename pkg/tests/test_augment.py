"""Augmentation views: index bookkeeping, overlap guarantees, spatial maps."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqalign.augment import (
    AugmentConfig,
    AugmentedView,
    SpatialConfig,
    augment_view,
    copy_config,
    dual_augment,
    identity_view,
    spatial_transform,
    temporal_drop,
    trim,
)
from seqalign.data import FeatureSequence
from seqalign.errors import AugmentationError, ConfigError


def seq(t=10, d=4, seed=0, sid="s"):
    rng = np.random.default_rng(seed)
    return FeatureSequence(rng.normal(size=(t, d)).astype(np.float32), sequence_id=sid)


# -- config ------------------------------------------------------------------


def test_config_validation():
    AugmentConfig().validate()
    with pytest.raises(ConfigError):
        AugmentConfig(trim_min_fraction=0.0).validate()
    with pytest.raises(ConfigError):
        AugmentConfig(keep_prob_min=0.9, keep_prob_max=0.5).validate()
    with pytest.raises(ConfigError):
        AugmentConfig(min_overlap_frames=0).validate()
    with pytest.raises(ConfigError):
        AugmentConfig(modality="audio").validate()
    with pytest.raises(ConfigError):
        AugmentConfig(
            modality="skeleton", spatial=SpatialConfig(flip_probability=0.5)
        ).validate()
    AugmentConfig(
        modality="skeleton",
        spatial=SpatialConfig(flip_probability=0.5, joint_mirror_permutation=[0]),
    ).validate()


def test_copy_config_replaces_fields():
    cfg = AugmentConfig()
    derived = copy_config(cfg, trim_enabled=False)
    assert cfg.trim_enabled and not derived.trim_enabled


# -- building blocks ---------------------------------------------------------


def test_identity_view():
    s = seq(5)
    view = identity_view(s)
    np.testing.assert_array_equal(view.index_map, [0, 1, 2, 3, 4])
    np.testing.assert_array_equal(view.features, s.features)
    assert view.features is not s.features


def test_view_requires_matching_lengths():
    with pytest.raises(ValueError):
        AugmentedView(features=np.zeros((3, 2)), index_map=np.arange(4))


def test_trim_window_semantics():
    view = trim(identity_view(seq(8)), (2, 5))
    # half-open [2, 5) keeps original indices 2, 3, 4
    np.testing.assert_array_equal(view.index_map, [2, 3, 4])
    assert view.length == 3


def test_trim_rejects_bad_windows():
    view = identity_view(seq(8))
    for window in [(-1, 4), (5, 5), (4, 2), (0, 9), (3, 4)]:
        with pytest.raises(ValueError):
            trim(view, window)


def test_trim_then_drop_composes_index_maps():
    view = trim(identity_view(seq(8)), (1, 6))

    class FixedRng:
        def random(self, n):
            # keep positions 0 and 2 of the trimmed view
            return np.array([0.0, 0.9, 0.0, 0.9, 0.9])

    out = temporal_drop(view, 0.5, FixedRng())
    # original indices 1 and 3 survive the composition
    np.testing.assert_array_equal(out.index_map, [1, 3])


def test_temporal_drop_forces_two_frames():
    view = identity_view(seq(6))

    class DropAll:
        def random(self, n):
            return np.ones(n)

    out = temporal_drop(view, 0.01, DropAll())
    np.testing.assert_array_equal(out.index_map, [0, 5])


def test_temporal_drop_keep_probability_statistics():
    view = identity_view(seq(40))
    rng = np.random.default_rng(0)
    keep_prob = 0.7
    total = 0
    trials = 400
    for _ in range(trials):
        total += temporal_drop(view, keep_prob, rng).length
    n = 40 * trials
    observed = total / n
    sigma = np.sqrt(keep_prob * (1 - keep_prob) / n)
    # allow 4 sigma plus the forced-endpoint bias, which is tiny at p=0.7
    assert abs(observed - keep_prob) < 4 * sigma + 1e-3


def test_temporal_drop_never_reorders():
    view = identity_view(seq(30))
    rng = np.random.default_rng(1)
    for _ in range(50):
        out = temporal_drop(view, 0.4, rng)
        assert np.all(np.diff(out.index_map) > 0)
        assert out.length >= 2


# -- spatial transforms ------------------------------------------------------


def skeleton_seq(t=6, joints=4, seed=3):
    rng = np.random.default_rng(seed)
    return FeatureSequence(rng.normal(size=(t, joints * 3)).astype(np.float32), sequence_id="sk")


def test_spatial_preserves_index_map_and_shape():
    s = skeleton_seq()
    view = identity_view(s)
    out = spatial_transform(view, SpatialConfig(), np.random.default_rng(0))
    assert out.features.shape == view.features.shape
    np.testing.assert_array_equal(out.index_map, view.index_map)
    assert not np.allclose(out.features, view.features)


def test_spatial_rotation_preserves_pairwise_distances():
    s = skeleton_seq()
    view = identity_view(s)
    cfg = SpatialConfig(translation_sigma=0.0)
    out = spatial_transform(view, cfg, np.random.default_rng(5))
    a = view.features.reshape(view.length, -1, 3)
    b = out.features.reshape(view.length, -1, 3)
    # rigid motion: all inter-joint distances survive
    da = np.linalg.norm(a[:, :, None, :] - a[:, None, :, :], axis=-1)
    db = np.linalg.norm(b[:, :, None, :] - b[:, None, :, :], axis=-1)
    np.testing.assert_allclose(da, db, atol=1e-4)


def test_spatial_rotation_fixes_vertical_axis():
    s = skeleton_seq()
    view = identity_view(s)
    cfg = SpatialConfig(translation_sigma=0.0)
    out = spatial_transform(view, cfg, np.random.default_rng(5))
    a = view.features.reshape(view.length, -1, 3)
    b = out.features.reshape(view.length, -1, 3)
    np.testing.assert_allclose(a[:, :, 1], b[:, :, 1], atol=1e-5)


def test_spatial_rotation_angle_bounded():
    cfg = SpatialConfig(angle_max_deg=15.0, translation_sigma=0.0)
    one_joint = FeatureSequence(np.tile([1.0, 0.0, 0.0], (4, 1)).astype(np.float32))
    for fseed in range(30):
        out = spatial_transform(identity_view(one_joint), cfg, np.random.default_rng(fseed))
        x, _, z = out.features[0]
        angle = np.degrees(np.arctan2(z, x))
        assert abs(angle) <= 15.0 + 1e-6


def test_mirror_flip_is_involution_on_coordinates():
    cfg = SpatialConfig(
        angle_max_deg=0.0,
        translation_sigma=0.0,
        flip_probability=1.0,
        joint_mirror_permutation=[1, 0, 3, 2],
    )
    s = skeleton_seq(joints=4)
    view = identity_view(s)
    once = spatial_transform(view, cfg, np.random.default_rng(0))
    twice = spatial_transform(once, cfg, np.random.default_rng(1))
    np.testing.assert_allclose(twice.features, view.features, atol=1e-5)


def test_mirror_flip_requires_valid_permutation():
    cfg = SpatialConfig(flip_probability=1.0, joint_mirror_permutation=[0, 0, 1, 2])
    with pytest.raises(ConfigError):
        spatial_transform(identity_view(skeleton_seq(joints=4)), cfg, np.random.default_rng(0))


def test_spatial_rejects_non_triplet_features():
    with pytest.raises(ConfigError):
        spatial_transform(identity_view(seq(4, 5)), SpatialConfig(), np.random.default_rng(0))


def test_shared_translation_across_frames():
    cfg = SpatialConfig(angle_max_deg=0.0, translation_sigma=0.5)
    s = skeleton_seq()
    view = identity_view(s)
    out = spatial_transform(view, cfg, np.random.default_rng(2))
    delta = (out.features - view.features).reshape(view.length, -1, 3)
    # one offset per view: identical across frames and joints
    first = delta[0, 0]
    np.testing.assert_allclose(delta, np.broadcast_to(first, delta.shape), atol=1e-5)


# -- single-view pipeline ----------------------------------------------------


def test_augment_view_dense_never_alters_values():
    s = seq(20, 5, seed=4)
    rng = np.random.default_rng(0)
    for _ in range(25):
        view = augment_view(s, AugmentConfig(), rng)
        np.testing.assert_array_equal(view.features, s.features[view.index_map])


def test_augment_view_respects_trim_fraction():
    s = seq(20, 3)
    cfg = AugmentConfig(trim_min_fraction=0.5, keep_prob_min=1.0, keep_prob_max=1.0)
    rng = np.random.default_rng(1)
    for _ in range(50):
        view = augment_view(s, cfg, rng)
        assert view.length >= 10
        # trim keeps a contiguous block when no frames are dropped
        np.testing.assert_array_equal(np.diff(view.index_map), np.ones(view.length - 1))


def test_skeleton_modality_skips_trim():
    s = skeleton_seq(t=12)
    cfg = AugmentConfig(modality="skeleton", keep_prob_min=1.0, keep_prob_max=1.0)
    view = augment_view(s, cfg, np.random.default_rng(0))
    np.testing.assert_array_equal(view.index_map, np.arange(12))


# -- dual augmentation -------------------------------------------------------


def test_dual_augment_tags_views():
    a, b = dual_augment(seq(16), AugmentConfig(min_overlap_frames=2), np.random.default_rng(0))
    assert a.view_tag == "prime"
    assert b.view_tag == "double_prime"


def test_dual_augment_rejects_short_sequences():
    with pytest.raises(ValueError):
        dual_augment(seq(3), AugmentConfig(), np.random.default_rng(0))


def test_dual_augment_error_names_sequence():
    s = seq(10, sid="stubborn")
    cfg = AugmentConfig(min_overlap_frames=11, max_attempts=3)
    with pytest.raises(AugmentationError) as exc:
        dual_augment(s, cfg, np.random.default_rng(0))
    assert "stubborn" in str(exc.value)


def test_dual_augment_longer_and_shorter_views_both_occur():
    s = seq(24, 4, seed=6)
    cfg = AugmentConfig(min_overlap_frames=4)
    rng = np.random.default_rng(2)
    saw_a_longer = saw_b_longer = False
    for _ in range(100):
        a, b = dual_augment(s, cfg, rng)
        saw_a_longer |= a.length > b.length
        saw_b_longer |= b.length > a.length
    assert saw_a_longer and saw_b_longer


@settings(max_examples=60, deadline=None)
@given(st.integers(24, 80), st.integers(0, 10_000))
def test_dual_augment_invariants(t, rng_seed):
    s = FeatureSequence(
        np.random.default_rng(rng_seed).normal(size=(t, 6)).astype(np.float32),
        sequence_id=f"hseq_{t}_{rng_seed}",
    )
    cfg = AugmentConfig()
    a, b = dual_augment(s, cfg, np.random.default_rng(rng_seed + 1))
    for view in (a, b):
        assert np.all(np.diff(view.index_map) > 0)
        assert view.index_map[0] >= 0
        assert view.index_map[-1] < t
        np.testing.assert_array_equal(view.features, s.features[view.index_map])
    overlap = np.intersect1d(a.index_map, b.index_map).size
    assert overlap >= cfg.min_overlap_frames
