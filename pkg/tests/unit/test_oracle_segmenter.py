"""
Tests for the oracle segmenter's corridor corruptions and logit construction.
"""

import cv2
import numpy as np
import pytest

from app.core.exceptions import IncompatibleDimensionsError
from app.models.segmentation import CorruptionConfig, CorruptionMode, OracleConfig
from app.services.corridor_postprocess import row_runs
from app.services.oracle_segmenter import (
    apply_holes,
    full_lane,
    obstacle_bbox,
    segment,
    segment_mask,
)
from app.services.outlier_fusion import energy_from_logits

pytestmark = pytest.mark.unit


def test_clean_mode_returns_ground_truth(obstacle_scene):
    logits, mask = segment(obstacle_scene, CorruptionConfig())
    assert np.array_equal(mask, obstacle_scene.gt_corridor)
    assert mask is not obstacle_scene.gt_corridor
    assert logits.shape == (19, 270, 480)
    assert logits.dtype == np.float32


def test_wrap_continues_past_obstacle(obstacle_scene):
    mask = segment_mask(obstacle_scene, CorruptionConfig(modes="wrap"))
    top, left, bottom, right = obstacle_bbox(obstacle_scene)
    lane = full_lane(obstacle_scene)

    assert mask[:161].any()
    assert not (mask & ~lane).any()
    assert np.array_equal(mask[bottom + 1 :], lane[bottom + 1 :])
    assert not mask[top : bottom + 1, left : right + 1].any()
    assert mask[top : bottom + 1, left - 1].all() and mask[top : bottom + 1, right + 1].all()


def test_wrap_without_obstacle_is_identity(clean_scene):
    assert np.array_equal(segment_mask(clean_scene, CorruptionConfig(modes="wrap")), clean_scene.gt_corridor)


def test_miss_near_zero_equals_clean(obstacle_scene):
    clean = segment_mask(obstacle_scene, CorruptionConfig())
    assert np.array_equal(segment_mask(obstacle_scene, CorruptionConfig(modes="miss_near:0")), clean)


def test_miss_near_ignores_close_obstacles(make_scene):
    near = make_scene(25.0)
    far = make_scene(100.0)
    cfg = CorruptionConfig(modes="miss_near:60")
    assert np.array_equal(segment_mask(near, cfg), full_lane(near))
    assert np.array_equal(segment_mask(far, cfg), far.gt_corridor)


def test_wrap_keeps_earlier_holes(obstacle_scene):
    holed = segment_mask(obstacle_scene, CorruptionConfig(modes="holes:0.2"))
    wrapped = segment_mask(obstacle_scene, CorruptionConfig(modes="wrap"))
    both = segment_mask(obstacle_scene, CorruptionConfig(modes="holes:0.2,wrap"))
    bottom = obstacle_bbox(obstacle_scene)[2]

    assert (holed != obstacle_scene.gt_corridor).any()
    assert np.array_equal(both[bottom + 1 :], holed[bottom + 1 :])
    assert np.array_equal(both[: bottom + 1], wrapped[: bottom + 1])


def test_miss_near_keeps_earlier_holes(obstacle_scene):
    holed = segment_mask(obstacle_scene, CorruptionConfig(modes="holes:0.2"))
    both = segment_mask(obstacle_scene, CorruptionConfig(modes="holes:0.2,miss_near:60"))
    lane = full_lane(obstacle_scene)

    assert np.array_equal(both[161:], holed[161:])
    assert (lane[161:] & ~both[161:]).any()
    assert np.array_equal(both[:161], lane[:161])


def test_hole_count_is_binomial(rng):
    mask = np.zeros((420, 320), dtype=bool)
    mask[10:410, 10:310] = True
    interior = cv2.erode(mask.astype(np.uint8), np.ones((3, 3), np.uint8)).astype(bool)
    n = int(interior.sum())
    assert n >= 100_000

    holed = apply_holes(mask, rng, 0.01)
    flipped = int((mask & ~holed).sum())
    sigma = np.sqrt(n * 0.01 * 0.99)
    assert abs(flipped - n * 0.01) <= 3 * sigma
    assert not (holed & ~interior & ~mask).any()
    assert np.array_equal(holed[~interior], mask[~interior])


def test_corruptions_are_deterministic(obstacle_scene):
    cfg = CorruptionConfig(modes="holes:0.05,edge_jitter:2", rng_seed=4)
    a = segment_mask(obstacle_scene, cfg)
    b = segment_mask(obstacle_scene, cfg)
    assert np.array_equal(a, b)
    other = segment_mask(obstacle_scene, cfg.model_copy(update={"rng_seed": 5}))
    assert not np.array_equal(a, other)


def test_edge_jitter_keeps_one_run_per_row(obstacle_scene):
    mask = segment_mask(obstacle_scene, CorruptionConfig(modes="edge_jitter:2"))
    rows, _, _ = row_runs(mask)
    assert len(rows) == len(np.unique(rows))
    assert np.array_equal(mask.any(axis=1), obstacle_scene.gt_corridor.any(axis=1))


def test_obstacle_logits_have_low_logsumexp(obstacle_scene):
    oracle = OracleConfig()
    logits, _ = segment(obstacle_scene, CorruptionConfig(), oracle)
    lse = -energy_from_logits(logits)
    median = np.median(lse)
    assert (lse[obstacle_scene.gt_obstacle] <= median - oracle.energy_gap).all()
    assert lse[obstacle_scene.gt_obstacle] == pytest.approx(oracle.outlier_logsumexp, abs=1e-5)
    assert (lse[~obstacle_scene.gt_obstacle] >= oracle.inlier_margin).all()


def test_true_class_switches_at_horizon(clean_scene):
    oracle = OracleConfig()
    logits, _ = segment(clean_scene, CorruptionConfig(), oracle)
    assert logits[oracle.sky_channel, 0, 0] == oracle.inlier_margin
    assert logits[oracle.road_class, 0, 0] == 0.0
    assert logits[oracle.road_class, 269, 0] == oracle.inlier_margin


def test_far_noise_only_beyond_min_distance(clean_scene):
    cfg = CorruptionConfig(modes=[CorruptionMode.parse("far_noise:0.5:100")])
    logits, mask = segment(clean_scene, cfg)
    noisy = energy_from_logits(logits) > -2.0
    rows = np.flatnonzero(noisy.any(axis=1))
    assert rows.size
    assert rows.max() < 142
    assert np.array_equal(mask, clean_scene.gt_corridor)


def test_mismatched_rasters_rejected(obstacle_scene):
    broken = obstacle_scene.model_copy(update={"gt_corridor": np.zeros((10, 10), dtype=bool)})
    with pytest.raises(IncompatibleDimensionsError):
        segment(broken, CorruptionConfig())


def test_corruption_labels_round_trip():
    for text in ["clean", "wrap", "miss_near:60", "holes:0.005", "edge_jitter:1.5", "far_noise:0.0005:150"]:
        assert CorruptionMode.parse(text).label() == text
    assert CorruptionConfig(modes="wrap,holes:0.01").label() == "wrap+holes:0.01"
    with pytest.raises(ValueError):
        CorruptionMode.parse("melt:3")
