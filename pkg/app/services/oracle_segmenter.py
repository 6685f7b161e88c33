"""
Oracle segmenter: deterministic stand-in for the segmentation network.

The corridor head returns the ground-truth corridor passed through an ordered
list of geometric corruptions; the semantic head returns class logits with a
high-margin true class everywhere except at obstacle pixels (and injected noise
patches), where every class gets the same low score.
"""

from typing import Optional, Tuple

import cv2
import numpy as np

from app.core.exceptions import GeometryError, IncompatibleDimensionsError
from app.core.logging import get_logger
from app.models.scene import SceneRecord
from app.models.segmentation import CorruptionConfig, CorruptionMode, OracleConfig
from app.services import camera_geometry as geo
from app.services.scene_generator import (
    corridor_top_row,
    first_row_at_or_below,
    rasterize_lane,
)

logger = get_logger(__name__)

_INTERIOR_KERNEL = np.ones((3, 3), dtype=np.uint8)


def _check_dimensions(scene: SceneRecord) -> None:
    shape = scene.meta.camera.shape
    shapes = {
        "image": scene.image.shape[:2],
        "gt_corridor": scene.gt_corridor.shape,
        "gt_obstacle": scene.gt_obstacle.shape,
    }
    bad = {name: list(s) for name, s in shapes.items() if tuple(s) != shape}
    if bad:
        raise IncompatibleDimensionsError(
            f"Scene {scene.meta.scene_id} rasters do not match the camera {shape}",
            {"camera": list(shape), **bad},
        )


def scene_rng(cfg: CorruptionConfig, scene: SceneRecord) -> np.random.Generator:
    """Corruption stream of one scene: depends on the config seed and the scene seed."""
    return np.random.default_rng(np.random.SeedSequence([cfg.rng_seed, scene.meta.seed]))


def full_lane(scene: SceneRecord) -> np.ndarray:
    """Ego-lane up to the corridor range, ignoring the obstacle."""
    cam = scene.meta.camera
    return rasterize_lane(cam, scene.meta.lane_width, corridor_top_row(cam, scene.meta.max_corridor_range))


def obstacle_bbox(scene: SceneRecord) -> Optional[Tuple[int, int, int, int]]:
    """``(top, left, bottom, right)`` of the ground-truth obstacle, inclusive."""
    rows = np.flatnonzero(scene.gt_obstacle.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(scene.gt_obstacle.any(axis=0))
    return int(rows[0]), int(cols[0]), int(rows[-1]), int(cols[-1])


def apply_miss_near(mask: np.ndarray, scene: SceneRecord, d_threshold: float) -> np.ndarray:
    """
    The corridor head overlooks obstacles closer than ``d_threshold``: the lane
    beyond the obstacle is added to ``mask``; nearer rows are left as they are.
    """
    obstacle = scene.meta.obstacle
    if obstacle is None or obstacle.distance >= d_threshold:
        return mask
    beyond = full_lane(scene)
    gt_rows = np.flatnonzero(scene.gt_corridor.any(axis=1))
    if gt_rows.size:
        beyond[gt_rows[0] :] = False
    return mask | beyond


def apply_wrap(mask: np.ndarray, scene: SceneRecord, ribbon_fraction: float) -> np.ndarray:
    """
    Corridor that flows around the obstacle and continues past it: two ribbons
    beside it and a tongue beyond it replace the rows of ``mask`` from the
    obstacle's lowest row up; nearer rows are kept.
    """
    bbox = obstacle_bbox(scene)
    if scene.meta.obstacle is None or bbox is None:
        return mask
    top, left, bottom, right = bbox
    lane = full_lane(scene)
    height, width = lane.shape
    cols = np.arange(width)

    out = mask.copy()
    lane_px = lane[min(bottom + 1, height - 1)].sum()
    ribbon = max(1, int(round(ribbon_fraction * lane_px)))

    beside = ((cols >= left - ribbon) & (cols < left)) | ((cols > right) & (cols <= right + ribbon))
    out[top : bottom + 1] = lane[top : bottom + 1] & beside[None, :]

    center = (left + right) / 2
    reach = (right - left) / 2 + ribbon
    tongue = np.abs(cols - center) <= reach
    out[:top] = lane[:top] & tongue[None, :]
    return out


def apply_holes(mask: np.ndarray, rng: np.random.Generator, p: float) -> np.ndarray:
    """Flip interior corridor pixels to background independently with probability ``p``."""
    if p <= 0 or not mask.any():
        return mask
    interior = cv2.erode(mask.astype(np.uint8), _INTERIOR_KERNEL).astype(bool)
    flips = (rng.random(mask.shape) < p) & interior
    return mask & ~flips


def apply_edge_jitter(mask: np.ndarray, rng: np.random.Generator, sigma: float) -> np.ndarray:
    """Move each row's left and right corridor edge by a rounded Gaussian shift."""
    if sigma <= 0:
        return mask
    height, width = mask.shape
    shifts = np.rint(rng.normal(0.0, sigma, size=(height, 2))).astype(np.int64)
    occupied = mask.any(axis=1)
    if not occupied.any():
        return mask

    left = mask.argmax(axis=1)
    right = width - 1 - mask[:, ::-1].argmax(axis=1)
    new_left = np.clip(left + shifts[:, 0], 0, width - 1)
    new_right = np.clip(right + shifts[:, 1], 0, width - 1)

    cols = np.arange(width)[None, :]
    keep = (cols >= new_left[:, None]) & (cols <= new_right[:, None])
    grow = ((cols >= new_left[:, None]) & (cols < left[:, None])) | (
        (cols > right[:, None]) & (cols <= new_right[:, None])
    )
    out = (mask & keep) | grow
    out[~occupied] = False
    return out


def _noise_patches(
    scene: SceneRecord, rng: np.random.Generator, mode: CorruptionMode, patch: int
) -> np.ndarray:
    """Square patches seeded in the lane beyond ``min_distance``."""
    cam = scene.meta.camera
    lane = full_lane(scene)
    min_distance = mode.min_distance or 150.0
    try:
        last_row = first_row_at_or_below(geo.ground_row_for_distance(cam, min_distance))
    except GeometryError:
        return np.zeros(cam.shape, dtype=bool)
    lane[last_row:] = False

    seeds = lane & (rng.random(cam.shape) < (mode.density or 0.0))
    if not seeds.any():
        return seeds
    grown = cv2.dilate(seeds.astype(np.uint8), np.ones((patch, patch), dtype=np.uint8))
    return grown.astype(bool) & (np.arange(cam.height)[:, None] < last_row)


def segment_mask(scene: SceneRecord, cfg: CorruptionConfig) -> np.ndarray:
    """Corridor head only."""
    _check_dimensions(scene)
    rng = scene_rng(cfg, scene)
    mask = scene.gt_corridor.copy()
    for mode in cfg.modes:
        if mode.kind == "miss_near":
            mask = apply_miss_near(mask, scene, mode.d_threshold or 0.0)
        elif mode.kind == "wrap":
            mask = apply_wrap(mask, scene, cfg.wrap_ribbon)
        elif mode.kind == "holes":
            mask = apply_holes(mask, rng, mode.p or 0.0)
        elif mode.kind == "edge_jitter":
            mask = apply_edge_jitter(mask, rng, mode.sigma or 0.0)
    return mask


def build_logits(
    scene: SceneRecord,
    oracle: OracleConfig,
    outliers: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    ``(K, H, W)`` float32 logits.

    Inlier pixels: ``inlier_margin`` on the true class (sky above the horizon,
    road below), 0 elsewhere. Outlier pixels: every class at
    ``outlier_logsumexp - log K``, so their log-sum-exp is ``outlier_logsumexp``.
    """
    cam = scene.meta.camera
    height, width = cam.shape
    k = oracle.num_classes
    logits = np.zeros((k, height, width), dtype=np.float32)

    sky_rows = int(np.clip(first_row_at_or_below(geo.horizon_row(cam) - 0.5), 0, height))
    logits[oracle.sky_channel, :sky_rows] = oracle.inlier_margin
    logits[oracle.road_class, sky_rows:] = oracle.inlier_margin

    marked = scene.gt_obstacle if outliers is None else (scene.gt_obstacle | outliers)
    if marked.any():
        logits[:, marked] = np.float32(oracle.outlier_logsumexp - np.log(k))
    return logits


def oracle_energy(
    scene: SceneRecord,
    oracle: OracleConfig,
    outliers: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Free-energy map of ``build_logits`` in closed form, without building the
    ``(K, H, W)`` logits: inliers sit at ``-log(exp(margin) + K - 1)``,
    outliers at ``-outlier_logsumexp``.
    """
    k = oracle.num_classes
    inlier = -(oracle.inlier_margin + np.log1p((k - 1) * np.exp(-oracle.inlier_margin)))
    energy = np.full(scene.meta.camera.shape, inlier, dtype=np.float32)
    marked = scene.gt_obstacle if outliers is None else (scene.gt_obstacle | outliers)
    energy[marked] = -oracle.outlier_logsumexp
    return energy


def _far_noise(scene: SceneRecord, cfg: CorruptionConfig) -> Optional[np.ndarray]:
    noise_modes = [m for m in cfg.modes if m.kind == "far_noise"]
    if not noise_modes:
        return None
    # Separate stream so adding far_noise leaves the mask corruptions unchanged
    rng = np.random.default_rng(np.random.SeedSequence([cfg.rng_seed, scene.meta.seed, 1]))
    noise = np.zeros(scene.meta.camera.shape, dtype=bool)
    for mode in noise_modes:
        noise |= _noise_patches(scene, rng, mode, cfg.noise_patch_px)
    return noise


def segment(
    scene: SceneRecord,
    cfg: CorruptionConfig,
    oracle: Optional[OracleConfig] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``(logits, corridor_mask)`` for one scene."""
    oracle = oracle or OracleConfig()
    mask = segment_mask(scene, cfg)
    logits = build_logits(scene, oracle, _far_noise(scene, cfg))
    logger.debug(
        "Segmented scene",
        scene_id=scene.meta.scene_id,
        corruption=cfg.label(),
        corridor_pixels=int(mask.sum()),
    )
    return logits, mask


def segment_energy(
    scene: SceneRecord,
    cfg: CorruptionConfig,
    oracle: Optional[OracleConfig] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``(energy, corridor_mask)``; same result as ``segment`` followed by the energy stage."""
    oracle = oracle or OracleConfig()
    mask = segment_mask(scene, cfg)
    return oracle_energy(scene, oracle, _far_noise(scene, cfg)), mask
