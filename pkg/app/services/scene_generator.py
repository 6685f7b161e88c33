"""
Synthetic test-track scenes.

A scene is a straight flat road seen by the pinhole camera, optionally with one
lost-cargo sprite standing on the ego-lane. The ground-truth corridor is the
ego-lane up to the corridor range, cut at the obstacle's near-edge ground row.
"""

import math
import time
from pathlib import Path
from typing import List, Optional, Tuple

import cv2
import numpy as np

from app.core.exceptions import (
    EmptySpriteError,
    GeometryError,
    InfeasibleConstraintsError,
    InsufficientSpritesError,
    PlacementOffImageError,
)
from app.core.logging import get_logger, log_performance
from app.core.raster_io import write_image, write_mask
from app.core.records import write_manifest, write_scene_meta
from app.models.camera import CameraModel
from app.models.pipeline import ManifestEntry, ProtocolConfig
from app.models.scene import (
    ObstaclePlacement,
    ResolvedPlacement,
    ScenarioSpec,
    SceneMeta,
    SceneRecord,
    Sprite,
)
from app.services import camera_geometry as geo
from app.services.batch_runner import run_ordered
from app.services.sprite_library import SpriteLibrary, get_sprite_library

logger = get_logger(__name__)

# Rows computed from floating-point geometry are snapped within this tolerance
ROW_EPS = 1e-6

SKY_TOP = np.array([110, 160, 225], dtype=np.float32)
SKY_HORIZON = np.array([200, 220, 240], dtype=np.float32)
ASPHALT = np.array([92, 92, 96], dtype=np.float32)
GRASS = np.array([74, 112, 58], dtype=np.float32)
MARKING = np.array([235, 235, 235], dtype=np.float32)
MARKING_WIDTH = 0.15  # m
ROAD_LANES = 3

SCENE_FILES = ("image.png", "gt_corridor.png", "gt_obstacle.png", "meta")


def first_row_at_or_below(row: float) -> int:
    """Smallest integer pixel row ``r`` with ``r >= row`` (within ``ROW_EPS``)."""
    return int(math.ceil(row - ROW_EPS))


def lateral_grid(cam: CameraModel, first_row: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Metric lateral position of every pixel center from ``first_row`` down.

    Returns ``(rows, lateral)`` with ``lateral`` of shape ``(len(rows), width)``.
    """
    rows = np.arange(max(first_row, 0), cam.height)
    distances = geo.distances_for_rows(cam, rows + 0.5)
    depth = geo.optical_depth(cam, distances)
    cols = np.arange(cam.width) + 0.5 - cam.principal_col
    lateral = cols[None, :] * (np.asarray(depth)[:, None] / cam.focal_length)
    return rows, lateral


def corridor_top_row(cam: CameraModel, max_range: float) -> int:
    """First pixel row of a full-range corridor."""
    try:
        row = geo.ground_row_for_distance(cam, max_range)
    except GeometryError:
        row = geo.horizon_row(cam)
    return max(first_row_at_or_below(row), first_row_at_or_below(geo.horizon_row(cam)), 0)


def rasterize_lane(cam: CameraModel, lane_width: float, top_row: int) -> np.ndarray:
    """Ego-lane mask from ``top_row`` to the bottom of the image (pixel centers)."""
    mask = np.zeros(cam.shape, dtype=bool)
    first = max(top_row, first_row_at_or_below(geo.horizon_row(cam)), 0)
    if first >= cam.height:
        return mask
    rows, lateral = lateral_grid(cam, first)
    mask[rows] = np.abs(lateral) <= lane_width / 2
    return mask


def render_background(cam: CameraModel, lane_width: float, rng: np.random.Generator) -> np.ndarray:
    """Sky, grass, a three-lane asphalt road and white lane markings."""
    height, width = cam.shape
    image = np.empty((height, width, 3), dtype=np.float32)

    horizon = geo.horizon_row(cam)
    sky_rows = int(np.clip(math.ceil(horizon), 0, height))
    if sky_rows:
        t = np.linspace(0.0, 1.0, sky_rows, dtype=np.float32)[:, None]
        image[:sky_rows] = (SKY_TOP * (1 - t) + SKY_HORIZON * t)[:, None, :]

    if sky_rows < height:
        rows, lateral = lateral_grid(cam, sky_rows)
        ground = np.broadcast_to(GRASS, (len(rows), width, 3)).copy()
        half_road = lane_width * ROAD_LANES / 2
        ground[np.abs(lateral) <= half_road] = ASPHALT
        for k in range(-(ROAD_LANES // 2), ROAD_LANES // 2 + 2):
            line = (k - 0.5) * lane_width
            ground[np.abs(lateral - line) <= MARKING_WIDTH / 2] = MARKING
        image[rows] = ground

    image += rng.normal(0.0, 3.0, size=(height, width, 1)).astype(np.float32)
    return np.clip(np.rint(image), 0, 255).astype(np.uint8)


def resolve_placement(cam: CameraModel, placement: ObstaclePlacement) -> ResolvedPlacement:
    """Project a metric placement to pixel size, column and bottom row."""
    try:
        near_row = geo.ground_row_for_distance(cam, placement.distance)
        width = geo.pixel_extent_at_distance(cam, placement.physical_width, placement.distance)
        height = geo.pixel_extent_at_distance(cam, placement.physical_height, placement.distance)
        center = float(geo.column_for_lateral(cam, placement.lateral_offset, placement.distance))
    except GeometryError as e:
        raise PlacementOffImageError(
            f"Obstacle at {placement.distance} m cannot be placed: {e.message}",
            {"distance": placement.distance},
        ) from e

    return ResolvedPlacement(
        width_px=max(1, int(round(width))),
        height_px=max(1, int(round(height))),
        rotation=placement.rotation,
        center_col=center,
        bottom_row=first_row_at_or_below(near_row) - 1,
    )


def warp_sprite(sprite: Sprite, placement: ResolvedPlacement) -> Tuple[np.ndarray, np.ndarray]:
    """
    Scale and rotate a sprite to its placement.

    Returns float32 ``rgb`` (h, w, 3) in [0, 255] and ``alpha`` (h, w) in [0, 1],
    tight around the non-zero opacity; both are empty for a transparent sprite.
    """
    if sprite.rgba.shape[0] == 0 or sprite.rgba.shape[1] == 0:
        raise EmptySpriteError(f"Sprite {sprite.sprite_id} has no pixels", {"sprite_id": sprite.sprite_id})

    native_w, _ = sprite.native_size
    target = (placement.width_px, placement.height_px)
    interpolation = cv2.INTER_AREA if target[0] < native_w else cv2.INTER_LINEAR
    rgba = cv2.resize(sprite.rgba.astype(np.float32), target, interpolation=interpolation)
    rgba = rgba.reshape(placement.height_px, placement.width_px, 4)

    if placement.rotation:
        h, w = rgba.shape[:2]
        matrix = cv2.getRotationMatrix2D((w / 2, h / 2), placement.rotation, 1.0)
        cos, sin = abs(matrix[0, 0]), abs(matrix[0, 1])
        out_w = int(math.ceil(h * sin + w * cos))
        out_h = int(math.ceil(h * cos + w * sin))
        matrix[0, 2] += out_w / 2 - w / 2
        matrix[1, 2] += out_h / 2 - h / 2
        rgba = cv2.warpAffine(
            rgba, matrix, (out_w, out_h), flags=cv2.INTER_LINEAR,
            borderMode=cv2.BORDER_CONSTANT, borderValue=(0, 0, 0, 0),
        ).reshape(out_h, out_w, 4)

    alpha = np.clip(rgba[:, :, 3] / 255.0, 0.0, 1.0)
    visible = alpha > 0.5 / 255
    rows = np.flatnonzero(visible.any(axis=1))
    cols = np.flatnonzero(visible.any(axis=0))
    if rows.size == 0:
        return np.zeros((0, 0, 3), np.float32), np.zeros((0, 0), np.float32)
    window = (slice(rows[0], rows[-1] + 1), slice(cols[0], cols[-1] + 1))
    return rgba[window][:, :, :3], alpha[window].astype(np.float32)


def _image_window(
    placement: ResolvedPlacement, size: Tuple[int, int], image_shape: Tuple[int, int]
) -> Tuple[Tuple[slice, slice], Tuple[slice, slice]]:
    """Overlap of the sprite box with the image: (image window, sprite window)."""
    h, w = size
    top = placement.bottom_row - (h - 1)
    left = int(round(placement.center_col - w / 2))
    y0, x0 = max(top, 0), max(left, 0)
    y1, x1 = min(top + h, image_shape[0]), min(left + w, image_shape[1])
    if y0 >= y1 or x0 >= x1:
        raise PlacementOffImageError(
            "Sprite box does not intersect the image",
            {"top": top, "left": left, "height": h, "width": w},
        )
    return (
        (slice(y0, y1), slice(x0, x1)),
        (slice(y0 - top, y1 - top), slice(x0 - left, x1 - left)),
    )


def feather_alpha(alpha: np.ndarray, radius: int) -> np.ndarray:
    """Soften the opacity border: ``alpha * blur(alpha)`` with zero padding."""
    if radius <= 0:
        return alpha
    padded = cv2.copyMakeBorder(alpha, radius, radius, radius, radius, cv2.BORDER_CONSTANT, value=0)
    blurred = cv2.GaussianBlur(padded, (2 * radius + 1, 2 * radius + 1), radius / 2.0)
    return alpha * blurred[radius:-radius, radius:-radius]


def composite_object(
    image: np.ndarray, sprite: Sprite, placement: ResolvedPlacement, feather_radius: int = 2
) -> np.ndarray:
    """Alpha-blend a sprite into ``image``; pixels outside the sprite box are untouched."""
    rgb, alpha = warp_sprite(sprite, placement)
    if alpha.size == 0:
        return image.copy()

    image_win, sprite_win = _image_window(placement, alpha.shape, image.shape[:2])
    weight = feather_alpha(alpha, feather_radius)[sprite_win][:, :, None]

    out = image.copy()
    background = out[image_win].astype(np.float32)
    blended = background * (1.0 - weight) + rgb[sprite_win] * weight
    out[image_win] = np.clip(np.rint(blended), 0, 255).astype(np.uint8)
    return out


def obstacle_mask(cam: CameraModel, sprite: Sprite, placement: ResolvedPlacement) -> np.ndarray:
    """Ground-truth obstacle pixels: sprite opacity of at least one half."""
    mask = np.zeros(cam.shape, dtype=bool)
    _, alpha = warp_sprite(sprite, placement)
    if alpha.size == 0:
        return mask
    image_win, sprite_win = _image_window(placement, alpha.shape, cam.shape)
    solid = alpha[sprite_win] >= 0.5
    if not solid.any():
        solid = alpha[sprite_win] > 0
    mask[image_win] = solid
    return mask


def render_scene(
    spec: ScenarioSpec,
    scene_id: str = "scene",
    library: Optional[SpriteLibrary] = None,
    distance_bin: Optional[float] = None,
    run_id: Optional[str] = None,
) -> SceneRecord:
    """Render one scene with exact ground truth."""
    started = time.perf_counter()
    cam = spec.camera
    rng = np.random.default_rng(spec.rng_seed)
    image = render_background(cam, spec.lane_width, rng)

    top_row = corridor_top_row(cam, spec.max_corridor_range)
    gt_obstacle = np.zeros(cam.shape, dtype=bool)
    near_row: Optional[float] = None
    sprite_width_px: Optional[int] = None

    if spec.obstacle is not None:
        library = library or get_sprite_library()
        sprite = library.get(spec.sprite_id or "")
        placement = resolve_placement(cam, spec.obstacle)
        image = composite_object(image, sprite, placement, spec.feather_radius)
        gt_obstacle = obstacle_mask(cam, sprite, placement)
        if not gt_obstacle.any():
            raise EmptySpriteError(
                f"Sprite {sprite.sprite_id} is fully transparent", {"sprite_id": sprite.sprite_id}
            )
        near_row = geo.ground_row_for_distance(cam, spec.obstacle.distance)
        top_row = max(top_row, first_row_at_or_below(near_row))
        sprite_width_px = placement.width_px

    gt_corridor = rasterize_lane(cam, spec.lane_width, top_row)

    meta = SceneMeta(
        scene_id=scene_id,
        kind="obstacle" if spec.obstacle is not None else "clean",
        seed=spec.rng_seed,
        lane_width=spec.lane_width,
        max_corridor_range=spec.max_corridor_range,
        camera=cam,
        distance_bin=distance_bin,
        run_id=run_id,
        sprite_id=spec.sprite_id if spec.obstacle is not None else None,
        obstacle=spec.obstacle,
        near_row=near_row,
        sprite_width_px=sprite_width_px,
    )
    log_performance("render_scene", (time.perf_counter() - started) * 1000, scene_id=scene_id)
    return SceneRecord(image=image, gt_corridor=gt_corridor, gt_obstacle=gt_obstacle, meta=meta)


def sample_placement(
    rng: np.random.Generator,
    spec: ScenarioSpec,
    distance_bin: float,
    sprite: Sprite,
    size_jitter: float = 0.2,
    rotation_range: float = 15.0,
) -> ObstaclePlacement:
    """
    Draw a traffic-relevant placement: jittered size, lateral offset keeping the
    object inside the lane, in-plane rotation.
    """
    scale = rng.uniform(1.0 - size_jitter, 1.0 + size_jitter) if size_jitter > 0 else 1.0
    width = sprite.nominal_width * scale
    height = sprite.nominal_height * scale
    if width > spec.lane_width:
        raise InfeasibleConstraintsError(
            f"Object of {width:.2f} m does not fit a {spec.lane_width} m lane",
            {"width": width, "lane_width": spec.lane_width, "sprite_id": sprite.sprite_id},
        )

    slack = max(spec.lane_width / 2 - width / 2, 0.0)
    offset = rng.uniform(-slack, slack) if slack > 0 else 0.0
    rotation = rng.uniform(-rotation_range, rotation_range) if rotation_range > 0 else 0.0
    return ObstaclePlacement(
        distance=distance_bin,
        lateral_offset=float(offset),
        physical_width=float(width),
        physical_height=float(height),
        rotation=float(rotation),
    )


def scene_seed(master_seed: int, index: int) -> int:
    """Independent 64-bit stream seed for scene ``index``."""
    state = np.random.SeedSequence([master_seed, index]).generate_state(1, dtype=np.uint64)
    return int(state[0])


RenderTask = Tuple[ScenarioSpec, str, Optional[float], Optional[str], Optional[Path]]


def _render_task(task: RenderTask) -> SceneRecord:
    spec, scene_id, distance_bin, run_id, sprite_dir = task
    return render_scene(
        spec,
        scene_id=scene_id,
        library=get_sprite_library(sprite_dir),
        distance_bin=distance_bin,
        run_id=run_id,
    )


class SceneGenerator:
    """Plans and writes the synthetic evaluation dataset."""

    def __init__(self, protocol: ProtocolConfig, camera: Optional[CameraModel] = None):
        self.protocol = protocol
        self.camera = camera or CameraModel()
        self.library = get_sprite_library(protocol.sprite_dir)

    def plan(self) -> List[Tuple[ManifestEntry, RenderTask]]:
        """Every scene of the protocol, in dataset order, with its render task."""
        protocol = self.protocol
        sprite_ids = self.library.ids()
        needed = protocol.sprites_per_bin if protocol.distance_bins else 0
        if len(sprite_ids) < needed:
            raise InsufficientSpritesError(
                f"Protocol needs {needed} sprites, library has {len(sprite_ids)}",
                {"needed": needed, "available": len(sprite_ids)},
            )

        planned: List[Tuple[ManifestEntry, RenderTask]] = []
        index = 0
        for distance_bin in protocol.distance_bins:
            for sprite_id in sprite_ids[:needed]:
                sprite = self.library.get(sprite_id)
                for variant in range(protocol.variants_per_sprite):
                    seed = scene_seed(protocol.master_seed, index)
                    base = ScenarioSpec(
                        lane_width=protocol.lane_width,
                        max_corridor_range=protocol.max_corridor_range,
                        rng_seed=seed,
                        camera=self.camera,
                        feather_radius=protocol.feather_radius,
                    )
                    placement = sample_placement(
                        np.random.default_rng(seed),
                        base,
                        distance_bin,
                        sprite,
                        protocol.size_jitter,
                        protocol.rotation_range,
                    )
                    spec = base.model_copy(update={"obstacle": placement, "sprite_id": sprite_id})
                    path = f"scenes/{distance_bin:g}/{sprite_id}/{variant}"
                    scene_id = f"b{distance_bin:g}_{sprite_id}_v{variant}"
                    entry = ManifestEntry(
                        scene_id=scene_id, kind="obstacle", path=path, seed=seed,
                        bin_m=distance_bin, sprite_id=sprite_id, variant=variant,
                    )
                    planned.append((entry, (spec, scene_id, distance_bin, None, protocol.sprite_dir)))
                    index += 1

        for run in range(protocol.clean_runs):
            run_id = f"run{run:02d}"
            for frame in range(protocol.frames_per_run):
                seed = scene_seed(protocol.master_seed, index)
                spec = ScenarioSpec(
                    lane_width=protocol.lane_width,
                    max_corridor_range=protocol.max_corridor_range,
                    rng_seed=seed,
                    camera=self.camera,
                    feather_radius=protocol.feather_radius,
                )
                scene_id = f"{run_id}_f{frame:04d}"
                entry = ManifestEntry(
                    scene_id=scene_id, kind="clean", path=f"runs/{run_id}/{frame:04d}",
                    seed=seed, run_id=run_id, frame=frame,
                )
                planned.append((entry, (spec, scene_id, None, run_id, protocol.sprite_dir)))
                index += 1
        return planned

    def generate(self, out_dir: Path, jobs: int = 1) -> List[ManifestEntry]:
        """Render the whole protocol into ``out_dir`` and write its manifest."""
        out_dir = Path(out_dir)
        planned = self.plan()
        logger.info(
            "Generating dataset",
            out=str(out_dir),
            scenes=len(planned),
            bins=self.protocol.distance_bins,
            jobs=jobs,
        )
        tasks = [task for _, task in planned]
        for (entry, _), record in zip(planned, run_ordered(_render_task, tasks, jobs, "scenegen")):
            write_scene(out_dir / entry.path, record)

        entries = [entry for entry, _ in planned]
        write_manifest(out_dir, entries)
        logger.info("Dataset written", out=str(out_dir), records=len(entries))
        return entries


def write_scene(scene_dir: Path, record: SceneRecord) -> None:
    image_name, corridor_name, obstacle_name, meta_name = SCENE_FILES
    write_image(scene_dir / image_name, record.image)
    write_mask(scene_dir / corridor_name, record.gt_corridor)
    write_mask(scene_dir / obstacle_name, record.gt_obstacle)
    write_scene_meta(scene_dir / meta_name, record.meta)


def generate_dataset(
    config: ProtocolConfig,
    out_dir: Path,
    camera: Optional[CameraModel] = None,
    jobs: int = 1,
) -> List[ManifestEntry]:
    return SceneGenerator(config, camera).generate(out_dir, jobs)
