"""
Tests for scene rendering, compositing, placement sampling and dataset planning.
"""

import math

import cv2
import numpy as np
import pytest

from app.core.exceptions import (
    EmptySpriteError,
    InfeasibleConstraintsError,
    InsufficientSpritesError,
    PlacementOffImageError,
    SpriteNotFoundError,
)
from app.core.records import read_manifest
from app.models.pipeline import ProtocolConfig
from app.models.scene import ObstaclePlacement, ResolvedPlacement, ScenarioSpec, Sprite
from app.services import camera_geometry as geo
from app.services.scene_generator import (
    SceneGenerator,
    composite_object,
    corridor_top_row,
    first_row_at_or_below,
    generate_dataset,
    resolve_placement,
    sample_placement,
    scene_seed,
    warp_sprite,
)

pytestmark = pytest.mark.unit


def _square_sprite(alpha: int = 255, size: int = 10) -> Sprite:
    rgba = np.zeros((size, size, 4), dtype=np.uint8)
    rgba[...] = (200, 30, 60, alpha)
    return Sprite(sprite_id="square", rgba=rgba, nominal_width=0.5, nominal_height=0.5)


def _top_row(mask: np.ndarray) -> int:
    return int(np.flatnonzero(mask.any(axis=1))[0])


def test_obstacle_at_100m_default_camera(make_scene, default_camera):
    scene = make_scene(100.0, camera=default_camera)
    cols = np.flatnonzero(scene.gt_obstacle.any(axis=0))
    assert abs((cols[-1] - cols[0] + 1) - 10) <= 1
    assert scene.meta.sprite_width_px == 10

    near_row = geo.ground_row_for_distance(default_camera, 100.0)
    assert _top_row(scene.gt_corridor) == math.ceil(near_row - 1e-6) == 566
    assert scene.meta.near_row == pytest.approx(near_row)


def test_obstacle_sits_on_the_cut(obstacle_scene):
    """Sprite's lowest row is directly above the first corridor row."""
    rows = np.flatnonzero(obstacle_scene.gt_obstacle.any(axis=1))
    assert rows[-1] == 160
    assert _top_row(obstacle_scene.gt_corridor) == 161


def test_corridor_never_beyond_obstacle(make_scene, small_camera):
    for distance in (25.0, 40.0, 60.0):
        scene = make_scene(distance, lateral_offset=0.4, rotation=10.0, seed=int(distance))
        rows = np.flatnonzero(scene.gt_corridor.any(axis=1))
        assert (geo.distances_for_rows(small_camera, rows) <= distance * (1 + 1e-6)).all()


def test_clean_scene_reaches_max_range(clean_scene, small_camera):
    assert not clean_scene.gt_obstacle.any()
    assert clean_scene.meta.obstacle is None
    assert _top_row(clean_scene.gt_corridor) == corridor_top_row(small_camera, 500.0) == 137


def test_corridor_is_one_anchored_component(obstacle_scene):
    count, labels = cv2.connectedComponents(obstacle_scene.gt_corridor.astype(np.uint8), connectivity=8)
    assert count == 2
    height, width = obstacle_scene.gt_corridor.shape
    assert labels[height - 1, width // 2] == 1


def test_render_is_deterministic(make_scene):
    a = make_scene(40.0, seed=9)
    b = make_scene(40.0, seed=9)
    assert np.array_equal(a.image, b.image)
    assert np.array_equal(a.gt_corridor, b.gt_corridor)
    assert np.array_equal(a.gt_obstacle, b.gt_obstacle)
    assert a.meta == b.meta
    assert not np.array_equal(a.image, make_scene(40.0, seed=10).image)


def test_unknown_sprite_id(make_scene):
    with pytest.raises(SpriteNotFoundError):
        make_scene(25.0, sprite_id="s99_nothing")


def test_placement_below_frame(default_camera):
    placement = ObstaclePlacement(distance=2.0, physical_width=0.5, physical_height=0.4)
    with pytest.raises(PlacementOffImageError):
        resolve_placement(default_camera, placement)


def test_hard_paste_copies_sprite():
    image = np.full((40, 40, 3), 50, dtype=np.uint8)
    placement = ResolvedPlacement(width_px=10, height_px=10, center_col=20.0, bottom_row=29)
    out = composite_object(image, _square_sprite(), placement, feather_radius=0)
    assert (out[20:30, 15:25] == (200, 30, 60)).all()
    out[20:30, 15:25] = 50
    assert np.array_equal(out, image)


def test_transparent_sprite_is_identity():
    image = np.random.default_rng(0).integers(0, 255, (40, 40, 3), dtype=np.uint8)
    placement = ResolvedPlacement(width_px=10, height_px=10, center_col=20.0, bottom_row=29)
    out = composite_object(image, _square_sprite(alpha=0), placement)
    assert np.array_equal(out, image)
    assert out is not image


def test_feathered_border_is_a_convex_blend():
    image = np.full((40, 40, 3), 50, dtype=np.uint8)
    placement = ResolvedPlacement(width_px=10, height_px=10, center_col=20.0, bottom_row=29)
    out = composite_object(image, _square_sprite(), placement, feather_radius=2)

    red = out[20:30, 15:25, 0].astype(int)
    ring = np.ones((10, 10), dtype=bool)
    ring[1:-1, 1:-1] = False
    assert ((red[ring] > 50) & (red[ring] < 200)).all()
    assert red[5, 5] == 200
    outside = np.ones((40, 40), dtype=bool)
    outside[20:30, 15:25] = False
    assert (out[outside] == 50).all()


def test_warp_rotation_grows_box():
    placement = ResolvedPlacement(width_px=20, height_px=10, rotation=30.0, center_col=0.0, bottom_row=0)
    rgb, alpha = warp_sprite(_square_sprite(size=20), placement)
    assert rgb.shape[:2] == alpha.shape
    assert alpha.shape[0] > 10 and alpha.shape[1] > 20
    assert alpha.max() <= 1.0


def test_warp_rejects_sprite_without_pixels():
    sprite = Sprite.model_construct(
        sprite_id="void", rgba=np.zeros((0, 4, 4), dtype=np.uint8), nominal_width=1.0, nominal_height=1.0
    )
    placement = ResolvedPlacement(width_px=4, height_px=4, center_col=0.0, bottom_row=3)
    with pytest.raises(EmptySpriteError):
        warp_sprite(sprite, placement)


def test_sampled_placements_stay_in_lane(small_camera):
    spec = ScenarioSpec(camera=small_camera)
    sprite = Sprite(
        sprite_id="wide", rgba=_square_sprite().rgba, nominal_width=0.9, nominal_height=0.3
    )
    rng = np.random.default_rng(42)
    for _ in range(10_000):
        p = sample_placement(rng, spec, 100.0, sprite)
        assert abs(p.lateral_offset) + p.physical_width / 2 <= spec.lane_width / 2 + 1e-12
        assert -15.0 <= p.rotation <= 15.0
        assert 0.72 - 1e-12 <= p.physical_width <= 1.08 + 1e-12
        assert p.distance == 100.0


def test_lane_wide_object_is_centred(small_camera):
    spec = ScenarioSpec(camera=small_camera, lane_width=3.5)
    sprite = Sprite(sprite_id="x", rgba=_square_sprite().rgba, nominal_width=3.5, nominal_height=0.5)
    placement = sample_placement(np.random.default_rng(1), spec, 50.0, sprite, size_jitter=0.0)
    assert placement.lateral_offset == 0.0


def test_object_wider_than_lane(small_camera):
    spec = ScenarioSpec(camera=small_camera, lane_width=3.5)
    sprite = Sprite(sprite_id="x", rgba=_square_sprite().rgba, nominal_width=4.0, nominal_height=0.5)
    with pytest.raises(InfeasibleConstraintsError):
        sample_placement(np.random.default_rng(1), spec, 50.0, sprite, size_jitter=0.0)


def test_same_rng_state_same_placement(small_camera):
    spec = ScenarioSpec(camera=small_camera)
    sprite = _square_sprite()
    a = sample_placement(np.random.default_rng(5), spec, 25.0, sprite)
    b = sample_placement(np.random.default_rng(5), spec, 25.0, sprite)
    assert a == b


def test_scene_seeds_are_independent_of_order():
    assert scene_seed(7, 3) == scene_seed(7, 3)
    assert len({scene_seed(7, i) for i in range(1000)}) == 1000
    assert scene_seed(7, 0) != scene_seed(8, 0)


def test_first_row_snaps_within_tolerance():
    assert first_row_at_or_below(566.0000000001) == 566
    assert first_row_at_or_below(565.2) == 566
    assert first_row_at_or_below(566.0) == 566


def test_full_protocol_plan_counts():
    planned = SceneGenerator(ProtocolConfig()).plan()
    obstacle = [entry for entry, _ in planned if entry.kind == "obstacle"]
    clean = [entry for entry, _ in planned if entry.kind == "clean"]
    assert len(obstacle) == 5 * 84 == 420
    assert len(clean) == 12 * 200 == 2400
    assert len({entry.scene_id for entry, _ in planned}) == len(planned)
    assert obstacle[0].path == "scenes/25/s00_box/0"
    assert clean[-1].path == "runs/run11/0199"
    for bin_m in (25.0, 50.0, 100.0, 200.0, 300.0):
        assert sum(e.bin_m == bin_m for e in obstacle) == 84


def test_plan_without_bins_has_only_clean_frames():
    planned = SceneGenerator(ProtocolConfig(distance_bins=[], clean_runs=1, frames_per_run=4)).plan()
    assert [entry.kind for entry, _ in planned] == ["clean"] * 4


def test_plan_needs_enough_sprites():
    with pytest.raises(InsufficientSpritesError):
        SceneGenerator(ProtocolConfig(sprites_per_bin=40)).plan()


def test_dataset_generation_is_reproducible(tmp_path, small_camera):
    protocol = ProtocolConfig(
        distance_bins=[25.0], sprites_per_bin=2, variants_per_sprite=1,
        clean_runs=1, frames_per_run=2, master_seed=7,
    )
    first = generate_dataset(protocol, tmp_path / "a", small_camera)
    second = generate_dataset(protocol, tmp_path / "b", small_camera, jobs=2)

    assert first == second == read_manifest(tmp_path / "a")
    manifest_a = (tmp_path / "a" / "manifest.txt").read_bytes()
    assert manifest_a == (tmp_path / "b" / "manifest.txt").read_bytes()
    for entry in first:
        for name in ("image.png", "gt_corridor.png", "gt_obstacle.png", "meta"):
            a = (tmp_path / "a" / entry.path / name).read_bytes()
            assert a == (tmp_path / "b" / entry.path / name).read_bytes()
