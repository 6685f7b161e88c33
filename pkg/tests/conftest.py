"""
Shared fixtures: a small camera that keeps rasters cheap, scene factories and
oracle outputs.
"""

from typing import Callable, Optional

import numpy as np
import pytest

from app.models.camera import CameraModel
from app.models.pipeline import PipelineConfig, ProtocolConfig
from app.models.scene import ObstaclePlacement, ScenarioSpec, SceneRecord
from app.services.scene_generator import render_scene

SceneFactory = Callable[..., SceneRecord]


@pytest.fixture
def small_camera() -> CameraModel:
    """480x270 camera; ground rows: 25 m -> 161, 50 m -> 148, 100 m -> 141.5."""
    return CameraModel(
        focal_length=500.0, principal_col=240.0, principal_row=135.0, width=480, height=270
    )


@pytest.fixture
def default_camera() -> CameraModel:
    return CameraModel()


@pytest.fixture
def make_scene(small_camera: CameraModel) -> SceneFactory:
    """Render an obstacle scene (or a clean one with ``distance=None``)."""

    def factory(
        distance: Optional[float] = 25.0,
        camera: Optional[CameraModel] = None,
        sprite_id: str = "s00_box",
        width: float = 0.5,
        height: float = 0.4,
        lateral_offset: float = 0.0,
        rotation: float = 0.0,
        seed: int = 3,
        feather_radius: int = 2,
    ) -> SceneRecord:
        cam = camera or small_camera
        obstacle = None
        if distance is not None:
            obstacle = ObstaclePlacement(
                distance=distance,
                lateral_offset=lateral_offset,
                physical_width=width,
                physical_height=height,
                rotation=rotation,
            )
        spec = ScenarioSpec(
            camera=cam,
            obstacle=obstacle,
            sprite_id=sprite_id if obstacle is not None else None,
            rng_seed=seed,
            feather_radius=feather_radius,
        )
        return render_scene(spec, scene_id=f"test_{distance}_{seed}", distance_bin=distance)

    return factory


@pytest.fixture
def obstacle_scene(make_scene: SceneFactory) -> SceneRecord:
    return make_scene(25.0)


@pytest.fixture
def clean_scene(make_scene: SceneFactory) -> SceneRecord:
    return make_scene(None)


@pytest.fixture
def small_config(small_camera: CameraModel) -> PipelineConfig:
    """Pipeline config on the small camera with a tiny protocol."""
    protocol = ProtocolConfig.preset(
        "smoke", distance_bins=[25.0, 50.0], sprites_per_bin=2, clean_runs=1, frames_per_run=3
    )
    return PipelineConfig(camera=small_camera, protocol=protocol)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
