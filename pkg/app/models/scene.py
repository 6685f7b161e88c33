"""
Scene, sprite and placement models.
"""

from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.models.camera import CameraModel


class ObstaclePlacement(BaseModel):
    """Metric placement of an obstacle on the ego-lane."""

    model_config = ConfigDict(frozen=True)

    distance: float = Field(..., gt=0.0, description="Longitudinal distance (m)")
    lateral_offset: float = Field(0.0, description="Offset from lane center (m)")
    physical_width: float = Field(..., gt=0.0, description="Object width (m)")
    physical_height: float = Field(..., gt=0.0, description="Object height (m)")
    rotation: float = Field(0.0, ge=-180.0, le=180.0, description="In-plane rotation (deg)")


class ScenarioSpec(BaseModel):
    """Parametrized test-track scene."""

    model_config = ConfigDict(frozen=True)

    lane_width: float = Field(3.5, gt=0.0)
    max_corridor_range: float = Field(500.0, gt=0.0)
    obstacle: Optional[ObstaclePlacement] = None
    sprite_id: Optional[str] = None
    rng_seed: int = Field(0, ge=0, lt=2**64)
    camera: CameraModel = Field(default_factory=CameraModel)
    feather_radius: int = Field(2, ge=0)

    @model_validator(mode="after")
    def check_relevancy(self) -> "ScenarioSpec":
        """Obstacles must sit fully inside the lane."""
        if self.obstacle is not None:
            if self.sprite_id is None:
                raise ValueError("obstacle requires a sprite_id")
            extent = abs(self.obstacle.lateral_offset) + self.obstacle.physical_width / 2
            if extent > self.lane_width / 2 + 1e-9:
                raise ValueError("obstacle leaves the lane (traffic-relevancy constraint)")
        return self


class ResolvedPlacement(BaseModel):
    """Pixel placement of a sprite: target size, rotation and anchor."""

    model_config = ConfigDict(frozen=True)

    width_px: int = Field(..., ge=1)
    height_px: int = Field(..., ge=1)
    rotation: float = 0.0
    center_col: float
    bottom_row: int = Field(..., description="Row of the lowest opaque sprite pixel")


class Sprite(BaseModel):
    """RGBA object cut-out with its nominal physical size."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    sprite_id: str
    rgba: np.ndarray
    nominal_width: float = Field(..., gt=0.0, description="meters")
    nominal_height: float = Field(..., gt=0.0, description="meters")

    @field_validator("rgba")
    @classmethod
    def check_raster(cls, v: np.ndarray) -> np.ndarray:
        if v.ndim != 3 or v.shape[2] != 4 or v.dtype != np.uint8:
            raise ValueError("sprite raster must be HxWx4 uint8")
        return v

    @property
    def native_size(self) -> tuple[int, int]:
        """``(width, height)`` in pixels."""
        return (int(self.rgba.shape[1]), int(self.rgba.shape[0]))

    @property
    def opacity(self) -> np.ndarray:
        """Per-pixel opacity in ``[0, 1]``."""
        return self.rgba[:, :, 3].astype(np.float32) / 255.0


class SceneMeta(BaseModel):
    """Scene metadata persisted next to the rasters."""

    model_config = ConfigDict(frozen=True)

    scene_id: str
    kind: str = Field("obstacle", pattern="^(obstacle|clean)$")
    seed: int
    lane_width: float
    max_corridor_range: float
    camera: CameraModel
    distance_bin: Optional[float] = None
    run_id: Optional[str] = None
    sprite_id: Optional[str] = None
    obstacle: Optional[ObstaclePlacement] = None
    near_row: Optional[float] = Field(None, description="Obstacle near-edge ground row")
    sprite_width_px: Optional[int] = None

    @property
    def has_obstacle(self) -> bool:
        return self.obstacle is not None


class SceneRecord(BaseModel):
    """Rendered image with exact ground-truth masks."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    image: np.ndarray
    gt_corridor: np.ndarray
    gt_obstacle: np.ndarray
    meta: SceneMeta

    @model_validator(mode="after")
    def check_shapes(self) -> "SceneRecord":
        shape = self.meta.camera.shape
        if self.image.shape != (*shape, 3):
            raise ValueError(f"image shape {self.image.shape} != {(*shape, 3)}")
        if self.gt_corridor.shape != shape or self.gt_obstacle.shape != shape:
            raise ValueError("mask shape does not match camera")
        return self
