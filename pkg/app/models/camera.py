"""
Camera model.
"""

from typing import Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class CameraModel(BaseModel):
    """Pinhole camera over a flat ground plane (square pixels, single focal)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    focal_length: float = Field(2000.0, gt=0.0, description="Focal length in pixels")
    principal_col: float = Field(960.0, description="Principal point column (px)")
    principal_row: float = Field(540.0, description="Principal point row (px)")
    width: int = Field(1920, gt=0, description="Image width (px)")
    height: int = Field(1080, gt=0, description="Image height (px)")
    mount_height: float = Field(1.3, gt=0.0, description="Height above ground (m)")
    pitch: float = Field(0.0, ge=-0.5, le=0.5, description="Pitch (rad)")

    @model_validator(mode="after")
    def check_principal_point(self) -> "CameraModel":
        """Principal point must lie on the image."""
        if not 0 <= self.principal_col < self.width:
            raise ValueError("principal_col outside image")
        if not 0 <= self.principal_row < self.height:
            raise ValueError("principal_row outside image")
        return self

    @property
    def principal_point(self) -> Tuple[float, float]:
        return (self.principal_col, self.principal_row)

    @property
    def image_size(self) -> Tuple[int, int]:
        return (self.width, self.height)

    @property
    def shape(self) -> Tuple[int, int]:
        """Raster shape ``(rows, cols)``."""
        return (self.height, self.width)
