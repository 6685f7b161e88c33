"""
Outlier path models.
"""

from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class FusionConfig(BaseModel):
    """Energy threshold and blob grouping."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    energy_threshold: float = Field(-2.0, allow_inf_nan=False, description="t")
    min_blob_area: int = Field(20, ge=1, description="pixels")
    blob_dilation: int = Field(1, ge=0, description="pixels")
    # Row-dependent minimum area: expected pixel area of an object of
    # min_object_size meters at the blob's distance.
    row_scaled_min_area: bool = False
    min_object_size: float = Field(0.15, gt=0.0, description="meters")


class OutlierBlob(BaseModel):
    """Connected group of outlier pixels."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    rows: np.ndarray
    cols: np.ndarray
    bbox: Tuple[int, int, int, int] = Field(..., description="(top, left, bottom, right)")
    nearest_row: int = Field(..., description="Largest row index (closest to ego)")

    @property
    def area(self) -> int:
        return int(self.rows.size)


class FusionReport(BaseModel):
    """What fusion did to a corridor."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    applied: bool = False
    blob_index: Optional[int] = None
    blob_nearest_row: Optional[int] = None
    blob_area: Optional[int] = None
    intersecting_blobs: int = 0
    top_row: Optional[int] = None
    edge_distance: Optional[float] = None
