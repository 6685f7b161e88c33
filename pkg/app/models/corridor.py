"""
Corridor post-processing models.

A corridor mask itself is a plain ``bool`` array of shape ``(height, width)``;
these models carry the parameters and the derived quantities.
"""

from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator, model_validator


class PostprocessParams(BaseModel):
    """Hole closing and width-drop parameters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    closing_radius: int = Field(1, ge=0, description="Disk radius (px)")
    smooth_window: int = Field(25, ge=1, description="Trailing reference rows")
    drop_ratio: float = Field(0.5, gt=0.0, lt=1.0, description="theta")
    persistence: int = Field(5, ge=1, description="m consecutive rows")
    tail_min_rows: int = Field(2, ge=1, description="Rows of a drop reaching the far end")
    tail_drop_ratio: float = Field(0.3, gt=0.0, lt=1.0, description="Depth of such a drop")
    anchor_rows_fraction: float = Field(0.05, gt=0.0, le=1.0)
    anchor_cols_fraction: float = Field(1 / 3, gt=0.0, le=1.0)
    central_band_fraction: float = Field(0.5, gt=0.0, le=1.0)


class WidthProfile(BaseModel):
    """Per-row corridor width, indexed from the bottom row upward."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    width_px: np.ndarray
    valid_range: Optional[Tuple[int, int]] = None

    @model_validator(mode="after")
    def check_profile(self) -> "WidthProfile":
        if self.width_px.ndim != 1 or (self.width_px < 0).any():
            raise ValueError("width profile must be a non-negative 1-D array")
        if self.valid_range is not None:
            first, last = self.valid_range
            if not 0 <= first <= last < len(self.width_px):
                raise ValueError("valid_range outside profile")
        return self

    @classmethod
    def from_widths(cls, widths: np.ndarray) -> "WidthProfile":
        """Build a profile, deriving ``valid_range`` from the non-zero rows."""
        widths = np.asarray(widths, dtype=np.int64)
        nonzero = np.flatnonzero(widths)
        valid = (int(nonzero[0]), int(nonzero[-1])) if nonzero.size else None
        return cls(width_px=widths, valid_range=valid)

    @property
    def height(self) -> int:
        return int(len(self.width_px))

    def image_row(self, index: int) -> int:
        """Convert a bottom-up profile index to an image row."""
        return self.height - 1 - index

    @property
    def row_count(self) -> int:
        if self.valid_range is None:
            return 0
        return self.valid_range[1] - self.valid_range[0] + 1


EdgeStatus = Literal["ok", "degenerate", "empty"]


class EdgeResult(BaseModel):
    """Longitudinal edge found by post-processing."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    cut_row: Optional[float] = Field(None, description="First dropped row, if any")
    top_row: Optional[int] = Field(None, description="Farthest row of the output")
    edge_distance: Optional[float] = Field(None, description="meters")
    column_top_rows: List[Tuple[int, int]] = Field(
        default_factory=list, description="(column, top row) in the central band"
    )
    status: EdgeStatus = "ok"

    @field_validator("column_top_rows", mode="before")
    @classmethod
    def parse_column_tokens(cls, value):
        # Sidecar form: "col:top,col:top"
        if isinstance(value, str):
            return [tuple(token.split(":")) for token in value.split(",") if token.strip()]
        return value

    @field_serializer("column_top_rows", when_used="json")
    def dump_column_tokens(self, value: List[Tuple[int, int]]) -> List[str]:
        return [f"{col}:{top}" for col, top in value]
