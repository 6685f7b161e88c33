"""
Flat-ground pinhole geometry: metric distance <-> image row, metric size <-> pixels.

Rows are fractional; a row coordinate ``r`` is on the image when
``0 <= r <= height`` (the bottom edge of the last pixel row is ``height``).
All functions are pure.
"""

import math

import numpy as np

from app.core.exceptions import (
    AboveHorizonError,
    DistanceBehindCameraError,
    GeometryError,
    RowOutOfImageError,
)
from app.models.camera import CameraModel

_ROW_EPS = 1e-9


def horizon_row(cam: CameraModel) -> float:
    """Row the ground plane converges to at infinite distance."""
    return cam.principal_row + cam.focal_length * math.tan(cam.pitch)


def ground_row_for_distance(cam: CameraModel, d: float) -> float:
    """Image row of the ground point ``d`` meters ahead."""
    if d <= 0:
        raise DistanceBehindCameraError(f"Distance must be positive, got {d}", {"distance": d})

    row = cam.principal_row + cam.focal_length * math.tan(
        math.atan(cam.mount_height / d) + cam.pitch
    )
    if not -_ROW_EPS <= row <= cam.height + _ROW_EPS:
        raise RowOutOfImageError(
            f"Ground point at {d} m projects to row {row:.3f}, outside [0, {cam.height}]",
            {"distance": d, "row": row},
        )
    return row


def distance_for_ground_row(cam: CameraModel, row: float) -> float:
    """Inverse of ``ground_row_for_distance``."""
    depression = math.atan((row - cam.principal_row) / cam.focal_length) - cam.pitch
    if depression <= 0:
        raise AboveHorizonError(
            f"Row {row} is at or above the horizon ({horizon_row(cam):.3f})",
            {"row": row, "horizon": horizon_row(cam)},
        )
    if depression >= math.pi / 2:
        raise RowOutOfImageError(f"Row {row} looks behind the vertical", {"row": row})
    return cam.mount_height / math.tan(depression)


def pixel_extent_at_distance(cam: CameraModel, size_m: float, d: float) -> float:
    """Fronto-parallel pixel extent of ``size_m`` meters at distance ``d``."""
    if d <= 0:
        raise DistanceBehindCameraError(f"Distance must be positive, got {d}", {"distance": d})
    if size_m < 0:
        raise GeometryError(f"Size must be non-negative, got {size_m}", {"size": size_m})
    return cam.focal_length * size_m / d


def distances_for_rows(cam: CameraModel, rows: np.ndarray) -> np.ndarray:
    """
    Vectorized ``distance_for_ground_row``; rows at or above the horizon map to
    ``inf`` instead of raising.
    """
    rows = np.asarray(rows, dtype=np.float64)
    depression = np.arctan((rows - cam.principal_row) / cam.focal_length) - cam.pitch
    with np.errstate(divide="ignore"):
        distances = cam.mount_height / np.tan(np.clip(depression, 1e-300, None))
    return np.where(depression > 0, distances, np.inf)


def optical_depth(cam: CameraModel, d: float | np.ndarray) -> float | np.ndarray:
    """Depth along the optical axis of a ground point ``d`` meters ahead."""
    d = np.asarray(d, dtype=np.float64)
    ray = np.hypot(d, cam.mount_height)
    depth = ray * np.cos(np.arctan(cam.mount_height / d) + cam.pitch)
    return float(depth) if depth.ndim == 0 else depth


def column_for_lateral(cam: CameraModel, lateral: float, d: float | np.ndarray) -> float | np.ndarray:
    """Image column of a ground point ``lateral`` meters right of the axis."""
    return cam.principal_col + cam.focal_length * lateral / optical_depth(cam, d)
