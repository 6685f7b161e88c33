"""
Corridor post-processing.

Raw corridor masks may be fragmented, holed, or flow around an obstacle. The
pipeline keeps the component the ego vehicle stands in, closes small openings,
forces one run per row and cuts the corridor at the first persistent sudden
drop of its per-row width.
"""

import time
from typing import List, Optional, Tuple

import cv2
import numpy as np

from app.core.exceptions import DegenerateProfileError
from app.core.logging import get_logger, log_performance
from app.models.camera import CameraModel
from app.models.corridor import EdgeResult, PostprocessParams, WidthProfile
from app.services import camera_geometry as geo

logger = get_logger(__name__)


def _as_bool(mask: np.ndarray) -> np.ndarray:
    return np.asarray(mask, dtype=bool)


def anchor_window(shape: Tuple[int, int], params: PostprocessParams) -> Tuple[slice, slice]:
    """Bottom rows x central columns where the ego vehicle's corridor must start."""
    height, width = shape
    rows = max(1, int(np.ceil(height * params.anchor_rows_fraction)))
    cols = max(1, int(np.ceil(width * params.anchor_cols_fraction)))
    left = (width - cols) // 2
    return slice(height - rows, height), slice(left, left + cols)


def select_anchor_component(
    mask: np.ndarray, params: Optional[PostprocessParams] = None
) -> np.ndarray:
    """
    Keep the 8-connected component that reaches the anchor region.

    When several do, the one with the largest overlap with the region wins.
    """
    params = params or PostprocessParams()
    mask = _as_bool(mask)
    if not mask.any():
        return np.zeros_like(mask)

    count, labels = cv2.connectedComponents(mask.astype(np.uint8), connectivity=8)
    overlap = np.bincount(labels[anchor_window(mask.shape, params)].ravel(), minlength=count)
    overlap[0] = 0
    if overlap.max() == 0:
        return np.zeros_like(mask)
    return labels == int(overlap.argmax())


def close_small_openings(mask: np.ndarray, radius: int) -> np.ndarray:
    """Morphological closing with a disk of ``radius`` pixels."""
    mask = _as_bool(mask)
    if radius <= 0 or not mask.any():
        return mask.copy()
    kernel = cv2.getStructuringElement(cv2.MORPH_ELLIPSE, (2 * radius + 1, 2 * radius + 1))
    # Pad so the closing is not clipped at the image border
    padded = cv2.copyMakeBorder(
        mask.astype(np.uint8), radius, radius, radius, radius, cv2.BORDER_CONSTANT, value=0
    )
    closed = cv2.morphologyEx(padded, cv2.MORPH_CLOSE, kernel)
    return closed[radius:-radius, radius:-radius].astype(bool)


def row_runs(mask: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All horizontal runs as ``(row, start, stop)`` arrays, ``stop`` exclusive."""
    padded = np.pad(_as_bool(mask).astype(np.int8), ((0, 0), (1, 1)))
    edges = np.diff(padded, axis=1)
    rows, starts = np.nonzero(edges == 1)
    _, stops = np.nonzero(edges == -1)
    return rows, starts, stops


def enforce_row_contiguity(mask: np.ndarray) -> np.ndarray:
    """Keep the longest run of every row (leftmost on ties)."""
    mask = _as_bool(mask)
    rows, starts, stops = row_runs(mask)
    if rows.size == 0:
        return np.zeros_like(mask)

    order = np.lexsort((starts, -(stops - starts), rows))
    rows, starts, stops = rows[order], starts[order], stops[order]
    first = np.r_[True, rows[1:] != rows[:-1]]
    rows, starts, stops = rows[first], starts[first], stops[first]

    height, width = mask.shape
    marks = np.zeros((height, width + 1), dtype=np.int32)
    np.add.at(marks, (rows, starts), 1)
    np.add.at(marks, (rows, stops), -1)
    return np.cumsum(marks[:, :width], axis=1) > 0


def width_profile(mask: np.ndarray) -> WidthProfile:
    """Per-row pixel counts, bottom row first."""
    counts = _as_bool(mask).sum(axis=1)[::-1]
    return WidthProfile.from_widths(counts)


def detect_width_drop(
    profile: WidthProfile, params: Optional[PostprocessParams] = None
) -> Optional[int]:
    """
    Image row of the first persistent sudden width drop, or ``None``.

    Scanning bottom-up, the reference for a row is the median width of the
    previous ``smooth_window`` rows, advanced to the row by the median row-to-row
    change inside that window. A row is dropped when its width is below
    ``drop_ratio`` times a positive reference; ``persistence`` consecutive dropped
    rows make a cut at the first of them. A shorter run reaching the far end of
    the corridor cuts only with at least ``tail_min_rows`` rows, one of them
    below ``tail_drop_ratio`` times the reference; the narrow top of a clean
    lane stays intact.

    Raises ``DegenerateProfileError`` when the corridor has fewer rows than the window.
    """
    params = params or PostprocessParams()
    if profile.valid_range is None:
        return None
    first, last = profile.valid_range
    window = params.smooth_window
    if profile.row_count < window:
        raise DegenerateProfileError(
            f"Corridor spans {profile.row_count} rows, shorter than the {window}-row window",
            {"rows": profile.row_count, "window": window},
        )

    widths = profile.width_px[first : last + 1].astype(np.float64)
    windows = np.lib.stride_tricks.sliding_window_view(widths, window)[:-1]
    level = np.median(windows, axis=1)
    trend = np.median(np.diff(windows, axis=1), axis=1) if window > 1 else np.zeros_like(level)
    reference = level + trend * ((window + 1) / 2)

    current = widths[window:]
    dropped = (reference > 0) & (current < params.drop_ratio * reference)

    run = 0
    for offset, is_dropped in enumerate(dropped):
        run = run + 1 if is_dropped else 0
        if run >= params.persistence:
            return profile.image_row(first + window + offset - run + 1)

    # A shorter run may end the corridor if it spans several rows and narrows sharply.
    if params.tail_min_rows <= run < params.persistence:
        tail = slice(len(current) - run, None)
        if (current[tail] < params.tail_drop_ratio * reference[tail]).any():
            return profile.image_row(first + window + len(current) - run)
    return None


def truncate_at_row(mask: np.ndarray, cut_row: float) -> np.ndarray:
    """Clear every row farther than ``cut_row``; that row and nearer stay."""
    out = _as_bool(mask).copy()
    keep_from = int(np.ceil(cut_row - 1e-9))
    out[: max(keep_from, 0)] = False
    return out


def edge_distance(cam: CameraModel, top_row: int) -> Optional[float]:
    """Distance of the corridor's far boundary (the top edge of ``top_row``)."""
    distance = float(geo.distances_for_rows(cam, np.array([top_row]))[0])
    return distance if np.isfinite(distance) else None


def column_top_rows(mask: np.ndarray, band_fraction: float) -> List[Tuple[int, int]]:
    """``(column, top row)`` of every occupied column in the central band."""
    height, width = mask.shape
    band = max(1, int(round(width * band_fraction)))
    left = (width - band) // 2
    band_mask = mask[:, left : left + band]
    occupied = np.flatnonzero(band_mask.any(axis=0))
    tops = band_mask.argmax(axis=0)[occupied]
    return [(int(left + c), int(t)) for c, t in zip(occupied, tops)]


def postprocess(
    mask: np.ndarray,
    params: Optional[PostprocessParams] = None,
    cam: Optional[CameraModel] = None,
) -> Tuple[np.ndarray, EdgeResult]:
    """Full post-processing pipeline of one corridor mask."""
    params = params or PostprocessParams()
    cam = cam or CameraModel()
    started = time.perf_counter()

    out = select_anchor_component(mask, params)
    out = close_small_openings(out, params.closing_radius)
    out = enforce_row_contiguity(out)
    out = select_anchor_component(out, params)

    if not out.any():
        log_performance("postprocess", (time.perf_counter() - started) * 1000, status="empty")
        return out, EdgeResult(status="empty")

    status = "ok"
    cut_row: Optional[int] = None
    try:
        cut_row = detect_width_drop(width_profile(out), params)
    except DegenerateProfileError as e:
        logger.warning("Skipping width-drop search", reason=e.message, **e.details)
        status = "degenerate"

    if cut_row is not None:
        out = truncate_at_row(out, cut_row + 1)

    rows = np.flatnonzero(out.any(axis=1))
    top_row = int(rows[0]) if rows.size else None
    result = EdgeResult(
        cut_row=float(cut_row) if cut_row is not None else None,
        top_row=top_row,
        edge_distance=edge_distance(cam, top_row) if top_row is not None else None,
        column_top_rows=column_top_rows(out, params.central_band_fraction),
        status=status if top_row is not None else "empty",
    )
    log_performance(
        "postprocess",
        (time.perf_counter() - started) * 1000,
        cut_row=cut_row,
        top_row=top_row,
        status=result.status,
    )
    return out, result
