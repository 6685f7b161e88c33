"""
Explicit outlier path: free energy of the class logits, thresholding, blob
grouping and fusion of the nearest blob into the corridor.
"""

import time
from typing import List, Optional, Tuple

import cv2
import numpy as np

from app.core.exceptions import IncompatibleDimensionsError, NonFiniteLogitsError
from app.core.logging import get_logger, log_performance
from app.models.camera import CameraModel
from app.models.fusion import FusionConfig, FusionReport, OutlierBlob
from app.services import camera_geometry as geo
from app.services.corridor_postprocess import edge_distance, truncate_at_row

logger = get_logger(__name__)


# Rows per block of the energy reduction; one block of all channels stays cache-sized.
ENERGY_TILE_ROWS = 32


def energy_from_logits(logits: np.ndarray) -> np.ndarray:
    """
    Per-pixel free energy ``E = -log sum_c exp(z_c)`` of ``(K, H, W)`` logits.

    Higher energy means more outlier-like. Computed in blocks of rows, one
    channel at a time against the per-pixel maximum, so no ``(K, H, W)``
    temporary is allocated. float32 input stays float32.
    """
    logits = np.asarray(logits)
    if logits.ndim != 3 or logits.shape[0] < 2:
        raise IncompatibleDimensionsError(
            f"Logits must be (K, H, W) with K >= 2, got {logits.shape}",
            {"shape": list(logits.shape)},
        )
    dtype = np.result_type(logits.dtype, np.float32)
    _, height, width = logits.shape
    energy = np.empty((height, width), dtype=dtype)
    bad = 0

    for start in range(0, height, ENERGY_TILE_ROWS):
        block = logits[:, start : start + ENERGY_TILE_ROWS].astype(dtype, copy=False)
        peak = block.max(axis=0)
        lowest = peak.copy()
        total = np.zeros_like(peak)
        scratch = np.empty_like(peak)
        with np.errstate(invalid="ignore"):
            for channel in block:
                np.minimum(lowest, channel, out=lowest)
                np.subtract(channel, peak, out=scratch)
                np.exp(scratch, out=scratch)
                total += scratch
            np.log(total, out=total)
            np.add(total, peak, out=total)
        np.negative(total, out=energy[start : start + ENERGY_TILE_ROWS])
        finite = np.isfinite(peak) & np.isfinite(lowest)
        bad += int(finite.size - np.count_nonzero(finite))

    if bad:
        raise NonFiniteLogitsError(
            f"{bad} pixels have non-finite logits", {"pixels": bad, "shape": list(logits.shape)}
        )
    return energy


def threshold_outliers(energy: np.ndarray, threshold: float) -> np.ndarray:
    """Outlier pixels: ``E > threshold``."""
    return np.asarray(energy) > threshold


def _minimum_area(row: int, cfg: FusionConfig, cam: Optional[CameraModel]) -> float:
    if not cfg.row_scaled_min_area or cam is None:
        return cfg.min_blob_area
    distance = float(geo.distances_for_rows(cam, np.array([row + 0.5]))[0])
    if not np.isfinite(distance):
        return cfg.min_blob_area
    side = geo.pixel_extent_at_distance(cam, cfg.min_object_size, distance)
    return max(float(cfg.min_blob_area), side * side)


def extract_blobs(
    outliers: np.ndarray, cfg: Optional[FusionConfig] = None, cam: Optional[CameraModel] = None
) -> List[OutlierBlob]:
    """
    Group outlier pixels into blobs, nearest first.

    Components are found 8-connected on the outlier raster dilated by
    ``blob_dilation``; a blob's pixels are the original outlier pixels of its
    component.
    """
    cfg = cfg or FusionConfig()
    outliers = np.asarray(outliers, dtype=bool)
    if not outliers.any():
        return []

    grouped = outliers.astype(np.uint8)
    if cfg.blob_dilation > 0:
        size = 2 * cfg.blob_dilation + 1
        grouped = cv2.dilate(grouped, cv2.getStructuringElement(cv2.MORPH_RECT, (size, size)))
    _, labels = cv2.connectedComponents(grouped, connectivity=8)

    rows, cols = np.nonzero(outliers)
    pixel_labels = labels[rows, cols]
    order = np.argsort(pixel_labels, kind="stable")
    rows, cols, pixel_labels = rows[order], cols[order], pixel_labels[order]
    boundaries = np.flatnonzero(np.diff(pixel_labels)) + 1

    blobs: List[OutlierBlob] = []
    for blob_rows, blob_cols in zip(np.split(rows, boundaries), np.split(cols, boundaries)):
        nearest = int(blob_rows.max())
        if blob_rows.size < _minimum_area(nearest, cfg, cam):
            continue
        blobs.append(
            OutlierBlob(
                rows=blob_rows,
                cols=blob_cols,
                bbox=(int(blob_rows.min()), int(blob_cols.min()), nearest, int(blob_cols.max())),
                nearest_row=nearest,
            )
        )
    blobs.sort(key=lambda b: (-b.nearest_row, b.bbox[1]))
    return blobs


def fuse(
    corridor: np.ndarray, blobs: List[OutlierBlob], cam: Optional[CameraModel] = None
) -> Tuple[np.ndarray, FusionReport]:
    """
    Truncate the corridor just below the nearest blob that intersects it.

    Corridors without an intersecting blob are returned unchanged.
    """
    cam = cam or CameraModel()
    corridor = np.asarray(corridor, dtype=bool)
    hits = [i for i, blob in enumerate(blobs) if corridor[blob.rows, blob.cols].any()]

    if not hits:
        rows = np.flatnonzero(corridor.any(axis=1))
        top = int(rows[0]) if rows.size else None
        return corridor.copy(), FusionReport(
            applied=False,
            top_row=top,
            edge_distance=edge_distance(cam, top) if top is not None else None,
        )

    # blobs are sorted nearest first
    index = hits[0]
    blob = blobs[index]
    fused = truncate_at_row(corridor, blob.nearest_row + 1)
    rows = np.flatnonzero(fused.any(axis=1))
    top = int(rows[0]) if rows.size else None
    report = FusionReport(
        applied=True,
        blob_index=index,
        blob_nearest_row=blob.nearest_row,
        blob_area=blob.area,
        intersecting_blobs=len(hits),
        top_row=top,
        edge_distance=edge_distance(cam, top) if top is not None else None,
    )
    logger.debug("Fused outlier blob", blob_index=index, nearest_row=blob.nearest_row, top_row=top)
    return fused, report


def fuse_from_energy(
    corridor: np.ndarray,
    energy: np.ndarray,
    cfg: Optional[FusionConfig] = None,
    cam: Optional[CameraModel] = None,
) -> Tuple[np.ndarray, FusionReport]:
    """Threshold an energy map, group blobs and fuse the nearest one."""
    cfg = cfg or FusionConfig()
    started = time.perf_counter()
    blobs = extract_blobs(threshold_outliers(energy, cfg.energy_threshold), cfg, cam)
    fused, report = fuse(corridor, blobs, cam)
    log_performance(
        "fusion", (time.perf_counter() - started) * 1000, blobs=len(blobs), applied=report.applied
    )
    return fused, report
