"""
Evaluation protocol: per-scene edge verdicts, distance-binned detection rates,
false cuts on obstacle-free runs and the report tables.
"""

from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.core.exceptions import EmptyBinError, IoFailureError, NoObstacleInSceneError
from app.core.logging import get_logger, log_file_operation
from app.models.camera import CameraModel
from app.models.evaluation import (
    DetectionRateRow,
    DetectionVerdict,
    EvalReport,
    FalsePositiveRun,
)
from app.models.scene import SceneRecord
from app.services import camera_geometry as geo
from app.services.corridor_postprocess import edge_distance
from app.services.oracle_segmenter import full_lane

logger = get_logger(__name__)

RATES_CSV = "detection_rates.csv"
FP_CSV = "false_positives.csv"
REPORT_MD = "report.md"

RATE_COLUMNS = ["method", "bin_m", "correct", "total", "pct_truncated"]
FP_COLUMNS = ["run_id", "frames", "fp_count", "method"]


def estimate_edge_row(
    pred: np.ndarray, lane: np.ndarray, coverage: float = 0.5
) -> Optional[int]:
    """Farthest row where the prediction covers at least ``coverage`` of the lane width."""
    lane_width = lane.sum(axis=1)
    inside = (np.asarray(pred, dtype=bool) & lane).sum(axis=1)
    rows = np.flatnonzero((lane_width > 0) & (inside >= coverage * lane_width))
    return int(rows[0]) if rows.size else None


def judge_detection(
    pred: np.ndarray,
    scene: SceneRecord,
    cam: Optional[CameraModel] = None,
    tol: float = 0.10,
    method: str = "corridor",
    lane_coverage: float = 0.5,
) -> DetectionVerdict:
    """
    Judge whether the predicted corridor ends at the obstacle.

    Failure modes are checked in order: no edge, over-segmentation (any
    predicted lane pixel beyond ``d * (1 + tol)``), under-segmentation (edge
    nearer than ``d * (1 - tol)``).
    """
    obstacle = scene.meta.obstacle
    if obstacle is None:
        raise NoObstacleInSceneError(
            f"Scene {scene.meta.scene_id} has no obstacle; use false_positive_eval",
            {"scene_id": scene.meta.scene_id},
        )
    cam = cam or scene.meta.camera
    d = obstacle.distance
    distance_bin = scene.meta.distance_bin if scene.meta.distance_bin is not None else d

    def verdict(failure: str, estimate: Optional[float] = None) -> DetectionVerdict:
        return DetectionVerdict(
            scene_id=scene.meta.scene_id,
            method=method,
            distance_bin=distance_bin,
            correct=failure == "none",
            estimated_edge_distance=estimate,
            error=estimate - d if estimate is not None else None,
            failure_mode=failure,  # type: ignore[arg-type]
        )

    lane = full_lane(scene)
    inside = np.asarray(pred, dtype=bool) & lane
    edge_row = estimate_edge_row(pred, lane, lane_coverage)
    if not inside.any() or edge_row is None:
        return verdict("no_edge")

    estimate = edge_distance(cam, edge_row)
    farthest = int(np.flatnonzero(inside.any(axis=1))[0])
    if geo.distances_for_rows(cam, np.array([farthest]))[0] > d * (1 + tol):
        return verdict("over_segmentation", estimate)
    if estimate is None:
        return verdict("no_edge")
    if estimate < d * (1 - tol):
        return verdict("under_segmentation", estimate)
    return verdict("none", estimate)


def detection_rate(
    verdicts: Iterable[DetectionVerdict], bins: Optional[Sequence[float]] = None
) -> List[DetectionRateRow]:
    """
    Aggregate verdicts per (method, distance bin).

    With ``bins`` given, every method must have at least one verdict in every bin.
    """
    counts: Dict[Tuple[str, float], List[int]] = {}
    methods: List[str] = []
    for v in verdicts:
        if v.method not in methods:
            methods.append(v.method)
        cell = counts.setdefault((v.method, v.distance_bin), [0, 0])
        cell[0] += int(v.correct)
        cell[1] += 1

    expected = sorted(bins) if bins is not None else sorted({b for _, b in counts})
    rows: List[DetectionRateRow] = []
    for method in methods:
        for bin_m in expected:
            if (method, bin_m) not in counts:
                raise EmptyBinError(
                    f"No verdicts for {method} at {bin_m:g} m", {"method": method, "bin_m": bin_m}
                )
            correct, total = counts[(method, bin_m)]
            rows.append(DetectionRateRow(method=method, bin_m=bin_m, correct=correct, total=total))
    return rows


def is_false_cut(pred: np.ndarray, expected_min_range: float, cam: CameraModel) -> bool:
    """Whether an obstacle-free frame's corridor ends before ``expected_min_range``."""
    rows = np.flatnonzero(np.asarray(pred, dtype=bool).any(axis=1))
    if rows.size == 0:
        return True
    reach = edge_distance(cam, int(rows[0]))
    return reach is not None and reach < expected_min_range


def false_positive_eval(
    preds: Iterable[np.ndarray],
    expected_min_range: float,
    cam: Optional[CameraModel] = None,
    run_id: str = "run",
    method: str = "corridor",
) -> FalsePositiveRun:
    """Count frames whose corridor ends before ``expected_min_range``."""
    cam = cam or CameraModel()
    flags = [is_false_cut(pred, expected_min_range, cam) for pred in preds]
    return false_positive_run(flags, run_id, method)


def false_positive_run(flags: Sequence[bool], run_id: str, method: str) -> FalsePositiveRun:
    """Build the run record from per-frame false-cut flags."""
    fp_frames = [frame for frame, flag in enumerate(flags) if flag]
    return FalsePositiveRun(
        run_id=run_id, method=method, frames=len(flags), fp_count=len(fp_frames), fp_frames=fp_frames
    )


def rates_frame(report: EvalReport) -> pd.DataFrame:
    """One row per method x bin."""
    records = [
        {
            "method": row.method,
            "bin_m": f"{row.bin_m:g}",
            "correct": row.correct,
            "total": row.total,
            "pct_truncated": row.pct_truncated,
        }
        for row in report.rows
    ]
    return pd.DataFrame(records, columns=RATE_COLUMNS)


def false_positive_frame(report: EvalReport) -> pd.DataFrame:
    records = [
        {"run_id": fp.run_id, "method": fp.method, "frames": fp.frames, "fp_count": fp.fp_count}
        for fp in report.false_positives
    ]
    return pd.DataFrame(records, columns=FP_COLUMNS)


def render_table(report: EvalReport) -> str:
    """Markdown table: one row per method, one column per distance bin."""
    bins = report.bins
    cells = {(row.method, row.bin_m): row.cell for row in report.rows}
    header = ["Method"] + [f"{b:g} m" for b in bins]
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "|".join(["---"] + ["---:"] * len(bins)) + "|",
    ]
    for method in report.methods:
        values = [cells.get((method, b), "-") for b in bins]
        lines.append("| " + " | ".join([method] + values) + " |")

    if report.false_positives:
        lines += ["", "| Run | Method | Frames | False cuts |", "|---|---|---:|---:|"]
        for fp in report.false_positives:
            lines.append(f"| {fp.run_id} | {fp.method} | {fp.frames} | {fp.fp_count} |")
        total_frames = sum(fp.frames for fp in report.false_positives)
        total_fp = sum(fp.fp_count for fp in report.false_positives)
        lines.append(f"| total | | {total_frames} | {total_fp} |")
    return "\n".join(lines) + "\n"


def render_report(report: EvalReport, out_dir: Path) -> Dict[str, Path]:
    """Write the rate CSV, the false-positive CSV and the Markdown table."""
    out_dir = Path(out_dir)
    paths = {
        "rates": out_dir / RATES_CSV,
        "false_positives": out_dir / FP_CSV,
        "table": out_dir / REPORT_MD,
    }
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        rates_frame(report).to_csv(paths["rates"], index=False, lineterminator="\n")
        false_positive_frame(report).to_csv(paths["false_positives"], index=False, lineterminator="\n")
        paths["table"].write_text(render_table(report), encoding="utf-8")
    except OSError as e:
        raise IoFailureError(f"Cannot write report to {out_dir}: {e}", {"path": str(out_dir)}) from e

    for path in paths.values():
        log_file_operation("write", path)
    logger.info("Report written", out=str(out_dir), cells=len(report.rows), runs=len(report.false_positives))
    return paths
