"""
Tests for verdicts, binned detection rates, false cuts and report output.
"""

import math

import numpy as np
import pandas as pd
import pytest

from app.core.exceptions import EmptyBinError, IoFailureError, NoObstacleInSceneError
from app.models.evaluation import DetectionRateRow, DetectionVerdict, EvalReport, FalsePositiveRun
from app.services import camera_geometry as geo
from app.services.evaluation import (
    FP_CSV,
    RATES_CSV,
    REPORT_MD,
    detection_rate,
    false_positive_eval,
    judge_detection,
    render_report,
    render_table,
)
from app.services.scene_generator import corridor_top_row, rasterize_lane

pytestmark = pytest.mark.unit

BINS = [25.0, 50.0, 100.0, 200.0, 300.0]

TABLE = {
    "naive": [(11, "13.1"), (48, "57.1"), (55, "65.4"), (76, "90.4"), (76, "90.4")],
    "obstacle": [(36, "42.8"), (61, "72.6"), (56, "66.6"), (76, "90.4"), (80, "95.2")],
    "synthetic": [(21, "25.0"), (42, "50.0"), (38, "45.2"), (57, "67.8"), (68, "80.9")],
    "fusion": [(48, "57.1"), (34, "40.4"), (6, "7.1"), (22, "26.1"), (35, "41.6")],
}


def _corridor_to(cam, distance):
    top = math.ceil(geo.ground_row_for_distance(cam, distance))
    return rasterize_lane(cam, 3.5, top)


@pytest.fixture
def scene_100m(make_scene, default_camera):
    return make_scene(100.0, camera=default_camera)


@pytest.mark.parametrize("method", list(TABLE))
def test_table_cells(method):
    for correct, pct in TABLE[method]:
        row = DetectionRateRow(method=method, bin_m=25.0, correct=correct, total=84)
        assert row.pct_truncated == pct
        assert row.cell == f"{correct} ({pct} %)"


def test_zero_and_full_rates():
    assert DetectionRateRow(method="m", bin_m=25.0, correct=0, total=84).cell == "0 (0.0 %)"
    assert DetectionRateRow(method="m", bin_m=25.0, correct=84, total=84).cell == "84 (100.0 %)"


def test_edge_just_beyond_obstacle_is_correct(scene_100m, default_camera):
    verdict = judge_detection(_corridor_to(default_camera, 101.0), scene_100m, default_camera)
    assert verdict.correct and verdict.failure_mode == "none"
    assert verdict.estimated_edge_distance == pytest.approx(100.0, rel=0.02)
    assert verdict.distance_bin == 100.0


def test_corridor_past_obstacle_is_over_segmentation(scene_100m, default_camera):
    wrap = rasterize_lane(default_camera, 3.5, corridor_top_row(default_camera, 500.0))
    verdict = judge_detection(wrap, scene_100m, default_camera)
    assert not verdict.correct
    assert verdict.failure_mode == "over_segmentation"


def test_early_edge_is_under_segmentation(scene_100m, default_camera):
    verdict = judge_detection(_corridor_to(default_camera, 40.0), scene_100m, default_camera)
    assert verdict.failure_mode == "under_segmentation"
    assert verdict.error == pytest.approx(-60.0, rel=0.05)


def test_empty_prediction_has_no_edge(scene_100m, default_camera):
    verdict = judge_detection(np.zeros(default_camera.shape, dtype=bool), scene_100m, default_camera)
    assert verdict.failure_mode == "no_edge"
    assert verdict.estimated_edge_distance is None


def test_clean_scene_cannot_be_judged(clean_scene):
    with pytest.raises(NoObstacleInSceneError):
        judge_detection(clean_scene.gt_corridor, clean_scene)


def test_detection_rate_per_method_and_bin():
    verdicts = [
        DetectionVerdict(scene_id=f"s{i}", method=m, distance_bin=b, correct=ok,
                         failure_mode="none" if ok else "no_edge")
        for i, (m, b, ok) in enumerate(
            [("a", 25.0, True), ("a", 25.0, False), ("a", 50.0, True), ("b", 25.0, False), ("b", 50.0, False)]
        )
    ]
    rows = detection_rate(verdicts, [25.0, 50.0])
    assert [(r.method, r.bin_m, r.correct, r.total) for r in rows] == [
        ("a", 25.0, 1, 2), ("a", 50.0, 1, 1), ("b", 25.0, 0, 1), ("b", 50.0, 0, 1),
    ]


def test_missing_bin_is_an_error():
    verdicts = [DetectionVerdict(scene_id="s", distance_bin=25.0, correct=True)]
    with pytest.raises(EmptyBinError) as exc:
        detection_rate(verdicts, [25.0, 50.0])
    assert exc.value.details["bin_m"] == 50.0


def test_false_positive_counts(small_camera):
    full = rasterize_lane(small_camera, 3.5, corridor_top_row(small_camera, 500.0))
    empty = np.zeros(small_camera.shape, dtype=bool)

    run = false_positive_eval([empty] * 200, 150.0, small_camera)
    assert run.fp_count == 200 and run.frames == 200

    frames = [full] * 200
    frames[17] = _corridor_to(small_camera, 25.0)
    run = false_positive_eval(frames, 150.0, small_camera, run_id="run03")
    assert run.fp_count == 1
    assert run.fp_frames == [17]
    assert run.run_id == "run03"


def _report(methods=("naive", "obstacle", "synthetic", "fusion")):
    rows = [
        DetectionRateRow(method=m, bin_m=b, correct=TABLE[m][i][0], total=84)
        for m in methods
        for i, b in enumerate(BINS)
    ]
    fps = [FalsePositiveRun(run_id="run00", frames=200, fp_count=2, fp_frames=[3, 9])]
    return EvalReport(rows=rows, false_positives=fps)


def test_report_files(tmp_path):
    paths = render_report(_report(), tmp_path)
    assert set(p.name for p in paths.values()) == {RATES_CSV, FP_CSV, REPORT_MD}
    assert (tmp_path / FP_CSV).read_text().splitlines() == [
        "run_id,frames,fp_count,method",
        "run00,200,2,corridor",
    ]

    rates = pd.read_csv(tmp_path / RATES_CSV, dtype={"pct_truncated": str})
    assert len(rates) == 4 * 5
    assert rates.loc[(rates.method == "obstacle") & (rates.bin_m == 50), "pct_truncated"].item() == "72.6"

    table = (tmp_path / REPORT_MD).read_text()
    assert "| fusion | 48 (57.1 %) | 34 (40.4 %) | 6 (7.1 %) | 22 (26.1 %) | 35 (41.6 %) |" in table
    assert "| total | | 200 | 2 |" in table


def test_empty_report_writes_headers(tmp_path):
    render_report(EvalReport(), tmp_path)
    assert (tmp_path / RATES_CSV).read_text() == "method,bin_m,correct,total,pct_truncated\n"
    assert (tmp_path / FP_CSV).read_text() == "run_id,frames,fp_count,method\n"
    assert render_table(EvalReport()).startswith("| Method |")


def test_unwritable_report_dir(tmp_path):
    blocker = tmp_path / "taken"
    blocker.write_text("")
    with pytest.raises(IoFailureError):
        render_report(_report(), blocker)
