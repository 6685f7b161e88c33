"""
End-to-end runs of the command-line stages on the small camera.
"""

import hashlib
import json
from pathlib import Path

import pandas as pd
import pytest

from app.core.config import dump_pipeline_config, settings
from app.core.records import read_keyvalue_file, read_manifest
from app.main import main
from app.models.corridor import EdgeResult
from app.services.evaluation import RATES_CSV
from app.services.pipeline import CORRIDOR_FILE, EDGE_FILE, LATENCY_CSV

pytestmark = pytest.mark.integration


def _digest(root: Path) -> dict:
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def _error_line(stderr: str) -> dict:
    for line in reversed(stderr.strip().splitlines()):
        try:
            payload = json.loads(line)
        except json.JSONDecodeError:
            continue
        if {"error", "message", "details"} <= payload.keys():
            return payload
    raise AssertionError(f"no error line in {stderr!r}")


@pytest.fixture
def config_file(tmp_path, small_config):
    path = tmp_path / "pipeline.cfg"
    path.write_text(dump_pipeline_config(small_config))
    return path


@pytest.fixture
def dataset(tmp_path, config_file):
    out = tmp_path / "dataset"
    assert main(["--config", str(config_file), "scenegen", "--out", str(out), "--protocol", "smoke"]) == 0
    return out


def test_stage_chain(tmp_path, config_file, dataset, capsys):
    cfg = ["--config", str(config_file)]
    seg, post, energy, fused = (tmp_path / n for n in ("seg", "post", "energy", "fused"))

    entries = read_manifest(dataset)
    assert len(entries) == 2 * 2 + 3

    assert main(cfg + ["segment", "--dataset", str(dataset), "--out", str(seg), "--logits",
                       "--corruption", "miss_near:60"]) == 0
    assert main(cfg + ["postprocess", "--input", str(seg), "--out", str(post)]) == 0
    assert main(cfg + ["energy", "--input", str(seg), "--out", str(energy)]) == 0
    assert main(cfg + ["fuse", "--corridor", str(post), "--energy", str(energy), "--out", str(fused)]) == 0
    for entry in entries:
        assert (fused / entry.path / CORRIDOR_FILE).is_file()
        edge = EdgeResult.model_validate(read_keyvalue_file(post / entry.path / EDGE_FILE))
        if edge.top_row is not None:
            assert edge.column_top_rows
            assert min(top for _, top in edge.column_top_rows) == edge.top_row

    assert main(cfg + ["eval", "--dataset", str(dataset), "--pred", str(post), "--out",
                       str(tmp_path / "ev_corridor"), "--method", "corridor"]) == 0
    assert main(cfg + ["eval", "--dataset", str(dataset), "--pred", str(fused), "--out",
                       str(tmp_path / "ev_fusion"), "--method", "fusion"]) == 0
    capsys.readouterr()

    assert main(cfg + ["report", "--eval", str(tmp_path / "ev_corridor"), str(tmp_path / "ev_fusion"),
                       "--out", str(tmp_path / "report")]) == 0
    table = capsys.readouterr().out
    assert table.startswith("| Method | 25 m | 50 m |")

    rates = pd.read_csv(tmp_path / "report" / RATES_CSV)
    assert len(rates) == 2 * 2
    assert (rates.total == 2).all()
    by_method = rates.groupby("method").correct.sum()
    assert by_method["fusion"] >= by_method["corridor"]
    assert rates.loc[(rates.method == "fusion") & (rates.bin_m == 25), "correct"].item() == 2


def test_stages_leave_inputs_untouched(tmp_path, config_file, dataset):
    cfg = ["--config", str(config_file)]
    seg = tmp_path / "seg"
    before = _digest(dataset)
    assert main(cfg + ["segment", "--dataset", str(dataset), "--out", str(seg), "--corruption", "wrap"]) == 0
    seg_before = _digest(seg)
    assert main(cfg + ["postprocess", "--input", str(seg), "--out", str(tmp_path / "post")]) == 0
    assert _digest(dataset) == before
    assert _digest(seg) == seg_before


@pytest.mark.slow
def test_outputs_are_byte_identical(tmp_path, config_file):
    cfg = ["--config", str(config_file)]
    for name, jobs in (("a", "1"), ("b", "1"), ("c", "2")):
        root = tmp_path / name
        assert main(cfg + ["--jobs", jobs, "scenegen", "--out", str(root / "ds"), "--protocol", "smoke"]) == 0
        assert main(cfg + ["--jobs", jobs, "segment", "--dataset", str(root / "ds"), "--out", str(root / "seg"),
                           "--corruption", "holes:0.01,edge_jitter:1", "--logits"]) == 0
        assert main(cfg + ["--jobs", jobs, "postprocess", "--input", str(root / "seg"),
                           "--out", str(root / "post")]) == 0

    reference = _digest(tmp_path / "a")
    assert reference
    assert _digest(tmp_path / "b") == reference
    assert _digest(tmp_path / "c") == reference


def test_bench_writes_latencies(tmp_path, config_file, dataset):
    out = tmp_path / "bench"
    assert main(["--config", str(config_file), "bench", "--dataset", str(dataset), "--out", str(out),
                 "--frames", "3", "--warmup", "1", "--corruption", "miss_near:60"]) == 0
    latency = pd.read_csv(out / LATENCY_CSV)
    assert list(latency.columns) == ["frame_id", "postprocess", "energy", "fuse", "total_ms"]
    assert len(latency) == 3
    assert (latency[["postprocess", "energy", "fuse"]] >= 0).all().all()
    summary = json.loads((out / "latency_summary.json").read_text())
    assert set(summary) == {"postprocess", "energy", "fuse", "total"}
    assert summary["total"]["p50"] <= summary["total"]["max"]


def test_missing_config_exits_with_json_error(tmp_path, capsys):
    code = main(["--config", str(tmp_path / "absent.cfg"), "scenegen", "--out", str(tmp_path / "x")])
    assert code == 2
    payload = _error_line(capsys.readouterr().err)
    assert payload["error"] == "IoFailure"
    assert payload["details"]["path"].endswith("absent.cfg")


def test_invalid_config_value(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("camera.focal_length = -3\n")
    assert main(["--config", str(path), "scenegen", "--out", str(tmp_path / "x")]) == 2
    assert _error_line(capsys.readouterr().err)["error"] == "ConfigParseError"


def test_unknown_corruption(tmp_path, config_file, dataset, capsys):
    code = main(["--config", str(config_file), "segment", "--dataset", str(dataset),
                 "--out", str(tmp_path / "seg"), "--corruption", "melt:3"])
    assert code == 2
    assert _error_line(capsys.readouterr().err)["error"] == "ConfigParseError"


def test_unknown_method(tmp_path, config_file, capsys):
    code = main(["--config", str(config_file), "protocol", "--out", str(tmp_path / "p"),
                 "--protocol", "smoke", "--methods", "corridor,bogus"])
    assert code == 2
    assert "bogus" in _error_line(capsys.readouterr().err)["message"]


def test_fuse_rejects_mismatched_inputs(tmp_path, config_file, dataset, small_config, capsys):
    cfg = ["--config", str(config_file)]
    other_cfg = tmp_path / "other.cfg"
    protocol = small_config.protocol.model_copy(update={"distance_bins": [50.0]})
    other_cfg.write_text(dump_pipeline_config(small_config.model_copy(update={"protocol": protocol})))
    other = tmp_path / "other"
    assert main(["--config", str(other_cfg), "scenegen", "--out", str(other), "--protocol", "smoke"]) == 0
    assert main(cfg + ["segment", "--dataset", str(dataset), "--out", str(tmp_path / "seg")]) == 0
    assert main(cfg + ["segment", "--dataset", str(other), "--out", str(tmp_path / "seg2"), "--logits"]) == 0
    assert main(cfg + ["energy", "--input", str(tmp_path / "seg2"), "--out", str(tmp_path / "en")]) == 0
    capsys.readouterr()

    code = main(cfg + ["fuse", "--corridor", str(tmp_path / "seg"), "--energy", str(tmp_path / "en"),
                       "--out", str(tmp_path / "fused")])
    assert code == 2
    assert _error_line(capsys.readouterr().err)["error"] == "FormatMismatch"


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.strip() == f"corridor {settings.app_version} ({settings.app_name})"


@pytest.mark.parametrize("jobs", ["0", "-2"])
def test_non_positive_jobs_rejected(tmp_path, config_file, jobs, capsys):
    code = main(["--config", str(config_file), "--jobs", jobs, "scenegen", "--out", str(tmp_path / "x")])
    assert code == 2
    payload = _error_line(capsys.readouterr().err)
    assert payload["error"] == "ConfigParseError"
    assert payload["details"]["jobs"] == int(jobs)
    assert not (tmp_path / "x").exists()
