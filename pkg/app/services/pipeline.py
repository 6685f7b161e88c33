"""
Stage runners behind the CLI.

Every file stage reads the manifest of its input directory, processes the
frames (optionally in a worker pool), writes its outputs under the same relative
paths in the output directory and copies the manifest there, so stages chain.
"""

import json
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.core.exceptions import FormatMismatchError, IoFailureError
from app.core.logging import get_logger, log_file_operation
from app.core.raster_io import (
    read_energy,
    read_image,
    read_logits,
    read_mask,
    write_energy,
    write_logits,
    write_mask,
)
from app.core.records import (
    read_manifest,
    read_scene_meta,
    write_keyvalue_file,
    write_manifest,
    write_model,
)
from app.models.camera import CameraModel
from app.models.corridor import EdgeResult
from app.models.evaluation import DetectionVerdict, EvalReport, FalsePositiveRun
from app.models.fusion import FusionReport
from app.models.pipeline import LatencyRecord, ManifestEntry, PipelineConfig, ProtocolConfig
from app.models.scene import SceneRecord
from app.models.segmentation import CorruptionConfig
from app.services.batch_runner import run_ordered
from app.services.corridor_postprocess import postprocess
from app.services.evaluation import (
    detection_rate,
    false_positive_run,
    is_false_cut,
    judge_detection,
)
from app.services.oracle_segmenter import segment, segment_energy, segment_mask
from app.services.outlier_fusion import energy_from_logits, fuse_from_energy
from app.services.scene_generator import SCENE_FILES, RenderTask, SceneGenerator, render_scene
from app.services.sprite_library import get_sprite_library

logger = get_logger(__name__)

CORRIDOR_FILE = "corridor.png"
LOGITS_FILE = "logits.lgt"
ENERGY_FILE = "energy.egy"
EDGE_FILE = "edge"
FUSION_FILE = "fusion"
VERDICTS_CSV = "verdicts.csv"
FP_FRAMES_CSV = "fp_frames.csv"
LATENCY_CSV = "latency.csv"

METHODS = ("corridor", "corridor_raw", "fusion")
BENCH_STAGES = ("postprocess", "energy", "fuse")
# Per-frame budget of postprocess + energy + fuse at 1920x1080, K = 19
FRAME_BUDGET_MS = 100.0


def _entries(input_dir: Path) -> List[ManifestEntry]:
    return read_manifest(input_dir)


def load_scene(dataset: Path, entry: ManifestEntry) -> SceneRecord:
    """Read one scene directory back into a ``SceneRecord``."""
    image_name, corridor_name, obstacle_name, meta_name = SCENE_FILES
    scene_dir = Path(dataset) / entry.path
    meta = read_scene_meta(scene_dir / meta_name)
    shape = meta.camera.shape
    return SceneRecord(
        image=read_image(scene_dir / image_name, shape),
        gt_corridor=read_mask(scene_dir / corridor_name, shape),
        gt_obstacle=read_mask(scene_dir / obstacle_name, shape),
        meta=meta,
    )


def _check_config_camera(config: PipelineConfig, cam: CameraModel, where: str) -> None:
    if config.camera.shape != cam.shape:
        raise FormatMismatchError(
            f"{where}: config camera {config.camera.shape} disagrees with data {cam.shape}",
            {"config": list(config.camera.shape), "data": list(cam.shape)},
        )


# scenegen


def generate(protocol: ProtocolConfig, camera: CameraModel, out_dir: Path, jobs: int) -> List[ManifestEntry]:
    return SceneGenerator(protocol, camera).generate(out_dir, jobs)


# segment

SegmentTask = Tuple[Path, ManifestEntry, CorruptionConfig, PipelineConfig, bool]


def _segment_task(task: SegmentTask) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    dataset, entry, corruption, config, with_logits = task
    scene = load_scene(dataset, entry)
    if with_logits:
        logits, mask = segment(scene, corruption, config.oracle)
        return mask, logits
    return segment_mask(scene, corruption), None


def run_segment(
    dataset: Path,
    out_dir: Path,
    corruption: CorruptionConfig,
    config: PipelineConfig,
    with_logits: bool = False,
    jobs: int = 1,
) -> int:
    """Oracle corridor masks (and logits) for every dataset record."""
    entries = _entries(dataset)
    tasks = [(Path(dataset), e, corruption, config, with_logits) for e in entries]
    for entry, (mask, logits) in zip(entries, run_ordered(_segment_task, tasks, jobs, "segment")):
        write_mask(Path(out_dir) / entry.path / CORRIDOR_FILE, mask)
        if logits is not None:
            write_logits(Path(out_dir) / entry.path / LOGITS_FILE, logits)
    write_manifest(out_dir, entries)
    write_keyvalue_file(Path(out_dir) / "corruption", {"modes": corruption.label(), "seed": corruption.rng_seed})
    logger.info("Segmented dataset", records=len(entries), corruption=corruption.label())
    return len(entries)


# postprocess

PostprocessTask = Tuple[Path, ManifestEntry, PipelineConfig]


def _postprocess_task(task: PostprocessTask) -> Tuple[np.ndarray, EdgeResult]:
    input_dir, entry, config = task
    mask = read_mask(input_dir / entry.path / CORRIDOR_FILE, config.camera.shape)
    return postprocess(mask, config.postprocess, config.camera)


def run_postprocess(input_dir: Path, out_dir: Path, config: PipelineConfig, jobs: int = 1) -> int:
    entries = _entries(input_dir)
    tasks = [(Path(input_dir), e, config) for e in entries]
    for entry, (mask, edge) in zip(entries, run_ordered(_postprocess_task, tasks, jobs, "postprocess")):
        write_mask(Path(out_dir) / entry.path / CORRIDOR_FILE, mask)
        write_model(Path(out_dir) / entry.path / EDGE_FILE, edge)
    write_manifest(out_dir, entries)
    logger.info("Post-processed corridors", records=len(entries))
    return len(entries)


# energy

EnergyTask = Tuple[Path, ManifestEntry, PipelineConfig]


def _energy_task(task: EnergyTask) -> np.ndarray:
    input_dir, entry, config = task
    return energy_from_logits(read_logits(input_dir / entry.path / LOGITS_FILE, config.camera.shape))


def run_energy(input_dir: Path, out_dir: Path, config: PipelineConfig, jobs: int = 1) -> int:
    entries = _entries(input_dir)
    tasks = [(Path(input_dir), e, config) for e in entries]
    for entry, energy in zip(entries, run_ordered(_energy_task, tasks, jobs, "energy")):
        write_energy(Path(out_dir) / entry.path / ENERGY_FILE, energy)
    write_manifest(out_dir, entries)
    logger.info("Energy maps written", records=len(entries))
    return len(entries)


# fuse

FuseTask = Tuple[Path, Path, ManifestEntry, PipelineConfig]


def _fuse_task(task: FuseTask) -> Tuple[np.ndarray, FusionReport]:
    corridor_dir, energy_dir, entry, config = task
    shape = config.camera.shape
    corridor = read_mask(corridor_dir / entry.path / CORRIDOR_FILE, shape)
    energy = read_energy(energy_dir / entry.path / ENERGY_FILE, shape)
    return fuse_from_energy(corridor, energy, config.fusion, config.camera)


def run_fuse(corridor_dir: Path, energy_dir: Path, out_dir: Path, config: PipelineConfig, jobs: int = 1) -> int:
    entries = _entries(corridor_dir)
    energy_ids = [e.scene_id for e in _entries(energy_dir)]
    if energy_ids != [e.scene_id for e in entries]:
        raise FormatMismatchError(
            "Corridor and energy manifests list different records",
            {"corridor": str(corridor_dir), "energy": str(energy_dir)},
        )
    tasks = [(Path(corridor_dir), Path(energy_dir), e, config) for e in entries]
    for entry, (mask, report) in zip(entries, run_ordered(_fuse_task, tasks, jobs, "fuse")):
        write_mask(Path(out_dir) / entry.path / CORRIDOR_FILE, mask)
        write_model(Path(out_dir) / entry.path / FUSION_FILE, report)
    write_manifest(out_dir, entries)
    logger.info("Fused corridors", records=len(entries))
    return len(entries)


# eval

EvalTask = Tuple[Path, Path, ManifestEntry, PipelineConfig, str]


def _eval_task(task: EvalTask) -> Tuple[Optional[DetectionVerdict], Optional[bool]]:
    dataset, pred_dir, entry, config, method = task
    scene = load_scene(dataset, entry)
    _check_config_camera(config, scene.meta.camera, entry.scene_id)
    pred = read_mask(pred_dir / entry.path / CORRIDOR_FILE, scene.meta.camera.shape)
    if scene.meta.has_obstacle:
        verdict = judge_detection(
            pred, scene, scene.meta.camera, config.evaluation.tolerance, method,
            config.evaluation.lane_coverage,
        )
        return verdict, None
    return None, is_false_cut(pred, config.evaluation.fp_min_range, scene.meta.camera)


def verdicts_frame(verdicts: Sequence[DetectionVerdict]) -> pd.DataFrame:
    columns = list(DetectionVerdict.model_fields)
    return pd.DataFrame([v.model_dump() for v in verdicts], columns=columns)


def fp_frames_frame(runs: Sequence[FalsePositiveRun]) -> pd.DataFrame:
    records = [
        {"run_id": run.run_id, "method": run.method, "frame": frame, "false_cut": frame in run.fp_frames}
        for run in runs
        for frame in range(run.frames)
    ]
    return pd.DataFrame(records, columns=["run_id", "method", "frame", "false_cut"])


def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, lineterminator="\n")
    except OSError as e:
        raise IoFailureError(f"Cannot write {path}: {e}", {"path": str(path)}) from e
    log_file_operation("write", path, rows=len(frame))


def write_evaluation(
    out_dir: Path, verdicts: Sequence[DetectionVerdict], runs: Sequence[FalsePositiveRun]
) -> None:
    _write_csv(verdicts_frame(verdicts), Path(out_dir) / VERDICTS_CSV)
    _write_csv(fp_frames_frame(runs), Path(out_dir) / FP_FRAMES_CSV)


def _group_runs(flags: Sequence[Tuple[str, str, bool]]) -> List[FalsePositiveRun]:
    """``(run_id, method, flag)`` in frame order -> one record per run and method."""
    grouped: Dict[Tuple[str, str], List[bool]] = {}
    for run_id, method, flag in flags:
        grouped.setdefault((run_id, method), []).append(flag)
    return [false_positive_run(f, run_id, method) for (run_id, method), f in grouped.items()]


def run_eval(
    dataset: Path, pred_dir: Path, out_dir: Path, config: PipelineConfig, method: str, jobs: int = 1
) -> Tuple[List[DetectionVerdict], List[FalsePositiveRun]]:
    """Judge a prediction directory against the dataset ground truth."""
    entries = _entries(dataset)
    tasks = [(Path(dataset), Path(pred_dir), e, config, method) for e in entries]
    verdicts: List[DetectionVerdict] = []
    flags: List[Tuple[str, str, bool]] = []
    for entry, (verdict, flag) in zip(entries, run_ordered(_eval_task, tasks, jobs, "eval")):
        if verdict is not None:
            verdicts.append(verdict)
        elif flag is not None:
            flags.append((entry.run_id or "run", method, flag))
    runs = _group_runs(flags)
    write_evaluation(out_dir, verdicts, runs)
    logger.info(
        "Evaluated predictions",
        method=method,
        scenes=len(verdicts),
        correct=sum(v.correct for v in verdicts),
        false_cuts=sum(r.fp_count for r in runs),
    )
    return verdicts, runs


def read_evaluation(eval_dir: Path) -> Tuple[List[DetectionVerdict], List[FalsePositiveRun]]:
    """Load ``verdicts.csv`` and ``fp_frames.csv`` written by ``run_eval``."""
    eval_dir = Path(eval_dir)
    try:
        verdict_df = pd.read_csv(eval_dir / VERDICTS_CSV, dtype={"scene_id": str, "method": str})
        fp_df = pd.read_csv(eval_dir / FP_FRAMES_CSV, dtype={"run_id": str, "method": str})
    except (OSError, pd.errors.ParserError) as e:
        raise IoFailureError(f"Cannot read evaluation in {eval_dir}: {e}", {"path": str(eval_dir)}) from e

    verdict_df = verdict_df.astype(object).where(verdict_df.notna(), None)
    verdicts = [DetectionVerdict.model_validate(rec) for rec in verdict_df.to_dict("records")]
    flags = [
        (str(rec["run_id"]), str(rec["method"]), bool(rec["false_cut"]))
        for rec in fp_df.to_dict("records")
    ]
    return verdicts, _group_runs(flags)


def build_report(
    verdicts: Sequence[DetectionVerdict],
    runs: Sequence[FalsePositiveRun],
    bins: Optional[Sequence[float]] = None,
) -> EvalReport:
    return EvalReport(rows=detection_rate(verdicts, bins), false_positives=list(runs))


# protocol: in-memory ablation runner

ProtocolTask = Tuple[RenderTask, ManifestEntry, PipelineConfig, CorruptionConfig, Tuple[str, ...]]


def predict(
    scene: SceneRecord, method: str, config: PipelineConfig, corruption: CorruptionConfig
) -> np.ndarray:
    """Corridor prediction of one method variant."""
    cam = scene.meta.camera
    if method == "corridor_raw":
        return segment_mask(scene, corruption)
    if method == "corridor":
        return postprocess(segment_mask(scene, corruption), config.postprocess, cam)[0]
    if method == "fusion":
        energy, mask = segment_energy(scene, corruption, config.oracle)
        corridor = postprocess(mask, config.postprocess, cam)[0]
        return fuse_from_energy(corridor, energy, config.fusion, cam)[0]
    raise ValueError(f"Unknown method: {method}")


def _protocol_task(task: ProtocolTask) -> List[Tuple[Optional[DetectionVerdict], Optional[bool]]]:
    render, entry, config, corruption, methods = task
    spec, scene_id, distance_bin, run_id, sprite_dir = render
    scene = render_scene(spec, scene_id, get_sprite_library(sprite_dir), distance_bin, run_id)
    results: List[Tuple[Optional[DetectionVerdict], Optional[bool]]] = []
    for method in methods:
        pred = predict(scene, method, config, corruption)
        if scene.meta.has_obstacle:
            verdict = judge_detection(
                pred, scene, scene.meta.camera, config.evaluation.tolerance, method,
                config.evaluation.lane_coverage,
            )
            results.append((verdict, None))
        else:
            results.append((None, is_false_cut(pred, config.evaluation.fp_min_range, scene.meta.camera)))
    return results


def run_protocol(
    config: PipelineConfig,
    corruption: CorruptionConfig,
    methods: Sequence[str],
    out_dir: Optional[Path] = None,
    jobs: int = 1,
) -> EvalReport:
    """Render, segment, predict and judge the whole protocol without touching disk."""
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"Unknown methods {unknown}; choose from {list(METHODS)}")

    planned = SceneGenerator(config.protocol, config.camera).plan()
    tasks = [(render, entry, config, corruption, tuple(methods)) for entry, render in planned]
    verdicts: List[DetectionVerdict] = []
    flags: List[Tuple[str, str, bool]] = []
    started = time.perf_counter()
    for (entry, _), results in zip(planned, run_ordered(_protocol_task, tasks, jobs, "protocol")):
        for method, (verdict, flag) in zip(methods, results):
            if verdict is not None:
                verdicts.append(verdict)
            elif flag is not None:
                flags.append((entry.run_id or "run", method, flag))

    # method-major order so reports group rows per method
    verdicts.sort(key=lambda v: list(methods).index(v.method))
    runs = sorted(_group_runs(flags), key=lambda r: list(methods).index(r.method))
    report = build_report(verdicts, runs, config.protocol.distance_bins if verdicts else None)
    logger.info(
        "Protocol finished",
        methods=list(methods),
        corruption=corruption.label(),
        scenes=len(planned),
        duration_s=round(time.perf_counter() - started, 2),
    )
    if out_dir is not None:
        write_evaluation(out_dir, verdicts, runs)
    return report


# bench


def bench_frame(
    scene: SceneRecord, config: PipelineConfig, corruption: CorruptionConfig
) -> LatencyRecord:
    """Time postprocess, energy and fuse of one frame (segmentation excluded)."""
    cam = scene.meta.camera
    logits, mask = segment(scene, corruption, config.oracle)

    t0 = time.perf_counter()
    corridor, _ = postprocess(mask, config.postprocess, cam)
    t1 = time.perf_counter()
    energy = energy_from_logits(logits)
    t2 = time.perf_counter()
    fuse_from_energy(corridor, energy, config.fusion, cam)
    t3 = time.perf_counter()

    return LatencyRecord(
        frame_id=scene.meta.scene_id,
        stages_ms={
            "postprocess": (t1 - t0) * 1000,
            "energy": (t2 - t1) * 1000,
            "fuse": (t3 - t2) * 1000,
        },
    )


def latency_summary(records: Sequence[LatencyRecord]) -> Dict[str, Dict[str, float]]:
    """p50 / p95 / max per stage and for the total."""
    summary: Dict[str, Dict[str, float]] = {}
    if not records:
        return summary
    for stage in list(BENCH_STAGES) + ["total"]:
        values = np.array(
            [r.total_ms if stage == "total" else r.stages_ms.get(stage, 0.0) for r in records]
        )
        summary[stage] = {
            "p50": round(float(np.percentile(values, 50)), 3),
            "p95": round(float(np.percentile(values, 95)), 3),
            "max": round(float(values.max()), 3),
        }
    return summary


def run_bench(
    dataset: Path,
    out_dir: Path,
    config: PipelineConfig,
    corruption: CorruptionConfig,
    frames: int = 100,
    warmup: int = 1,
) -> Dict[str, Dict[str, float]]:
    """Replay up to ``frames`` dataset records single-threaded and record latencies."""
    entries = _entries(dataset)[: frames + warmup]
    records: List[LatencyRecord] = []
    for index, entry in enumerate(entries):
        record = bench_frame(load_scene(dataset, entry), config, corruption)
        if index >= warmup:
            records.append(record)

    frame = pd.DataFrame(
        [{"frame_id": r.frame_id, **r.stages_ms, "total_ms": r.total_ms} for r in records],
        columns=["frame_id", *BENCH_STAGES, "total_ms"],
    )
    _write_csv(frame.round(3), Path(out_dir) / LATENCY_CSV)
    summary = latency_summary(records)
    (Path(out_dir) / "latency_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    total_p95 = summary.get("total", {}).get("p95")
    logger.info("Benchmark finished", frames=len(records), total_p95_ms=total_p95)
    if total_p95 is not None and total_p95 > FRAME_BUDGET_MS:
        logger.warning("Frame budget exceeded", total_p95_ms=total_p95, budget_ms=FRAME_BUDGET_MS)
    return summary
