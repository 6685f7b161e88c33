"""
Command-line entry point.

Each subcommand is a file-to-file stage; ``protocol`` runs the whole synthetic
protocol in memory for a list of method variants.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from pydantic import ValidationError

from app.core.config import load_pipeline_config, settings
from app.core.exceptions import ConfigParseError, CorridorError
from app.core.logging import configure_logging, get_logger
from app.models.pipeline import PipelineConfig, ProtocolConfig
from app.models.segmentation import CorruptionConfig
from app.services import pipeline
from app.services.evaluation import render_report, render_table

logger = get_logger(__name__)


def _corruption(args: argparse.Namespace) -> CorruptionConfig:
    try:
        return CorruptionConfig(modes=args.corruption, rng_seed=args.corruption_seed)
    except (ValidationError, ValueError) as e:
        raise ConfigParseError(f"Invalid corruption {args.corruption!r}: {e}") from e


def _with_protocol(config: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    """Apply ``--protocol`` / ``--seed`` / ``--sprite-dir`` on top of the config file."""
    overrides: Dict[str, object] = dict(config.protocol.model_dump(exclude_unset=True))
    if getattr(args, "seed", None) is not None:
        overrides["master_seed"] = args.seed
    if getattr(args, "sprite_dir", None) is not None:
        overrides["sprite_dir"] = args.sprite_dir
    try:
        protocol = ProtocolConfig.preset(args.protocol, **overrides)
    except (ValidationError, ValueError) as e:
        raise ConfigParseError(f"Invalid protocol: {e}") from e
    return config.model_copy(update={"protocol": protocol})


def _methods(config: PipelineConfig, requested: Optional[str]) -> List[str]:
    if requested:
        return [m.strip() for m in requested.split(",") if m.strip()]
    methods = ["corridor" if config.enable_postprocess else "corridor_raw"]
    if config.enable_fusion:
        methods.append("fusion")
    return methods


def cmd_scenegen(args: argparse.Namespace, config: PipelineConfig, jobs: int) -> None:
    config = _with_protocol(config, args)
    entries = pipeline.generate(config.protocol, config.camera, args.out, jobs)
    print(f"{len(entries)} scenes written to {args.out}")


def cmd_segment(args: argparse.Namespace, config: PipelineConfig, jobs: int) -> None:
    count = pipeline.run_segment(
        args.dataset, args.out, _corruption(args), config, with_logits=args.logits, jobs=jobs
    )
    print(f"{count} corridor masks written to {args.out}")


def cmd_postprocess(args: argparse.Namespace, config: PipelineConfig, jobs: int) -> None:
    count = pipeline.run_postprocess(args.input, args.out, config, jobs)
    print(f"{count} corridors post-processed into {args.out}")


def cmd_energy(args: argparse.Namespace, config: PipelineConfig, jobs: int) -> None:
    count = pipeline.run_energy(args.input, args.out, config, jobs)
    print(f"{count} energy maps written to {args.out}")


def cmd_fuse(args: argparse.Namespace, config: PipelineConfig, jobs: int) -> None:
    count = pipeline.run_fuse(args.corridor, args.energy, args.out, config, jobs)
    print(f"{count} corridors fused into {args.out}")


def cmd_eval(args: argparse.Namespace, config: PipelineConfig, jobs: int) -> None:
    verdicts, runs = pipeline.run_eval(args.dataset, args.pred, args.out, config, args.method, jobs)
    correct = sum(v.correct for v in verdicts)
    false_cuts = sum(r.fp_count for r in runs)
    print(f"{args.method}: {correct}/{len(verdicts)} correct, {false_cuts} false cuts")


def cmd_report(args: argparse.Namespace, config: PipelineConfig, jobs: int) -> None:
    verdicts = []
    runs = []
    for eval_dir in args.eval:
        v, r = pipeline.read_evaluation(eval_dir)
        verdicts.extend(v)
        runs.extend(r)
    report = pipeline.build_report(verdicts, runs)
    render_report(report, args.out)
    print(render_table(report), end="")


def cmd_bench(args: argparse.Namespace, config: PipelineConfig, jobs: int) -> None:
    summary = pipeline.run_bench(
        args.dataset, args.out, config, _corruption(args), frames=args.frames, warmup=args.warmup
    )
    print(f"{'stage':<12} {'p50 ms':>9} {'p95 ms':>9} {'max ms':>9}")
    for stage, stats in summary.items():
        print(f"{stage:<12} {stats['p50']:>9.2f} {stats['p95']:>9.2f} {stats['max']:>9.2f}")


def cmd_protocol(args: argparse.Namespace, config: PipelineConfig, jobs: int) -> None:
    config = _with_protocol(config, args)
    report = pipeline.run_protocol(
        config, _corruption(args), _methods(config, args.methods), args.out, jobs
    )
    render_report(report, args.out)
    print(render_table(report), end="")


def _add_corruption(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--corruption",
        default="clean",
        help="Comma-separated modes, e.g. 'wrap', 'miss_near:60', 'holes:0.005,far_noise:0.0005'",
    )
    parser.add_argument("--corruption-seed", type=int, default=0)


def _add_protocol(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--protocol", choices=["full", "smoke"], default="full")
    parser.add_argument("--seed", type=int, default=None, help="Master seed")
    parser.add_argument("--sprite-dir", type=Path, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corridor", description="Obstacle detection by ego-corridor truncation"
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {settings.app_version} ({settings.app_name})"
    )
    parser.add_argument("--config", type=Path, default=None, help="Pipeline config file")
    parser.add_argument("--jobs", type=int, default=None, help="Worker processes")
    parser.add_argument("--log-level", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scenegen", help="Render the synthetic test-track dataset")
    p.add_argument("--out", type=Path, required=True)
    _add_protocol(p)
    p.set_defaults(handler=cmd_scenegen)

    p = sub.add_parser("segment", help="Oracle corridor masks (and logits) for a dataset")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--logits", action="store_true", help="Also write class logits")
    _add_corruption(p)
    p.set_defaults(handler=cmd_segment)

    p = sub.add_parser("postprocess", help="Post-process corridor masks")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(handler=cmd_postprocess)

    p = sub.add_parser("energy", help="Free-energy maps from logits")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(handler=cmd_energy)

    p = sub.add_parser("fuse", help="Fuse energy outliers into corridors")
    p.add_argument("--corridor", type=Path, required=True)
    p.add_argument("--energy", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(handler=cmd_fuse)

    p = sub.add_parser("eval", help="Judge predicted corridors against the ground truth")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--method", default="corridor")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("report", help="Detection-rate table from eval directories")
    p.add_argument("--eval", type=Path, nargs="+", required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(handler=cmd_report)

    p = sub.add_parser("bench", help="Single-threaded per-frame latency")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--warmup", type=int, default=1)
    _add_corruption(p)
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("protocol", help="Run the whole protocol in memory and report")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--methods", default=None, help="e.g. corridor_raw,corridor,fusion")
    _add_protocol(p)
    _add_corruption(p)
    p.set_defaults(handler=cmd_protocol)
    return parser


Handler = Callable[[argparse.Namespace, PipelineConfig, int], None]


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(level=args.log_level)

    try:
        config = load_pipeline_config(args.config)
        if args.jobs is not None:
            jobs = args.jobs
        else:
            jobs = config.jobs if "jobs" in config.model_fields_set else settings.jobs
        if jobs < 1:
            raise ConfigParseError("--jobs must be >= 1", {"jobs": jobs})
        handler: Handler = args.handler
        handler(args, config, jobs)
    except CorridorError as e:
        logger.error("Command failed", command=args.command, error=e.code, message=e.message)
        print(json.dumps(e.to_dict(), default=str), file=sys.stderr)
        return 2
    except ValueError as e:
        print(json.dumps({"error": "ValueError", "message": str(e), "details": {}}), file=sys.stderr)
        return 2
    except Exception as e:
        logger.exception("Unexpected error", command=args.command)
        print(json.dumps({"error": type(e).__name__, "message": str(e), "details": {}}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
