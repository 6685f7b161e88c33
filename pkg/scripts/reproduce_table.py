"""
Run the detection-rate ablations on the synthetic protocol and write one report
per experiment, plus a combined Markdown summary.
"""

import argparse
import sys
from pathlib import Path

# Add the project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from app.core.config import load_pipeline_config
from app.core.exceptions import CorridorError
from app.core.logging import configure_logging, get_logger
from app.models.pipeline import ProtocolConfig
from app.models.segmentation import CorruptionConfig
from app.services.evaluation import render_report, render_table
from app.services.pipeline import run_protocol

configure_logging()
logger = get_logger(__name__)

# name -> (corruption, methods)
EXPERIMENTS = {
    "clean": ("clean", ["corridor"]),
    "wrap": ("wrap", ["corridor_raw", "corridor"]),
    "miss_near": ("miss_near:60", ["corridor", "fusion"]),
    "far_noise": ("miss_near:60,far_noise:0.0005", ["corridor", "fusion"]),
    "holes": ("holes:0.005", ["corridor_raw", "corridor"]),
}


def main() -> int:
    parser = argparse.ArgumentParser(description="Reproduce the detection-rate table")
    parser.add_argument("--out", type=Path, default=Path("results"))
    parser.add_argument("--config", type=Path, default=None)
    parser.add_argument("--protocol", choices=["full", "smoke"], default="full")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument(
        "--only", nargs="*", choices=sorted(EXPERIMENTS), default=None, help="Subset of experiments"
    )
    args = parser.parse_args()

    try:
        config = load_pipeline_config(args.config)
        overrides = {**config.protocol.model_dump(exclude_unset=True), "master_seed": args.seed}
        protocol = ProtocolConfig.preset(args.protocol, **overrides)
        config = config.model_copy(update={"protocol": protocol})

        summary = []
        for name in args.only or list(EXPERIMENTS):
            corruption, methods = EXPERIMENTS[name]
            logger.info("Running experiment", experiment=name, corruption=corruption, methods=methods)
            report = run_protocol(
                config, CorruptionConfig(modes=corruption), methods, args.out / name, args.jobs
            )
            render_report(report, args.out / name)
            summary.append(f"## {name} (`{corruption}`)\n\n{render_table(report)}")

        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "summary.md").write_text("\n".join(summary), encoding="utf-8")
        print("\n".join(summary))
    except CorridorError as e:
        logger.error("Reproduction failed", error=e.code, message=e.message, **e.details)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
