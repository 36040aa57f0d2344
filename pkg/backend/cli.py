"""
Experiment CLI
train | compare | sweep-hyper | evaluate | serve
"""

import argparse
import sys
from typing import List, Optional

from loguru import logger

from models.experiment import ExperimentSpec, PolicyTag, load_spec, parse_spec
from services.experiment_service import experiment_service
from utils.config import settings
from utils.exceptions import MECError
from utils.log_config import configure_logging

# Used when --axis names an axis the config file does not sweep
DEFAULT_AXIS_VALUES = {
    "terminals": [4, 6, 8, 10],
    "speed": [5.0, 10.0, 15.0, 20.0],
    "learning_rate": [0.1, 0.01, 0.001],
    "batch_size": [16, 64, 256],
}
SWEEP_AXES = ("terminals", "speed")
HYPER_AXES = ("learning_rate", "batch_size")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mec-sim", description="MEC two-stage offloading experiments")
    parser.add_argument("--log-level", default=None, help="Overrides LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment_command(name: str, help_text: str) -> argparse.ArgumentParser:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", default=None, help="JSON experiment file (defaults apply when omitted)")
        cmd.add_argument("--seed", type=int, default=None)
        cmd.add_argument("--policy", choices=[tag.value for tag in PolicyTag], default=None)
        cmd.add_argument("--out", default=None, help="Output directory")
        cmd.add_argument("--episodes", type=int, default=None)
        return cmd

    experiment_command("train", "Train one learner per server and write the loss curve")

    compare = experiment_command("compare", "Evaluate policies over a sweep axis")
    compare.add_argument("--depth", type=int, default=None, help="Exhaustive traversal depth")
    compare.add_argument("--axis", choices=SWEEP_AXES, default=None)

    hyper = experiment_command("sweep-hyper", "Loss curves across learning rates or batch sizes")
    hyper.add_argument("--axis", choices=HYPER_AXES, default=None)

    evaluate = experiment_command("evaluate", "Run frozen evaluation episodes for one policy")
    evaluate.add_argument("--depth", type=int, default=None, help="Exhaustive traversal depth")

    serve = sub.add_parser("serve", help="Start the HTTP API")
    serve.add_argument("--host", default="0.0.0.0")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def resolve_spec(args: argparse.Namespace) -> ExperimentSpec:
    """Load the config file and apply command-line overrides, re-validating the result"""
    spec = load_spec(args.config) if args.config else ExperimentSpec()
    data = spec.model_dump(mode="json", by_alias=True)

    if args.seed is not None:
        data["seed"] = args.seed
    if args.out is not None:
        data["output_dir"] = args.out
    if args.episodes is not None:
        data["episodes"] = args.episodes
    if args.policy is not None:
        data["policy"]["tag"] = args.policy
    if getattr(args, "depth", None) is not None:
        data["policy"]["depth"] = args.depth

    axis = getattr(args, "axis", None)
    if axis in SWEEP_AXES and (data.get("sweep") or {}).get("axis") != axis:
        data["sweep"] = {"axis": axis, "values": DEFAULT_AXIS_VALUES[axis]}
    if axis in HYPER_AXES and (data.get("hyper_sweep") or {}).get("axis") != axis:
        data["hyper_sweep"] = {"axis": axis, "values": DEFAULT_AXIS_VALUES[axis]}
    return parse_spec(data)


def run(args: argparse.Namespace) -> int:
    if args.command == "serve":
        import uvicorn

        uvicorn.run("main:app", host=args.host, port=args.port, reload=False, log_level="info")
        return 0

    spec = resolve_spec(args)
    logger.info(f"{args.command}: config_sha256={spec.config_hash()} seed={spec.seed} out={spec.output_dir}")
    verbs = {
        "train": experiment_service.train,
        "compare": experiment_service.compare,
        "sweep-hyper": experiment_service.sweep_hyper,
        "evaluate": experiment_service.evaluate,
    }
    result = verbs[args.command](spec)
    for name, path in result.outputs.items():
        logger.info(f"{name}: {path}")
    if result.checkpoints:
        logger.info(f"{len(result.checkpoints)} checkpoints under {result.checkpoints[0].parent}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(level=args.log_level or settings.LOG_LEVEL)
    try:
        return run(args)
    except MECError as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        logger.error(f"Unexpected failure: {e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
