from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from uqbench.labelspace import load_label_catalog
from uqbench.modelzoo import MEMBER_IDS

from .config import settings
from .experiments import ExperimentRunner, ImageFailure, load_manifest, load_run_config, write_errors
from .reporting import regenerate_report
from .schemas import RunConfig

logger = logging.getLogger(__name__)

EXPERIMENTS = {"classify": [1], "ensemble": [2], "perturb": [3]}


def _shared_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--manifest", required=True, help="Path to the image manifest JSON")
    p.add_argument("--config", default=None, help="Path to a run-config JSON (defaults apply when omitted)")
    p.add_argument("--out", default=None, help="Output directory (default: results/)")
    p.add_argument("--weights-dir", default=None, help="Pretrained weights cache (env UQBENCH_WEIGHTS_DIR)")
    p.add_argument("--cache-dir", default=None, help="Probability / saliency cache directory")
    p.add_argument("--seed", type=int, default=None, help="Seed for SmoothGrad noise")
    p.add_argument("--format", choices=["csv", "markdown"], default=None, help="Table format")
    p.add_argument("--workers", type=int, default=None, help="Images processed in parallel")
    p.add_argument("--no-saliency", action="store_true", help="Skip saliency maps")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="python -m runner.cli",
        description="uqbench - ensemble uncertainty and robustness benchmark",
    )
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING ... (default from settings)")
    sub = parser.add_subparsers(dest="command", required=True)
    shared = _shared_flags()

    sub.add_parser("run", parents=[shared], help="Run every experiment listed in the run config")
    sub.add_parser("classify", parents=[shared], help="Experiment 1: member predictions and votes")
    sub.add_parser("ensemble", parents=[shared], help="Experiment 2: ensemble uncertainty ranking")
    sub.add_parser("perturb", parents=[shared], help="Experiment 3: robustness to perturbations")

    sal = sub.add_parser("saliency", parents=[shared], help="Saliency maps for every manifest image")
    sal.add_argument("--member", choices=[*MEMBER_IDS, "ensemble"], default="ensemble")
    sal.add_argument("--method", choices=["vanilla", "smoothgrad"], default="smoothgrad")

    rep = sub.add_parser("report", help="Re-render stored tables and write summary.pdf")
    rep.add_argument("--out", default=None, help="Results directory (default: results/)")
    rep.add_argument("--format", choices=["csv", "markdown"], default="csv")
    rep.add_argument("--title", default="uqbench run summary")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Apply CLI overrides on top of the run config, and settings below it."""
    config = load_run_config(args.config)
    update = {}
    fields_set = config.model_fields_set

    seed = args.seed if args.seed is not None else (config.seed if "seed" in fields_set else settings.default_seed)
    update["seed"] = seed
    saliency = config.saliency
    if args.seed is not None or "seed" not in saliency.model_fields_set:
        saliency = saliency.model_copy(update={"seed": seed})
    if args.no_saliency:
        saliency = saliency.model_copy(update={"enabled": False})
    update["saliency"] = saliency

    if args.format is not None:
        update["format"] = args.format
    if args.workers is not None:
        if args.workers < 1:
            raise ValueError(f"--workers must be >= 1, got {args.workers}")
        update["workers"] = args.workers
    elif "workers" not in fields_set:
        update["workers"] = max(1, settings.workers)
    return config.model_copy(update=update)


def _report(args: argparse.Namespace) -> int:
    out_dir = Path(args.out) if args.out else settings.results_dir
    try:
        written = regenerate_report(out_dir, args.format, title=args.title)
    except (FileNotFoundError, ValueError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return 2
    for p in written:
        print(f"Saved: {p}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=(args.log_level or settings.log_level).upper(),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )

    if args.command == "report":
        return _report(args)

    try:
        catalog = load_label_catalog(settings.label_catalog)
        config = resolve_config(args)
        manifest = load_manifest(Path(args.manifest), catalog)
    except (FileNotFoundError, ValueError) as e:
        logger.error("Invalid input: %s", e)
        print(f"Error: {e}", file=sys.stderr)
        return 2

    output_dir = Path(args.out) if args.out else (config.output_dir or settings.results_dir)
    cache_dir = Path(args.cache_dir) if args.cache_dir else (config.cache_dir or settings.cache_dir)
    weights_dir = Path(args.weights_dir) if args.weights_dir else settings.weights_dir

    runner = ExperimentRunner(
        config,
        manifest,
        catalog,
        output_dir=output_dir,
        cache_dir=cache_dir,
        weights_dir=weights_dir,
        device=settings.device,
    )

    failures: List[ImageFailure] = []
    files: List[Path] = []
    if args.command == "saliency":
        members = list(config.members) if args.member == "ensemble" else [args.member]
        result = runner.run_saliency(members, method=args.method)
        files += result.files
        failures += result.failures
    else:
        for which in EXPERIMENTS.get(args.command, sorted(set(config.experiments))):
            result = runner.run(which)
            files += result.files
            failures += result.failures

    files.append(write_errors(output_dir, failures))
    for p in files:
        print(f"Saved: {p}")
    print(f"Cache: {runner.cache.hits} hits, {runner.cache.misses} misses; model invocations: {runner.model_invocations}")
    if failures:
        print(f"Failed images: {len(failures)} (see {output_dir / 'errors.csv'})", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
