"""Command-line interface: ``causal-parsing <command> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from .config import (
    leave_one_style_out,
    load_dataset_config,
    load_experiment_config,
)
from .const import (
    DEFAULT_TEST_SPLIT,
    DEFAULT_TRAIN_SPLIT,
    DOMAIN,
    PROTOCOLS,
    RUN_RECORD_FILENAME,
    STYLES,
)
from .exceptions import CausalParsingError, ConfigError

_LOGGER = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


# ── Commands ─────────────────────────────────────────────────────────


def _generate_data(args: argparse.Namespace) -> int:
    from .synthscenes import make_dataset

    config = load_dataset_config(args.config)
    if args.leave_one_style_out:
        sizes = {split.name: split.size for split in config.splits}
        missing = [name for name in (DEFAULT_TRAIN_SPLIT, DEFAULT_TEST_SPLIT) if name not in sizes]
        if missing:
            raise ConfigError(
                f"--leave-one-style-out needs splits named {', '.join(missing)} for their sizes"
            )
        config = leave_one_style_out(
            args.leave_one_style_out,
            sizes[DEFAULT_TRAIN_SPLIT],
            sizes[DEFAULT_TEST_SPLIT],
            seed_base=config.seed_base,
            image_size=config.image_size,
        )
    manifest = make_dataset(config, args.out, force=args.force, workers=args.workers)
    print(f"Wrote {config.total_size} scenes, manifest {manifest}")
    return 0


def _train(args: argparse.Namespace) -> int:
    from .checkpoint import load_checkpoint
    from .coordinator import train
    from .data import SceneDataset
    from .evaluation import evaluate_model
    from .visualize import dump_vis

    config = load_experiment_config(args.config)
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    run_dir = Path(args.out) if args.out else Path("runs") / config.name / f"seed{config.seed}"
    record = train(config, run_dir, args.device)

    model, _ = load_checkpoint(record.checkpoint)
    model.to(args.device)
    test_manifest = config.data.resolved_test_manifest
    scenes = SceneDataset(test_manifest, config.data.test_split).scenes()
    report = evaluate_model(model, scenes, config.inference, device=args.device)
    record.metrics[DEFAULT_TEST_SPLIT] = report.to_dict()
    record.save(run_dir / RUN_RECORD_FILENAME)
    print(report.to_table())

    if args.dump_vis:
        written = dump_vis(model, scenes, args.dump_vis, device=args.device)
        print(f"Wrote {len(written)} panels to {args.dump_vis}")
    print(f"Run directory: {run_dir}")
    return 0


def _eval(args: argparse.Namespace) -> int:
    from .evaluation import evaluate

    report = evaluate(args.ckpt, args.manifest, args.split, args.device)
    print(report.to_json() if args.json else report.to_table())
    return 0


def _protocol(args: argparse.Namespace) -> int:
    from .protocols import run_protocol

    config = load_experiment_config(args.config)
    if args.seeds:
        config = config.replace(protocol={"seeds": args.seeds})
    table = run_protocol(args.name, config, args.out, args.device)
    print(table.to_markdown())
    return 0


def _report(args: argparse.Namespace) -> int:
    from .report import report

    path = report(args.runs, args.out)
    print(f"Report written to {path}")
    return 0


# ── Parser ───────────────────────────────────────────────────────────


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=DOMAIN.replace("_", "-"),
        description="Multiple human parsing with causal factor separation on synthetic scenes.",
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate-data", help="render a synthetic dataset and its manifest")
    gen.add_argument("--config", required=True, help="dataset YAML")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--force", action="store_true", help="overwrite an existing manifest")
    gen.add_argument("--workers", type=int, default=1, help="parallel render processes")
    gen.add_argument(
        "--leave-one-style-out",
        choices=STYLES,
        metavar="STYLE",
        help="train on STYLE only and write one test_<style> split per style",
    )
    gen.set_defaults(func=_generate_data)

    tr = sub.add_parser("train", help="train one configuration")
    tr.add_argument("--config", required=True, help="experiment YAML")
    tr.add_argument("--seed", type=int, help="override the config seed")
    tr.add_argument("--out", help="run directory (default runs/<name>/seed<k>)")
    tr.add_argument("--dump-vis", metavar="DIR", help="write heatmap panels after training")
    tr.add_argument("--device", default="cpu")
    tr.set_defaults(func=_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    ev.add_argument("--ckpt", required=True)
    ev.add_argument("--manifest", required=True)
    ev.add_argument("--split", help="manifest split (default: every entry)")
    ev.add_argument("--json", action="store_true", help="print the report as JSON")
    ev.add_argument("--device", default="cpu")
    ev.set_defaults(func=_eval)

    pr = sub.add_parser("protocol", help="run an experiment protocol")
    pr.add_argument("name", choices=PROTOCOLS)
    pr.add_argument("--config", required=True, help="base experiment YAML")
    pr.add_argument("--out", default="runs", help="protocol output directory")
    pr.add_argument("--seeds", type=int, nargs="+", help="override protocol.seeds")
    pr.add_argument("--device", default="cpu")
    pr.set_defaults(func=_protocol)

    rep = sub.add_parser("report", help="plots and tables from run directories")
    rep.add_argument("--runs", required=True, help="directory holding runs or protocol output")
    rep.add_argument("--out", help="report directory (default <runs>/report)")
    rep.set_defaults(func=_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT, force=True
    )
    try:
        return args.func(args)
    except (CausalParsingError, ValueError, FileNotFoundError) as err:
        _LOGGER.debug("Command %s failed", args.command, exc_info=True)
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
