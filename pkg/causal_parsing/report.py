"""Collect run directories into loss curves, tables and qualitative panels."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .checkpoint import load_checkpoint  # noqa: E402
from .config import experiment_config_from_dict  # noqa: E402
from .const import (  # noqa: E402
    INTERVENTION_RANDOM_STYLE,
    PROTOCOL_ROBUSTNESS,
    RUN_RECORD_FILENAME,
    TRAIN_LOG_FILENAME,
)
from .coordinator import RunRecord  # noqa: E402
from .data import SceneDataset  # noqa: E402
from .evaluation import intervened_scenes, predict  # noqa: E402
from .exceptions import CausalParsingError  # noqa: E402
from .protocols import ARM_CIL_OFF, ARM_CIL_ON, TABLE_JSON, ProtocolTable  # noqa: E402
from .visualize import comparison_panel, dump_vis  # noqa: E402

_LOGGER = logging.getLogger(__name__)

REPORT_DIRNAME = "report"
REPORT_FILENAME = "report.md"
CURVE_TERMS = ("total", "l_det", "l_div", "l_inv")
QUALITATIVE_SCENES = 4


def read_train_log(path: Path) -> list[dict[str, Any]]:
    if not path.is_file():
        return []
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def plot_loss_curves(steps: list[dict[str, Any]], path: Path, title: str) -> Path:
    """Per-step loss terms on one axis."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    x = [record["step"] for record in steps]
    for term in CURVE_TERMS:
        ax.plot(x, [record.get(term, 0.0) for record in steps], label=term, linewidth=1)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title(title, fontsize=9)
    ax.legend(fontsize=7)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def find_runs(runs_dir: Path) -> list[Path]:
    return sorted(path.parent for path in runs_dir.rglob(RUN_RECORD_FILENAME))


def _run_summary_line(runs_dir: Path, run_dir: Path, record: RunRecord) -> str:
    final = record.epochs[-1].get("total", float("nan")) if record.epochs else float("nan")
    test = record.metrics.get("test", {})
    miou = test.get("miou")
    miou_text = f"{100 * miou:.2f}" if miou is not None else "n/a"
    return (
        f"| {run_dir.relative_to(runs_dir)} | {len(record.epochs)} | {final:.4f} | "
        f"{miou_text} | {record.intervened_forward_passes} | {record.wall_clock:.1f} |"
    )


def _qualitative(runs_dir: Path, out_dir: Path) -> list[Path]:
    """CIL versus no-CIL parsing under a style intervention, plus panels of the CIL model."""
    base = runs_dir / PROTOCOL_ROBUSTNESS
    if not base.is_dir():
        base = runs_dir
    off_runs = find_runs(base / ARM_CIL_OFF) if (base / ARM_CIL_OFF).is_dir() else []
    on_runs = find_runs(base / ARM_CIL_ON) if (base / ARM_CIL_ON).is_dir() else []
    if not off_runs or not on_runs:
        return []
    record_off = RunRecord.load(off_runs[0] / RUN_RECORD_FILENAME)
    record_on = RunRecord.load(on_runs[0] / RUN_RECORD_FILENAME)
    config = experiment_config_from_dict(record_on.config)
    scenes = SceneDataset(config.data.resolved_test_manifest, config.data.test_split).scenes()
    scenes = [scene for scene in scenes if scene.instances][:QUALITATIVE_SCENES]
    styled = intervened_scenes(scenes, INTERVENTION_RANDOM_STYLE, seed=0)

    model_off, config_off = load_checkpoint(record_off.checkpoint)
    model_on, config_on = load_checkpoint(record_on.checkpoint)
    predictions = {
        "without CIL": predict(model_off, styled, config_off.inference),
        "with CIL": predict(model_on, styled, config_on.inference),
    }
    written = [comparison_panel(styled, predictions, out_dir / "cil_comparison.png")]
    written += dump_vis(model_on, scenes, out_dir / "panels", max_scenes=QUALITATIVE_SCENES)
    return written


def report(runs_dir: str | Path, out_dir: str | Path | None = None) -> Path:
    """Write ``report.md`` with curves, tables and panels; return its path."""
    runs_dir = Path(runs_dir)
    if not runs_dir.is_dir():
        raise CausalParsingError(f"Runs directory {runs_dir} does not exist")
    out_dir = Path(out_dir) if out_dir else runs_dir / REPORT_DIRNAME
    out_dir.mkdir(parents=True, exist_ok=True)

    lines = [f"# Report for {runs_dir}", ""]

    tables = sorted(runs_dir.rglob(TABLE_JSON))
    for path in tables:
        table = ProtocolTable.from_dict(json.loads(path.read_text()))
        lines += [table.to_markdown(), ""]

    runs = [run for run in find_runs(runs_dir) if run != out_dir and out_dir not in run.parents]
    if runs:
        lines += [
            "## Runs",
            "",
            "| run | epochs | final loss | test mIoU | intervened passes | seconds |",
            "|---|---:|---:|---:|---:|---:|",
        ]
    for run_dir in runs:
        try:
            record = RunRecord.load(run_dir / RUN_RECORD_FILENAME)
        except CausalParsingError as err:
            _LOGGER.warning("Skipping %s: %s", run_dir, err)
            continue
        lines.append(_run_summary_line(runs_dir, run_dir, record))
        steps = read_train_log(run_dir / TRAIN_LOG_FILENAME)
        if steps:
            name = "_".join(run_dir.relative_to(runs_dir).parts) or "run"
            plot_loss_curves(steps, out_dir / "curves" / f"{name}.png", name)

    try:
        panels = _qualitative(runs_dir, out_dir)
    except CausalParsingError as err:
        _LOGGER.warning("Skipping qualitative panels: %s", err)
        panels = []
    if panels:
        lines += ["", "## Panels", ""]
        lines += [f"![{path.stem}]({path.relative_to(out_dir)})" for path in panels]

    if not tables and not runs:
        _LOGGER.warning("No runs or protocol tables found under %s", runs_dir)
    path = out_dir / REPORT_FILENAME
    path.write_text("\n".join(lines) + "\n")
    _LOGGER.info("Report written to %s", path)
    return path
