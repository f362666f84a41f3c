"""Experiment protocols: component ablation, unseen-style generalization, robustness.

Every arm is a derived :class:`ExperimentConfig` trained once per seed into
``<out>/<protocol>/<arm>/seed<k>/``. A run directory whose ``run.json``
echoes the requested config is reused, so re-running a protocol only
trains what is missing.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .checkpoint import load_checkpoint
from .config import ExperimentConfig
from .const import (
    BRANCH_MIOU_TOLERANCE_POINTS,
    BRANCHES_BOTH,
    BRANCHES_CONTENT,
    BRANCHES_CONTEXT,
    CLAIM_MARGIN_POINTS,
    DEFAULT_INTERVENTION_VIEWS,
    DEFAULT_TEST_SPLIT,
    DEFAULT_TRAIN_SPLIT,
    DIVERSITY_SIMILARITY_CEILING,
    HELDOUT_SPLIT_PREFIX,
    INTERVENTION_RANDOM_MASK,
    INTERVENTION_RANDOM_STYLE,
    INTERVENTIONS,
    PROTOCOL_ABLATION,
    PROTOCOL_GENERALIZATION,
    PROTOCOL_ROBUSTNESS,
    RUN_RECORD_FILENAME,
    STYLES,
)
from .coordinator import RunRecord, train
from .data import SceneDataset, manifest_digest, read_manifest
from .evaluation import evaluate_model, intervened_scenes, representation_stats
from .exceptions import CausalParsingError, ConfigError, DatasetError
from .metrics import MetricsReport
from .synthscenes import LabeledScene

_LOGGER = logging.getLogger(__name__)

TABLE_MARKDOWN = "table.md"
TABLE_JSON = "table.json"

ARM_BASELINE = "baseline"
ARM_CFS = "cfs"
ARM_CFS_CONTENT = "cfs_content"
ARM_CFS_CONTEXT = "cfs_context"
ARM_CFS_CIL = "cfs_cil"
ARM_CIL_OFF = "cil_off"
ARM_CIL_ON = "cil_on"

_NO_CIL = {"use_div": False, "use_inv": False}


def ablation_arms(config: ExperimentConfig) -> dict[str, dict[str, Any]]:
    """Loss overrides of the component ablation, in table order."""
    views = list(config.loss.intervention_views or DEFAULT_INTERVENTION_VIEWS)
    return {
        ARM_BASELINE: {"use_cfs": False, **_NO_CIL},
        ARM_CFS: {"use_cfs": True, "cfs_branches": BRANCHES_BOTH, **_NO_CIL},
        ARM_CFS_CONTENT: {"use_cfs": True, "cfs_branches": BRANCHES_CONTENT, **_NO_CIL},
        ARM_CFS_CONTEXT: {"use_cfs": True, "cfs_branches": BRANCHES_CONTEXT, **_NO_CIL},
        ARM_CFS_CIL: {
            "use_cfs": True,
            "cfs_branches": BRANCHES_BOTH,
            "use_div": True,
            "use_inv": True,
            "intervention_views": views,
        },
    }


def unseen_style_views(train_style: str, unseen: str) -> list[str]:
    """Training views that never render ``unseen``: the other style plus a mask."""
    others = [s for s in STYLES if s not in (train_style, unseen)]
    return others + [INTERVENTION_RANDOM_MASK]


# ── Tables ───────────────────────────────────────────────────────────


@dataclass
class Claim:
    """One directional acceptance check computed from the table."""

    name: str
    passed: bool
    detail: str


@dataclass
class ProtocolTable:
    """Rows are arms, columns are seed-averaged metrics in [0, 1]."""

    protocol: str
    columns: list[str]
    rows: dict[str, dict[str, float]]
    per_seed: dict[str, dict[str, list[float]]] = field(default_factory=dict)
    claims: list[Claim] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)

    def value(self, arm: str, column: str) -> float:
        return self.rows[arm][column]

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ProtocolTable:
        claims = [Claim(**claim) for claim in data.get("claims", [])]
        return cls(
            protocol=data["protocol"],
            columns=list(data["columns"]),
            rows=data["rows"],
            per_seed=data.get("per_seed", {}),
            claims=claims,
            seeds=list(data.get("seeds", [])),
        )

    def to_markdown(self) -> str:
        """Markdown table in metric points (0-100) followed by the claim checks."""
        header = "| arm | " + " | ".join(self.columns) + " |"
        rule = "|---|" + "---:|" * len(self.columns)
        lines = [f"## {self.protocol} (seeds {self.seeds})", "", header, rule]
        for arm, values in self.rows.items():
            cells = []
            for column in self.columns:
                value = values.get(column, float("nan"))
                cells.append("n/a" if np.isnan(value) else f"{100 * value:.2f}")
            lines.append(f"| {arm} | " + " | ".join(cells) + " |")
        if self.claims:
            lines += ["", "| claim | result | detail |", "|---|---|---|"]
            for claim in self.claims:
                verdict = "pass" if claim.passed else "FAIL"
                lines.append(f"| {claim.name} | {verdict} | {claim.detail} |")
        return "\n".join(lines) + "\n"

    def save(self, out_dir: str | Path) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / TABLE_MARKDOWN).write_text(self.to_markdown())
        (out_dir / TABLE_JSON).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        return out_dir / TABLE_MARKDOWN


def _points(value: float) -> str:
    return f"{100 * value:.2f}"


def greater_claim(
    name: str, better: float, worse: float, margin_points: float = 0.0, *, strict: bool = False
) -> Claim:
    """``better`` beats ``worse`` by at least ``margin_points`` (0-100 scale)."""
    gap = 100 * (better - worse)
    passed = gap > margin_points if strict else gap >= margin_points
    return Claim(name, bool(passed), f"{_points(better)} vs {_points(worse)} (gap {gap:+.2f})")


# ── Runs ─────────────────────────────────────────────────────────────


def run_directory(out_dir: Path, protocol: str, arm: str, seed: int) -> Path:
    return out_dir / protocol / arm / f"seed{seed}"


def ensure_run(config: ExperimentConfig, run_dir: Path, device: str = "cpu") -> RunRecord:
    """Train ``config`` into ``run_dir`` unless a matching run is already there."""
    record_path = run_dir / RUN_RECORD_FILENAME
    if config.protocol.reuse_runs and record_path.is_file():
        try:
            record = RunRecord.load(record_path)
        except CausalParsingError as err:
            _LOGGER.warning("Ignoring unreadable run record %s: %s", record_path, err)
        else:
            has_checkpoint = bool(record.checkpoint) and Path(record.checkpoint).is_file()
            if record.config == config.to_dict() and has_checkpoint:
                _LOGGER.info("Reusing run in %s", run_dir)
                return record
            _LOGGER.warning("Run in %s has a different config, retraining", run_dir)
    return train(config, run_dir, device)


class ArmRunner:
    """Trains and evaluates the seeds of one arm, caching metrics in run.json."""

    def __init__(self, out_dir: Path, protocol: str, device: str = "cpu") -> None:
        self.out_dir = out_dir
        self.protocol = protocol
        self.device = device

    def records(self, arm: str, config: ExperimentConfig) -> list[tuple[Path, RunRecord]]:
        runs = []
        for seed in config.protocol.seeds:
            run_dir = run_directory(self.out_dir, self.protocol, arm, seed)
            seeded = config.replace(seed=seed)
            runs.append((run_dir, ensure_run(seeded, run_dir, self.device)))
            _LOGGER.info("Protocol %s: arm %s seed %d ready", self.protocol, arm, seed)
        return runs

    def metric(
        self,
        run_dir: Path,
        record: RunRecord,
        key: str,
        scenes: list[LabeledScene],
        manifest: str | Path,
    ) -> MetricsReport:
        """Evaluate the run's final checkpoint on ``scenes``, memoized per manifest content."""
        key = f"{key}#{manifest_digest(manifest)}"
        if key in record.metrics:
            return MetricsReport.from_dict(record.metrics[key])
        model, config = load_checkpoint(record.checkpoint)
        model.to(self.device)
        report = evaluate_model(model, scenes, config.inference, device=self.device)
        record.metrics[key] = report.to_dict()
        record.save(run_dir / RUN_RECORD_FILENAME)
        return report

    def representations(
        self,
        run_dir: Path,
        record: RunRecord,
        scenes: list[LabeledScene],
        manifest: str | Path,
    ) -> dict:
        key = f"representations#{manifest_digest(manifest)}"
        if key not in record.metrics:
            model, config = load_checkpoint(record.checkpoint)
            model.to(self.device)
            result = representation_stats(
                model, scenes, config.inference, config.matcher, device=self.device
            )
            record.metrics[key] = result.to_dict()
            record.save(run_dir / RUN_RECORD_FILENAME)
        return record.metrics[key]


def _mean(values: list[float]) -> float:
    return float(np.mean(values)) if values else float("nan")


def _test_scenes(config: ExperimentConfig) -> list[LabeledScene]:
    data = config.data
    return SceneDataset(data.resolved_test_manifest, data.test_split).scenes()


# ── Ablation ─────────────────────────────────────────────────────────

ABLATION_COLUMNS = ["mIoU", "AP^p_50", "AP^p_vol", "PCP_50"]


def _report_columns(report: MetricsReport) -> dict[str, float]:
    return {
        "mIoU": report.miou,
        "AP^p_50": report.ap_p50,
        "AP^p_vol": report.ap_p_vol,
        "PCP_50": report.pcp50,
    }


def protocol_ablation(
    config: ExperimentConfig, out_dir: str | Path, device: str = "cpu"
) -> ProtocolTable:
    """Baseline, CFS with the part loss only, single-branch CFS, CFS plus CIL."""
    out_dir = Path(out_dir)
    runner = ArmRunner(out_dir, PROTOCOL_ABLATION, device)
    test_manifest = config.data.resolved_test_manifest
    scenes = _test_scenes(config)
    rows: dict[str, dict[str, float]] = {}
    per_seed: dict[str, dict[str, list[float]]] = {}

    for arm, overrides in ablation_arms(config).items():
        arm_config = config.replace(loss=overrides)
        seed_values: dict[str, list[float]] = {column: [] for column in ABLATION_COLUMNS}
        for run_dir, record in runner.records(arm, arm_config):
            report = runner.metric(run_dir, record, DEFAULT_TEST_SPLIT, scenes, test_manifest)
            for column, value in _report_columns(report).items():
                seed_values[column].append(value)
        per_seed[arm] = seed_values
        rows[arm] = {column: _mean(values) for column, values in seed_values.items()}

    vol = {arm: rows[arm]["AP^p_vol"] for arm in rows}
    claims = [
        greater_claim(
            "CFS beats baseline (AP^p_vol)", vol[ARM_CFS], vol[ARM_BASELINE], strict=True
        ),
        greater_claim("CIL beats CFS (AP^p_vol)", vol[ARM_CFS_CIL], vol[ARM_CFS], strict=True),
        greater_claim(
            "CIL beats baseline by margin (AP^p_vol)",
            vol[ARM_CFS_CIL],
            vol[ARM_BASELINE],
            CLAIM_MARGIN_POINTS,
        ),
        greater_claim(
            "both branches beat the best single branch (AP^p_vol)",
            vol[ARM_CFS],
            max(vol[ARM_CFS_CONTENT], vol[ARM_CFS_CONTEXT]),
        ),
    ]
    table = ProtocolTable(
        protocol=PROTOCOL_ABLATION,
        columns=ABLATION_COLUMNS,
        rows=rows,
        per_seed=per_seed,
        claims=claims,
        seeds=list(config.protocol.seeds),
    )
    table.save(out_dir / PROTOCOL_ABLATION)
    return table


# ── Generalization ───────────────────────────────────────────────────


def _check_heldout_manifest(manifest: str, train_style: str) -> list[str]:
    """Unseen styles with a test split in ``manifest``; rejects a mixed train split."""
    train_entries = read_manifest(manifest, DEFAULT_TRAIN_SPLIT)
    styles = sorted({entry.style for entry in train_entries})
    if styles != [train_style]:
        raise DatasetError(
            f"Train split of {manifest} has styles {styles}, expected only '{train_style}'"
        )
    available = {entry.split for entry in read_manifest(manifest)}
    unseen = [
        style
        for style in STYLES
        if style != train_style and f"{HELDOUT_SPLIT_PREFIX}{style}" in available
    ]
    if not unseen:
        raise DatasetError(
            f"{manifest} has no {HELDOUT_SPLIT_PREFIX}<style> split for an unseen style"
        )
    return unseen


def protocol_generalization(
    config: ExperimentConfig, out_dir: str | Path, device: str = "cpu"
) -> ProtocolTable:
    """Train on one style, test on every other; CIL on versus off."""
    out_dir = Path(out_dir)
    manifest = config.data.heldout_manifest
    if not manifest:
        raise ConfigError("The generalization protocol needs data.heldout_manifest")
    train_style = config.protocol.train_style
    unseen_styles = _check_heldout_manifest(manifest, train_style)
    runner = ArmRunner(out_dir, PROTOCOL_GENERALIZATION, device)
    base = config.replace(data={"train_manifest": manifest, "train_split": DEFAULT_TRAIN_SPLIT})

    columns = []
    for style in unseen_styles:
        columns += [f"{style} mIoU", f"{style} AP^p_vol"]
    per_seed: dict[str, dict[str, list[float]]] = {ARM_CIL_OFF: {}, ARM_CIL_ON: {}}

    for style in unseen_styles:
        split = f"{HELDOUT_SPLIT_PREFIX}{style}"
        scenes = SceneDataset(manifest, split).scenes()
        views = (
            unseen_style_views(train_style, style)
            if config.protocol.strict_unseen
            else list(config.loss.intervention_views or DEFAULT_INTERVENTION_VIEWS)
        )
        arms = {
            ARM_CIL_OFF: (ARM_CIL_OFF, base.replace(loss={"use_cfs": True, **_NO_CIL})),
            ARM_CIL_ON: (
                f"{ARM_CIL_ON}_{style}" if config.protocol.strict_unseen else ARM_CIL_ON,
                base.replace(
                    loss={
                        "use_cfs": True,
                        "cfs_branches": BRANCHES_BOTH,
                        "use_div": True,
                        "use_inv": True,
                        "intervention_views": views,
                    }
                ),
            ),
        }
        for arm, (run_name, arm_config) in arms.items():
            mious, vols = [], []
            for run_dir, record in runner.records(run_name, arm_config):
                report = runner.metric(run_dir, record, split, scenes, manifest)
                mious.append(report.miou)
                vols.append(report.ap_p_vol)
            per_seed[arm][f"{style} mIoU"] = mious
            per_seed[arm][f"{style} AP^p_vol"] = vols

    rows = {
        arm: {column: _mean(values) for column, values in seed_values.items()}
        for arm, seed_values in per_seed.items()
    }
    claims = [
        greater_claim(
            f"CIL beats no-CIL on unseen {style} (mIoU)",
            rows[ARM_CIL_ON][f"{style} mIoU"],
            rows[ARM_CIL_OFF][f"{style} mIoU"],
            CLAIM_MARGIN_POINTS,
        )
        for style in unseen_styles
    ]
    table = ProtocolTable(
        protocol=PROTOCOL_GENERALIZATION,
        columns=columns,
        rows=rows,
        per_seed=per_seed,
        claims=claims,
        seeds=list(config.protocol.seeds),
    )
    table.save(out_dir / PROTOCOL_GENERALIZATION)
    return table


# ── Robustness ───────────────────────────────────────────────────────

REPRESENTATION_COLUMNS = [
    "invariance cos",
    "diversity cos",
    "content mIoU",
    "context mIoU",
    "fused mIoU",
]
_REPRESENTATION_KEYS = {
    "invariance cos": "invariance_cosine",
    "diversity cos": "diversity_cosine",
    "content mIoU": "miou_content",
    "context mIoU": "miou_context",
    "fused mIoU": "miou_fused",
}


def protocol_robustness(
    config: ExperimentConfig, out_dir: str | Path, device: str = "cpu"
) -> ProtocolTable:
    """Clean and intervened test mIoU plus representation statistics, CIL on versus off."""
    out_dir = Path(out_dir)
    runner = ArmRunner(out_dir, PROTOCOL_ROBUSTNESS, device)
    test_manifest = config.data.resolved_test_manifest
    scenes = _test_scenes(config)
    intervened = {
        (kind, seed): intervened_scenes(scenes, kind, seed)
        for kind in INTERVENTIONS
        for seed in config.protocol.intervention_seeds
    }
    arms = {
        ARM_CIL_OFF: config.replace(loss=ablation_arms(config)[ARM_CFS]),
        ARM_CIL_ON: config.replace(loss=ablation_arms(config)[ARM_CFS_CIL]),
    }
    columns = ["clean mIoU"] + [f"{kind} mIoU" for kind in INTERVENTIONS] + REPRESENTATION_COLUMNS
    per_seed: dict[str, dict[str, list[float]]] = {}

    for arm, arm_config in arms.items():
        seed_values: dict[str, list[float]] = {column: [] for column in columns}
        for run_dir, record in runner.records(arm, arm_config):
            clean = runner.metric(run_dir, record, DEFAULT_TEST_SPLIT, scenes, test_manifest)
            seed_values["clean mIoU"].append(clean.miou)
            for kind in INTERVENTIONS:
                repeats = [
                    runner.metric(
                        run_dir, record, f"{kind}@{seed}", intervened[(kind, seed)], test_manifest
                    ).miou
                    for seed in config.protocol.intervention_seeds
                ]
                seed_values[f"{kind} mIoU"].append(_mean(repeats))
            stats = runner.representations(run_dir, record, scenes, test_manifest)
            for column, key in _REPRESENTATION_KEYS.items():
                seed_values[column].append(float(stats[key]))
        per_seed[arm] = seed_values

    rows = {
        arm: {column: _mean(values) for column, values in seed_values.items()}
        for arm, seed_values in per_seed.items()
    }
    on, off = rows[ARM_CIL_ON], rows[ARM_CIL_OFF]
    claims = [
        greater_claim(f"CIL holds up under {kind} (mIoU)", on[f"{kind} mIoU"], off[f"{kind} mIoU"])
        for kind in INTERVENTIONS
    ]
    claims.append(
        greater_claim(
            "CIL beats no-CIL by margin under random_style (mIoU)",
            on[f"{INTERVENTION_RANDOM_STYLE} mIoU"],
            off[f"{INTERVENTION_RANDOM_STYLE} mIoU"],
            CLAIM_MARGIN_POINTS,
        )
    )
    claims.append(
        greater_claim(
            "content representation more style-invariant with CIL",
            on["invariance cos"],
            off["invariance cos"],
            strict=True,
        )
    )
    diversity = on["diversity cos"]
    claims.append(
        Claim(
            "content and context diverse with CIL",
            bool(diversity < DIVERSITY_SIMILARITY_CEILING),
            f"cosine {diversity:.3f} < {DIVERSITY_SIMILARITY_CEILING}",
        )
    )
    worst_gap = 100 * max(
        abs(on["content mIoU"] - on["fused mIoU"]), abs(on["context mIoU"] - on["fused mIoU"])
    )
    claims.append(
        Claim(
            "each branch segments alone with CIL",
            bool(worst_gap <= BRANCH_MIOU_TOLERANCE_POINTS),
            f"largest branch gap {worst_gap:.2f} points",
        )
    )
    table = ProtocolTable(
        protocol=PROTOCOL_ROBUSTNESS,
        columns=columns,
        rows=rows,
        per_seed=per_seed,
        claims=claims,
        seeds=list(config.protocol.seeds),
    )
    table.save(out_dir / PROTOCOL_ROBUSTNESS)
    return table


PROTOCOL_RUNNERS = {
    PROTOCOL_ABLATION: protocol_ablation,
    PROTOCOL_GENERALIZATION: protocol_generalization,
    PROTOCOL_ROBUSTNESS: protocol_robustness,
}


def run_protocol(
    name: str, config: ExperimentConfig, out_dir: str | Path, device: str = "cpu"
) -> ProtocolTable:
    if name not in PROTOCOL_RUNNERS:
        raise ConfigError(f"Unknown protocol '{name}', expected one of {sorted(PROTOCOL_RUNNERS)}")
    _LOGGER.info("Running protocol %s into %s", name, out_dir)
    return PROTOCOL_RUNNERS[name](config, out_dir, device)
