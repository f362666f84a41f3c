"""Training coordinator: data, optimisation, checkpoints and the decision log."""

from __future__ import annotations

import json
import logging
import random
import time
from collections import deque
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any

import numpy as np
import torch
from torch.utils.data import DataLoader

from .checkpoint import save_checkpoint
from .config import ExperimentConfig
from .const import (
    CHECKPOINT_FINAL,
    CHECKPOINT_LAST_GOOD,
    DEFAULT_LOG_BUFFER_SIZE,
    DIAGNOSTICS_FILENAME,
    GROUP_LIMBS,
    INTERVENTIONS,
    LOG_ABORT,
    LOG_CHECKPOINT,
    LOG_EPOCH_END,
    LOG_LR_DROP,
    LOG_RUN_END,
    LOG_RUN_START,
    RUN_RECORD_FILENAME,
    STYLES,
    TRAIN_LOG_FILENAME,
)
from .data import SceneDataset, collate_scenes, image_tensor, scene_targets
from .exceptions import CausalParsingError, DatasetError, NonFiniteLossError, TrainingAborted
from .losses import LossBreakdown, compute_losses
from .matching import match_batch
from .model import CausalParser
from .synthscenes import InterventionSpec, LabeledScene, apply_intervention, restyle

_LOGGER = logging.getLogger(__name__)


@dataclass
class RunRecord:
    """Everything needed to trace a reported number back to its run."""

    config: dict[str, Any]
    epochs: list[dict[str, float]] = field(default_factory=list)
    metrics: dict[str, dict[str, Any]] = field(default_factory=dict)
    checkpoint: str | None = None
    wall_clock: float = 0.0
    intervened_forward_passes: int = 0
    skipped_parts: int = 0
    train_manifest: str = ""

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> RunRecord:
        try:
            return cls(**json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError, TypeError) as err:
            raise CausalParsingError(f"Cannot read run record {path}: {err}") from err


def seed_everything(seed: int, strict: bool) -> torch.Generator:
    """Seed every RNG the run touches; returns the data-order generator."""
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)
    if strict:
        torch.use_deterministic_algorithms(True, warn_only=True)
    generator = torch.Generator()
    generator.manual_seed(seed)
    return generator


def view_seed(scene_seed: int, epoch: int, view_index: int) -> int:
    return (scene_seed * 1_000_003 + epoch * 1_009 + view_index) % 2**31


def make_view(scene: LabeledScene, kind: str, epoch: int, view_index: int) -> LabeledScene:
    """One intervened image of ``scene``; ground truth of the original is kept."""
    if kind in STYLES:
        return restyle(scene, kind)
    if kind in INTERVENTIONS:
        seed = view_seed(scene.scene_seed, epoch, view_index)
        return apply_intervention(scene, InterventionSpec.for_group(kind, GROUP_LIMBS, seed))
    raise CausalParsingError(f"Unknown view kind '{kind}'")


class TrainingCoordinator:
    """Runs one training job and records what it decided along the way."""

    def __init__(
        self, config: ExperimentConfig, run_dir: str | Path, device: str | torch.device = "cpu"
    ) -> None:
        self.config = config
        self.run_dir = Path(run_dir)
        self.device = torch.device(device)

        self.model: CausalParser | None = None
        self.epoch = 0
        self.step = 0
        self.learning_rate = config.optim.learning_rate
        self.last_breakdown: dict[str, float] = {}
        self.last_good_checkpoint: Path | None = None

        # Audit counters
        self.intervened_forward_passes = 0
        self.skipped_parts = 0
        self.unmatched_batches = 0

        self._style_views: dict[tuple[int, str], LabeledScene] = {}

        # Decision log ring buffer
        self._log_buffer: deque[dict] = deque(maxlen=DEFAULT_LOG_BUFFER_SIZE)

    # ── Logging ──────────────────────────────────────────────────────────

    @property
    def log_entries(self) -> list[dict]:
        """Return the current log buffer as a list."""
        return list(self._log_buffer)

    def _log_decision(self, event: str, reason: str) -> None:
        """Record a decision to the ring buffer and the system log."""
        entry = {
            "timestamp": datetime.now().isoformat(timespec="seconds"),
            "event": event,
            "epoch": self.epoch,
            "step": self.step,
            "lr": self.learning_rate,
            "loss": round(self.last_breakdown.get("total", float("nan")), 6),
            "reason": reason,
        }
        self._log_buffer.append(entry)
        _LOGGER.info("Training [%s] %s", event, reason)

    # ── Data ─────────────────────────────────────────────────────────────

    def _loader(self, generator: torch.Generator) -> DataLoader:
        data = self.config.data
        if not data.train_manifest:
            raise DatasetError("No training manifest configured (data.train_manifest)")
        dataset = SceneDataset(data.train_manifest, data.train_split)
        first = dataset[0]
        if first.size != data.image_size:
            raise DatasetError(
                f"Scenes in {data.train_manifest} are {first.size}px, "
                f"config expects {data.image_size}px"
            )
        workers = self.config.optim.num_workers
        if self.config.strict and workers:
            _LOGGER.warning("Strict mode: ignoring num_workers=%d, loading in-process", workers)
            workers = 0
        return DataLoader(
            dataset,
            batch_size=self.config.optim.batch_size,
            shuffle=True,
            num_workers=workers,
            collate_fn=collate_scenes,
            generator=generator,
        )

    def _views(self, scenes: list[LabeledScene]) -> list[list[LabeledScene]]:
        """Per view kind, the intervened batch."""
        batches = []
        for index, kind in enumerate(self.config.loss.intervention_views):
            batch = []
            for scene in scenes:
                if kind in STYLES:
                    key = (scene.scene_seed, kind)
                    if key not in self._style_views:
                        self._style_views[key] = make_view(scene, kind, self.epoch, index)
                    batch.append(self._style_views[key])
                else:
                    batch.append(make_view(scene, kind, self.epoch, index))
            batches.append(batch)
        return batches

    # ── Training ─────────────────────────────────────────────────────────

    def _train_step(self, model: CausalParser, scenes: list[LabeledScene]) -> LossBreakdown:
        images = image_tensor(scenes, self.device)
        targets = [scene_targets(scene, self.device) for scene in scenes]
        output = model(images)
        assignments = match_batch(
            output.instances.class_logits,
            output.instances.boxes,
            output.masks.logits,
            targets,
            self.config.matcher,
        )
        views = []
        if self.config.loss.use_inv:
            for view_batch in self._views(scenes):
                views.append(model(image_tensor(view_batch, self.device)))
                self.intervened_forward_passes += len(view_batch)
        return compute_losses(output, targets, assignments, self.config.loss, views)

    def _write_step(self, handle, breakdown: LossBreakdown) -> None:
        record = {"epoch": self.epoch, "step": self.step, "lr": self.learning_rate}
        record.update(breakdown.as_floats())
        record["skipped_parts_total"] = self.skipped_parts
        handle.write(json.dumps(record, sort_keys=True) + "\n")

    def _checkpoint(self, model: CausalParser, name: str) -> Path:
        path = save_checkpoint(
            self.run_dir / name, model, self.config, extra={"epoch": self.epoch}
        )
        self._log_decision(LOG_CHECKPOINT, f"Saved {name} after epoch {self.epoch}")
        return path

    def _abort(self, err: NonFiniteLossError) -> TrainingAborted:
        from .diagnostics import write_diagnostics

        self.last_breakdown = {k: v for k, v in err.diagnostics.items() if isinstance(v, float)}
        self._log_decision(LOG_ABORT, f"{err}; keeping {self.last_good_checkpoint}")
        _LOGGER.error("Aborting run in %s: %s", self.run_dir, err)
        write_diagnostics(self, self.run_dir / DIAGNOSTICS_FILENAME, extra=err.diagnostics)
        checkpoint = str(self.last_good_checkpoint) if self.last_good_checkpoint else None
        return TrainingAborted(f"Training aborted at epoch {self.epoch}: {err}", checkpoint)

    def train(self) -> RunRecord:
        """Train to completion and return the run record."""
        from .diagnostics import write_diagnostics

        config = self.config
        started = time.monotonic()
        self.run_dir.mkdir(parents=True, exist_ok=True)
        generator = seed_everything(config.seed, config.strict)
        loader = self._loader(generator)

        model = CausalParser(config.model, config.loss).to(self.device)
        self.model = model
        optimizer = torch.optim.AdamW(
            model.parameters(),
            lr=config.optim.learning_rate,
            weight_decay=config.optim.weight_decay,
        )
        drop_epoch = max(1, int(round(config.optim.epochs * config.optim.lr_drop_at)))
        scheduler = torch.optim.lr_scheduler.MultiStepLR(
            optimizer, milestones=[drop_epoch], gamma=config.optim.lr_drop_factor
        )
        record = RunRecord(config=config.to_dict(), train_manifest=config.data.train_manifest)
        self._log_decision(
            LOG_RUN_START,
            f"{len(loader.dataset)} scenes, {config.optim.epochs} epochs, "
            f"cfs={config.loss.use_cfs} div={config.loss.use_div} "
            f"inv={config.loss.use_inv} E={config.loss.num_views}",
        )

        with open(self.run_dir / TRAIN_LOG_FILENAME, "w", encoding="utf-8") as log_handle:
            for epoch in range(1, config.optim.epochs + 1):
                self.epoch = epoch
                model.train()
                totals: dict[str, float] = {}
                steps = 0
                for scenes in loader:
                    self.step += 1
                    try:
                        breakdown = self._train_step(model, scenes)
                    except NonFiniteLossError as err:
                        raise self._abort(err) from err
                    optimizer.zero_grad(set_to_none=True)
                    breakdown.total.backward()
                    if config.optim.grad_clip > 0:
                        torch.nn.utils.clip_grad_norm_(model.parameters(), config.optim.grad_clip)
                    optimizer.step()

                    values = breakdown.as_floats()
                    self.last_breakdown = values
                    self.skipped_parts += breakdown.skipped_parts
                    if breakdown.matched == 0:
                        self.unmatched_batches += 1
                    self._write_step(log_handle, breakdown)
                    for key, value in values.items():
                        totals[key] = totals.get(key, 0.0) + float(value)
                    steps += 1

                scheduler.step()
                new_lr = optimizer.param_groups[0]["lr"]
                aggregate = {k: v / max(steps, 1) for k, v in totals.items()}
                aggregate["epoch"] = epoch
                aggregate["lr"] = self.learning_rate
                record.epochs.append(aggregate)
                self._log_decision(
                    LOG_EPOCH_END,
                    f"Epoch {epoch}: total={aggregate.get('total', 0.0):.4f} "
                    f"det={aggregate.get('l_det', 0.0):.4f} div={aggregate.get('l_div', 0.0):.4f} "
                    f"inv={aggregate.get('l_inv', 0.0):.4f}",
                )
                if new_lr != self.learning_rate:
                    self._log_decision(
                        LOG_LR_DROP, f"Learning rate {self.learning_rate:.2e} -> {new_lr:.2e}"
                    )
                    self.learning_rate = new_lr
                if epoch % config.optim.checkpoint_every == 0 or epoch == config.optim.epochs:
                    self.last_good_checkpoint = self._checkpoint(model, CHECKPOINT_LAST_GOOD)

        final = self._checkpoint(model, CHECKPOINT_FINAL)
        record.checkpoint = str(final)
        record.wall_clock = time.monotonic() - started
        record.intervened_forward_passes = self.intervened_forward_passes
        record.skipped_parts = self.skipped_parts
        self._log_decision(
            LOG_RUN_END,
            f"Finished in {record.wall_clock:.1f}s with "
            f"{self.intervened_forward_passes} intervened forward passes",
        )
        record.save(self.run_dir / RUN_RECORD_FILENAME)
        write_diagnostics(self, self.run_dir / DIAGNOSTICS_FILENAME)
        model.eval()
        return record


def train(
    config: ExperimentConfig, run_dir: str | Path, device: str | torch.device = "cpu"
) -> RunRecord:
    """Train one configuration into ``run_dir``."""
    return TrainingCoordinator(config, run_dir, device).train()
