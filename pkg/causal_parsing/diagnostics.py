"""Diagnostics support for training runs."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:
    from .coordinator import TrainingCoordinator

_LOGGER = logging.getLogger(__name__)


def get_run_diagnostics(coordinator: TrainingCoordinator) -> dict[str, Any]:
    """Return diagnostics for a training coordinator."""
    return {
        "config": coordinator.config.to_dict(),
        "run_dir": str(coordinator.run_dir),
        "current_state": {
            "epoch": coordinator.epoch,
            "step": coordinator.step,
            "learning_rate": coordinator.learning_rate,
            "last_losses": dict(coordinator.last_breakdown),
            "last_good_checkpoint": (
                str(coordinator.last_good_checkpoint) if coordinator.last_good_checkpoint else None
            ),
            "intervened_forward_passes": coordinator.intervened_forward_passes,
            "skipped_parts": coordinator.skipped_parts,
            "unmatched_batches": coordinator.unmatched_batches,
        },
        "decision_log": coordinator.log_entries,
    }


def write_diagnostics(
    coordinator: TrainingCoordinator, path: str | Path, extra: dict[str, Any] | None = None
) -> Path:
    path = Path(path)
    document = get_run_diagnostics(coordinator)
    if extra:
        document["failure"] = extra
    path.write_text(json.dumps(document, indent=2, sort_keys=True, default=str))
    _LOGGER.debug("Diagnostics written to %s", path)
    return path
