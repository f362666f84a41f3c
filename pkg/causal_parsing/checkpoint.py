"""Checkpoint container: parameters plus config echo and a format tag."""

from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Any

import torch

from .config import ExperimentConfig, experiment_config_from_dict
from .const import CHECKPOINT_FORMAT_VERSION
from .exceptions import CheckpointError
from .model import CausalParser

_LOGGER = logging.getLogger(__name__)

_REQUIRED_KEYS = ("format_version", "config", "state_dict")


def save_checkpoint(
    path: str | Path,
    model: CausalParser,
    config: ExperimentConfig,
    extra: dict[str, Any] | None = None,
) -> Path:
    """Write atomically so an interrupted save never replaces a good file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": config.to_dict(),
        "state_dict": {k: v.detach().cpu() for k, v in model.state_dict().items()},
        "extra": extra or {},
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, path)
    _LOGGER.debug("Checkpoint written to %s", path)
    return path


def read_checkpoint(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"Checkpoint {path} does not exist")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as err:  # noqa: BLE001 - torch raises many unrelated types
        raise CheckpointError(f"Cannot read checkpoint {path}: {err}") from err
    missing = [k for k in _REQUIRED_KEYS if k not in payload]
    if missing:
        raise CheckpointError(f"Checkpoint {path} is missing {', '.join(missing)}")
    if payload["format_version"] != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"Checkpoint {path} has format {payload['format_version']}, "
            f"expected {CHECKPOINT_FORMAT_VERSION}"
        )
    return payload


def load_checkpoint(path: str | Path) -> tuple[CausalParser, ExperimentConfig]:
    """Rebuild the model from the config echo and load its parameters."""
    payload = read_checkpoint(path)
    config = experiment_config_from_dict(payload["config"])
    model = CausalParser(config.model, config.loss)
    try:
        model.load_state_dict(payload["state_dict"])
    except RuntimeError as err:
        raise CheckpointError(f"Checkpoint {path} does not fit its config: {err}") from err
    model.eval()
    return model, config
