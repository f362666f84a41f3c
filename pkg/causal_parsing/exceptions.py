"""Exceptions raised by the causal parsing package."""

from __future__ import annotations

from typing import Any


class CausalParsingError(Exception):
    """Base class for all package errors."""


class ConfigError(CausalParsingError):
    """A configuration document failed validation."""


class SceneError(CausalParsingError):
    """A scene could not be generated or loaded."""


class InterventionError(CausalParsingError):
    """An intervention request is invalid for the given scene."""


class DatasetError(CausalParsingError):
    """A dataset request or manifest is invalid."""


class ManifestExistsError(DatasetError):
    """A manifest already exists and overwriting was not forced."""


class MatchingError(CausalParsingError):
    """Predictions cannot be assigned to the ground truth."""


class CheckpointError(CausalParsingError):
    """A checkpoint file is missing or malformed."""


class NonFiniteLossError(CausalParsingError):
    """A loss term became NaN or infinite."""

    def __init__(self, message: str, diagnostics: dict[str, Any] | None = None) -> None:
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class TrainingAborted(CausalParsingError):
    """Training stopped early; the last good checkpoint was retained."""

    def __init__(self, message: str, checkpoint: str | None = None) -> None:
        super().__init__(message)
        self.checkpoint = checkpoint
