"""Multiple human parsing with causal factor separation and causal integration losses."""

from __future__ import annotations

from .config import ExperimentConfig, load_experiment_config
from .coordinator import RunRecord, TrainingCoordinator, train
from .evaluation import evaluate
from .exceptions import CausalParsingError
from .metrics import MetricsReport
from .model import CausalParser
from .synthscenes import (
    InterventionSpec,
    LabeledScene,
    apply_intervention,
    generate_scene,
    make_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "CausalParser",
    "CausalParsingError",
    "ExperimentConfig",
    "InterventionSpec",
    "LabeledScene",
    "MetricsReport",
    "RunRecord",
    "TrainingCoordinator",
    "apply_intervention",
    "evaluate",
    "generate_scene",
    "load_experiment_config",
    "make_dataset",
    "train",
]
