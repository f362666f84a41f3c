"""Shared fixtures for causal parsing tests."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from causal_parsing.config import (
    DataOptions,
    DatasetConfig,
    ExperimentConfig,
    InferenceOptions,
    LossOptions,
    ModelOptions,
    OptimOptions,
    ProtocolOptions,
    SplitSpec,
)
from causal_parsing.const import NUM_PARTS, STYLE_NATURAL
from causal_parsing.data import SceneTargets
from causal_parsing.synthscenes import make_dataset

TOY_IMAGE_SIZE = 64
TOY_QUERIES = 3

TOY_MODEL = ModelOptions(
    num_queries=TOY_QUERIES,
    hidden_dim=8,
    decoder_layers=1,
    num_heads=2,
    stride=4,
    kernel_hidden_dim=8,
)

TOY_DATASET = DatasetConfig(
    splits=(
        SplitSpec("train", 6, (STYLE_NATURAL,)),
        SplitSpec("test", 4, (STYLE_NATURAL,)),
    ),
    seed_base=100,
    image_size=TOY_IMAGE_SIZE,
    num_persons=(1, 2),
)


def make_config(manifest: str = "", **loss_overrides) -> ExperimentConfig:
    """Tiny experiment config; ``loss_overrides`` go to LossOptions."""
    return ExperimentConfig(
        name="toy",
        seed=0,
        strict=True,
        model=TOY_MODEL,
        loss=LossOptions(**loss_overrides),
        optim=OptimOptions(epochs=2, batch_size=3, checkpoint_every=1, learning_rate=1e-3),
        data=DataOptions(train_manifest=manifest, image_size=TOY_IMAGE_SIZE),
        inference=InferenceOptions(top_k=TOY_QUERIES),
        protocol=ProtocolOptions(seeds=(0,), intervention_seeds=(0,)),
    )


def make_targets(
    boxes: list[list[float]],
    masks: torch.Tensor,
    presence: torch.Tensor | None = None,
    dtype: torch.dtype = torch.float32,
) -> SceneTargets:
    """SceneTargets from explicit (G, C, H, W) masks."""
    masks = masks.to(dtype)
    if presence is None:
        presence = (masks.flatten(2).sum(-1) > 0).to(dtype)
    return SceneTargets(
        boxes=torch.tensor(boxes, dtype=dtype).reshape(-1, 4),
        part_masks=masks,
        presence=presence,
    )


def quadrant_masks(size: int = 4) -> torch.Tensor:
    """One instance whose four parts are the four quadrants of a size x size grid."""
    masks = torch.zeros(1, NUM_PARTS, size, size)
    half = size // 2
    masks[0, 0, :half, :half] = 1
    masks[0, 1, :half, half:] = 1
    masks[0, 2, half:, :half] = 1
    masks[0, 3, half:, half:] = 1
    return masks


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_manifest(tmp_path_factory):
    """Manifest of a small rendered dataset with train and test splits."""
    out = tmp_path_factory.mktemp("toy_data")
    return make_dataset(TOY_DATASET, out)


@pytest.fixture
def toy_config(toy_manifest):
    return make_config(str(toy_manifest))


@pytest.fixture
def toy_images():
    torch.manual_seed(0)
    return torch.rand(2, 3, TOY_IMAGE_SIZE, TOY_IMAGE_SIZE)
