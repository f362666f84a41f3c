"""Manifest reading, datasets and ground-truth tensors."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor
from torch.utils.data import Dataset

from .const import NUM_PARTS
from .exceptions import DatasetError
from .synthscenes import LabeledScene, load_scene

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class ManifestEntry:
    split: str
    index: int
    image: Path
    labels: Path
    style: str
    seed: int
    num_persons: int


def read_manifest(path: str | Path, split: str | None = None) -> list[ManifestEntry]:
    """Entries of ``path``, optionally restricted to one split."""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"Manifest {path} does not exist")
    entries = []
    splits: dict[str, None] = {}
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            entry = ManifestEntry(
                split=record["split"],
                index=int(record["index"]),
                image=path.parent / record["image"],
                labels=path.parent / record["labels"],
                style=record["style"],
                seed=int(record["seed"]),
                num_persons=int(record["num_persons"]),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
            raise DatasetError(f"Malformed manifest record at {path}:{line_no}: {err}") from err
        splits.setdefault(entry.split)
        if split is None or entry.split == split:
            entries.append(entry)
    if not entries:
        raise DatasetError(f"Split '{split}' is empty in {path}; available splits: {list(splits)}")
    return entries


def manifest_splits(path: str | Path) -> list[str]:
    """Split names in manifest order."""
    return list(dict.fromkeys(entry.split for entry in read_manifest(path)))


def manifest_digest(path: str | Path) -> str:
    """Short content hash of a manifest file."""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"Manifest {path} does not exist")
    return hashlib.sha256(path.read_bytes()).hexdigest()[:12]


class SceneDataset(Dataset):
    """Scenes of one manifest split, decoded once and kept in memory."""

    def __init__(self, manifest: str | Path, split: str | None = None) -> None:
        self.manifest = Path(manifest)
        self.entries = read_manifest(self.manifest, split)
        self._cache: dict[int, LabeledScene] = {}
        _LOGGER.debug("Loaded %d entries from %s [%s]", len(self.entries), manifest, split)

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, index: int) -> LabeledScene:
        if index not in self._cache:
            entry = self.entries[index]
            self._cache[index] = load_scene(entry.image, entry.labels)
        return self._cache[index]

    def scenes(self) -> list[LabeledScene]:
        return [self[i] for i in range(len(self))]


def collate_scenes(batch: list[LabeledScene]) -> list[LabeledScene]:
    return list(batch)


# ── Tensors ──────────────────────────────────────────────────────────


def image_tensor(scenes: list[LabeledScene], device: torch.device | str = "cpu") -> Tensor:
    """Stack scene images into (B, 3, H, W)."""
    sizes = {scene.image.shape for scene in scenes}
    if len(sizes) != 1:
        raise DatasetError(f"Cannot batch scenes with differing sizes {sorted(sizes)}")
    stacked = np.stack([scene.image.transpose(2, 0, 1) for scene in scenes])
    return torch.from_numpy(np.ascontiguousarray(stacked)).float().to(device)


@dataclass
class SceneTargets:
    """Ground truth of one scene as tensors."""

    boxes: Tensor  # (G, 4)
    part_masks: Tensor  # (G, C, H, W) float {0, 1}
    presence: Tensor  # (G, C) float {0, 1}

    @property
    def num_instances(self) -> int:
        return self.boxes.shape[0]

    def downsampled(self, grid: tuple[int, int]) -> Tensor:
        """Area-downsampled part masks binarized at 0.5, (G, C, h, w)."""
        return downsample_masks(self.part_masks, grid) > 0.5

    def label_maps(self, grid: tuple[int, int]) -> Tensor:
        """Per-cell class index in {0..C}, (G, h, w).

        Area-downsampled one-hot maps (background first) then argmax.
        """
        foreground = downsample_masks(self.part_masks, grid)
        background = (1.0 - foreground.sum(dim=1, keepdim=True)).clamp(min=0.0)
        return torch.cat([background, foreground], dim=1).argmax(dim=1)


def downsample_masks(masks: Tensor, grid: tuple[int, int]) -> Tensor:
    """Area interpolation of (G, C, H, W) masks onto ``grid``."""
    if masks.shape[0] == 0:
        return masks.new_zeros(masks.shape[:2] + tuple(grid))
    masks = masks if masks.is_floating_point() else masks.float()
    return F.interpolate(masks, size=grid, mode="area")


def scene_targets(
    scene: LabeledScene, device: torch.device | str = "cpu", dtype: torch.dtype = torch.float32
) -> SceneTargets:
    size = scene.size
    if not scene.instances:
        return SceneTargets(
            boxes=torch.zeros(0, 4, dtype=dtype, device=device),
            part_masks=torch.zeros(0, NUM_PARTS, size, size, dtype=dtype, device=device),
            presence=torch.zeros(0, NUM_PARTS, dtype=dtype, device=device),
        )
    return SceneTargets(
        boxes=torch.tensor([inst.box for inst in scene.instances], dtype=dtype, device=device),
        part_masks=torch.from_numpy(
            np.stack([inst.part_masks for inst in scene.instances]).astype(np.float32)
        ).to(device=device, dtype=dtype),
        presence=torch.tensor(
            [inst.part_presence for inst in scene.instances], dtype=dtype, device=device
        ),
    )
