"""Causal factor separation.

Splits every instance into a content representation (pooled where its own
part lies) and a context representation (pooled where the other parts lie),
then segments each with one shared segmentor.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor, nn

from .const import NUM_PARTS
from .parser_core import KernelGenerator, per_instance_features


@dataclass
class PartEmbeddings:
    """Per-part pooled vectors, both (B, N, C, d)."""

    content: Tensor
    context: Tensor


@dataclass
class CausalReps:
    """Spatial content / context representations, both (B, N, d, h, w)."""

    content: Tensor
    context: Tensor
    affinity: Tensor  # (B, N, C, h, w)


@dataclass
class PartMasks:
    """Per-instance part segmentation, channel 0 is background."""

    logits: Tensor  # (B, N, C+1, h, w)

    @property
    def probabilities(self) -> Tensor:
        return self.logits.softmax(dim=2)

    @property
    def labels(self) -> Tensor:
        return self.logits.argmax(dim=2)


class PartClassifier(nn.Module):
    """Linear part-presence logits; the same weight drives the affinity field."""

    def __init__(self, hidden_dim: int, num_parts: int = NUM_PARTS) -> None:
        super().__init__()
        self.linear = nn.Linear(hidden_dim, num_parts)

    @property
    def weight(self) -> Tensor:
        """Classifier weight with shape (d, C)."""
        return self.linear.weight.t()

    def forward(self, embeddings: Tensor) -> tuple[Tensor, Tensor]:
        return self.linear(embeddings), self.weight


def compute_affinity(weight: Tensor, part_logits: Tensor, feature: Tensor) -> Tensor:
    """Per-part attention over the feature map, squashed to (0, 1).

    Each part's weight column is gated by that part's presence probability
    and dotted with every feature cell.

    weight (d, C), part_logits (B, N, C), feature (B, d, h, w).
    """
    if weight.shape[0] != feature.shape[1]:
        raise ValueError(
            f"classifier dim {weight.shape[0]} does not match feature dim {feature.shape[1]}"
        )
    scaled = weight[None, None] * part_logits.sigmoid()[:, :, None, :]
    return torch.einsum("bndc,bdhw->bnchw", scaled, feature).sigmoid()


def aggregate(feature: Tensor, affinity: Tensor) -> PartEmbeddings:
    """Affinity-weighted spatial averages.

    Content of a part pools the feature under its own affinity; context pools
    it under the summed affinity of the other parts, clamped to [0, 1]. Both
    divide by h*w.
    """
    cells = feature.shape[-2] * feature.shape[-1]
    complement = (affinity.sum(dim=2, keepdim=True) - affinity).clamp(0.0, 1.0)
    content = torch.einsum("bnchw,bdhw->bncd", affinity, feature) / cells
    context = torch.einsum("bnchw,bdhw->bncd", complement, feature) / cells
    return PartEmbeddings(content=content, context=context)


class CausalRepresentations(nn.Module):
    """Separate kernel generators for the content and context maps."""

    def __init__(self, hidden_dim: int, kernel_hidden_dim: int) -> None:
        super().__init__()
        self.content_kernels = KernelGenerator(hidden_dim, kernel_hidden_dim)
        self.context_kernels = KernelGenerator(hidden_dim, kernel_hidden_dim)

    def forward(self, embeddings: PartEmbeddings, inst_features: Tensor) -> tuple[Tensor, Tensor]:
        return build_causal_reps(
            embeddings, inst_features, self.content_kernels, self.context_kernels
        )


def build_causal_reps(
    embeddings: PartEmbeddings,
    inst_features: Tensor,
    content_kernels: nn.Module,
    context_kernels: nn.Module,
) -> tuple[Tensor, Tensor]:
    """Kernels from the part-averaged embeddings, applied to the instance features."""
    if embeddings.content.shape[-1] != inst_features.shape[2]:
        raise ValueError(
            f"embedding dim {embeddings.content.shape[-1]} does not match "
            f"instance feature dim {inst_features.shape[2]}"
        )
    k_c, b_c = content_kernels(embeddings.content.mean(dim=2))
    k_t, b_t = context_kernels(embeddings.context.mean(dim=2))
    return (
        per_instance_features(inst_features, k_c, b_c),
        per_instance_features(inst_features, k_t, b_t),
    )


class PartSegmentor(nn.Module):
    """One 1x1 convolution to C+1 channels."""

    def __init__(self, hidden_dim: int, num_parts: int = NUM_PARTS) -> None:
        super().__init__()
        self.conv = nn.Conv2d(hidden_dim, num_parts + 1, kernel_size=1)

    def forward(self, rep: Tensor) -> PartMasks:
        batch, num = rep.shape[:2]
        logits = self.conv(rep.flatten(0, 1))
        return PartMasks(logits=logits.unflatten(0, (batch, num)))


def segment(segmentor: PartSegmentor, rep: Tensor) -> PartMasks:
    return segmentor(rep)


def baseline_segment(segmentor: PartSegmentor, inst_features: Tensor) -> PartMasks:
    """No-CFS path: the segmentor reads the instance features directly."""
    return segmentor(inst_features)


def fuse_masks(content: PartMasks, context: PartMasks) -> PartMasks:
    """Mean of the two logit maps."""
    if content.logits.shape != context.logits.shape:
        raise ValueError(
            f"cannot fuse masks of shapes {tuple(content.logits.shape)} "
            f"and {tuple(context.logits.shape)}"
        )
    return PartMasks(logits=(content.logits + context.logits) / 2)

