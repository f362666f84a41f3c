"""Training objectives: part, diversity, invariance and detection losses.

Every term works on the instances picked by the matcher; ground-truth masks
are brought to feature resolution by area averaging.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields
from typing import TYPE_CHECKING

import torch
import torch.nn.functional as F
from torch import Tensor

from .cfs import PartMasks
from .config import LossOptions
from .data import SceneTargets
from .exceptions import NonFiniteLossError
from .matching import Assignment

if TYPE_CHECKING:
    from .model import ParserOutput

_LOGGER = logging.getLogger(__name__)


@dataclass
class MatchedTargets:
    """Ground truth of every matched query in the batch, in assignment order."""

    batch_index: Tensor  # (M,)
    query_index: Tensor  # (M,)
    masks: Tensor  # (M, C, h, w) bool at feature resolution
    labels: Tensor  # (M, h, w) class index in {0..C}
    presence: Tensor  # (M, C)
    boxes: Tensor  # (M, 4)

    @property
    def num_matched(self) -> int:
        return int(self.batch_index.numel())


def gather_targets(
    targets: list[SceneTargets],
    assignments: list[Assignment],
    grid: tuple[int, int],
) -> MatchedTargets:
    """Collect matched ground truth at feature resolution."""
    batch_idx, query_idx, masks, labels, presence, boxes = [], [], [], [], [], []
    for b, (target, assignment) in enumerate(zip(targets, assignments)):
        if not len(assignment):
            continue
        gts = assignment.gt_indices
        batch_idx += [b] * len(gts)
        query_idx += assignment.query_indices
        masks.append(target.downsampled(grid)[gts])
        labels.append(target.label_maps(grid)[gts])
        presence.append(target.presence[gts])
        boxes.append(target.boxes[gts])

    device = targets[0].boxes.device if targets else torch.device("cpu")
    dtype = targets[0].boxes.dtype if targets else torch.float32
    if not batch_idx:
        num_parts = targets[0].part_masks.shape[1] if targets else 0
        return MatchedTargets(
            batch_index=torch.zeros(0, dtype=torch.long, device=device),
            query_index=torch.zeros(0, dtype=torch.long, device=device),
            masks=torch.zeros(0, num_parts, *grid, dtype=torch.bool, device=device),
            labels=torch.zeros(0, *grid, dtype=torch.long, device=device),
            presence=torch.zeros(0, num_parts, dtype=dtype, device=device),
            boxes=torch.zeros(0, 4, dtype=dtype, device=device),
        )
    return MatchedTargets(
        batch_index=torch.tensor(batch_idx, dtype=torch.long, device=device),
        query_index=torch.tensor(query_idx, dtype=torch.long, device=device),
        masks=torch.cat(masks),
        labels=torch.cat(labels),
        presence=torch.cat(presence),
        boxes=torch.cat(boxes),
    )


# ── Part pooling ─────────────────────────────────────────────────────


@dataclass
class PartVectors:
    vectors: Tensor  # (K, d), one per matched (instance, present part)
    skipped: int  # present parts that vanished at feature resolution


def pool_part_vectors(rep: Tensor, matched: MatchedTargets) -> PartVectors:
    """Masked average of ``rep`` (B, N, d, h, w) under each present GT part.

    Pair order depends only on ``matched``, so two representations of the
    same batch produce aligned vectors.
    """
    if matched.num_matched == 0:
        return PartVectors(vectors=rep.new_zeros(0, rep.shape[2]), skipped=0)
    selected = rep[matched.batch_index, matched.query_index]  # (M, d, h, w)
    masks = matched.masks.to(rep.dtype)
    area = masks.flatten(2).sum(-1)  # (M, C)
    sums = torch.einsum("mdhw,mchw->mcd", selected, masks)
    present = matched.presence > 0.5
    valid = present & (area > 0)
    skipped = int((present & (area == 0)).sum())
    if skipped:
        _LOGGER.debug("Skipped %d parts that vanished at feature resolution", skipped)
    vectors = sums[valid] / area[valid][:, None]
    return PartVectors(vectors=vectors, skipped=skipped)


def cosine(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise cosine similarity; 0 when either row is the zero vector."""
    return F.cosine_similarity(a, b, dim=-1, eps=1e-8)


# ── Loss terms ───────────────────────────────────────────────────────


def loss_part(
    content: PartMasks, context: PartMasks | None, matched: MatchedTargets
) -> Tensor:
    """Mean per-pixel cross-entropy of each given mask output, summed."""
    outputs = [m for m in (content, context) if m is not None]
    if matched.num_matched == 0:
        return outputs[0].logits.sum() * 0.0
    total = outputs[0].logits.new_zeros(())
    for masks in outputs:
        logits = masks.logits[matched.batch_index, matched.query_index]
        total = total + F.cross_entropy(logits, matched.labels)
    return total


def diversity_similarity(content: Tensor, context: Tensor, matched: MatchedTargets) -> Tensor:
    """Mean cosine between content and context part vectors."""
    vec_c = pool_part_vectors(content, matched).vectors
    vec_t = pool_part_vectors(context, matched).vectors
    if vec_c.shape[0] == 0:
        return content.sum() * 0.0
    return cosine(vec_c, vec_t).mean()


def loss_div(content: Tensor, context: Tensor, matched: MatchedTargets, l_part: Tensor) -> Tensor:
    return diversity_similarity(content, context, matched) + l_part


def loss_inv(
    content: Tensor,
    context: Tensor,
    views: list[tuple[Tensor, Tensor]],
    matched: MatchedTargets,
) -> Tensor:
    """Mean over views of |1 - cos| between original and intervened vectors.

    ``views`` holds (content, context) of every intervened image, indexed with the
    assignment of the original image.
    """
    if not views:
        return content.sum() * 0.0
    vec_c = pool_part_vectors(content, matched).vectors
    vec_t = pool_part_vectors(context, matched).vectors
    if vec_c.shape[0] == 0:
        return content.sum() * 0.0
    total = content.new_zeros(())
    for view_c, view_t in views:
        hat_c = pool_part_vectors(view_c, matched).vectors
        hat_t = pool_part_vectors(view_t, matched).vectors
        total = total + (1.0 - cosine(vec_c, hat_c)).abs().mean()
        total = total + (1.0 - cosine(vec_t, hat_t)).abs().mean()
    return total / len(views)


def loss_det(
    class_logits: Tensor,
    boxes: Tensor,
    part_logits: Tensor,
    matched: MatchedTargets,
    no_person_weight: float,
) -> Tensor:
    """Person CE over all queries + part-presence BCE + smooth-L1 on boxes."""
    target_classes = torch.ones(
        class_logits.shape[:2], dtype=torch.long, device=class_logits.device
    )
    target_classes[matched.batch_index, matched.query_index] = 0
    class_weight = class_logits.new_tensor([1.0, no_person_weight])
    loss_cls = F.cross_entropy(class_logits.flatten(0, 1), target_classes.flatten(), class_weight)

    if matched.num_matched == 0:
        return loss_cls + part_logits.sum() * 0.0 + boxes.sum() * 0.0

    selected_parts = part_logits[matched.batch_index, matched.query_index]
    loss_presence = F.binary_cross_entropy_with_logits(
        selected_parts, matched.presence.to(selected_parts.dtype)
    )
    selected_boxes = boxes[matched.batch_index, matched.query_index]
    loss_box = (
        F.smooth_l1_loss(selected_boxes, matched.boxes.to(boxes.dtype), reduction="sum")
        / matched.num_matched
    )
    return loss_cls + loss_presence + loss_box


# ── Total ────────────────────────────────────────────────────────────


@dataclass
class LossBreakdown:
    """Weighted terms; ``l_det + l_div + l_inv == total``."""

    l_det: Tensor
    l_div: Tensor
    l_inv: Tensor
    total: Tensor
    l_part: Tensor
    similarity: Tensor
    num_views: int = 0
    skipped_parts: int = 0
    matched: int = 0

    def as_floats(self) -> dict[str, float]:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = float(value.detach()) if isinstance(value, Tensor) else value
        return out


def total_loss(
    l_det: Tensor,
    l_part: Tensor,
    similarity: Tensor | None = None,
    l_inv: Tensor | None = None,
    options: LossOptions | None = None,
    *,
    num_views: int = 0,
    skipped_parts: int = 0,
    matched: int = 0,
) -> LossBreakdown:
    """Combine terms; ``similarity=None`` is the part-loss-only arm."""
    options = options or LossOptions()
    zero = l_det.new_zeros(())
    similarity = zero if similarity is None else similarity
    l_div = options.weight_div * (similarity + l_part)
    l_inv = zero if l_inv is None else options.weight_inv * l_inv
    l_det = options.weight_det * l_det
    breakdown = LossBreakdown(
        l_det=l_det,
        l_div=l_div,
        l_inv=l_inv,
        total=l_det + l_div + l_inv,
        l_part=l_part,
        similarity=similarity,
        num_views=num_views,
        skipped_parts=skipped_parts,
        matched=matched,
    )
    values = breakdown.as_floats()
    terms = ("l_det", "l_div", "l_inv", "l_part", "similarity")
    bad = [k for k in terms if not math.isfinite(values[k])]
    if bad:
        raise NonFiniteLossError(f"Non-finite loss terms: {', '.join(bad)}", diagnostics=values)
    return breakdown


def compute_losses(
    output: ParserOutput,
    targets: list[SceneTargets],
    assignments: list[Assignment],
    options: LossOptions,
    views: list[ParserOutput] | None = None,
) -> LossBreakdown:
    """Every term for one batch of parser outputs.

    ``views`` are parser outputs of intervened images of the same scenes.
    """
    grid = output.masks.logits.shape[-2:]
    matched = gather_targets(targets, assignments, tuple(grid))
    if matched.num_matched == 0:
        _LOGGER.warning("No matched instances in batch; part losses are zero")

    l_det = loss_det(
        output.instances.class_logits,
        output.instances.boxes,
        output.part_logits,
        matched,
        options.no_person_weight,
    )
    branches = output.segmented
    l_part = loss_part(branches[0], branches[1] if len(branches) > 1 else None, matched)

    similarity = l_inv = None
    skipped = 0
    if output.reps is not None:
        skipped = pool_part_vectors(output.reps.content, matched).skipped
        if options.use_div:
            similarity = diversity_similarity(output.reps.content, output.reps.context, matched)
        if options.use_inv:
            view_reps = [(v.reps.content, v.reps.context) for v in views or []]
            l_inv = loss_inv(output.reps.content, output.reps.context, view_reps, matched)

    return total_loss(
        l_det,
        l_part,
        similarity,
        l_inv,
        options,
        num_views=len(views or []),
        skipped_parts=skipped,
        matched=matched.num_matched,
    )
