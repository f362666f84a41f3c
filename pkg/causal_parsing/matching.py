"""Bipartite assignment between queries and ground-truth persons."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import torch
from numpy.typing import NDArray
from scipy.optimize import linear_sum_assignment
from torch import Tensor

from .config import MatcherWeights
from .data import SceneTargets, downsample_masks
from .exceptions import MatchingError

_LOGGER = logging.getLogger(__name__)

_TIE_BREAK_TOTAL = 1e-9


@dataclass(frozen=True)
class Assignment:
    """Matched (query, gt) pairs ordered by gt index."""

    pairs: list[tuple[int, int]]
    unmatched_queries: frozenset[int] = field(default_factory=frozenset)

    @property
    def query_indices(self) -> list[int]:
        return [q for q, _ in self.pairs]

    @property
    def gt_indices(self) -> list[int]:
        return [g for _, g in self.pairs]

    def __len__(self) -> int:
        return len(self.pairs)


def soft_mask_iou(pred: Tensor, gt: Tensor, eps: float = 1e-6) -> Tensor:
    """Pairwise soft IoU of (N, h, w) probabilities against (G, h, w) targets."""
    pred = pred.flatten(1)
    gt = gt.flatten(1).to(pred.dtype)
    inter = pred @ gt.t()
    union = pred.sum(1)[:, None] + gt.sum(1)[None, :] - inter
    return inter / (union + eps)


def matching_cost(
    class_logits: Tensor,
    boxes: Tensor,
    mask_logits: Tensor,
    targets: SceneTargets,
    weights: MatcherWeights,
) -> NDArray[np.float64]:
    """(N, G) cost of one image.

    class_logits (N, 2), boxes (N, 4), mask_logits (N, C+1, h, w).
    """
    person_prob = class_logits.softmax(-1)[:, 0]
    cost_class = -person_prob[:, None]
    cost_box = torch.cdist(boxes, targets.boxes.to(boxes.dtype), p=1)
    foreground = 1.0 - mask_logits.softmax(dim=1)[:, 0]
    gt_fg = downsample_masks(targets.part_masks, mask_logits.shape[-2:]).sum(dim=1).clamp(max=1.0)
    cost_mask = 1.0 - soft_mask_iou(foreground, gt_fg)
    cost = (
        weights.cost_class * cost_class
        + weights.cost_box * cost_box
        + weights.cost_mask * cost_mask
    )
    return cost.detach().cpu().double().numpy()


def solve_assignment(cost: NDArray[np.float64]) -> Assignment:
    """Optimal one-to-one assignment of every column to a row.

    Ties are broken toward the lowest (query, gt) indices by a perturbation
    whose total stays below 1e-9.
    """
    num_queries, num_gt = cost.shape
    if num_gt > num_queries:
        raise MatchingError(
            f"{num_gt} ground-truth persons but only {num_queries} queries; "
            "increase model.num_queries"
        )
    if num_gt == 0:
        return Assignment(pairs=[], unmatched_queries=frozenset(range(num_queries)))
    eps = _TIE_BREAK_TOTAL / (num_queries * num_gt * num_gt)
    # raising a query index always costs more; fixed queries pair with gts in order
    order = (np.arange(num_queries)[:, None] + 1) * (num_gt - np.arange(num_gt)[None, :])
    rows, cols = linear_sum_assignment(cost + eps * order)
    pairs = sorted(((int(q), int(g)) for q, g in zip(rows, cols)), key=lambda p: p[1])
    matched = {q for q, _ in pairs}
    return Assignment(
        pairs=pairs,
        unmatched_queries=frozenset(q for q in range(num_queries) if q not in matched),
    )


@torch.no_grad()
def match(
    class_logits: Tensor,
    boxes: Tensor,
    mask_logits: Tensor,
    targets: SceneTargets,
    weights: MatcherWeights | None = None,
) -> Assignment:
    """Hungarian matching for one image."""
    weights = weights or MatcherWeights()
    if targets.num_instances > class_logits.shape[0]:
        raise MatchingError(
            f"{targets.num_instances} ground-truth persons but only "
            f"{class_logits.shape[0]} queries; increase model.num_queries"
        )
    if targets.num_instances == 0:
        return solve_assignment(np.zeros((class_logits.shape[0], 0)))
    return solve_assignment(matching_cost(class_logits, boxes, mask_logits, targets, weights))


def match_batch(
    class_logits: Tensor,
    boxes: Tensor,
    mask_logits: Tensor,
    targets: list[SceneTargets],
    weights: MatcherWeights | None = None,
) -> list[Assignment]:
    """Per-image matching over a batch of (B, N, ...) outputs."""
    return [
        match(class_logits[b], boxes[b], mask_logits[b], targets[b], weights)
        for b in range(len(targets))
    ]
