"""The assembled parser for every ablation arm."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from torch import Tensor, nn

from .cfs import (
    CausalReps,
    CausalRepresentations,
    PartClassifier,
    PartMasks,
    PartSegmentor,
    aggregate,
    baseline_segment,
    compute_affinity,
    fuse_masks,
    segment,
)
from .config import LossOptions, ModelOptions
from .const import BRANCHES_BOTH, BRANCHES_CONTENT
from .parser_core import FeatureMap, InstanceSet, ParserCore

_LOGGER = logging.getLogger(__name__)


@dataclass
class ParserOutput:
    feature: FeatureMap
    instances: InstanceSet
    part_logits: Tensor  # (B, N, C)
    inst_features: Tensor  # (B, N, d, h, w)
    masks: PartMasks  # what evaluation reads
    content_masks: PartMasks | None = None
    context_masks: PartMasks | None = None
    reps: CausalReps | None = None

    @property
    def segmented(self) -> list[PartMasks]:
        """Mask outputs that carry a part loss."""
        branches = [m for m in (self.content_masks, self.context_masks) if m is not None]
        return branches or [self.masks]


class CausalParser(nn.Module):
    """ParserCore plus either the plain segmentor or causal factor separation."""

    def __init__(self, model: ModelOptions, loss: LossOptions) -> None:
        super().__init__()
        self.use_cfs = loss.use_cfs
        self.branches = loss.cfs_branches
        self.core = ParserCore(model)
        self.part_classifier = PartClassifier(model.hidden_dim)
        self.segmentor = PartSegmentor(model.hidden_dim)
        if self.use_cfs:
            self.causal = CausalRepresentations(model.hidden_dim, model.kernel_hidden_dim)
        _LOGGER.debug(
            "Built parser: causal factor separation %s, branches %s",
            "on" if self.use_cfs else "off",
            self.branches if self.use_cfs else "-",
        )

    def forward(self, images: Tensor) -> ParserOutput:
        feature, instances, inst_features = self.core(images)
        part_logits, weight = self.part_classifier(instances.features)

        if not self.use_cfs:
            return ParserOutput(
                feature=feature,
                instances=instances,
                part_logits=part_logits,
                inst_features=inst_features,
                masks=baseline_segment(self.segmentor, inst_features),
            )

        affinity = compute_affinity(weight, part_logits, feature.values)
        content, context = self.causal(aggregate(feature.values, affinity), inst_features)
        reps = CausalReps(content=content, context=context, affinity=affinity)

        content_masks = context_masks = None
        if self.branches in (BRANCHES_BOTH, BRANCHES_CONTENT):
            content_masks = segment(self.segmentor, content)
        if self.branches != BRANCHES_CONTENT:
            context_masks = segment(self.segmentor, context)

        if content_masks is not None and context_masks is not None:
            masks = fuse_masks(content_masks, context_masks)
        else:
            masks = content_masks or context_masks

        return ParserOutput(
            feature=feature,
            instances=instances,
            part_logits=part_logits,
            inst_features=inst_features,
            masks=masks,
            content_masks=content_masks,
            context_masks=context_masks,
            reps=reps,
        )
