"""Inference, evaluation and representation statistics."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import numpy as np
import torch
import torch.nn.functional as F

from .cfs import PartMasks
from .checkpoint import load_checkpoint
from .config import InferenceOptions, MatcherWeights
from .const import DEFAULT_BATCH_SIZE, GROUP_LIMBS, INTERVENTION_RANDOM_STYLE
from .data import SceneDataset, image_tensor, scene_targets
from .exceptions import CausalParsingError
from .losses import cosine, gather_targets, pool_part_vectors
from .matching import match_batch
from .metrics import InstancePrediction, LabelMap, MetricsReport, evaluate_predictions
from .model import CausalParser, ParserOutput
from .synthscenes import InterventionSpec, LabeledScene, apply_intervention

_LOGGER = logging.getLogger(__name__)

BRANCH_FUSED = "fused"
BRANCH_CONTENT = "content"
BRANCH_CONTEXT = "context"


def _chunks(items: list[Any], size: int):
    for start in range(0, len(items), size):
        yield items[start : start + size]


def _branch_masks(output: ParserOutput, branch: str) -> PartMasks:
    if branch == BRANCH_FUSED:
        return output.masks
    masks = output.content_masks if branch == BRANCH_CONTENT else output.context_masks
    if masks is None:
        raise CausalParsingError(f"Model has no {branch} segmentation branch")
    return masks


# ── Inference ────────────────────────────────────────────────────────


def select_queries(person_prob: torch.Tensor, options: InferenceOptions) -> list[int]:
    """Queries above the score threshold, best first, at most ``top_k``."""
    scores = person_prob.tolist()
    kept = [q for q, score in enumerate(scores) if score > options.score_threshold]
    kept.sort(key=lambda q: (-scores[q], q))
    return kept[: options.top_k]


def outputs_to_predictions(
    output: ParserOutput,
    image_size: tuple[int, int],
    options: InferenceOptions,
    branch: str = BRANCH_FUSED,
) -> list[list[InstancePrediction]]:
    """Per image, the kept queries as full-resolution label maps."""
    masks = _branch_masks(output, branch)
    person_prob = output.instances.person_prob
    predictions = []
    for b in range(person_prob.shape[0]):
        kept = select_queries(person_prob[b], options)
        image_preds = []
        for q in kept:
            logits = F.interpolate(masks.logits[b, q][None], size=image_size, mode="nearest")[0]
            probs = logits.softmax(dim=0)
            image_preds.append(
                InstancePrediction(
                    label_map=logits.argmax(dim=0).cpu().numpy().astype(np.int64),
                    score=float(person_prob[b, q]),
                    query_index=q,
                    confidence=(1.0 - probs[0]).cpu().numpy().astype(np.float32),
                )
            )
        predictions.append(image_preds)
    return predictions


@torch.no_grad()
def predict(
    model: CausalParser,
    scenes: list[LabeledScene],
    options: InferenceOptions | None = None,
    *,
    branch: str = BRANCH_FUSED,
    batch_size: int = DEFAULT_BATCH_SIZE,
    device: str | torch.device = "cpu",
) -> list[list[InstancePrediction]]:
    options = options or InferenceOptions()
    model.eval()
    predictions: list[list[InstancePrediction]] = []
    for batch in _chunks(scenes, batch_size):
        output = model(image_tensor(batch, device))
        size = (batch[0].size, batch[0].size)
        predictions += outputs_to_predictions(output, size, options, branch)
    return predictions


def ground_truth(scenes: list[LabeledScene]) -> list[list[LabelMap]]:
    return [[instance.label_map for instance in scene.instances] for scene in scenes]


def oracle_predictions(scenes: list[LabeledScene]) -> list[list[InstancePrediction]]:
    """Ground truth dressed up as confident predictions."""
    return [
        [
            InstancePrediction(label_map=instance.label_map, score=1.0, query_index=k)
            for k, instance in enumerate(scene.instances)
        ]
        for scene in scenes
    ]


# ── Evaluation ───────────────────────────────────────────────────────


def evaluate_model(
    model: CausalParser,
    scenes: list[LabeledScene],
    options: InferenceOptions | None = None,
    *,
    branch: str = BRANCH_FUSED,
    device: str | torch.device = "cpu",
) -> MetricsReport:
    predictions = predict(model, scenes, options, branch=branch, device=device)
    shapes = [(scene.size, scene.size) for scene in scenes]
    return evaluate_predictions(predictions, ground_truth(scenes), shapes)


def evaluate(
    checkpoint: str | Path,
    manifest: str | Path,
    split: str | None = None,
    device: str | torch.device = "cpu",
) -> MetricsReport:
    """Load ``checkpoint`` and score it on one manifest split."""
    model, config = load_checkpoint(checkpoint)
    model.to(device)
    scenes = SceneDataset(manifest, split).scenes()
    report = evaluate_model(model, scenes, config.inference, device=device)
    _LOGGER.info(
        "Evaluated %s on %s [%s]: mIoU=%.4f AP^p_vol=%.4f PCP_50=%.4f",
        checkpoint,
        manifest,
        split or "all",
        report.miou,
        report.ap_p_vol,
        report.pcp50,
    )
    return report


def intervened_scenes(scenes: list[LabeledScene], kind: str, seed: int) -> list[LabeledScene]:
    """Every scene intervened once; the seed is mixed with each scene's own."""
    out = []
    for scene in scenes:
        if not scene.instances:
            out.append(scene)
            continue
        spec = InterventionSpec.for_group(kind, GROUP_LIMBS, seed * 100_003 + scene.scene_seed)
        out.append(apply_intervention(scene, spec))
    return out


# ── Representation statistics ────────────────────────────────────────


@dataclass
class RepresentationStats:
    """Invariance and diversity of the causal representations on a scene set."""

    invariance_cosine: float  # content vectors, original vs style-intervened
    diversity_cosine: float  # content vs context vectors
    miou_content: float
    miou_context: float
    miou_fused: float
    num_scenes: int

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@torch.no_grad()
def representation_stats(
    model: CausalParser,
    scenes: list[LabeledScene],
    options: InferenceOptions | None = None,
    matcher: MatcherWeights | None = None,
    *,
    style_seed: int = 0,
    device: str | torch.device = "cpu",
) -> RepresentationStats:
    """Cosine statistics over matched (instance, part) pairs and per-branch mIoU."""
    if not model.use_cfs:
        raise CausalParsingError(
            "Representation statistics need a model with causal factor separation"
        )
    model.eval()
    styled = intervened_scenes(scenes, INTERVENTION_RANDOM_STYLE, style_seed)
    invariance, diversity = [], []
    for batch, styled_batch in zip(
        _chunks(scenes, DEFAULT_BATCH_SIZE), _chunks(styled, DEFAULT_BATCH_SIZE)
    ):
        output = model(image_tensor(batch, device))
        view = model(image_tensor(styled_batch, device))
        targets = [scene_targets(scene, device) for scene in batch]
        assignments = match_batch(
            output.instances.class_logits,
            output.instances.boxes,
            output.masks.logits,
            targets,
            matcher,
        )
        matched = gather_targets(targets, assignments, output.feature.grid)
        vec_c = pool_part_vectors(output.reps.content, matched).vectors
        vec_t = pool_part_vectors(output.reps.context, matched).vectors
        vec_view = pool_part_vectors(view.reps.content, matched).vectors
        invariance += cosine(vec_c, vec_view).tolist()
        diversity += cosine(vec_c, vec_t).tolist()

    def branch_miou(branch: str) -> float:
        try:
            return evaluate_model(model, scenes, options, branch=branch, device=device).miou
        except CausalParsingError:
            return float("nan")

    return RepresentationStats(
        invariance_cosine=float(np.mean(invariance)) if invariance else float("nan"),
        diversity_cosine=float(np.mean(diversity)) if diversity else float("nan"),
        miou_content=branch_miou(BRANCH_CONTENT),
        miou_context=branch_miou(BRANCH_CONTEXT),
        miou_fused=branch_miou(BRANCH_FUSED),
        num_scenes=len(scenes),
    )
