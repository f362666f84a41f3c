"""Multiple-human-parsing metrics: mIoU, AP^p over thresholds, PCP_50.

Predictions and ground truth are per-instance label maps (0 = background,
i + 1 = part i) at full image resolution.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .const import AP_THRESHOLDS, NUM_PARTS, PART_NAMES, PCP_THRESHOLD

_LOGGER = logging.getLogger(__name__)

LabelMap = NDArray[np.int64]


@dataclass
class InstancePrediction:
    """One kept query of one image."""

    label_map: LabelMap
    score: float
    query_index: int = 0
    confidence: NDArray[np.float32] | None = None  # per-pixel foreground prob


@dataclass
class MetricsReport:
    miou: float
    per_class_iou: list[float]  # background first
    ap_p: dict[float, float]
    ap_p_vol: float
    ap_p50: float
    pcp50: float
    counts: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["ap_p"] = {f"{k:.1f}": v for k, v in self.ap_p.items()}
        data["per_class"] = dict(zip(["background"] + PART_NAMES, self.per_class_iou))
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> MetricsReport:
        return cls(
            miou=float(data["miou"]),
            per_class_iou=[float(v) for v in data["per_class_iou"]],
            ap_p={float(k): float(v) for k, v in data["ap_p"].items()},
            ap_p_vol=float(data["ap_p_vol"]),
            ap_p50=float(data["ap_p50"]),
            pcp50=float(data["pcp50"]),
            counts=dict(data.get("counts", {})),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        """Aligned plain-text table, values in points (0-100)."""
        rows = [("mIoU", self.miou)]
        rows += [(f"IoU {name}", iou) for name, iou in zip(PART_NAMES, self.per_class_iou[1:])]
        rows += [("AP^p_50", self.ap_p50), ("AP^p_vol", self.ap_p_vol), ("PCP_50", self.pcp50)]
        width = max(len(name) for name, _ in rows)
        lines = [f"{name:<{width}}  {100 * value:6.2f}" for name, value in rows]
        lines.append(f"{'instances':<{width}}  {self.counts.get('gt_instances', 0):6d}")
        return "\n".join(lines)


# ── Primitives ───────────────────────────────────────────────────────


def mask_iou(a: NDArray[np.bool_], b: NDArray[np.bool_]) -> float:
    """IoU of two binary maps; 1 when both are empty."""
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def part_ious(pred: LabelMap, gt: LabelMap, num_parts: int = NUM_PARTS) -> NDArray[np.float64]:
    """IoU per part class (C,), NaN where the part is absent from ``gt``."""
    out = np.full(num_parts, np.nan)
    for part in range(num_parts):
        gt_mask = gt == part + 1
        if gt_mask.any():
            out[part] = mask_iou(pred == part + 1, gt_mask)
    return out


def instance_quality(pred: LabelMap, gt: LabelMap) -> float:
    """Mean part IoU over the part classes present in ``gt``."""
    ious = part_ious(pred, gt)
    if np.all(np.isnan(ious)):
        return 0.0
    return float(np.nanmean(ious))


def merge_instances(predictions: list[InstancePrediction], shape: tuple[int, int]) -> LabelMap:
    """Semantic map: each pixel takes the most confident non-background instance."""
    merged = np.zeros(shape, dtype=np.int64)
    best = np.full(shape, -np.inf)
    for pred in predictions:
        conf = pred.confidence if pred.confidence is not None else np.full(shape, pred.score)
        take = (pred.label_map > 0) & (conf > best)
        merged[take] = pred.label_map[take]
        best[take] = conf[take]
    return merged


# ── Semantic mIoU ────────────────────────────────────────────────────


def confusion_matrix(
    pred: LabelMap, gt: LabelMap, num_classes: int = NUM_PARTS + 1
) -> NDArray[np.int64]:
    """(gt, pred) counts; rows are ground truth."""
    index = gt.astype(np.int64).ravel() * num_classes + pred.astype(np.int64).ravel()
    return np.bincount(index, minlength=num_classes**2).reshape(num_classes, num_classes)


def semantic_miou(
    pred_maps: list[LabelMap], gt_maps: list[LabelMap], num_classes: int = NUM_PARTS + 1
) -> tuple[list[float], float]:
    """Per-class IoU over the dataset union and their mean over GT-present parts.

    A class with no pixels in either map scores 1, as in ``mask_iou``.
    Background IoU is reported but not averaged.
    """
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    for pred, gt in zip(pred_maps, gt_maps, strict=True):
        confusion += confusion_matrix(pred, gt, num_classes)
    tp = np.diag(confusion).astype(np.float64)
    gt_count = confusion.sum(axis=1)
    union = gt_count + confusion.sum(axis=0) - tp
    iou = np.ones(num_classes)
    np.divide(tp, union, out=iou, where=union > 0)
    present = gt_count[1:] > 0
    miou = float(np.mean(iou[1:][present])) if present.any() else 0.0
    return [float(v) for v in iou], miou


# ── AP^p and PCP ─────────────────────────────────────────────────────


def voc_ap(rec: NDArray[np.float64], prec: NDArray[np.float64]) -> float:
    """Area under the precision envelope (all-point interpolation)."""
    mrec = np.concatenate(([0.0], rec, [1.0]))
    mpre = np.concatenate(([0.0], prec, [0.0]))
    for i in range(mpre.size - 1, 0, -1):
        mpre[i - 1] = max(mpre[i - 1], mpre[i])
    idx = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[idx + 1] - mrec[idx]) * mpre[idx + 1]))


def _ranked(predictions: list[list[InstancePrediction]]) -> list[tuple[int, InstancePrediction]]:
    """(image, prediction) by descending score; the higher query index loses ties."""
    flat = [(i, p) for i, preds in enumerate(predictions) for p in preds]
    return sorted(flat, key=lambda item: (-item[1].score, item[0], item[1].query_index))


def _greedy_match(
    predictions: list[list[InstancePrediction]],
    gts: list[list[LabelMap]],
    threshold: float,
) -> tuple[list[bool], list[dict[int, int]]]:
    """TP flags in score order and per-image {gt_index: rank} of matches.

    Each prediction goes to its best-quality GT; it is a TP when that
    quality exceeds ``threshold`` and the GT is still free.
    """
    flags: list[bool] = []
    matched: list[dict[int, int]] = [{} for _ in gts]
    for rank, (image, pred) in enumerate(_ranked(predictions)):
        qualities = [instance_quality(pred.label_map, gt) for gt in gts[image]]
        if not qualities:
            flags.append(False)
            continue
        best = int(np.argmax(qualities))
        if qualities[best] > threshold and best not in matched[image]:
            matched[image][best] = rank
            flags.append(True)
        else:
            flags.append(False)
    return flags, matched


def ap_p(
    predictions: list[list[InstancePrediction]],
    gts: list[list[LabelMap]],
    threshold: float,
) -> float | None:
    """Part-based AP at one quality threshold; None when there is nothing to score."""
    npos = sum(len(g) for g in gts)
    num_pred = sum(len(p) for p in predictions)
    if npos == 0:
        return 0.0 if num_pred else None
    if num_pred == 0:
        return 0.0
    flags, _ = _greedy_match(predictions, gts, threshold)
    tp = np.cumsum(np.array(flags, dtype=np.float64))
    fp = np.cumsum(1.0 - np.array(flags, dtype=np.float64))
    rec = tp / npos
    prec = tp / np.maximum(tp + fp, np.finfo(np.float64).eps)
    return voc_ap(rec, prec)


def pcp50(
    predictions: list[list[InstancePrediction]],
    gts: list[list[LabelMap]],
) -> float:
    """Share of GT parts with IoU above 0.5, averaged over all GT persons.

    Persons are matched greedily in score order with any positive quality;
    unmatched persons count as entirely wrong.
    """
    npos = sum(len(g) for g in gts)
    if npos == 0:
        return 0.0
    ranked = _ranked(predictions)
    _, matched = _greedy_match(predictions, gts, 0.0)
    ratios = []
    for image, assignment in enumerate(matched):
        for gt_index, rank in assignment.items():
            gt = gts[image][gt_index]
            ious = part_ious(ranked[rank][1].label_map, gt)
            present = ~np.isnan(ious)
            ratios.append(float(np.sum(ious[present] > PCP_THRESHOLD) / max(present.sum(), 1)))
    return float(np.sum(ratios) / npos)


# ── Report ───────────────────────────────────────────────────────────


def evaluate_predictions(
    predictions: list[list[InstancePrediction]],
    gts: list[list[LabelMap]],
    shapes: list[tuple[int, int]] | None = None,
) -> MetricsReport:
    """Full report over a set of images.

    ``shapes`` is only needed for images with neither GT nor predictions.
    """
    if len(predictions) != len(gts):
        raise ValueError(f"{len(predictions)} prediction lists for {len(gts)} images")
    pred_maps, gt_maps = [], []
    for i, (preds, gt_instances) in enumerate(zip(predictions, gts)):
        if gt_instances:
            shape = gt_instances[0].shape
        elif preds:
            shape = preds[0].label_map.shape
        elif shapes is not None:
            shape = shapes[i]
        else:
            continue
        pred_maps.append(merge_instances(preds, shape))
        gt_map = np.zeros(shape, dtype=np.int64)
        for gt in gt_instances:
            gt_map = np.where(gt > 0, gt, gt_map)
        gt_maps.append(gt_map)
    per_class, miou = semantic_miou(pred_maps, gt_maps)

    curve = {}
    for threshold in AP_THRESHOLDS:
        value = ap_p(predictions, gts, threshold)
        curve[threshold] = 0.0 if value is None else value
    report = MetricsReport(
        miou=miou,
        per_class_iou=per_class,
        ap_p=curve,
        ap_p_vol=float(np.mean(list(curve.values()))),
        ap_p50=curve[0.5],
        pcp50=pcp50(predictions, gts),
        counts={
            "images": len(gts),
            "gt_instances": sum(len(g) for g in gts),
            "predictions": sum(len(p) for p in predictions),
        },
    )
    _LOGGER.debug("Evaluated %d images: mIoU=%.4f AP^p_vol=%.4f", len(gts), miou, report.ap_p_vol)
    return report


def mean_reports(reports: list[MetricsReport]) -> MetricsReport:
    """Element-wise mean, used to average seeds."""
    if not reports:
        raise ValueError("cannot average an empty list of reports")
    thresholds = list(reports[0].ap_p)
    return MetricsReport(
        miou=float(np.mean([r.miou for r in reports])),
        per_class_iou=np.mean([r.per_class_iou for r in reports], axis=0).tolist(),
        ap_p={t: float(np.mean([r.ap_p[t] for r in reports])) for t in thresholds},
        ap_p_vol=float(np.mean([r.ap_p_vol for r in reports])),
        ap_p50=float(np.mean([r.ap_p50 for r in reports])),
        pcp50=float(np.mean([r.pcp50 for r in reports])),
        counts={k: sum(r.counts.get(k, 0) for r in reports) for k in reports[0].counts},
    )
