"""Tests for the training objectives."""

from __future__ import annotations

import math

import pytest
import torch

from causal_parsing.cfs import PartMasks
from causal_parsing.config import LossOptions
from causal_parsing.const import NUM_PARTS
from causal_parsing.exceptions import NonFiniteLossError
from causal_parsing.losses import (
    compute_losses,
    cosine,
    diversity_similarity,
    gather_targets,
    loss_det,
    loss_div,
    loss_inv,
    loss_part,
    pool_part_vectors,
    total_loss,
)
from causal_parsing.matching import Assignment, match_batch
from causal_parsing.model import CausalParser
from tests.conftest import TOY_IMAGE_SIZE, TOY_MODEL, make_targets, quadrant_masks

FULL_BOX = [[0.5, 0.5, 1.0, 1.0]]


def _matched(dtype=torch.float64, size: int = 4, query: int = 1):
    """One image, query ``query`` matched to a single quadrant person on a 4x4 grid."""
    targets = make_targets(FULL_BOX, quadrant_masks(size), dtype=dtype)
    others = frozenset(q for q in range(3) if q != query)
    assignment = Assignment(pairs=[(query, 0)], unmatched_queries=others)
    return gather_targets([targets], [assignment], (4, 4))


def _unmatched():
    targets = make_targets(FULL_BOX, quadrant_masks(4))
    return gather_targets([targets], [Assignment(pairs=[])], (4, 4))


# ── Target gathering and part pooling ────────────────────────────────


class TestGatherTargets:
    def test_quadrant_labels_at_feature_resolution(self):
        matched = _matched(torch.float32, size=8)
        expected = torch.tensor(
            [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]], dtype=torch.long
        )
        assert torch.equal(matched.labels[0], expected)
        assert matched.masks.shape == (1, NUM_PARTS, 4, 4)
        assert matched.masks.dtype == torch.bool
        assert matched.query_index.tolist() == [1]
        assert matched.batch_index.tolist() == [0]

    def test_agrees_with_scene_targets(self):
        masks = torch.cat([quadrant_masks(8), quadrant_masks(8).flip(-1)])
        targets = make_targets(FULL_BOX * 2, masks)
        assignment = Assignment(pairs=[(2, 0), (0, 1)], unmatched_queries=frozenset({1}))
        matched = gather_targets([targets], [assignment], (4, 4))
        assert torch.equal(matched.labels, targets.label_maps((4, 4)))
        assert torch.equal(matched.masks, targets.downsampled((4, 4)))
        assert matched.query_index.tolist() == [2, 0]

    def test_empty_assignment(self):
        matched = _unmatched()
        assert matched.num_matched == 0
        assert matched.masks.shape == (0, NUM_PARTS, 4, 4)


class TestPartPooling:
    def test_masked_average_per_present_part(self):
        torch.manual_seed(0)
        rep = torch.randn(1, 3, 5, 4, 4, dtype=torch.float64)
        pooled = pool_part_vectors(rep, _matched())
        assert pooled.vectors.shape == (NUM_PARTS, 5)
        assert pooled.skipped == 0
        quadrants = [(slice(0, 2), slice(0, 2)), (slice(0, 2), slice(2, 4))]
        quadrants += [(slice(2, 4), slice(0, 2)), (slice(2, 4), slice(2, 4))]
        for part, (rows, cols) in enumerate(quadrants):
            expected = rep[0, 1, :, rows, cols].mean(dim=(1, 2))
            assert torch.allclose(pooled.vectors[part], expected)

    def test_vanished_part_is_skipped(self):
        masks = torch.zeros(1, NUM_PARTS, 8, 8)
        masks[0, 0, 0, 0] = 1  # one pixel, a quarter of a cell
        masks[0, 1, 4:, 4:] = 1
        targets = make_targets(FULL_BOX, masks)
        matched = gather_targets([targets], [Assignment(pairs=[(0, 0)])], (4, 4))
        pooled = pool_part_vectors(torch.randn(1, 1, 3, 4, 4), matched)
        assert pooled.skipped == 1
        assert pooled.vectors.shape == (1, 3)

    def test_no_matches(self):
        pooled = pool_part_vectors(torch.randn(1, 3, 5, 4, 4), _unmatched())
        assert pooled.vectors.shape == (0, 5)

    def test_cosine_of_zero_vector(self):
        value = cosine(torch.zeros(1, 3), torch.ones(1, 3))
        assert float(value) == pytest.approx(0.0)


# ── Individual terms ─────────────────────────────────────────────────


class TestLossTerms:
    """Values at known points and float64 gradient checks."""

    def test_part_loss_gradients(self):
        torch.manual_seed(1)
        matched = _matched()
        content = torch.randn(1, 3, NUM_PARTS + 1, 4, 4, dtype=torch.float64, requires_grad=True)
        context = torch.randn(1, 3, NUM_PARTS + 1, 4, 4, dtype=torch.float64, requires_grad=True)

        def fn(a, b):
            return loss_part(PartMasks(a), PartMasks(b), matched)

        assert torch.autograd.gradcheck(fn, (content, context))

    def test_part_loss_sums_branches(self):
        torch.manual_seed(2)
        matched = _matched()
        a = PartMasks(torch.randn(1, 3, NUM_PARTS + 1, 4, 4, dtype=torch.float64))
        b = PartMasks(torch.randn(1, 3, NUM_PARTS + 1, 4, 4, dtype=torch.float64))
        both = float(loss_part(a, b, matched))
        separate = loss_part(a, None, matched) + loss_part(b, None, matched)
        assert both == pytest.approx(float(separate))

    def test_part_loss_of_uniform_logits(self):
        logits = torch.zeros(1, 3, NUM_PARTS + 1, 4, 4, dtype=torch.float64)
        value = loss_part(PartMasks(logits), None, _matched())
        assert float(value) == pytest.approx(math.log(NUM_PARTS + 1))

    def test_detection_at_uniform_logits_and_exact_box(self):
        matched = _matched()
        class_logits = torch.zeros(1, 3, 2, dtype=torch.float64)
        part_logits = torch.zeros(1, 3, NUM_PARTS, dtype=torch.float64)
        boxes = torch.zeros(1, 3, 4, dtype=torch.float64)
        boxes[0, 1] = matched.boxes[0]
        exact = float(loss_det(class_logits, boxes, part_logits, matched, 0.1))
        # weighted CE of uniform logits is ln 2 whatever the weights; presence BCE is ln 2
        assert exact == pytest.approx(2 * math.log(2))

        shifted = boxes.clone()
        shifted[0, 1, 0] += 0.2
        moved = float(loss_det(class_logits, shifted, part_logits, matched, 0.1))
        assert moved - exact == pytest.approx(0.5 * 0.2**2)

    def test_orthogonal_representations(self):
        matched = _matched()
        first = torch.zeros(1, 3, 2, 4, 4, dtype=torch.float64)
        first[:, :, 0] = 1.0
        second = torch.zeros(1, 3, 2, 4, 4, dtype=torch.float64)
        second[:, :, 1] = 1.0
        assert float(diversity_similarity(first, second, matched)) == pytest.approx(0.0)

        context = torch.ones(1, 3, 2, 4, 4, dtype=torch.float64)
        views = [(first, context), (second, context)]
        # one identical view, one orthogonal content view
        assert float(loss_inv(first, context, views, matched)) == pytest.approx(0.5)

    def test_invariance_ignores_positive_rescaling(self):
        torch.manual_seed(9)
        matched = _matched()
        shape = (1, 3, 5, 4, 4)
        content = torch.randn(*shape, dtype=torch.float64)
        context = torch.randn(*shape, dtype=torch.float64)
        view_c = torch.randn(*shape, dtype=torch.float64)
        view_t = torch.randn(*shape, dtype=torch.float64)
        plain = loss_inv(content, context, [(view_c, view_t)], matched)
        scaled = loss_inv(content, context, [(3.0 * view_c, 3.0 * view_t)], matched)
        assert float(scaled) == pytest.approx(float(plain))

    def test_diversity_extremes(self):
        torch.manual_seed(3)
        matched = _matched()
        content = torch.randn(1, 3, 5, 4, 4, dtype=torch.float64)
        assert float(diversity_similarity(content, content, matched)) == pytest.approx(1.0)
        assert float(diversity_similarity(content, -content, matched)) == pytest.approx(-1.0)

    def test_diversity_loss_adds_the_part_loss(self):
        torch.manual_seed(3)
        matched = _matched()
        content = torch.randn(1, 3, 5, 4, 4, dtype=torch.float64)
        l_part = torch.tensor(0.25, dtype=torch.float64)
        assert float(loss_div(content, -content, matched, l_part)) == pytest.approx(-0.75)

    def test_diversity_gradients(self):
        torch.manual_seed(4)
        matched = _matched()
        content = torch.randn(1, 3, 5, 4, 4, dtype=torch.float64, requires_grad=True)
        context = torch.randn(1, 3, 5, 4, 4, dtype=torch.float64, requires_grad=True)
        assert torch.autograd.gradcheck(
            lambda c, t: diversity_similarity(c, t, matched), (content, context)
        )

    def test_invariance_is_zero_for_identical_views(self):
        torch.manual_seed(5)
        matched = _matched()
        content = torch.randn(1, 3, 5, 4, 4, dtype=torch.float64)
        context = torch.randn(1, 3, 5, 4, 4, dtype=torch.float64)
        views = [(content, context), (content.clone(), context.clone())]
        value = loss_inv(content, context, views, matched)
        assert float(value) == pytest.approx(0.0, abs=1e-12)

    def test_invariance_without_views(self):
        content = torch.randn(1, 3, 5, 4, 4)
        assert float(loss_inv(content, content, [], _matched(torch.float32))) == 0.0

    def test_invariance_gradients(self):
        torch.manual_seed(6)
        matched = _matched()
        shape = (1, 3, 5, 4, 4)
        content = torch.randn(*shape, dtype=torch.float64, requires_grad=True)
        context = torch.randn(*shape, dtype=torch.float64, requires_grad=True)
        view_c = torch.randn(*shape, dtype=torch.float64, requires_grad=True)
        view_t = torch.randn(*shape, dtype=torch.float64, requires_grad=True)

        def fn(c, t, vc, vt):
            return loss_inv(c, t, [(vc, vt)], matched)

        assert torch.autograd.gradcheck(fn, (content, context, view_c, view_t))

    def test_detection_gradients(self):
        torch.manual_seed(7)
        matched = _matched()
        class_logits = torch.randn(1, 3, 2, dtype=torch.float64, requires_grad=True)
        boxes = torch.rand(1, 3, 4, dtype=torch.float64, requires_grad=True)
        part_logits = torch.randn(1, 3, NUM_PARTS, dtype=torch.float64, requires_grad=True)

        def fn(c, b, p):
            return loss_det(c, b, p, matched, no_person_weight=0.1)

        assert torch.autograd.gradcheck(fn, (class_logits, boxes, part_logits))

    def test_terms_stay_finite_without_matches(self):
        matched = _unmatched()
        logits = torch.randn(1, 3, NUM_PARTS + 1, 4, 4, requires_grad=True)
        part = loss_part(PartMasks(logits), None, matched)
        det = loss_det(
            torch.randn(1, 3, 2), torch.rand(1, 3, 4), torch.randn(1, 3, NUM_PARTS), matched, 0.1
        )
        content = torch.randn(1, 3, 5, 4, 4)
        assert float(part) == 0.0
        assert math.isfinite(float(det))
        assert float(diversity_similarity(content, content, matched)) == 0.0
        assert float(loss_inv(content, content, [(content, content)], matched)) == 0.0
        part.backward()
        assert logits.grad is not None


# ── Total ────────────────────────────────────────────────────────────


class TestTotalLoss:
    def test_weighted_sum(self):
        options = LossOptions(weight_det=2.0, weight_div=3.0, weight_inv=4.0)
        breakdown = total_loss(
            torch.tensor(1.0), torch.tensor(2.0), torch.tensor(0.5), torch.tensor(0.25), options
        )
        assert float(breakdown.l_det) == pytest.approx(2.0)
        assert float(breakdown.l_div) == pytest.approx(7.5)
        assert float(breakdown.l_inv) == pytest.approx(1.0)
        assert float(breakdown.total) == pytest.approx(10.5)

    def test_part_only_arm(self):
        breakdown = total_loss(torch.tensor(1.0), torch.tensor(2.0))
        assert float(breakdown.l_div) == pytest.approx(2.0)
        assert float(breakdown.l_inv) == 0.0
        assert float(breakdown.total) == pytest.approx(3.0)

    def test_non_finite_term_raises_with_diagnostics(self):
        with pytest.raises(NonFiniteLossError, match="l_det") as err:
            total_loss(torch.tensor(float("nan")), torch.tensor(1.0))
        assert math.isnan(err.value.diagnostics["l_det"])
        assert err.value.diagnostics["l_part"] == pytest.approx(1.0)


class TestComputeLosses:
    """The full pipeline on toy parser outputs."""

    @staticmethod
    def _batch(options: LossOptions, toy_images):
        torch.manual_seed(8)
        model = CausalParser(TOY_MODEL, options)
        output = model(toy_images)
        masks = quadrant_masks(TOY_IMAGE_SIZE)
        targets = [make_targets(FULL_BOX, masks)] * toy_images.shape[0]
        assignments = match_batch(
            output.instances.class_logits, output.instances.boxes, output.masks.logits, targets
        )
        return output, targets, assignments

    def test_identical_views_have_zero_invariance(self, toy_images):
        options = LossOptions()
        output, targets, assignments = self._batch(options, toy_images)
        breakdown = compute_losses(output, targets, assignments, options, views=[output, output])
        assert breakdown.num_views == 2
        assert breakdown.matched == 2
        assert float(breakdown.l_inv) == pytest.approx(0.0, abs=1e-5)
        assert -1.0 <= float(breakdown.similarity) <= 1.0
        breakdown.total.backward()

    def test_total_is_sum_of_terms(self, toy_images):
        options = LossOptions()
        output, targets, assignments = self._batch(options, toy_images)
        values = compute_losses(output, targets, assignments, options, views=[output]).as_floats()
        assert values["total"] == pytest.approx(values["l_det"] + values["l_div"] + values["l_inv"])

    def test_baseline_uses_the_part_loss_only(self, toy_images):
        options = LossOptions(use_cfs=False, use_div=False, use_inv=False)
        output, targets, assignments = self._batch(options, toy_images)
        breakdown = compute_losses(output, targets, assignments, options)
        assert float(breakdown.l_div) == pytest.approx(float(breakdown.l_part))
        assert float(breakdown.similarity) == 0.0
        assert float(breakdown.l_inv) == 0.0
        assert breakdown.num_views == 0
