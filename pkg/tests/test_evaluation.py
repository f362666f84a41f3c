"""Tests for checkpoints, inference and evaluation."""

from __future__ import annotations

import pytest
import torch

from causal_parsing.checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from causal_parsing.config import InferenceOptions, LossOptions
from causal_parsing.const import INTERVENTION_RANDOM_MASK, STYLE_NATURAL
from causal_parsing.data import SceneDataset
from causal_parsing.evaluation import (
    BRANCH_CONTENT,
    RepresentationStats,
    evaluate,
    evaluate_model,
    ground_truth,
    intervened_scenes,
    oracle_predictions,
    predict,
    representation_stats,
    select_queries,
)
from causal_parsing.exceptions import CausalParsingError, CheckpointError
from causal_parsing.metrics import evaluate_predictions
from causal_parsing.model import CausalParser
from tests.conftest import TOY_IMAGE_SIZE, TOY_MODEL, TOY_QUERIES, make_config

BASELINE = LossOptions(use_cfs=False, use_div=False, use_inv=False)


@pytest.fixture
def test_scenes(toy_manifest):
    return SceneDataset(toy_manifest, "test").scenes()


@pytest.fixture
def saved_model(toy_manifest, tmp_path):
    torch.manual_seed(0)
    config = make_config(str(toy_manifest))
    model = CausalParser(config.model, config.loss)
    return save_checkpoint(tmp_path / "model.pt", model, config, extra={"epoch": 0}), model


# ── Checkpoints ──────────────────────────────────────────────────────


class TestCheckpoint:
    def test_round_trip(self, saved_model, toy_manifest):
        path, model = saved_model
        loaded, config = load_checkpoint(path)
        assert config == make_config(str(toy_manifest))
        assert not loaded.training
        for name, value in model.state_dict().items():
            assert torch.equal(loaded.state_dict()[name], value)
        assert read_checkpoint(path)["extra"] == {"epoch": 0}

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="does not exist"):
            load_checkpoint(tmp_path / "nope.pt")

    def test_corrupt_file(self, tmp_path):
        path = tmp_path / "bad.pt"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(CheckpointError, match="Cannot read checkpoint"):
            read_checkpoint(path)

    def test_wrong_format_version(self, tmp_path):
        path = tmp_path / "old.pt"
        torch.save({"format_version": 99, "config": {}, "state_dict": {}}, path)
        with pytest.raises(CheckpointError, match="has format 99"):
            read_checkpoint(path)

    def test_missing_keys(self, tmp_path):
        path = tmp_path / "partial.pt"
        torch.save({"format_version": 1}, path)
        with pytest.raises(CheckpointError, match="missing config, state_dict"):
            read_checkpoint(path)


# ── Inference ────────────────────────────────────────────────────────


class TestInference:
    def test_select_queries(self):
        prob = torch.tensor([0.2, 0.9, 0.5, 0.9])
        options = InferenceOptions(score_threshold=0.3, top_k=2)
        assert select_queries(prob, options) == [1, 3]
        assert select_queries(prob, InferenceOptions(score_threshold=0.95)) == []

    def test_predict_keeps_every_query_at_zero_threshold(self, test_scenes):
        torch.manual_seed(1)
        model = CausalParser(TOY_MODEL, LossOptions())
        options = InferenceOptions(score_threshold=0.0, top_k=TOY_QUERIES)
        predictions = predict(model, test_scenes[:2], options, batch_size=1)
        assert [len(p) for p in predictions] == [TOY_QUERIES, TOY_QUERIES]
        first = predictions[0][0]
        assert first.label_map.shape == (TOY_IMAGE_SIZE, TOY_IMAGE_SIZE)
        assert first.confidence.shape == (TOY_IMAGE_SIZE, TOY_IMAGE_SIZE)
        scores = [p.score for p in predictions[0]]
        assert scores == sorted(scores, reverse=True)

    def test_baseline_has_no_content_branch(self, test_scenes):
        model = CausalParser(TOY_MODEL, BASELINE)
        with pytest.raises(CausalParsingError, match="no content segmentation branch"):
            predict(model, test_scenes[:1], branch=BRANCH_CONTENT)

    def test_oracle_scores_one(self, test_scenes):
        report = evaluate_predictions(oracle_predictions(test_scenes), ground_truth(test_scenes))
        assert report.miou == pytest.approx(1.0)
        assert report.ap_p_vol == pytest.approx(1.0)
        assert report.pcp50 == pytest.approx(1.0)


# ── Evaluation ───────────────────────────────────────────────────────


class TestEvaluate:
    def test_repeatable(self, saved_model, toy_manifest):
        path, _ = saved_model
        first = evaluate(path, toy_manifest, "test")
        second = evaluate(path, toy_manifest, "test")
        assert first.to_dict() == second.to_dict()
        assert first.counts["images"] == 4

    def test_missing_checkpoint(self, tmp_path, toy_manifest):
        with pytest.raises(CheckpointError):
            evaluate(tmp_path / "nope.pt", toy_manifest, "test")

    def test_evaluate_model_matches_evaluate(self, saved_model, toy_manifest, test_scenes):
        path, _ = saved_model
        model, config = load_checkpoint(path)
        direct = evaluate_model(model, test_scenes, config.inference)
        assert direct == evaluate(path, toy_manifest, "test")

    def test_untrained_model_scores_low(self, test_scenes):
        torch.manual_seed(0)
        model = CausalParser(TOY_MODEL, LossOptions())
        assert evaluate_model(model, test_scenes).miou < 0.2

    def test_intervened_scenes(self, test_scenes):
        views = intervened_scenes(test_scenes, INTERVENTION_RANDOM_MASK, seed=0)
        assert len(views) == len(test_scenes)
        assert all(v.interventions == (INTERVENTION_RANDOM_MASK,) for v in views)
        assert all(v.style == STYLE_NATURAL for v in views)
        again = intervened_scenes(test_scenes, INTERVENTION_RANDOM_MASK, seed=0)
        assert all((a.image == b.image).all() for a, b in zip(views, again))


# ── Representation statistics ────────────────────────────────────────


class TestRepresentationStats:
    def test_values_on_an_untrained_model(self, test_scenes):
        torch.manual_seed(2)
        model = CausalParser(TOY_MODEL, LossOptions())
        stats = representation_stats(model, test_scenes[:2])
        assert isinstance(stats, RepresentationStats)
        assert stats.num_scenes == 2
        for value in (stats.invariance_cosine, stats.diversity_cosine):
            assert value != value or -1.0 - 1e-6 <= value <= 1.0 + 1e-6
        assert 0.0 <= stats.miou_fused <= 1.0
        assert set(stats.to_dict()) >= {"invariance_cosine", "miou_content", "miou_context"}

    def test_baseline_has_no_causal_representations(self, test_scenes):
        with pytest.raises(CausalParsingError, match="causal factor separation"):
            representation_stats(CausalParser(TOY_MODEL, BASELINE), test_scenes[:1])
