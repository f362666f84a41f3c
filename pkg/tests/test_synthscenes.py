"""Tests for synthetic scene generation, interventions and dataset files."""

from __future__ import annotations

import dataclasses
import json

import numpy as np
import pytest

from causal_parsing.config import DatasetConfig, SplitSpec
from causal_parsing.const import (
    GROUP_HEAD,
    GROUP_LIMBS,
    GROUP_TORSO,
    INTERVENTION_CONTENT_ONLY,
    INTERVENTION_RANDOM_MASK,
    INTERVENTION_RANDOM_STYLE,
    INTERVENTIONS,
    MANIFEST_FILENAME,
    PART_GROUPS,
    PART_HEAD,
    PART_LEFT_LIMBS,
    PART_NAMES,
    PART_RIGHT_LIMBS,
    PART_TORSO,
    STYLE_CARTOON,
    STYLE_NATURAL,
    STYLE_SKETCH,
    STYLES,
)
from causal_parsing.exceptions import (
    DatasetError,
    InterventionError,
    ManifestExistsError,
    SceneError,
)
from causal_parsing.stylize import quantize
from causal_parsing.synthscenes import (
    InterventionSpec,
    PersonSpec,
    apply_intervention,
    generate_scene,
    load_scene,
    make_dataset,
    mask_box,
    restyle,
    rle_decode,
    rle_encode,
    save_scene,
    styled_background,
)

SIZE = 64


def _scene(seed: int = 3, persons: int = 2, style: str = STYLE_NATURAL):
    return generate_scene(persons, style, seed, image_size=SIZE)


def _limb_pixels(scene) -> np.ndarray:
    pixels = np.zeros((scene.size, scene.size), dtype=bool)
    for instance in scene.instances:
        for part in PART_GROUPS[GROUP_LIMBS]:
            pixels |= instance.part_masks[part]
    return pixels


# ── Scene generation ─────────────────────────────────────────────────


class TestGenerateScene:
    """Scenes are pure functions of their seed."""

    def test_same_seed_same_scene(self):
        """Two calls with equal arguments give identical pixels and labels."""
        a, b = _scene(seed=11), _scene(seed=11)
        assert np.array_equal(a.image, b.image)
        for ia, ib in zip(a.instances, b.instances, strict=True):
            assert np.array_equal(ia.part_masks, ib.part_masks)
            assert ia.box == ib.box

    def test_different_seeds_differ(self):
        assert not np.array_equal(_scene(seed=1).image, _scene(seed=2).image)

    def test_every_person_visible(self):
        for persons in (1, 2, 3):
            scene = _scene(seed=5, persons=persons)
            assert len(scene.instances) == persons
            assert all(instance.person_mask.any() for instance in scene.instances)

    def test_parts_and_instances_are_disjoint(self):
        """Every pixel carries at most one part of at most one person."""
        scene = _scene(seed=7, persons=3)
        stacked = np.stack([instance.part_masks for instance in scene.instances])
        assert stacked.sum(axis=(0, 1)).max() <= 1

    def test_box_is_tight_around_person_mask(self):
        scene = _scene(seed=8)
        for instance in scene.instances:
            assert instance.box == pytest.approx(mask_box(instance.person_mask))
            cx, cy, w, h = instance.box
            assert cx - w / 2 >= -1e-9 and cx + w / 2 <= 1.0 + 1e-9
            assert cy - h / 2 >= -1e-9 and cy + h / 2 <= 1.0 + 1e-9

    def test_presence_matches_masks(self):
        scene = _scene(seed=9, persons=3)
        for instance in scene.instances:
            assert instance.part_presence == tuple(bool(m.any()) for m in instance.part_masks)

    def test_image_range_and_shape(self):
        scene = _scene(seed=10)
        assert scene.image.shape == (SIZE, SIZE, 3)
        assert scene.image.dtype == np.float32
        assert scene.image.min() >= 0.0 and scene.image.max() <= 1.0

    @pytest.mark.parametrize("persons", [0, 5])
    def test_person_count_out_of_range(self, persons):
        with pytest.raises(SceneError):
            generate_scene(persons, STYLE_NATURAL, 0, image_size=SIZE)

    def test_unknown_style(self):
        with pytest.raises(SceneError, match="Unknown style"):
            generate_scene(1, "watercolor", 0, image_size=SIZE)

    def test_invalid_person_spec(self):
        with pytest.raises(SceneError, match="scale"):
            PersonSpec(center=(0.5, 0.5), scale=0.9, pose_angles=(0.0,) * 6, palette_seed=1)


# ── Styles ───────────────────────────────────────────────────────────


class TestStyles:
    """Style changes appearance only."""

    def test_geometry_identical_across_styles(self):
        natural = _scene(seed=21, style=STYLE_NATURAL)
        for style in (STYLE_CARTOON, STYLE_SKETCH):
            styled = _scene(seed=21, style=style)
            assert styled.style == style
            for a, b in zip(natural.instances, styled.instances, strict=True):
                assert np.array_equal(a.part_masks, b.part_masks)
                assert a.box == b.box

    def test_styles_change_pixels(self):
        images = [_scene(seed=22, style=style).image for style in STYLES]
        assert not np.array_equal(images[0], images[1])
        assert not np.array_equal(images[0], images[2])
        assert not np.array_equal(images[1], images[2])

    def test_restyle_matches_direct_generation(self):
        scene = _scene(seed=23, style=STYLE_NATURAL)
        direct = _scene(seed=23, style=STYLE_CARTOON)
        assert np.array_equal(restyle(scene, STYLE_CARTOON).image, direct.image)

    def test_sketch_is_grayscale(self):
        image = _scene(seed=24, style=STYLE_SKETCH).image
        assert np.array_equal(image[..., 0], image[..., 1])
        assert np.array_equal(image[..., 1], image[..., 2])


# ── Interventions ────────────────────────────────────────────────────


class TestInterventions:
    """The three intervention operators and their label edits."""

    def test_content_only_keeps_target_and_blanks_the_rest(self):
        scene = _scene(seed=31)
        spec = InterventionSpec.for_group(INTERVENTION_CONTENT_ONLY, GROUP_LIMBS)
        out = apply_intervention(scene, spec)

        keep = _limb_pixels(scene)
        assert np.array_equal(out.image[keep], scene.image[keep])
        assert np.array_equal(out.image[~keep], styled_background(scene)[~keep])
        for instance in out.instances:
            assert not instance.part_masks[0].any()
            assert not instance.part_masks[1].any()
            assert instance.part_presence[0] is False
            assert instance.part_presence[1] is False
        assert out.interventions == (INTERVENTION_CONTENT_ONLY,)

    @pytest.mark.parametrize(
        ("group", "kept"),
        [
            (GROUP_HEAD, [PART_HEAD]),
            (GROUP_TORSO, [PART_TORSO]),
            (GROUP_LIMBS, [PART_LEFT_LIMBS, PART_RIGHT_LIMBS]),
        ],
    )
    def test_content_only_keeps_the_named_parts(self, group, kept):
        scene = _scene(seed=30)
        spec = InterventionSpec.for_group(INTERVENTION_CONTENT_ONLY, group)
        out = apply_intervention(scene, spec)
        originals = {instance.person: instance for instance in scene.instances}
        assert out.instances
        for after in out.instances:
            before = originals[after.person]
            for part, name in enumerate(PART_NAMES):
                if name in kept:
                    assert np.array_equal(after.part_masks[part], before.part_masks[part])
                else:
                    assert not after.part_masks[part].any()

    def test_random_mask_never_labels_occluded_pixels(self):
        scene = _scene(seed=32, persons=3)
        spec = InterventionSpec.for_group(INTERVENTION_RANDOM_MASK, GROUP_LIMBS, seed=4)
        out = apply_intervention(scene, spec)

        changed = np.any(out.image != scene.image, axis=-1)
        for instance in out.instances:
            assert not (instance.person_mask & changed).any()

    def test_random_mask_shrinks_masks_and_keeps_target(self):
        scene = _scene(seed=33, persons=2)
        spec = InterventionSpec.for_group(INTERVENTION_RANDOM_MASK, GROUP_LIMBS, seed=1)
        out = apply_intervention(scene, spec)

        originals = {instance.person: instance for instance in scene.instances}
        assert len(out.instances) <= len(scene.instances)
        for instance in out.instances:
            original = originals[instance.person]
            assert not (instance.part_masks & ~original.part_masks).any()
            for part in PART_GROUPS[GROUP_LIMBS]:
                assert np.array_equal(instance.part_masks[part], original.part_masks[part])

    def test_random_mask_is_seeded(self):
        scene = _scene(seed=34, persons=3)
        spec = InterventionSpec.for_group(INTERVENTION_RANDOM_MASK, GROUP_LIMBS, seed=9)
        assert np.array_equal(
            apply_intervention(scene, spec).image, apply_intervention(scene, spec).image
        )

    def test_random_style_switches_style_and_keeps_labels(self):
        scene = _scene(seed=35)
        spec = InterventionSpec.for_group(INTERVENTION_RANDOM_STYLE, GROUP_LIMBS, seed=2)
        out = apply_intervention(scene, spec)

        assert out.style != scene.style
        assert out.style in STYLES
        for a, b in zip(scene.instances, out.instances, strict=True):
            assert np.array_equal(a.part_masks, b.part_masks)
        assert out.interventions == (INTERVENTION_RANDOM_STYLE,)

    def test_interventions_accumulate_history(self):
        scene = _scene(seed=36)
        styled = apply_intervention(scene, InterventionSpec(INTERVENTION_RANDOM_STYLE, seed=1))
        masked = apply_intervention(styled, InterventionSpec(INTERVENTION_CONTENT_ONLY))
        assert masked.interventions == (INTERVENTION_RANDOM_STYLE, INTERVENTION_CONTENT_ONLY)

    def test_scene_without_instances_is_rejected(self):
        empty = dataclasses.replace(_scene(seed=37), instances=[])
        with pytest.raises(InterventionError, match="without instances"):
            apply_intervention(empty, InterventionSpec(INTERVENTION_CONTENT_ONLY))

    def test_unknown_kind_is_rejected(self):
        with pytest.raises(InterventionError, match="Unknown intervention"):
            apply_intervention(_scene(seed=38), InterventionSpec("blur"))

    def test_views_of_a_loaded_scene_differ_only_by_the_intervention(self, tmp_path):
        scene = _scene(seed=40)
        save_scene(scene, tmp_path / "s.png", tmp_path / "s.json")
        loaded = load_scene(tmp_path / "s.png", tmp_path / "s.json")

        assert np.array_equal(restyle(loaded, loaded.style).image, loaded.image)
        for kind in INTERVENTIONS:
            view = apply_intervention(loaded, InterventionSpec(kind, seed=1))
            assert np.array_equal(quantize(view.image), view.image)
        blanked = apply_intervention(loaded, InterventionSpec(INTERVENTION_CONTENT_ONLY))
        keep = _limb_pixels(loaded)
        assert np.array_equal(blanked.image[keep], loaded.image[keep])

    def test_invalid_target_group(self):
        with pytest.raises(InterventionError, match="Invalid target"):
            apply_intervention(
                _scene(seed=39), InterventionSpec(INTERVENTION_CONTENT_ONLY, target_part_group=(7,))
            )
        with pytest.raises(InterventionError, match="Unknown part group"):
            InterventionSpec.for_group(INTERVENTION_CONTENT_ONLY, "feet")


# ── Files ────────────────────────────────────────────────────────────


class TestSceneFiles:
    """PNG plus JSON sidecar storage."""

    def test_rle_handles_leading_foreground(self):
        mask = np.array([[1, 1, 0], [0, 1, 1]], dtype=bool)
        rle = rle_encode(mask)
        assert rle["counts"][0] == 0
        assert np.array_equal(rle_decode(rle), mask)

    def test_rle_rejects_wrong_length(self):
        with pytest.raises(SceneError, match="RLE counts"):
            rle_decode({"size": [2, 2], "counts": [1, 1]})

    def test_save_and_load(self, tmp_path):
        scene = _scene(seed=41)
        save_scene(scene, tmp_path / "s.png", tmp_path / "s.json")
        loaded = load_scene(tmp_path / "s.png", tmp_path / "s.json")

        assert np.array_equal(loaded.image, scene.image)
        assert loaded.style == scene.style
        assert loaded.scene_seed == scene.scene_seed
        for a, b in zip(scene.instances, loaded.instances, strict=True):
            assert np.array_equal(a.part_masks, b.part_masks)
            assert a.person == b.person

    def test_load_rejects_unknown_format(self, tmp_path):
        scene = _scene(seed=42)
        save_scene(scene, tmp_path / "s.png", tmp_path / "s.json")
        doc = json.loads((tmp_path / "s.json").read_text())
        doc["format_version"] = 99
        (tmp_path / "s.json").write_text(json.dumps(doc))
        with pytest.raises(SceneError, match="Unsupported scene format"):
            load_scene(tmp_path / "s.png", tmp_path / "s.json")

    def test_load_missing_image(self, tmp_path):
        with pytest.raises(SceneError, match="Cannot read scene"):
            load_scene(tmp_path / "none.png", tmp_path / "none.json")


class TestMakeDataset:
    """Dataset rendering and the manifest."""

    CONFIG = DatasetConfig(
        splits=(
            SplitSpec("train", 3, (STYLE_NATURAL, STYLE_CARTOON)),
            SplitSpec("test", 2, (STYLE_SKETCH,)),
        ),
        seed_base=50,
        image_size=SIZE,
        num_persons=(1, 2),
    )

    def test_regeneration_is_byte_identical(self, tmp_path):
        first = make_dataset(self.CONFIG, tmp_path / "a")
        second = make_dataset(self.CONFIG, tmp_path / "b")
        assert first.read_bytes() == second.read_bytes()
        for line in first.read_text().splitlines():
            record = json.loads(line)
            assert (tmp_path / "a" / record["image"]).read_bytes() == (
                tmp_path / "b" / record["image"]
            ).read_bytes()

    def test_manifest_records(self, tmp_path):
        manifest = make_dataset(self.CONFIG, tmp_path)
        records = [json.loads(line) for line in manifest.read_text().splitlines()]
        assert [r["split"] for r in records] == ["train"] * 3 + ["test"] * 2
        assert [r["style"] for r in records] == [
            STYLE_NATURAL,
            STYLE_CARTOON,
            STYLE_NATURAL,
            STYLE_SKETCH,
            STYLE_SKETCH,
        ]
        assert len({r["seed"] for r in records}) == len(records)
        assert all(1 <= r["num_persons"] <= 2 for r in records)

    def test_existing_manifest_needs_force(self, tmp_path):
        make_dataset(self.CONFIG, tmp_path)
        with pytest.raises(ManifestExistsError):
            make_dataset(self.CONFIG, tmp_path)
        assert make_dataset(self.CONFIG, tmp_path, force=True) == tmp_path / MANIFEST_FILENAME

    def test_empty_split_is_rejected(self, tmp_path):
        config = dataclasses.replace(self.CONFIG, splits=(SplitSpec("train", 0, (STYLE_NATURAL,)),))
        with pytest.raises(DatasetError, match="at least one scene"):
            make_dataset(config, tmp_path)
        assert not (tmp_path / MANIFEST_FILENAME).exists()
