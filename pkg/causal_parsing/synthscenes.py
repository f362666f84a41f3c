"""Synthetic multi-person scenes with part-level ground truth.

Geometry (part masks, boxes) is a pure function of the scene seed; style
only changes pixel appearance. Interventions edit appearance and labels in
the ways the robustness protocol needs.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import cv2
import numpy as np
from numpy.typing import NDArray
from PIL import Image

from .config import DatasetConfig
from .const import (
    DEFAULT_IMAGE_SIZE,
    DEFAULT_MASK_PROBABILITY,
    DEFAULT_SCALE_RANGE,
    GROUP_LIMBS,
    INTERVENTION_CONTENT_ONLY,
    INTERVENTION_RANDOM_MASK,
    INTERVENTION_RANDOM_STYLE,
    INTERVENTIONS,
    MANIFEST_FILENAME,
    MAX_PERSON_SCALE,
    MAX_PERSONS,
    MIN_PERSON_SCALE,
    MIN_PERSONS,
    NUM_PARTS,
    PART_GROUPS,
    PART_NAMES,
    SCENE_FORMAT_VERSION,
    SCENE_RETRIES,
    STYLES,
)
from .exceptions import DatasetError, InterventionError, ManifestExistsError, SceneError
from .stylize import FloatImage, quantize, stylize, to_float, to_uint8

_LOGGER = logging.getLogger(__name__)

BoolMasks = NDArray[np.bool_]

# Drawing regions; several regions share one part label
_REGION_HEAD = 1
_REGION_TORSO = 2
_REGION_LEFT_ARM = 3
_REGION_RIGHT_ARM = 4
_REGION_LEFT_LEG = 5
_REGION_RIGHT_LEG = 6
_REGION_TO_PART = {
    _REGION_HEAD: 0,
    _REGION_TORSO: 1,
    _REGION_LEFT_ARM: 2,
    _REGION_LEFT_LEG: 2,
    _REGION_RIGHT_ARM: 3,
    _REGION_RIGHT_LEG: 3,
}

# Body proportions, as fractions of the person height
_TORSO_WIDTH = 0.30
_TORSO_HEIGHT = 0.36
_HEAD_RADIUS = 0.12
_ARM_LENGTH = 0.32
_ARM_THICKNESS = 0.13
_LEG_LENGTH = 0.42
_LEG_THICKNESS = 0.16

# Pose sampling ranges (radians)
_ARM_SPREAD = (0.2, 1.6)
_LEG_SPREAD = (0.05, 0.45)
_HEAD_TILT = (-0.3, 0.3)
_TORSO_LEAN = (-0.2, 0.2)

_SKIN_TONES = [
    (0.96, 0.80, 0.69),
    (0.87, 0.67, 0.53),
    (0.71, 0.51, 0.37),
    (0.48, 0.32, 0.22),
]


# ── Domain types ─────────────────────────────────────────────────────


@dataclass(frozen=True)
class PersonSpec:
    """Pose and palette of one rendered person."""

    center: tuple[float, float]
    scale: float
    pose_angles: tuple[float, float, float, float, float, float]
    palette_seed: int

    def __post_init__(self) -> None:
        problems = []
        if not all(0.0 <= c <= 1.0 for c in self.center):
            problems.append(f"center {self.center} outside [0,1]^2")
        if not MIN_PERSON_SCALE <= self.scale <= MAX_PERSON_SCALE:
            problems.append(
                f"scale {self.scale} outside [{MIN_PERSON_SCALE}, {MAX_PERSON_SCALE}]"
            )
        if len(self.pose_angles) != 6:
            problems.append(f"expected 6 pose angles, got {len(self.pose_angles)}")
        if problems:
            raise SceneError(f"Invalid person: {', '.join(problems)}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "center": list(self.center),
            "scale": self.scale,
            "pose_angles": list(self.pose_angles),
            "palette_seed": self.palette_seed,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> PersonSpec:
        return cls(
            center=tuple(data["center"]),
            scale=float(data["scale"]),
            pose_angles=tuple(float(a) for a in data["pose_angles"]),
            palette_seed=int(data["palette_seed"]),
        )


@dataclass(frozen=True)
class InterventionSpec:
    """One intervention request; ``seed`` fully determines the outcome."""

    kind: str
    target_part_group: tuple[int, ...] = PART_GROUPS[GROUP_LIMBS]
    seed: int = 0

    @classmethod
    def for_group(cls, kind: str, group: str = GROUP_LIMBS, seed: int = 0) -> InterventionSpec:
        """Build a spec from a named part group."""
        if group not in PART_GROUPS:
            raise InterventionError(
                f"Unknown part group '{group}', expected one of {sorted(PART_GROUPS)}"
            )
        return cls(kind=kind, target_part_group=PART_GROUPS[group], seed=seed)


@dataclass(frozen=True)
class SceneInstance:
    """Ground truth of one visible person."""

    part_masks: BoolMasks
    box: tuple[float, float, float, float]
    part_presence: tuple[bool, ...]
    person: PersonSpec

    @property
    def person_mask(self) -> BoolMasks:
        return self.part_masks.any(axis=0)

    @property
    def label_map(self) -> NDArray[np.int64]:
        """Per-pixel class index: 0 background, i + 1 for part i."""
        labels = np.zeros(self.part_masks.shape[1:], dtype=np.int64)
        for part in range(self.part_masks.shape[0]):
            labels[self.part_masks[part]] = part + 1
        return labels


@dataclass(frozen=True)
class LabeledScene:
    """Rendered image plus per-instance part ground truth."""

    image: FloatImage
    instances: list[SceneInstance]
    style: str
    scene_seed: int
    interventions: tuple[str, ...] = field(default=())

    @property
    def size(self) -> int:
        return self.image.shape[0]

    def semantic_label_map(self) -> NDArray[np.int64]:
        """Merged part label map over all instances."""
        labels = np.zeros(self.image.shape[:2], dtype=np.int64)
        for instance in self.instances:
            labels = np.where(instance.person_mask, instance.label_map, labels)
        return labels


# ── Geometry ─────────────────────────────────────────────────────────


def _rotate(vec: NDArray[np.float64], angle: float) -> NDArray[np.float64]:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([c * vec[0] - s * vec[1], s * vec[0] + c * vec[1]])


def _pt(p: NDArray[np.float64]) -> tuple[int, int]:
    return int(round(p[0])), int(round(p[1]))


def draw_person_regions(person: PersonSpec, size: int) -> NDArray[np.uint8]:
    """Rasterize a person into a region map (0 = empty, see ``_REGION_*``).

    Later regions overwrite earlier ones, so parts are disjoint. Drawing is
    clipped to the canvas.
    """
    canvas = np.zeros((size, size), dtype=np.uint8)
    height = person.scale * size
    left_arm, right_arm, left_leg, right_leg, tilt, lean = person.pose_angles

    center = np.array(person.center, dtype=np.float64) * size
    up = np.array([math.sin(lean), -math.cos(lean)])
    right = np.array([math.cos(lean), math.sin(lean)])
    down = -up

    torso_w = _TORSO_WIDTH * height
    torso_h = _TORSO_HEIGHT * height
    top = center + up * torso_h / 2
    bottom = center - up * torso_h / 2

    arm_t = max(2, int(round(_ARM_THICKNESS * height)))
    leg_t = max(2, int(round(_LEG_THICKNESS * height)))
    limbs = [
        (_REGION_LEFT_LEG, bottom - right * torso_w * 0.25, left_leg, -1, _LEG_LENGTH, leg_t),
        (_REGION_RIGHT_LEG, bottom + right * torso_w * 0.25, right_leg, 1, _LEG_LENGTH, leg_t),
        (_REGION_LEFT_ARM, top - right * torso_w * 0.5, left_arm, -1, _ARM_LENGTH, arm_t),
        (_REGION_RIGHT_ARM, top + right * torso_w * 0.5, right_arm, 1, _ARM_LENGTH, arm_t),
    ]
    for region, start, spread, side, length, thickness in limbs:
        direction = math.cos(spread) * down + math.sin(spread) * side * right
        end = start + direction * length * height
        cv2.line(canvas, _pt(start), _pt(end), region, thickness, lineType=cv2.LINE_8)

    box = cv2.boxPoints(((center[0], center[1]), (torso_w, torso_h), math.degrees(lean)))
    cv2.fillConvexPoly(canvas, np.rint(box).astype(np.int32), _REGION_TORSO)

    radius = max(1, int(round(_HEAD_RADIUS * height)))
    head_center = top + _rotate(up, tilt) * radius * 1.1
    cv2.circle(canvas, _pt(head_center), radius, _REGION_HEAD, -1, lineType=cv2.LINE_8)
    return canvas


def regions_to_parts(regions: NDArray[np.uint8]) -> BoolMasks:
    """Convert a region map to C disjoint part masks."""
    masks = np.zeros((NUM_PARTS,) + regions.shape, dtype=bool)
    for region, part in _REGION_TO_PART.items():
        masks[part] |= regions == region
    return masks


def mask_box(mask: BoolMasks) -> tuple[float, float, float, float]:
    """Normalized (cx, cy, w, h) of the tight box around a nonempty mask."""
    ys, xs = np.nonzero(mask)
    if xs.size == 0:
        raise SceneError("Cannot compute the box of an empty mask")
    height, width = mask.shape
    x0, x1 = xs.min() / width, (xs.max() + 1) / width
    y0, y1 = ys.min() / height, (ys.max() + 1) / height
    return ((x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0)


def _make_instance(part_masks: BoolMasks, person: PersonSpec) -> SceneInstance | None:
    """Instance from visible part masks, or None when nothing is visible."""
    union = part_masks.any(axis=0)
    if not union.any():
        return None
    presence = tuple(bool(m.any()) for m in part_masks)
    return SceneInstance(
        part_masks=part_masks, box=mask_box(union), part_presence=presence, person=person
    )


def compose_instances(persons: list[PersonSpec], size: int) -> list[SceneInstance | None]:
    """Resolve occlusion by list order (later persons are in front)."""
    owner = np.full((size, size), -1, dtype=np.int64)
    regions = []
    for k, person in enumerate(persons):
        person_regions = draw_person_regions(person, size)
        owner[person_regions > 0] = k
        regions.append(person_regions)
    instances = []
    for k, (person, person_regions) in enumerate(zip(persons, regions)):
        visible = np.where(owner == k, person_regions, 0).astype(np.uint8)
        instances.append(_make_instance(regions_to_parts(visible), person))
    return instances


def sample_persons(
    rng: np.random.Generator,
    num_persons: int,
    scale_range: tuple[float, float] = DEFAULT_SCALE_RANGE,
) -> list[PersonSpec]:
    """Sample persons on jittered horizontal slots so no one is fully hidden."""
    persons = []
    slot = 1.0 / num_persons
    for k in range(num_persons):
        x = (k + 0.5) * slot + rng.uniform(-0.2, 0.2) * slot
        y = rng.uniform(0.38, 0.55)
        scale = rng.uniform(*scale_range)
        pose = (
            rng.uniform(*_ARM_SPREAD),
            rng.uniform(*_ARM_SPREAD),
            rng.uniform(*_LEG_SPREAD),
            rng.uniform(*_LEG_SPREAD),
            rng.uniform(*_HEAD_TILT),
            rng.uniform(*_TORSO_LEAN),
        )
        persons.append(
            PersonSpec(
                center=(float(np.clip(x, 0.12, 0.88)), float(y)),
                scale=float(scale),
                pose_angles=tuple(float(a) for a in pose),
                palette_seed=int(rng.integers(0, 2**31 - 1)),
            )
        )
    return persons


# ── Appearance ───────────────────────────────────────────────────────


def _palette(palette_seed: int) -> dict[int, NDArray[np.float32]]:
    """Region colors of one person."""
    rng = np.random.default_rng(palette_seed)
    skin = np.array(_SKIN_TONES[int(rng.integers(len(_SKIN_TONES)))], dtype=np.float32)
    shirt = rng.uniform(0.1, 0.95, size=3).astype(np.float32)
    pants = rng.uniform(0.05, 0.7, size=3).astype(np.float32)
    sleeves = skin if rng.random() < 0.5 else shirt * 0.85
    return {
        _REGION_HEAD: skin,
        _REGION_TORSO: shirt,
        _REGION_LEFT_ARM: sleeves,
        _REGION_RIGHT_ARM: sleeves,
        _REGION_LEFT_LEG: pants,
        _REGION_RIGHT_LEG: pants,
    }


def render_background(size: int, seed: int) -> FloatImage:
    """Seeded gradient background with a few clutter shapes."""
    rng = np.random.default_rng([seed, 7])
    top, bottom = rng.uniform(0.2, 0.9, size=(2, 3))
    ramp = np.linspace(0.0, 1.0, size, dtype=np.float32)[:, None, None]
    image = (top[None, None, :] * (1 - ramp) + bottom[None, None, :] * ramp).astype(np.float32)
    image = np.repeat(image, size, axis=1)
    for _ in range(int(rng.integers(2, 6))):
        color = tuple(float(c) for c in rng.uniform(0.0, 1.0, size=3))
        x, y = (int(v) for v in rng.integers(0, size, size=2))
        extent = int(rng.integers(size // 16, size // 5))
        if rng.random() < 0.5:
            cv2.rectangle(image, (x, y), (x + extent, y + extent // 2), color, -1)
        else:
            cv2.circle(image, (x, y), extent // 2, color, -1)
    return image


def render_base(instances: list[SceneInstance], size: int, seed: int) -> FloatImage:
    """Flat-shaded render of the visible pixels of every instance."""
    image = render_background(size, seed)
    shade = np.linspace(1.05, 0.9, size, dtype=np.float32)[:, None]
    for instance in instances:
        regions = draw_person_regions(instance.person, size)
        visible = instance.person_mask
        for region, color in _palette(instance.person.palette_seed).items():
            pixels = visible & (regions == region)
            if pixels.any():
                shaded = color[None, None, :] * shade[..., None]
                image = np.where(pixels[..., None], shaded, image)
    return np.clip(image, 0.0, 1.0).astype(np.float32)


def restyle(scene: LabeledScene, style: str) -> LabeledScene:
    """Re-render ``scene`` in ``style``; geometry is untouched.

    The image is quantized like a saved scene, so a re-rendered view differs
    from a loaded original only by the intervention.
    """
    if style not in STYLES:
        raise SceneError(f"Unknown style '{style}', expected one of {STYLES}")
    base = render_base(scene.instances, scene.size, scene.scene_seed)
    image = quantize(stylize(base, style, scene.scene_seed))
    return replace(scene, image=image, style=style)


def styled_background(scene: LabeledScene) -> FloatImage:
    """Background layer of ``scene`` rendered in its current style."""
    background = render_background(scene.size, scene.scene_seed)
    return quantize(stylize(background, scene.style, scene.scene_seed))


# ── Operations ───────────────────────────────────────────────────────


def generate_scene(
    num_persons: int,
    style: str,
    seed: int,
    *,
    image_size: int = DEFAULT_IMAGE_SIZE,
    scale_range: tuple[float, float] = DEFAULT_SCALE_RANGE,
) -> LabeledScene:
    """Generate one labeled scene; a pure function of its arguments."""
    if not MIN_PERSONS <= num_persons <= MAX_PERSONS:
        raise SceneError(
            f"num_persons must be in {MIN_PERSONS}..{MAX_PERSONS}, got {num_persons}"
        )
    if style not in STYLES:
        raise SceneError(f"Unknown style '{style}', expected one of {STYLES}")

    rng = np.random.default_rng(seed)
    for attempt in range(SCENE_RETRIES):
        persons = sample_persons(rng, num_persons, scale_range)
        composed = compose_instances(persons, image_size)
        if all(instance is not None for instance in composed):
            break
        _LOGGER.debug("Scene %d attempt %d hid a person, resampling", seed, attempt)
    else:
        raise SceneError(f"Could not place {num_persons} visible persons for seed {seed}")

    scene = LabeledScene(
        image=np.zeros((image_size, image_size, 3), dtype=np.float32),
        instances=list(composed),
        style=style,
        scene_seed=seed,
    )
    return restyle(scene, style)


def _edit_masks(
    scene: LabeledScene, edit: NDArray[np.bool_] | None, parts_removed: tuple[int, ...]
) -> list[SceneInstance]:
    """Zero ``parts_removed`` everywhere and every part on ``edit`` pixels."""
    instances = []
    for instance in scene.instances:
        masks = instance.part_masks.copy()
        for part in parts_removed:
            masks[part] = False
        if edit is not None:
            masks[:, edit] = False
        updated = _make_instance(masks, instance.person)
        if updated is None:
            _LOGGER.debug("Instance emptied by intervention on scene %d", scene.scene_seed)
            continue
        instances.append(updated)
    return instances


def _target_pixels(scene: LabeledScene, target: tuple[int, ...]) -> BoolMasks:
    pixels = np.zeros(scene.image.shape[:2], dtype=bool)
    for instance in scene.instances:
        for part in target:
            pixels |= instance.part_masks[part]
    return pixels


def apply_intervention(scene: LabeledScene, spec: InterventionSpec) -> LabeledScene:
    """Apply one of the three intervention operators."""
    if not scene.instances:
        raise InterventionError("Cannot intervene on a scene without instances")
    if spec.kind not in INTERVENTIONS:
        raise InterventionError(
            f"Unknown intervention '{spec.kind}', expected one of {INTERVENTIONS}"
        )
    target = tuple(spec.target_part_group)
    if not target or not all(0 <= p < NUM_PARTS for p in target):
        raise InterventionError(f"Invalid target part group {target}")
    history = scene.interventions + (spec.kind,)

    if spec.kind == INTERVENTION_RANDOM_STYLE:
        rng = np.random.default_rng(spec.seed)
        others = [s for s in STYLES if s != scene.style]
        styled = restyle(scene, others[int(rng.integers(len(others)))])
        return replace(styled, interventions=history)

    background = styled_background(scene)
    keep_target = _target_pixels(scene, target)

    if spec.kind == INTERVENTION_CONTENT_ONLY:
        removed = tuple(p for p in range(NUM_PARTS) if p not in target)
        image = np.where(keep_target[..., None], scene.image, background).astype(np.float32)
        instances = _edit_masks(scene, None, removed)
        return replace(scene, image=image, instances=instances, interventions=history)

    # INTERVENTION_RANDOM_MASK
    rng = np.random.default_rng(spec.seed)
    candidates = [
        (k, part)
        for k, instance in enumerate(scene.instances)
        for part in range(NUM_PARTS)
        if part not in target and instance.part_presence[part]
    ]
    if not candidates:
        return replace(scene, interventions=history)
    chosen = [c for c in candidates if rng.random() < DEFAULT_MASK_PROBABILITY]
    if not chosen:
        chosen = [candidates[int(rng.integers(len(candidates)))]]

    occluded = np.zeros(scene.image.shape[:2], dtype=bool)
    for k, part in chosen:
        ys, xs = np.nonzero(scene.instances[k].part_masks[part])
        y0, y1 = max(ys.min() - 1, 0), ys.max() + 2
        x0, x1 = max(xs.min() - 1, 0), xs.max() + 2
        occluded[y0:y1, x0:x1] = True
    occluded &= ~keep_target

    image = np.where(occluded[..., None], background, scene.image).astype(np.float32)
    instances = _edit_masks(scene, occluded, ())
    return replace(scene, image=image, instances=instances, interventions=history)


# ── Files ────────────────────────────────────────────────────────────


def rle_encode(mask: BoolMasks) -> dict[str, Any]:
    """Row-major run lengths, alternating and starting with a 0-run."""
    flat = mask.astype(np.uint8).ravel()
    changes = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat.size and flat[0] == 1:
        counts = [0] + counts
    return {"size": list(mask.shape), "counts": counts}


def rle_decode(rle: dict[str, Any]) -> BoolMasks:
    """Inverse of :func:`rle_encode`."""
    size = tuple(rle["size"])
    values = np.zeros(len(rle["counts"]), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, rle["counts"])
    if flat.size != int(np.prod(size)):
        raise SceneError(f"RLE counts sum to {flat.size}, expected {int(np.prod(size))}")
    return flat.reshape(size)


def scene_labels_to_dict(scene: LabeledScene) -> dict[str, Any]:
    """Sidecar label document of a scene."""
    return {
        "format_version": SCENE_FORMAT_VERSION,
        "size": [scene.size, scene.size],
        "style": scene.style,
        "scene_seed": scene.scene_seed,
        "interventions": list(scene.interventions),
        "instances": [
            {
                "box": [round(v, 6) for v in instance.box],
                "part_presence": list(instance.part_presence),
                "parts": {
                    name: rle_encode(instance.part_masks[i]) for i, name in enumerate(PART_NAMES)
                },
                "person": instance.person.to_dict(),
            }
            for instance in scene.instances
        ],
    }


def save_scene(scene: LabeledScene, image_path: Path, label_path: Path) -> None:
    """Write the PNG image and the JSON label sidecar."""
    image_path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(scene.image), mode="RGB").save(image_path, format="PNG")
    label_path.write_text(json.dumps(scene_labels_to_dict(scene), sort_keys=True))


def load_scene(image_path: Path, label_path: Path) -> LabeledScene:
    """Read a scene written by :func:`save_scene`."""
    try:
        data = json.loads(Path(label_path).read_text())
        with Image.open(image_path) as img:
            pixels = np.asarray(img.convert("RGB"))
    except (OSError, json.JSONDecodeError) as err:
        raise SceneError(f"Cannot read scene {image_path}: {err}") from err
    if data.get("format_version") != SCENE_FORMAT_VERSION:
        raise SceneError(
            f"Unsupported scene format {data.get('format_version')} in {label_path}"
        )
    instances = []
    for item in data["instances"]:
        masks = np.stack([rle_decode(item["parts"][name]) for name in PART_NAMES])
        instances.append(
            SceneInstance(
                part_masks=masks,
                box=tuple(item["box"]),
                part_presence=tuple(bool(p) for p in item["part_presence"]),
                person=PersonSpec.from_dict(item["person"]),
            )
        )
    return LabeledScene(
        image=to_float(pixels),
        instances=instances,
        style=data["style"],
        scene_seed=int(data["scene_seed"]),
        interventions=tuple(data.get("interventions", ())),
    )


def _scene_jobs(config: DatasetConfig) -> list[dict[str, Any]]:
    """One job per scene, seeds disjoint across splits."""
    rng = np.random.default_rng(config.seed_base)
    lo, hi = config.num_persons
    jobs = []
    offset = 0
    for split in config.splits:
        for index in range(split.size):
            seed = config.seed_base + offset + index
            jobs.append(
                {
                    "split": split.name,
                    "index": index,
                    "seed": seed,
                    "style": split.styles[index % len(split.styles)],
                    "num_persons": int(rng.integers(lo, hi + 1)),
                }
            )
        offset += split.size
    return jobs


def _render_job(job: dict[str, Any], config: DatasetConfig, out_dir: Path) -> dict[str, Any]:
    scene = generate_scene(
        job["num_persons"],
        job["style"],
        job["seed"],
        image_size=config.image_size,
        scale_range=config.scale_range,
    )
    stem = f"{job['split']}/{job['index']:05d}"
    save_scene(scene, out_dir / f"{stem}.png", out_dir / f"{stem}.json")
    return {
        "split": job["split"],
        "index": job["index"],
        "image": f"{stem}.png",
        "labels": f"{stem}.json",
        "style": job["style"],
        "seed": job["seed"],
        "num_persons": len(scene.instances),
    }


def make_dataset(
    config: DatasetConfig, out_dir: Path, force: bool = False, workers: int = 1
) -> Path:
    """Render every split and write the manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    manifest_path = out_dir / MANIFEST_FILENAME
    if manifest_path.exists() and not force:
        raise ManifestExistsError(
            f"Manifest {manifest_path} already exists; pass --force to overwrite"
        )
    if not config.splits or any(split.size <= 0 for split in config.splits):
        raise DatasetError("Every requested split must contain at least one scene")

    jobs = _scene_jobs(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    _LOGGER.info("Rendering %d scenes into %s (%d workers)", len(jobs), out_dir, workers)

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(
                pool.map(_render_job, jobs, [config] * len(jobs), [out_dir] * len(jobs))
            )
    else:
        records = [_render_job(job, config, out_dir) for job in jobs]

    lines = [json.dumps(record, sort_keys=True) for record in records]
    manifest_path.write_text("\n".join(lines) + "\n")
    _LOGGER.info("Wrote manifest %s with %d entries", manifest_path, len(records))
    return manifest_path
