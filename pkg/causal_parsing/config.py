"""Configuration schemas and option dataclasses.

Configs are YAML documents validated with voluptuous. Validated documents
become frozen dataclasses so every training cycle reads an immutable set of
options.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import voluptuous as vol
import yaml

from .const import (
    BRANCHES_BOTH,
    CFS_BRANCHES,
    CONF_DATA,
    CONF_IMAGE_SIZE,
    CONF_INFERENCE,
    CONF_LOSS,
    CONF_MATCHER,
    CONF_MODEL,
    CONF_NAME,
    CONF_NUM_PERSONS,
    CONF_OPTIM,
    CONF_PROTOCOL,
    CONF_SCALE_RANGE,
    CONF_SEED,
    CONF_SEED_BASE,
    CONF_SIZE,
    CONF_SPLITS,
    CONF_STRICT,
    CONF_STYLES,
    DEFAULT_BATCH_SIZE,
    DEFAULT_CHECKPOINT_EVERY,
    DEFAULT_COST_BOX,
    DEFAULT_COST_CLASS,
    DEFAULT_COST_MASK,
    DEFAULT_DECODER_LAYERS,
    DEFAULT_EPOCHS,
    DEFAULT_GRAD_CLIP,
    DEFAULT_HIDDEN_DIM,
    DEFAULT_IMAGE_SIZE,
    DEFAULT_INTERVENTION_SEEDS,
    DEFAULT_INTERVENTION_VIEWS,
    DEFAULT_KERNEL_HIDDEN,
    DEFAULT_LEARNING_RATE,
    DEFAULT_LR_DROP_AT,
    DEFAULT_LR_DROP_FACTOR,
    DEFAULT_NO_PERSON_WEIGHT,
    DEFAULT_NUM_HEADS,
    DEFAULT_NUM_PERSONS_RANGE,
    DEFAULT_NUM_QUERIES,
    DEFAULT_NUM_WORKERS,
    DEFAULT_SCALE_RANGE,
    DEFAULT_SCORE_THRESHOLD,
    DEFAULT_SEED,
    DEFAULT_SEED_BASE,
    DEFAULT_SEEDS,
    DEFAULT_STRIDE,
    DEFAULT_TEST_SPLIT,
    DEFAULT_TOP_K,
    DEFAULT_TRAIN_SPLIT,
    DEFAULT_TRAIN_STYLE,
    DEFAULT_WEIGHT,
    DEFAULT_WEIGHT_DECAY,
    DOMAIN,
    MAX_PERSON_SCALE,
    MAX_PERSONS,
    MIN_PERSON_SCALE,
    MIN_PERSONS,
    OPT_BATCH_SIZE,
    OPT_CFS_BRANCHES,
    OPT_CHECKPOINT_EVERY,
    OPT_COST_BOX,
    OPT_COST_CLASS,
    OPT_COST_MASK,
    OPT_DECODER_LAYERS,
    OPT_EPOCHS,
    OPT_GRAD_CLIP,
    OPT_HELDOUT_MANIFEST,
    OPT_HIDDEN_DIM,
    OPT_IMAGE_SIZE,
    OPT_INTERVENTION_SEEDS,
    OPT_INTERVENTION_VIEWS,
    OPT_KERNEL_HIDDEN,
    OPT_LEARNING_RATE,
    OPT_LR_DROP_AT,
    OPT_LR_DROP_FACTOR,
    OPT_NO_PERSON_WEIGHT,
    OPT_NUM_HEADS,
    OPT_NUM_QUERIES,
    OPT_NUM_WORKERS,
    OPT_REUSE_RUNS,
    OPT_SCORE_THRESHOLD,
    OPT_SEEDS,
    OPT_STRICT_UNSEEN,
    OPT_STRIDE,
    OPT_TEST_MANIFEST,
    OPT_TEST_SPLIT,
    OPT_TOP_K,
    OPT_TRAIN_MANIFEST,
    OPT_TRAIN_SPLIT,
    OPT_TRAIN_STYLE,
    OPT_USE_CFS,
    OPT_USE_DIV,
    OPT_USE_INV,
    OPT_WEIGHT_DECAY,
    OPT_WEIGHT_DET,
    OPT_WEIGHT_DIV,
    OPT_WEIGHT_INV,
    STYLES,
    VIEW_KINDS,
)
from .exceptions import ConfigError

_LOGGER = logging.getLogger(__name__)

_POSITIVE_INT = vol.All(vol.Coerce(int), vol.Range(min=1))
_NON_NEGATIVE_INT = vol.All(vol.Coerce(int), vol.Range(min=0))
_NON_NEGATIVE_FLOAT = vol.All(vol.Coerce(float), vol.Range(min=0.0))
_UNIT_FLOAT = vol.All(vol.Coerce(float), vol.Range(min=0.0, max=1.0))


# ── Dataset generation ───────────────────────────────────────────────


@dataclass(frozen=True)
class SplitSpec:
    """One named split of a generated dataset."""

    name: str
    size: int
    styles: tuple[str, ...]


@dataclass(frozen=True)
class DatasetConfig:
    """Settings for ``make_dataset``."""

    splits: tuple[SplitSpec, ...]
    seed_base: int = DEFAULT_SEED_BASE
    image_size: int = DEFAULT_IMAGE_SIZE
    num_persons: tuple[int, int] = DEFAULT_NUM_PERSONS_RANGE
    scale_range: tuple[float, float] = DEFAULT_SCALE_RANGE

    @property
    def total_size(self) -> int:
        return sum(split.size for split in self.splits)

    def to_dict(self) -> dict[str, Any]:
        return {
            CONF_SEED_BASE: self.seed_base,
            CONF_IMAGE_SIZE: self.image_size,
            CONF_NUM_PERSONS: list(self.num_persons),
            CONF_SCALE_RANGE: list(self.scale_range),
            CONF_SPLITS: {
                split.name: {CONF_SIZE: split.size, CONF_STYLES: list(split.styles)}
                for split in self.splits
            },
        }


SPLIT_SCHEMA = vol.Schema(
    {
        vol.Required(CONF_SIZE): _NON_NEGATIVE_INT,
        vol.Required(CONF_STYLES): vol.All([vol.In(STYLES)], vol.Length(min=1)),
    }
)

DATASET_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_SEED_BASE, default=DEFAULT_SEED_BASE): vol.Coerce(int),
        vol.Optional(CONF_IMAGE_SIZE, default=DEFAULT_IMAGE_SIZE): vol.All(
            vol.Coerce(int), vol.Range(min=32)
        ),
        vol.Optional(CONF_NUM_PERSONS, default=list(DEFAULT_NUM_PERSONS_RANGE)): vol.ExactSequence(
            [
                vol.All(vol.Coerce(int), vol.Range(min=MIN_PERSONS, max=MAX_PERSONS)),
                vol.All(vol.Coerce(int), vol.Range(min=MIN_PERSONS, max=MAX_PERSONS)),
            ]
        ),
        vol.Optional(CONF_SCALE_RANGE, default=list(DEFAULT_SCALE_RANGE)): vol.ExactSequence(
            [
                vol.All(vol.Coerce(float), vol.Range(min=MIN_PERSON_SCALE, max=MAX_PERSON_SCALE)),
                vol.All(vol.Coerce(float), vol.Range(min=MIN_PERSON_SCALE, max=MAX_PERSON_SCALE)),
            ]
        ),
        vol.Required(CONF_SPLITS): vol.All({str: SPLIT_SCHEMA}, vol.Length(min=1)),
    }
)


def dataset_config_from_dict(data: dict[str, Any]) -> DatasetConfig:
    """Validate a dataset document."""
    validated = _validate(DATASET_SCHEMA, data, "dataset config")
    lo, hi = validated[CONF_NUM_PERSONS]
    s_lo, s_hi = validated[CONF_SCALE_RANGE]
    problems = []
    if lo > hi:
        problems.append(f"num_persons range [{lo}, {hi}] is reversed")
    if s_lo > s_hi:
        problems.append(f"scale_range [{s_lo}, {s_hi}] is reversed")
    if problems:
        raise ConfigError(f"Invalid dataset config: {'; '.join(problems)}")
    return DatasetConfig(
        splits=tuple(
            SplitSpec(name=name, size=spec[CONF_SIZE], styles=tuple(spec[CONF_STYLES]))
            for name, spec in validated[CONF_SPLITS].items()
        ),
        seed_base=validated[CONF_SEED_BASE],
        image_size=validated[CONF_IMAGE_SIZE],
        num_persons=(lo, hi),
        scale_range=(s_lo, s_hi),
    )


def leave_one_style_out(
    train_style: str,
    train_size: int,
    test_size: int,
    *,
    seed_base: int = DEFAULT_SEED_BASE,
    image_size: int = DEFAULT_IMAGE_SIZE,
) -> DatasetConfig:
    """Dataset with a single-style train split and one test split per style.

    Test splits are named ``test_<style>``; the held-in style gets one too so
    in-domain and out-of-domain scores come from the same manifest.
    """
    if train_style not in STYLES:
        raise ConfigError(f"Unknown style '{train_style}', expected one of {STYLES}")
    splits = [SplitSpec(DEFAULT_TRAIN_SPLIT, train_size, (train_style,))]
    splits += [SplitSpec(f"{DEFAULT_TEST_SPLIT}_{style}", test_size, (style,)) for style in STYLES]
    return DatasetConfig(splits=tuple(splits), seed_base=seed_base, image_size=image_size)


# ── Experiment options ───────────────────────────────────────────────


@dataclass(frozen=True)
class ModelOptions:
    num_queries: int = DEFAULT_NUM_QUERIES
    hidden_dim: int = DEFAULT_HIDDEN_DIM
    decoder_layers: int = DEFAULT_DECODER_LAYERS
    num_heads: int = DEFAULT_NUM_HEADS
    stride: int = DEFAULT_STRIDE
    kernel_hidden_dim: int = DEFAULT_KERNEL_HIDDEN


@dataclass(frozen=True)
class LossOptions:
    """Loss toggles; the ablation arms differ only here."""

    use_cfs: bool = True
    cfs_branches: str = BRANCHES_BOTH
    use_div: bool = True
    use_inv: bool = True
    intervention_views: tuple[str, ...] = tuple(DEFAULT_INTERVENTION_VIEWS)
    weight_det: float = DEFAULT_WEIGHT
    weight_div: float = DEFAULT_WEIGHT
    weight_inv: float = DEFAULT_WEIGHT
    no_person_weight: float = DEFAULT_NO_PERSON_WEIGHT

    @property
    def num_views(self) -> int:
        """E: intervened views per scene (0 when invariance is off)."""
        return len(self.intervention_views) if self.use_inv else 0


@dataclass(frozen=True)
class OptimOptions:
    learning_rate: float = DEFAULT_LEARNING_RATE
    weight_decay: float = DEFAULT_WEIGHT_DECAY
    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH_SIZE
    lr_drop_at: float = DEFAULT_LR_DROP_AT
    lr_drop_factor: float = DEFAULT_LR_DROP_FACTOR
    grad_clip: float = DEFAULT_GRAD_CLIP
    checkpoint_every: int = DEFAULT_CHECKPOINT_EVERY
    num_workers: int = DEFAULT_NUM_WORKERS


@dataclass(frozen=True)
class DataOptions:
    """Manifest locations; paths are resolved against the config file."""

    train_manifest: str = ""
    train_split: str = DEFAULT_TRAIN_SPLIT
    test_manifest: str | None = None
    test_split: str = DEFAULT_TEST_SPLIT
    heldout_manifest: str | None = None
    image_size: int = DEFAULT_IMAGE_SIZE

    @property
    def resolved_test_manifest(self) -> str:
        return self.test_manifest or self.train_manifest


@dataclass(frozen=True)
class MatcherWeights:
    cost_class: float = DEFAULT_COST_CLASS
    cost_box: float = DEFAULT_COST_BOX
    cost_mask: float = DEFAULT_COST_MASK


@dataclass(frozen=True)
class InferenceOptions:
    score_threshold: float = DEFAULT_SCORE_THRESHOLD
    top_k: int = DEFAULT_TOP_K


@dataclass(frozen=True)
class ProtocolOptions:
    seeds: tuple[int, ...] = tuple(DEFAULT_SEEDS)
    intervention_seeds: tuple[int, ...] = tuple(DEFAULT_INTERVENTION_SEEDS)
    strict_unseen: bool = True
    reuse_runs: bool = True
    train_style: str = DEFAULT_TRAIN_STYLE


_SECTIONS: dict[str, type] = {
    CONF_MODEL: ModelOptions,
    CONF_LOSS: LossOptions,
    CONF_OPTIM: OptimOptions,
    CONF_DATA: DataOptions,
    CONF_MATCHER: MatcherWeights,
    CONF_INFERENCE: InferenceOptions,
    CONF_PROTOCOL: ProtocolOptions,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one training run depends on."""

    name: str = DOMAIN
    seed: int = DEFAULT_SEED
    strict: bool = True
    model: ModelOptions = field(default_factory=ModelOptions)
    loss: LossOptions = field(default_factory=LossOptions)
    optim: OptimOptions = field(default_factory=OptimOptions)
    data: DataOptions = field(default_factory=DataOptions)
    matcher: MatcherWeights = field(default_factory=MatcherWeights)
    inference: InferenceOptions = field(default_factory=InferenceOptions)
    protocol: ProtocolOptions = field(default_factory=ProtocolOptions)

    def __post_init__(self) -> None:
        check_consistency(self)

    def replace(self, **changes: Any) -> ExperimentConfig:
        """Derive a config; section values may be dicts of field overrides.

        ``config.replace(seed=1, loss={"use_inv": False})``
        """
        updates: dict[str, Any] = {}
        for key, value in changes.items():
            if key in _SECTIONS and isinstance(value, dict):
                section = getattr(self, key)
                try:
                    updates[key] = dataclasses.replace(section, **_tupled(value))
                except TypeError as err:
                    raise ConfigError(f"Invalid override for '{key}': {err}") from err
            else:
                updates[key] = value
        return dataclasses.replace(self, **updates)

    def to_dict(self) -> dict[str, Any]:
        """Plain-data echo stored in checkpoints and run records."""
        data = asdict(self)
        for section in (CONF_LOSS, CONF_PROTOCOL):
            for key, value in data[section].items():
                if isinstance(value, tuple):
                    data[section][key] = list(value)
        return data


def _tupled(values: dict[str, Any]) -> dict[str, Any]:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}


def check_consistency(config: ExperimentConfig) -> None:
    """Cross-field rules; every violation is reported at once."""
    problems = []
    loss = config.loss
    if loss.use_div and not loss.use_cfs:
        problems.append("use_div requires use_cfs")
    if loss.use_inv and not loss.use_cfs:
        problems.append("use_inv requires use_cfs")
    if loss.use_inv and not loss.intervention_views:
        problems.append("use_inv requires at least one intervention view")
    if loss.cfs_branches not in CFS_BRANCHES:
        problems.append(f"cfs_branches must be one of {CFS_BRANCHES}, got '{loss.cfs_branches}'")
    elif loss.use_div and loss.cfs_branches != BRANCHES_BOTH:
        problems.append("use_div requires cfs_branches='both'")
    unknown_views = [v for v in loss.intervention_views if v not in VIEW_KINDS]
    if unknown_views:
        problems.append(f"unknown intervention views {unknown_views}")
    if config.data.image_size % config.model.stride:
        problems.append(
            f"image_size {config.data.image_size} is not a multiple of stride {config.model.stride}"
        )
    if config.model.hidden_dim % config.model.num_heads:
        problems.append(
            f"hidden_dim {config.model.hidden_dim} is not divisible by "
            f"num_heads {config.model.num_heads}"
        )
    if config.inference.top_k > config.model.num_queries:
        problems.append(
            f"top_k {config.inference.top_k} exceeds num_queries {config.model.num_queries}"
        )
    if config.protocol.train_style not in STYLES:
        problems.append(f"train_style must be one of {STYLES}")
    if problems:
        raise ConfigError(f"Invalid experiment config: {'; '.join(problems)}")


# ── Schemas ──────────────────────────────────────────────────────────


def _section_schema(spec: dict[Any, Any]) -> vol.Schema:
    return vol.Schema(spec, extra=vol.PREVENT_EXTRA)


MODEL_SCHEMA = _section_schema(
    {
        vol.Optional(OPT_NUM_QUERIES, default=DEFAULT_NUM_QUERIES): vol.All(
            vol.Coerce(int), vol.Range(min=1, max=64)
        ),
        vol.Optional(OPT_HIDDEN_DIM, default=DEFAULT_HIDDEN_DIM): _POSITIVE_INT,
        vol.Optional(OPT_DECODER_LAYERS, default=DEFAULT_DECODER_LAYERS): _POSITIVE_INT,
        vol.Optional(OPT_NUM_HEADS, default=DEFAULT_NUM_HEADS): _POSITIVE_INT,
        vol.Optional(OPT_STRIDE, default=DEFAULT_STRIDE): vol.In([2, 4, 8, 16]),
        vol.Optional(OPT_KERNEL_HIDDEN, default=DEFAULT_KERNEL_HIDDEN): _POSITIVE_INT,
    }
)

LOSS_SCHEMA = _section_schema(
    {
        vol.Optional(OPT_USE_CFS, default=True): vol.Boolean(),
        vol.Optional(OPT_CFS_BRANCHES, default=BRANCHES_BOTH): vol.In(CFS_BRANCHES),
        vol.Optional(OPT_USE_DIV, default=True): vol.Boolean(),
        vol.Optional(OPT_USE_INV, default=True): vol.Boolean(),
        vol.Optional(OPT_INTERVENTION_VIEWS, default=list(DEFAULT_INTERVENTION_VIEWS)): [
            vol.In(VIEW_KINDS)
        ],
        vol.Optional(OPT_WEIGHT_DET, default=DEFAULT_WEIGHT): _NON_NEGATIVE_FLOAT,
        vol.Optional(OPT_WEIGHT_DIV, default=DEFAULT_WEIGHT): _NON_NEGATIVE_FLOAT,
        vol.Optional(OPT_WEIGHT_INV, default=DEFAULT_WEIGHT): _NON_NEGATIVE_FLOAT,
        vol.Optional(OPT_NO_PERSON_WEIGHT, default=DEFAULT_NO_PERSON_WEIGHT): _UNIT_FLOAT,
    }
)

OPTIM_SCHEMA = _section_schema(
    {
        vol.Optional(OPT_LEARNING_RATE, default=DEFAULT_LEARNING_RATE): vol.All(
            vol.Coerce(float), vol.Range(min=0.0, min_included=False)
        ),
        vol.Optional(OPT_WEIGHT_DECAY, default=DEFAULT_WEIGHT_DECAY): _NON_NEGATIVE_FLOAT,
        vol.Optional(OPT_EPOCHS, default=DEFAULT_EPOCHS): _POSITIVE_INT,
        vol.Optional(OPT_BATCH_SIZE, default=DEFAULT_BATCH_SIZE): _POSITIVE_INT,
        vol.Optional(OPT_LR_DROP_AT, default=DEFAULT_LR_DROP_AT): _UNIT_FLOAT,
        vol.Optional(OPT_LR_DROP_FACTOR, default=DEFAULT_LR_DROP_FACTOR): _UNIT_FLOAT,
        vol.Optional(OPT_GRAD_CLIP, default=DEFAULT_GRAD_CLIP): _NON_NEGATIVE_FLOAT,
        vol.Optional(OPT_CHECKPOINT_EVERY, default=DEFAULT_CHECKPOINT_EVERY): _POSITIVE_INT,
        vol.Optional(OPT_NUM_WORKERS, default=DEFAULT_NUM_WORKERS): _NON_NEGATIVE_INT,
    }
)

DATA_SCHEMA = _section_schema(
    {
        vol.Optional(OPT_TRAIN_MANIFEST, default=""): str,
        vol.Optional(OPT_TRAIN_SPLIT, default=DEFAULT_TRAIN_SPLIT): str,
        vol.Optional(OPT_TEST_MANIFEST, default=None): vol.Any(None, str),
        vol.Optional(OPT_TEST_SPLIT, default=DEFAULT_TEST_SPLIT): str,
        vol.Optional(OPT_HELDOUT_MANIFEST, default=None): vol.Any(None, str),
        vol.Optional(OPT_IMAGE_SIZE, default=DEFAULT_IMAGE_SIZE): _POSITIVE_INT,
    }
)

MATCHER_SCHEMA = _section_schema(
    {
        vol.Optional(OPT_COST_CLASS, default=DEFAULT_COST_CLASS): _NON_NEGATIVE_FLOAT,
        vol.Optional(OPT_COST_BOX, default=DEFAULT_COST_BOX): _NON_NEGATIVE_FLOAT,
        vol.Optional(OPT_COST_MASK, default=DEFAULT_COST_MASK): _NON_NEGATIVE_FLOAT,
    }
)

INFERENCE_SCHEMA = _section_schema(
    {
        vol.Optional(OPT_SCORE_THRESHOLD, default=DEFAULT_SCORE_THRESHOLD): _UNIT_FLOAT,
        vol.Optional(OPT_TOP_K, default=DEFAULT_TOP_K): _POSITIVE_INT,
    }
)

PROTOCOL_SCHEMA = _section_schema(
    {
        vol.Optional(OPT_SEEDS, default=list(DEFAULT_SEEDS)): vol.All(
            [vol.Coerce(int)], vol.Length(min=1)
        ),
        vol.Optional(OPT_INTERVENTION_SEEDS, default=list(DEFAULT_INTERVENTION_SEEDS)): vol.All(
            [vol.Coerce(int)], vol.Length(min=1)
        ),
        vol.Optional(OPT_STRICT_UNSEEN, default=True): vol.Boolean(),
        vol.Optional(OPT_REUSE_RUNS, default=True): vol.Boolean(),
        vol.Optional(OPT_TRAIN_STYLE, default=DEFAULT_TRAIN_STYLE): vol.In(STYLES),
    }
)

EXPERIMENT_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_NAME, default=DOMAIN): str,
        vol.Optional(CONF_SEED, default=DEFAULT_SEED): vol.Coerce(int),
        vol.Optional(CONF_STRICT, default=True): vol.Boolean(),
        vol.Optional(CONF_MODEL, default={}): MODEL_SCHEMA,
        vol.Optional(CONF_LOSS, default={}): LOSS_SCHEMA,
        vol.Optional(CONF_OPTIM, default={}): OPTIM_SCHEMA,
        vol.Optional(CONF_DATA, default={}): DATA_SCHEMA,
        vol.Optional(CONF_MATCHER, default={}): MATCHER_SCHEMA,
        vol.Optional(CONF_INFERENCE, default={}): INFERENCE_SCHEMA,
        vol.Optional(CONF_PROTOCOL, default={}): PROTOCOL_SCHEMA,
    },
    extra=vol.PREVENT_EXTRA,
)


# ── Loading ──────────────────────────────────────────────────────────


def _validate(schema: vol.Schema, data: Any, what: str) -> dict[str, Any]:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"Invalid {what}: expected a mapping, got {type(data).__name__}")
    try:
        return schema(data)
    except vol.MultipleInvalid as err:
        details = "; ".join(
            f"{'.'.join(str(p) for p in e.path) or '<root>'}: {e.msg}" for e in err.errors
        )
        raise ConfigError(f"Invalid {what}: {details}") from err


def _resolve(path: str | None, base_dir: Path | None) -> str | None:
    if not path or base_dir is None or Path(path).is_absolute():
        return path
    return str((base_dir / path).resolve())


def experiment_config_from_dict(
    data: dict[str, Any] | None, base_dir: Path | None = None
) -> ExperimentConfig:
    """Validate an experiment document; relative manifest paths use ``base_dir``."""
    validated = _validate(EXPERIMENT_SCHEMA, data, "experiment config")
    sections = {}
    for key, cls in _SECTIONS.items():
        sections[key] = cls(**_tupled(validated[key]))
    data_opts: DataOptions = sections[CONF_DATA]
    sections[CONF_DATA] = dataclasses.replace(
        data_opts,
        train_manifest=_resolve(data_opts.train_manifest, base_dir) or "",
        test_manifest=_resolve(data_opts.test_manifest, base_dir),
        heldout_manifest=_resolve(data_opts.heldout_manifest, base_dir),
    )
    return ExperimentConfig(
        name=validated[CONF_NAME],
        seed=validated[CONF_SEED],
        strict=validated[CONF_STRICT],
        **sections,
    )


def _read_yaml(path: Path) -> Any:
    try:
        with open(path, encoding="utf-8") as handle:
            return yaml.safe_load(handle)
    except OSError as err:
        raise ConfigError(f"Cannot read config {path}: {err}") from err
    except yaml.YAMLError as err:
        raise ConfigError(f"Malformed YAML in {path}: {err}") from err


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    config = experiment_config_from_dict(_read_yaml(path), base_dir=path.parent)
    _LOGGER.debug("Loaded experiment config '%s' from %s", config.name, path)
    return config


def load_dataset_config(path: str | Path) -> DatasetConfig:
    return dataset_config_from_dict(_read_yaml(Path(path)))


def dump_config(config: ExperimentConfig | DatasetConfig, path: str | Path) -> None:
    """Write a config back out as YAML."""
    with open(path, "w", encoding="utf-8") as handle:
        yaml.safe_dump(config.to_dict(), handle, sort_keys=False)
