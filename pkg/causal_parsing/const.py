"""Constants for the causal parsing package."""

DOMAIN = "causal_parsing"

# Part taxonomy - channel 0 of every segmentation output is background
PART_HEAD = "head"
PART_TORSO = "torso"
PART_LEFT_LIMBS = "left_limbs"
PART_RIGHT_LIMBS = "right_limbs"

PART_NAMES = [PART_HEAD, PART_TORSO, PART_LEFT_LIMBS, PART_RIGHT_LIMBS]
NUM_PARTS = len(PART_NAMES)

# Part groups usable as intervention targets (indices into PART_NAMES)
GROUP_LIMBS = "limbs"
GROUP_HEAD = "head"
GROUP_TORSO = "torso"
PART_GROUPS = {
    GROUP_LIMBS: (PART_NAMES.index(PART_LEFT_LIMBS), PART_NAMES.index(PART_RIGHT_LIMBS)),
    GROUP_HEAD: (PART_NAMES.index(PART_HEAD),),
    GROUP_TORSO: (PART_NAMES.index(PART_TORSO),),
}

# Render styles
STYLE_NATURAL = "natural"
STYLE_CARTOON = "cartoon"
STYLE_SKETCH = "sketch"

STYLES = [STYLE_NATURAL, STYLE_CARTOON, STYLE_SKETCH]

# Intervention operators
INTERVENTION_CONTENT_ONLY = "content_only"
INTERVENTION_RANDOM_MASK = "random_mask"
INTERVENTION_RANDOM_STYLE = "random_style"

INTERVENTIONS = [
    INTERVENTION_CONTENT_ONLY,
    INTERVENTION_RANDOM_MASK,
    INTERVENTION_RANDOM_STYLE,
]

# Training-time intervened views: a style name or a removal operator
VIEW_KINDS = STYLES + [INTERVENTION_CONTENT_ONLY, INTERVENTION_RANDOM_MASK]

# Scene generation
DEFAULT_IMAGE_SIZE = 128
MIN_PERSONS = 1
MAX_PERSONS = 4
MIN_PERSON_SCALE = 0.1
MAX_PERSON_SCALE = 0.4
DEFAULT_SCALE_RANGE = (0.28, 0.4)
DEFAULT_NUM_PERSONS_RANGE = (1, 4)
DEFAULT_NOISE_STD = 0.04
DEFAULT_MASK_PROBABILITY = 0.5
DEFAULT_SEED_BASE = 1000
SCENE_RETRIES = 8

# File formats
SCENE_FORMAT_VERSION = 1
CHECKPOINT_FORMAT_VERSION = 1
MANIFEST_FILENAME = "manifest.jsonl"
TRAIN_LOG_FILENAME = "train_log.jsonl"
RUN_RECORD_FILENAME = "run.json"
DIAGNOSTICS_FILENAME = "diagnostics.json"
CHECKPOINT_FINAL = "final.pt"
CHECKPOINT_LAST_GOOD = "last_good.pt"

# Dataset config keys
CONF_SEED_BASE = "seed_base"
CONF_IMAGE_SIZE = "image_size"
CONF_NUM_PERSONS = "num_persons"
CONF_SCALE_RANGE = "scale_range"
CONF_SPLITS = "splits"
CONF_SIZE = "size"
CONF_STYLES = "styles"

# Experiment config sections
CONF_MODEL = "model"
CONF_LOSS = "loss"
CONF_OPTIM = "optim"
CONF_DATA = "data"
CONF_MATCHER = "matcher"
CONF_INFERENCE = "inference"
CONF_PROTOCOL = "protocol"
CONF_SEED = "seed"
CONF_STRICT = "strict"
CONF_NAME = "name"

# Model options
OPT_NUM_QUERIES = "num_queries"
OPT_HIDDEN_DIM = "hidden_dim"
OPT_DECODER_LAYERS = "decoder_layers"
OPT_NUM_HEADS = "num_heads"
OPT_STRIDE = "stride"
OPT_KERNEL_HIDDEN = "kernel_hidden_dim"

# Loss options
OPT_USE_CFS = "use_cfs"
OPT_CFS_BRANCHES = "cfs_branches"
OPT_USE_DIV = "use_div"
OPT_USE_INV = "use_inv"
OPT_INTERVENTION_VIEWS = "intervention_views"
OPT_WEIGHT_DET = "weight_det"
OPT_WEIGHT_DIV = "weight_div"
OPT_WEIGHT_INV = "weight_inv"
OPT_NO_PERSON_WEIGHT = "no_person_weight"

# Optimizer options
OPT_LEARNING_RATE = "learning_rate"
OPT_WEIGHT_DECAY = "weight_decay"
OPT_EPOCHS = "epochs"
OPT_BATCH_SIZE = "batch_size"
OPT_LR_DROP_AT = "lr_drop_at"
OPT_LR_DROP_FACTOR = "lr_drop_factor"
OPT_GRAD_CLIP = "grad_clip"
OPT_CHECKPOINT_EVERY = "checkpoint_every"
OPT_NUM_WORKERS = "num_workers"

# Data options
OPT_TRAIN_MANIFEST = "train_manifest"
OPT_TEST_MANIFEST = "test_manifest"
OPT_HELDOUT_MANIFEST = "heldout_manifest"
OPT_TRAIN_SPLIT = "train_split"
OPT_TEST_SPLIT = "test_split"
OPT_IMAGE_SIZE = "image_size"

DEFAULT_TRAIN_SPLIT = "train"
DEFAULT_TEST_SPLIT = "test"
HELDOUT_SPLIT_PREFIX = "test_"

# Matcher weights
OPT_COST_CLASS = "cost_class"
OPT_COST_BOX = "cost_box"
OPT_COST_MASK = "cost_mask"

# Inference options
OPT_SCORE_THRESHOLD = "score_threshold"
OPT_TOP_K = "top_k"

# Protocol options
OPT_SEEDS = "seeds"
OPT_INTERVENTION_SEEDS = "intervention_seeds"
OPT_STRICT_UNSEEN = "strict_unseen"
OPT_REUSE_RUNS = "reuse_runs"
OPT_TRAIN_STYLE = "train_style"

# CFS branch selection
BRANCHES_BOTH = "both"
BRANCHES_CONTENT = "content"
BRANCHES_CONTEXT = "context"
CFS_BRANCHES = [BRANCHES_BOTH, BRANCHES_CONTENT, BRANCHES_CONTEXT]

# Default values for options
DEFAULT_NUM_QUERIES = 10
DEFAULT_HIDDEN_DIM = 64
DEFAULT_DECODER_LAYERS = 2
DEFAULT_NUM_HEADS = 4
DEFAULT_STRIDE = 8
DEFAULT_KERNEL_HIDDEN = 64

DEFAULT_INTERVENTION_VIEWS = [STYLE_CARTOON, STYLE_SKETCH]
DEFAULT_NO_PERSON_WEIGHT = 0.1

DEFAULT_LEARNING_RATE = 5e-4
DEFAULT_WEIGHT_DECAY = 1e-4
DEFAULT_EPOCHS = 30
DEFAULT_BATCH_SIZE = 8
DEFAULT_LR_DROP_AT = 0.8
DEFAULT_LR_DROP_FACTOR = 0.1
DEFAULT_GRAD_CLIP = 0.1
DEFAULT_CHECKPOINT_EVERY = 5
DEFAULT_NUM_WORKERS = 0

DEFAULT_COST_CLASS = 2.0
DEFAULT_COST_BOX = 5.0
DEFAULT_COST_MASK = 2.0

DEFAULT_SCORE_THRESHOLD = 0.5
DEFAULT_TOP_K = MAX_PERSONS

DEFAULT_SEEDS = [0, 1, 2]
DEFAULT_INTERVENTION_SEEDS = [0, 1, 2]
DEFAULT_TRAIN_STYLE = STYLE_NATURAL
DEFAULT_SEED = 0
DEFAULT_WEIGHT = 1.0

# Metrics
AP_THRESHOLDS = [round(0.1 * k, 1) for k in range(1, 10)]
PCP_THRESHOLD = 0.5

# Acceptance margins for the directional claims (in metric points, 0-100 scale)
CLAIM_MARGIN_POINTS = 2.0
DIVERSITY_SIMILARITY_CEILING = 0.5
BRANCH_MIOU_TOLERANCE_POINTS = 5.0

# Logging
DEFAULT_LOG_BUFFER_SIZE = 100

# Log event types
LOG_RUN_START = "run_start"
LOG_EPOCH_END = "epoch_end"
LOG_CHECKPOINT = "checkpoint"
LOG_LR_DROP = "lr_drop"
LOG_ABORT = "abort"
LOG_RUN_END = "run_end"

# Protocol names
PROTOCOL_ABLATION = "ablation"
PROTOCOL_GENERALIZATION = "generalization"
PROTOCOL_ROBUSTNESS = "robustness"
PROTOCOLS = [PROTOCOL_ABLATION, PROTOCOL_GENERALIZATION, PROTOCOL_ROBUSTNESS]
