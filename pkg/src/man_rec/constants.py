# Padding item index, shared by every vocabulary.
PADDING_INDEX = 0

# Masked attention scores use a large negative surrogate instead of -inf.
MASK_FILL_VALUE = -1e9

# Clamp for predicted probabilities inside the log-likelihood.
PROBABILITY_EPSILON = 1e-12

# Some defaults.
DEFAULT_EVAL_NEGATIVES = 49
DEFAULT_TRAIN_NEGATIVES = 1
DEFAULT_NDCG_CUTOFF = 10
DEFAULT_LEARNING_RATE = 0.001
DEFAULT_GROUP_SWEEP = (1, 5, 10, 20)
DEFAULT_FD_STEP = 1e-5

# Checkpoint file format.
CHECKPOINT_MAGIC = b"MANCKPT"
CHECKPOINT_VERSION = 1

# Environment variable overriding the configured seed.
SEED_ENV_VAR = "MAN_SEED"
