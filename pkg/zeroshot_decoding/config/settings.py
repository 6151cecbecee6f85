from pathlib import Path

SCRIPT_TABLE_DIR = Path(__file__).resolve().parent.parent / "script_tables"
DEFAULT_FALLBACK_POLICY = "drop"  # drop | apostrophe

# Decoding
DEFAULT_BEAM_SIZE = 2000
DEFAULT_BEAM_THRESHOLD = 25.0
DEFAULT_LM_WEIGHT = 0.0
DEFAULT_WORD_SCORE = 0.0

# Language model
DEFAULT_LM_ORDER = 1
DEFAULT_DISCOUNT = 0.5

# Tuning grids, LO:HI:STEP
DEFAULT_LM_WEIGHT_GRID = "0:5:0.25"
DEFAULT_WORD_SCORE_GRID = "-5:5:0.5"

NEG_INF = -1e30
ORACLE_MAX_SEQUENCES = 10 ** 6

EMISSION_SUFFIX = ".ctce"
MANIFEST_NAME = "manifest.tsv"

LOG_FORMAT = "%(levelname)s: %(message)s"
PROGRESS_BAR_FORMAT = "{l_bar}{bar} | {n_fmt}/{total_fmt}"
