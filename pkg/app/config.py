"""
Configuration settings for the PINN training framework.
"""
import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables from .env file if it exists
load_dotenv()

# Base directory
BASE_DIR = Path(__file__).resolve().parent.parent

# Logging settings
LOG_DIR = Path(os.getenv('PINNCW_LOG_DIR', BASE_DIR / 'logs'))
LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')

# Compute settings
NUM_THREADS = int(os.getenv('PINNCW_NUM_THREADS', 0))  # 0 keeps the torch default

# Output and preset locations
OUTPUT_ROOT = Path(os.getenv('PINNCW_OUTPUT_ROOT', BASE_DIR / 'runs'))
PRESETS_DIR = Path(os.getenv('PINNCW_PRESETS_DIR', BASE_DIR / 'app' / 'presets'))

# Weighting defaults (convolution weighting experiments)
DEFAULT_NEIGHBORS = 4
DEFAULT_EPSILON = 0.01
DEFAULT_ETA_LAMBDA = 1e-3
DEFAULT_SA_LR = 1e-3
DEFAULT_RESAMPLE_EVERY = 200  # K

# Optimizer defaults
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Evaluation settings
DEFAULT_TEST_POINTS = 90_000
DEFAULT_CHECKPOINT_EVERY = 100
EVAL_CHUNK_SIZE = int(os.getenv('PINNCW_EVAL_CHUNK', 20_000))

# Neighbor rejection sampling gives up after this many failed rounds
MAX_REJECTION_ROUNDS = 1000

# Long benchmark reproduction tests
RUN_SLOW_TESTS = os.getenv('PINNCW_RUN_SLOW', '0') == '1'
