"""Constants for the spatial MMSE enhancement system"""

import math

# Directory paths
LOGS_DIR = "./logs"
RESULTS_DIR = "./results"
MODEL_CACHE_DIR = "./model_cache"

# Noise model documents
MODEL_SCHEMA_VERSION = 1

# Acoustics
SPEED_OF_SOUND = 343.0
DEFAULT_SAMPLE_RATE = 16000

# Framing: 32 ms square-root Hann windows with 16 ms shift
DEFAULT_WINDOW_MS = 32.0
DEFAULT_SHIFT_MS = 16.0

# Speech prior
DEFAULT_NU = 0.25
ORACLE_PSD_SMOOTHING = 0.72
STEERING_SMOOTHING = 0.9

# Heavy-tailed noise
DEFAULT_SCALE_FACTOR = 2.0
DIFFUSE_WHITE_FRACTION = 0.05
HEAVY_TAILED_NUM_MICS = 5
HEAVY_TAILED_SPACING = 0.05

# Interferer scenario
INTERFERER_NUM_MICS = 2
INTERFERER_SPACING = 0.06
NUM_INTERFERERS = 5
BROADSIDE_ANGLE = math.pi / 2
BURST_MS = 336.0

# EM windows
INTERFERER_EM_WINDOW_MS = 250.0
EXTERNAL_EM_WINDOW_MS = 750.0
EM_WINDOW_OVERLAP = 0.5

# Metrics
SEGMENT_MS = 10.0
ACTIVITY_THRESHOLD_DB = -30.0
METRIC_CAP_DB = 100.0
CI95_Z = 1.96

# Experiments
EXPERIMENTS = ["heavy_tailed", "interferer_speech", "gaussian_bursts", "external_pair"]
METHODS = ["mvdr", "mwf", "mvdr-mmse", "nl-mmse"]
NOISY_LABEL = "noisy"


def interferer_angle(index: int) -> float:
    """Angle of the index-th interferer: pi/6 + 2*pi*index/5"""
    return math.pi / 6 + 2 * math.pi * index / NUM_INTERFERERS
