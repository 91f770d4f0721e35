"""Configuration settings for the spatial MMSE enhancement system"""

import json
import os
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

import constants
from errors import ConfigError

# Hermitian factorization
LOADING_START = 1e-10
LOADING_MAX = 1e-6
LOADING_STEP = 10.0

# Power iteration
POWER_TOL = 1e-10
POWER_MAX_ITER = 500

# Confluent hypergeometric function
KUMMER_CROSSOVER = 30.0
KUMMER_SERIES_TERMS = 1000
KUMMER_TOL = 1e-17

# EM
EM_MAX_ITER = 300
EM_TOL = 1e-7
EM_RESTARTS = 5
EM_LOADING = 1e-8
EM_WEIGHT_FLOOR = 1e-4
EM_MONOTONE_TOL = 1e-8

# Speech PSD estimation
PSD_FLOOR = 1e-6
CEPSTRUM_LOW_QUEFRENCY = 3
CEPSTRUM_PITCH_HZ = (70.0, 400.0)
CEPSTRUM_SMOOTHING_LOW = 0.5
CEPSTRUM_SMOOTHING_PITCH = 0.2
CEPSTRUM_SMOOTHING_HIGH = 0.97
CEPSTRUM_PITCH_WIDTH = 2

# Desk-scale experiment defaults
DESK_UTTERANCES = 4
DESK_MAX_SECONDS = 8.0
HEAVY_TAILED_COMPONENTS = [1, 2, 4, 6]
EXTERNAL_COMPONENTS = [1, 2, 3, 4]


class ArrayConfig(BaseModel):
    """Linear microphone array description"""

    num_mics: int = Field(default=constants.INTERFERER_NUM_MICS, ge=2)
    spacing: float = Field(default=constants.INTERFERER_SPACING, gt=0)
    speed_of_sound: float = Field(default=constants.SPEED_OF_SOUND, gt=0)


class ExperimentConfig(BaseModel):
    """Settings of one experiment run"""

    experiment: str = "heavy_tailed"
    array: Optional[ArrayConfig] = None
    target_angle_deg: float = 90.0
    interferer_angles_deg: Optional[List[float]] = None
    snr_db: Optional[float] = 0.0
    scale_factor: float = Field(default=constants.DEFAULT_SCALE_FACTOR, gt=0)
    white_fraction: float = Field(default=constants.DIFFUSE_WHITE_FRACTION, ge=0, le=1)
    components: Optional[List[int]] = None
    nu: float = Field(default=constants.DEFAULT_NU, gt=0)
    speech_psd: str = "cepstral"
    psd_window: str = "first"
    em_window_ms: Optional[float] = None
    em_overlap: float = Field(default=constants.EM_WINDOW_OVERLAP, ge=0, lt=1)
    em_restarts: int = Field(default=EM_RESTARTS, ge=1)
    em_max_iter: int = Field(default=EM_MAX_ITER, ge=1)
    burst_ms: float = Field(default=constants.BURST_MS, gt=0)
    sample_rate: int = constants.DEFAULT_SAMPLE_RATE
    max_seconds: float = Field(default=DESK_MAX_SECONDS, gt=0)
    num_utterances: int = Field(default=DESK_UTTERANCES, ge=1)
    clean_files: List[str] = Field(default_factory=list)
    interferer_files: List[str] = Field(default_factory=list)
    noise_files: List[str] = Field(default_factory=list)
    output_dir: str = constants.RESULTS_DIR
    cache_dir: Optional[str] = None
    seed: int = 0

    @field_validator("experiment")
    @classmethod
    def _known_experiment(cls, value: str) -> str:
        if value not in constants.EXPERIMENTS:
            raise ValueError(f"unknown experiment '{value}', expected one of {constants.EXPERIMENTS}")
        return value

    @field_validator("speech_psd")
    @classmethod
    def _known_psd(cls, value: str) -> str:
        if value not in ("cepstral", "oracle"):
            raise ValueError("speech_psd must be 'cepstral' or 'oracle'")
        return value

    @field_validator("psd_window")
    @classmethod
    def _known_psd_window(cls, value: str) -> str:
        if value not in ("first", "nearest"):
            raise ValueError("psd_window must be 'first' or 'nearest'")
        return value

    @field_validator("components")
    @classmethod
    def _positive_components(cls, value: Optional[List[int]]) -> Optional[List[int]]:
        if value is not None and (not value or min(value) < 1):
            raise ValueError("components must be a non-empty list of positive counts")
        return value

    @model_validator(mode="after")
    def _files_exist(self) -> "ExperimentConfig":
        for path in self.clean_files + self.interferer_files + self.noise_files:
            if not os.path.exists(path):
                raise ValueError(f"referenced file does not exist: {path}")
        if self.experiment == "external_pair" and len(self.noise_files) != len(self.clean_files):
            raise ValueError("external_pair needs one noise file per clean file")
        return self

    def resolved_array(self) -> ArrayConfig:
        """Array of the experiment, falling back to the default geometry of its experiment"""
        if self.array is not None:
            return self.array
        if self.experiment == "heavy_tailed":
            return ArrayConfig(num_mics=constants.HEAVY_TAILED_NUM_MICS,
                               spacing=constants.HEAVY_TAILED_SPACING)
        return ArrayConfig()

    def resolved_components(self) -> List[int]:
        """Mixture component grid of the experiment"""
        if self.components is not None:
            return list(self.components)
        if self.experiment == "heavy_tailed":
            return list(HEAVY_TAILED_COMPONENTS)
        if self.experiment == "external_pair":
            return list(EXTERNAL_COMPONENTS)
        return [constants.NUM_INTERFERERS]

    def resolved_window_ms(self) -> Optional[float]:
        """EM window length; None fits the full signal"""
        if self.em_window_ms is not None:
            return self.em_window_ms
        if self.experiment == "interferer_speech":
            return constants.INTERFERER_EM_WINDOW_MS
        if self.experiment == "external_pair":
            return constants.EXTERNAL_EM_WINDOW_MS
        return None


def load_experiment_config(path: Optional[str] = None, **overrides: Any) -> ExperimentConfig:
    """Load a JSON experiment config and apply flag overrides on top"""
    data: Dict[str, Any] = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path, 'r') as f:
            data = json.load(f)
    data.update({key: value for key, value in overrides.items() if value is not None})
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(str(e)) from e
