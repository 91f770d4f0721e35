"""Array geometry, steering vectors, diffuse-field coherence and directivity patterns"""

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

import constants
from errors import ConfigError
from numerics import hermitian_factor
from stft import Spectrogram, StftConfig, analyze


@dataclass(frozen=True)
class ArrayGeometry:
    """Microphone positions in meters, one row per microphone"""

    mic_positions: np.ndarray
    speed_of_sound: float = constants.SPEED_OF_SOUND

    def __post_init__(self) -> None:
        positions = np.atleast_2d(np.asarray(self.mic_positions, dtype=float))
        if positions.shape[1] == 2:
            positions = np.hstack([positions, np.zeros((positions.shape[0], 1))])
        if positions.ndim != 2 or positions.shape[1] != 3:
            raise ConfigError(f"mic positions must be (D, 3), got {positions.shape}")
        if positions.shape[0] < 2:
            raise ConfigError("an array needs at least two microphones")
        distances = np.linalg.norm(positions[:, None] - positions[None], axis=-1)
        if np.any(distances[np.triu_indices(positions.shape[0], 1)] <= 0):
            raise ConfigError("microphone positions must be distinct")
        if self.speed_of_sound <= 0:
            raise ConfigError("speed of sound must be positive")
        object.__setattr__(self, 'mic_positions', positions)

    @property
    def num_mics(self) -> int:
        return self.mic_positions.shape[0]

    @classmethod
    def linear(cls, num_mics: int, spacing: float,
               speed_of_sound: float = constants.SPEED_OF_SOUND) -> "ArrayGeometry":
        """Uniform linear array along the x axis, first microphone at the origin"""
        positions = np.zeros((num_mics, 3))
        positions[:, 0] = np.arange(num_mics) * spacing
        return cls(positions, speed_of_sound)

    @classmethod
    def parse(cls, text: str) -> "ArrayGeometry":
        """Parse 'linear:<mics>x<spacing>', e.g. 'linear:2x0.06'"""
        kind, _, body = text.partition(':')
        if kind != 'linear' or 'x' not in body:
            raise ConfigError(f"unsupported geometry '{text}', expected linear:<mics>x<spacing>")
        count, spacing = body.split('x', 1)
        try:
            return cls.linear(int(count), float(spacing))
        except ValueError as e:
            raise ConfigError(f"cannot parse geometry '{text}'") from e

    def delays(self, angle: float) -> np.ndarray:
        """Plane-wave arrival delay of every microphone relative to the first, in seconds"""
        direction = np.array([math.cos(angle), math.sin(angle), 0.0])
        relative = self.mic_positions - self.mic_positions[0]
        return -(relative @ direction) / self.speed_of_sound


def steering_vector(geometry: ArrayGeometry, angle: float, frequency: float) -> np.ndarray:
    """Far-field delay-only steering vector d_l = exp(-j 2 pi f tau_l)"""
    if frequency < 0:
        raise ValueError("frequency must be non-negative")
    return np.exp(-2j * np.pi * frequency * geometry.delays(angle))


def steering_matrix(geometry: ArrayGeometry, angle: float, frequencies: np.ndarray) -> np.ndarray:
    """(frequencies, mics) steering vectors for one arrival angle"""
    frequencies = np.asarray(frequencies, dtype=float)
    return np.exp(-2j * np.pi * frequencies[:, None] * geometry.delays(angle)[None, :])


def mvdr_weights(covariance: np.ndarray, steering: np.ndarray) -> np.ndarray:
    """Sigma^-1 d / (d^H Sigma^-1 d), the distortionless minimum-variance weights"""
    steering = np.asarray(steering, dtype=complex)
    solved = hermitian_factor(covariance).solve(steering)
    return solved / np.vdot(steering, solved).real


def diffuse_covariance(geometry: ArrayGeometry, frequency: float,
                       white_fraction: float = constants.DIFFUSE_WHITE_FRACTION) -> np.ndarray:
    """Spherically isotropic coherence blended with spatially white noise, unit diagonal"""
    if not 0.0 <= white_fraction <= 1.0:
        raise ValueError("white_fraction must lie in [0, 1]")
    positions = geometry.mic_positions
    distances = np.linalg.norm(positions[:, None] - positions[None], axis=-1)
    # np.sinc(x) = sin(pi x)/(pi x), so this is sin(2 pi f d / c) / (2 pi f d / c)
    coherence = np.sinc(2.0 * frequency * distances / geometry.speed_of_sound)
    blended = (1.0 - white_fraction) * coherence + white_fraction * np.eye(geometry.num_mics)
    scale = np.sqrt(np.diag(blended))
    return (blended / np.outer(scale, scale)).astype(complex)


def spatialize(source: np.ndarray, geometry: ArrayGeometry, angle: float,
               stft_cfg: StftConfig = StftConfig()) -> Spectrogram:
    """Multichannel STFT of a mono source arriving from the given angle"""
    source = np.asarray(source, dtype=float)
    if source.ndim != 1 or source.size == 0:
        raise ValueError("spatialize expects a nonempty mono signal")
    spec = analyze(source, stft_cfg)
    steering = steering_matrix(geometry, angle, stft_cfg.bin_frequencies())
    coefficients = steering.T[:, :, None] * spec.coefficients[0][None]
    return spec.with_coefficients(coefficients)


@dataclass
class Scenario:
    """Array, target and interferer directions, SNR and framing of a simulation"""

    geometry: ArrayGeometry
    target_angle: float = constants.BROADSIDE_ANGLE
    interferer_angles: List[float] = field(default_factory=list)
    snr_db: float = 0.0
    stft: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self) -> None:
        for angle in [self.target_angle] + list(self.interferer_angles):
            if not 0.0 <= angle < 2 * math.pi:
                raise ConfigError(f"angle {angle} outside [0, 2*pi)")
        if not math.isfinite(self.snr_db):
            raise ConfigError("snr_db must be finite")

    @classmethod
    def ring_of_interferers(cls, spacing: float = constants.INTERFERER_SPACING,
                          num_mics: int = constants.INTERFERER_NUM_MICS,
                          snr_db: float = 0.0,
                          stft: Optional[StftConfig] = None) -> "Scenario":
        """Broadside target with interferers at pi/6 + 2*pi*i/5"""
        angles = [constants.interferer_angle(i) for i in range(constants.NUM_INTERFERERS)]
        return cls(ArrayGeometry.linear(num_mics, spacing), constants.BROADSIDE_ANGLE,
                   angles, snr_db, stft or StftConfig())

    def target_steering(self) -> np.ndarray:
        """(bins, mics) target steering vectors"""
        return steering_matrix(self.geometry, self.target_angle, self.stft.bin_frequencies())

    def interferer_steering(self, index: int) -> np.ndarray:
        return steering_matrix(self.geometry, self.interferer_angles[index], self.stft.bin_frequencies())


@dataclass
class DirectivityPattern:
    """Beamformer power response in dB indexed (frequency, angle)"""

    angles: np.ndarray
    frequencies: np.ndarray
    gains_db: np.ndarray

    def gain_at(self, angle: float) -> np.ndarray:
        """Gains over frequency at the grid angle closest to the given one"""
        distance = np.abs(np.angle(np.exp(1j * (self.angles - angle))))
        return self.gains_db[:, int(np.argmin(distance))]

    def to_frame(self) -> pd.DataFrame:
        """Long table with columns frequency (Hz), angle (degrees), gain_db"""
        frequency, angle = np.meshgrid(self.frequencies, np.rad2deg(self.angles), indexing='ij')
        return pd.DataFrame({
            "frequency": frequency.ravel(),
            "angle": angle.ravel(),
            "gain_db": self.gains_db.ravel(),
        })

    def to_csv(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False)


def default_angle_grid() -> np.ndarray:
    """1 degree grid over [0, 2*pi)"""
    return np.deg2rad(np.arange(360.0))


WeightSource = Union[np.ndarray, Callable[[float], np.ndarray]]


def directivity(weights: WeightSource, geometry: ArrayGeometry,
                angle_grid: Optional[Sequence[float]] = None,
                freq_grid: Optional[Sequence[float]] = None) -> DirectivityPattern:
    """gain(f, theta) = 20 log10 |w(f)^H d(theta, f)|.

    weights is either a (frequencies, mics) array aligned with freq_grid or a
    callable returning the weight vector of one frequency.
    """
    angles = default_angle_grid() if angle_grid is None else np.asarray(angle_grid, dtype=float)
    frequencies = StftConfig().bin_frequencies() if freq_grid is None else np.asarray(freq_grid, dtype=float)
    if callable(weights):
        w = np.stack([np.asarray(weights(f), dtype=complex) for f in frequencies])
    else:
        w = np.asarray(weights, dtype=complex)
    if w.shape != (frequencies.size, geometry.num_mics):
        raise ConfigError(f"weights must be ({frequencies.size}, {geometry.num_mics}), got {w.shape}")

    responses = np.stack([
        np.einsum('fd,fd->f', w.conj(), steering_matrix(geometry, angle, frequencies))
        for angle in angles
    ], axis=1)
    gains = 20.0 * np.log10(np.maximum(np.abs(responses), 1e-12))
    return DirectivityPattern(angles, frequencies, gains)
