"""Audio loading, writing and level handling"""

import logging
from typing import Optional

import numpy as np
import soundfile as sf

import constants
from errors import ConfigError

logger = logging.getLogger(__name__)


class AudioProcessor:
    def __init__(self, sample_rate: int = constants.DEFAULT_SAMPLE_RATE):
        self.sample_rate = sample_rate

    def load(self, path: str, max_seconds: Optional[float] = None) -> np.ndarray:
        """Read a WAV file as (channels, samples) doubles"""
        try:
            data, sr = sf.read(path, dtype='float64', always_2d=True)
        except RuntimeError as e:
            raise ConfigError(f"cannot read audio file {path}: {e}") from e
        if sr != self.sample_rate:
            raise ConfigError(f"{path} is sampled at {sr} Hz, expected {self.sample_rate} Hz (no resampling)")
        signal = data.T
        if max_seconds is not None:
            signal = self.trim(signal, max_seconds)
        logger.debug("Loaded %s: %d channel(s), %d samples", path, signal.shape[0], signal.shape[1])
        return signal

    def load_mono(self, path: str, max_seconds: Optional[float] = None) -> np.ndarray:
        """First channel of a WAV file"""
        return self.load(path, max_seconds)[0]

    def write(self, path: str, signal: np.ndarray, subtype: str = 'FLOAT') -> None:
        """Write (channels, samples) or mono samples as WAV"""
        signal = np.asarray(signal, dtype=float)
        sf.write(path, signal.T if signal.ndim == 2 else signal, self.sample_rate, subtype=subtype)

    def trim(self, signal: np.ndarray, max_seconds: float) -> np.ndarray:
        """Cut the last axis to at most max_seconds"""
        return signal[..., :int(round(max_seconds * self.sample_rate))]

    @staticmethod
    def noise_gain(target: np.ndarray, noise: np.ndarray, snr_db: float) -> float:
        """Gain g so that target over g * noise has the requested SNR"""
        target_energy = float(np.sum(np.abs(target) ** 2))
        noise_energy = float(np.sum(np.abs(noise) ** 2))
        if noise_energy <= 0 or target_energy <= 0:
            raise ConfigError("cannot set an SNR with a silent target or noise")
        return float(np.sqrt(target_energy / (noise_energy * 10.0 ** (snr_db / 10.0))))

    def synthetic_utterance(self, seed: int, seconds: float) -> np.ndarray:
        """Speech-like stand-in signal: voiced harmonic bursts with gliding pitch and pauses"""
        rng = np.random.default_rng(seed)
        num_samples = int(round(seconds * self.sample_rate))
        t = np.arange(num_samples) / self.sample_rate

        pitch = rng.uniform(100.0, 220.0) * (1.0 + 0.1 * np.sin(2 * np.pi * rng.uniform(0.5, 2.0) * t))
        phase = 2 * np.pi * np.cumsum(pitch) / self.sample_rate
        formants = rng.uniform([500.0, 1200.0, 2400.0], [800.0, 1800.0, 3200.0])
        voiced = np.zeros(num_samples)
        for harmonic in range(1, 30):
            frequency = harmonic * pitch
            amplitude = sum(np.exp(-((frequency - f) / 150.0) ** 2) for f in formants) + 0.05
            amplitude = np.where(frequency < self.sample_rate / 2, amplitude / harmonic ** 0.5, 0.0)
            voiced += amplitude * np.sin(harmonic * phase)

        envelope = np.zeros(num_samples)
        position = 0
        while position < num_samples:
            length = int(rng.uniform(0.12, 0.35) * self.sample_rate)
            pause = int(rng.uniform(0.03, 0.2) * self.sample_rate)
            end = min(position + length, num_samples)
            envelope[position:end] = np.hanning(length)[:end - position] * rng.uniform(0.3, 1.0)
            position = end + pause

        fricative = 0.05 * rng.standard_normal(num_samples) * envelope
        signal = envelope * voiced + fricative
        return signal / np.max(np.abs(signal))
