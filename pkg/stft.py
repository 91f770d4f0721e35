"""Square-root Hann STFT analysis and overlap-add synthesis"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window

import constants
from errors import ConfigError


@dataclass(frozen=True)
class StftConfig:
    """Framing parameters; the FFT size equals the window length"""

    sample_rate: int = constants.DEFAULT_SAMPLE_RATE
    window_ms: float = constants.DEFAULT_WINDOW_MS
    shift_ms: float = constants.DEFAULT_SHIFT_MS

    def __post_init__(self) -> None:
        window = self.window_ms * self.sample_rate / 1000.0
        shift = self.shift_ms * self.sample_rate / 1000.0
        if window <= 0 or abs(window - round(window)) > 1e-9:
            raise ConfigError(f"window of {self.window_ms} ms is not a whole number of samples")
        if shift <= 0 or abs(shift - round(shift)) > 1e-9:
            raise ConfigError(f"shift of {self.shift_ms} ms is not a whole number of samples")
        if round(window) % round(shift) != 0:
            raise ConfigError("shift must divide the window length")

    @property
    def window_length(self) -> int:
        return int(round(self.window_ms * self.sample_rate / 1000.0))

    @property
    def shift(self) -> int:
        return int(round(self.shift_ms * self.sample_rate / 1000.0))

    @property
    def fft_size(self) -> int:
        return self.window_length

    @property
    def num_bins(self) -> int:
        return self.fft_size // 2 + 1

    def analysis_window(self) -> np.ndarray:
        return np.sqrt(get_window('hann', self.window_length, fftbins=True))

    def synthesis_window(self) -> np.ndarray:
        """Square-root Hann scaled so that analysis x synthesis overlap-adds to one"""
        product = get_window('hann', self.window_length, fftbins=True)
        overlap_sum = product.reshape(-1, self.shift).sum(axis=0)
        if np.ptp(overlap_sum) > 1e-10 * np.max(overlap_sum):
            raise ConfigError("window/shift combination violates constant overlap-add")
        return self.analysis_window() / overlap_sum[0]

    def bin_frequencies(self) -> np.ndarray:
        """Center frequency of every bin in Hz"""
        return np.arange(self.num_bins) * self.sample_rate / self.fft_size

    def num_frames(self, num_samples: int) -> int:
        return int(np.ceil((num_samples - self.window_length) / self.shift)) + 1

    def frame_times(self, num_frames: int) -> np.ndarray:
        """Frame centers in seconds"""
        starts = np.arange(num_frames) * self.shift
        return (starts + self.window_length / 2) / self.sample_rate


@dataclass
class Spectrogram:
    """Complex STFT coefficients indexed (channel, bin, frame)"""

    coefficients: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)
    num_samples: Optional[int] = None

    def __post_init__(self) -> None:
        self.coefficients = np.asarray(self.coefficients, dtype=complex)
        if self.coefficients.ndim == 2:
            self.coefficients = self.coefficients[None]
        if self.coefficients.ndim != 3 or min(self.coefficients.shape) < 1:
            raise ConfigError(f"spectrogram needs shape (channels, bins, frames), got {self.coefficients.shape}")
        if not np.all(np.isfinite(self.coefficients)):
            raise ConfigError("spectrogram coefficients must be finite")

    @property
    def num_channels(self) -> int:
        return self.coefficients.shape[0]

    @property
    def num_bins(self) -> int:
        return self.coefficients.shape[1]

    @property
    def num_frames(self) -> int:
        return self.coefficients.shape[2]

    def channel(self, index: int) -> np.ndarray:
        """(bins, frames) coefficients of one channel"""
        return self.coefficients[index]

    def frames(self, k: int) -> np.ndarray:
        """(frames, channels) observation vectors of bin k"""
        return self.coefficients[:, k, :].T

    def with_coefficients(self, coefficients: np.ndarray) -> "Spectrogram":
        return Spectrogram(coefficients, self.config, self.num_samples)


def _as_channels(signal: np.ndarray) -> np.ndarray:
    signal = np.asarray(signal, dtype=float)
    if signal.ndim == 1:
        signal = signal[None]
    if signal.ndim != 2:
        raise ConfigError(f"signal must be (channels, samples), got shape {signal.shape}")
    return signal


def analyze(signal: np.ndarray, cfg: StftConfig = StftConfig()) -> Spectrogram:
    """One-sided STFT of a (channels, samples) or mono signal.

    The first frame starts at sample 0; the tail is zero-padded so every
    sample is covered by at least one frame.
    """
    signal = _as_channels(signal)
    num_samples = signal.shape[1]
    if num_samples < cfg.window_length:
        raise ConfigError(f"signal of {num_samples} samples is shorter than one window ({cfg.window_length})")
    window = cfg.analysis_window()
    cfg.synthesis_window()  # raises ConfigError when COLA fails

    num_frames = cfg.num_frames(num_samples)
    padded_length = (num_frames - 1) * cfg.shift + cfg.window_length
    padded = np.zeros((signal.shape[0], padded_length))
    padded[:, :num_samples] = signal

    frames = sliding_window_view(padded, cfg.window_length, axis=1)[:, ::cfg.shift]
    coefficients = np.fft.rfft(frames * window, n=cfg.fft_size, axis=-1)
    return Spectrogram(np.swapaxes(coefficients, 1, 2), cfg, num_samples)


def synthesize(spec: Spectrogram, cfg: Optional[StftConfig] = None,
               length: Optional[int] = None) -> np.ndarray:
    """Overlap-add synthesis; returns (channels, samples)"""
    cfg = cfg or spec.config
    if spec.num_bins != cfg.num_bins:
        raise ConfigError(f"spectrogram has {spec.num_bins} bins, config expects {cfg.num_bins}")
    window = cfg.synthesis_window()

    frames = np.fft.irfft(np.swapaxes(spec.coefficients, 1, 2), n=cfg.fft_size, axis=-1) * window
    num_frames = spec.num_frames
    output = np.zeros((spec.num_channels, (num_frames - 1) * cfg.shift + cfg.window_length))
    for i in range(num_frames):
        start = i * cfg.shift
        output[:, start:start + cfg.window_length] += frames[:, i]

    target = length if length is not None else spec.num_samples
    if target is not None:
        if target > output.shape[1]:
            output = np.pad(output, ((0, 0), (0, target - output.shape[1])))
        output = output[:, :target]
    return output


def magnitude_db(spec: Spectrogram, channel: int = 0, floor_db: float = -120.0) -> np.ndarray:
    """(bins, frames) magnitude in dB for plotting"""
    magnitude = np.abs(spec.channel(channel))
    with np.errstate(divide='ignore'):
        return np.maximum(20.0 * np.log10(magnitude), floor_db)
