"""MVDR, multichannel Wiener, MVDR with MMSE postfilter and the joint nonlinear MMSE estimator"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.signal import lfilter
from scipy.special import logsumexp

import config
import constants
from errors import ConfigError, NumericalOverflow
from noisemodel import ComplexGaussianMixture, NoiseModel
from numerics import HermitianFactor, hermitian_factor, log_kummer_m, principal_eigenvectors
from stft import Spectrogram, synthesize

logger = logging.getLogger(__name__)


@dataclass
class SpeechPrior:
    """Speech shape parameter nu and speech power sigma_s^2 (scalar or one value per frame)"""

    nu: float = constants.DEFAULT_NU
    sigma_s2: Union[float, np.ndarray] = 1.0

    def __post_init__(self) -> None:
        if not self.nu > 0:
            raise ValueError("speech shape parameter nu must be positive")
        sigma = np.asarray(self.sigma_s2, dtype=float)
        if np.any(~np.isfinite(sigma)) or np.any(sigma < 0):
            raise ValueError("speech power must be finite and non-negative")
        self.sigma_s2 = sigma


@dataclass
class BinContext:
    """Steering, noise mixture and speech prior of one frequency bin.

    steering is (D,) or one vector per frame (n, D).
    """

    steering: np.ndarray
    mixture: ComplexGaussianMixture
    prior: SpeechPrior = field(default_factory=SpeechPrior)

    def __post_init__(self) -> None:
        self.steering = np.asarray(self.steering, dtype=complex)
        if self.steering.shape[-1] != self.mixture.dim:
            raise ConfigError(f"steering has {self.steering.shape[-1]} entries, noise model {self.mixture.dim}")
        if not np.all(np.any(self.steering != 0, axis=-1)):
            raise ConfigError("steering vector must be nonzero")
        self._aggregate = hermitian_factor(self.mixture.aggregate_covariance)
        self._components = [hermitian_factor(c) for c in self.mixture.covariances]

    @property
    def aggregate_factor(self) -> HermitianFactor:
        return self._aggregate

    def component_factor(self, m: int) -> HermitianFactor:
        return self._components[m]

    def steering_block(self, count: int) -> np.ndarray:
        """(D, n) steering columns for n frames"""
        if self.steering.ndim == 1:
            return np.repeat(self.steering[:, None], count, axis=1)
        if self.steering.shape[0] != count:
            raise ConfigError(f"{self.steering.shape[0]} steering vectors for {count} frames")
        return self.steering.T

    def sigma_s2(self, count: int) -> np.ndarray:
        return np.broadcast_to(self.prior.sigma_s2, (count,)).astype(float)


def _frames(y: np.ndarray):
    y = np.asarray(y, dtype=complex)
    return y.ndim == 1, np.atleast_2d(y)


def _distortionless(factor: HermitianFactor, d: np.ndarray, y: np.ndarray):
    """dH S^-1 y / dH S^-1 d and dH S^-1 d per column, d and y shaped (D, n)"""
    solved = factor.solve(d)
    gain = np.sum(d.conj() * solved, axis=0).real
    return np.sum(solved.conj() * y, axis=0) / gain, gain


def _finish(values: np.ndarray, single: bool, name: str):
    if not np.all(np.isfinite(values)):
        raise NumericalOverflow(f"{name} produced a non-finite estimate")
    return complex(values[0]) if single else values


def mvdr(ctx: BinContext, y: np.ndarray):
    """T = d^H Sigma_n^-1 y / (d^H Sigma_n^-1 d) for y shaped (D,) or (n, D)"""
    single, frames = _frames(y)
    estimate, _ = _distortionless(ctx.aggregate_factor, ctx.steering_block(len(frames)), frames.T)
    return _finish(estimate, single, "mvdr")


def mvdr_component(ctx: BinContext, m: int, y: np.ndarray):
    """MVDR with the m-th component covariance in place of the aggregate"""
    single, frames = _frames(y)
    estimate, _ = _distortionless(ctx.component_factor(m), ctx.steering_block(len(frames)), frames.T)
    return _finish(estimate, single, "mvdr_component")


def mwf(ctx: BinContext, y: np.ndarray):
    """sigma_s^2 / (sigma_s^2 + 1/(d^H Sigma_n^-1 d)) times the MVDR output"""
    single, frames = _frames(y)
    estimate, gain = _distortionless(ctx.aggregate_factor, ctx.steering_block(len(frames)), frames.T)
    sigma = ctx.sigma_s2(len(frames))
    wiener = sigma / (sigma + 1.0 / gain)
    return _finish(wiener * estimate, single, "mwf")


def _ratio(log_num: np.ndarray, phase: np.ndarray, log_den: np.ndarray) -> np.ndarray:
    """sum_m exp(log_num) e^(j phase) / sum_m exp(log_den), components on axis 0"""
    shift = np.max(log_num, axis=0)
    shift = np.where(np.isfinite(shift), shift, 0.0)
    numerator = np.sum(np.exp(log_num - shift) * phase, axis=0)
    return numerator * np.exp(shift - logsumexp(log_den, axis=0))


def nonlinear_mmse(ctx: BinContext, y: np.ndarray):
    """Joint spatial-spectral MMSE estimate under the Gaussian mixture noise model.

    Every component contributes its MVDR output T_m weighted by
    c_m Q_m |Sigma_m|^-1 exp(-y^H Sigma_m^-1 y) and by confluent hypergeometric
    terms in P_m; sums are formed in the log domain.
    """
    single, frames = _frames(y)
    count = len(frames)
    nu = ctx.prior.nu
    sigma = ctx.sigma_s2(count)
    d = ctx.steering_block(count)
    active = sigma > 0
    safe_sigma = np.where(active, sigma, 1.0)

    log_num, phase, log_den = [], [], []
    for m, weight in enumerate(ctx.mixture.weights):
        factor = ctx.component_factor(m)
        estimate, lam = _distortionless(factor, d, frames.T)
        quadratic = factor.quadratic(frames.T)
        spread = nu / lam + safe_sigma
        p = safe_sigma * lam * np.abs(estimate) ** 2 / spread
        log_weight = (np.log(weight) - nu * np.log(nu + lam * safe_sigma)
                      - factor.logdet() - quadratic)
        with np.errstate(divide='ignore'):
            log_magnitude = np.log(np.abs(estimate))
        log_num.append(log_weight + np.log(safe_sigma) + log_magnitude - np.log(spread)
                       + log_kummer_m(nu + 1.0, 2.0, p))
        phase.append(np.exp(1j * np.angle(estimate)))
        log_den.append(log_weight + log_kummer_m(nu, 1.0, p))

    values = nu * _ratio(np.array(log_num), np.array(phase), np.array(log_den))
    return _finish(np.where(active, values, 0.0), single, "nonlinear_mmse")


def mvdr_postfilter(ctx: BinContext, y: np.ndarray):
    """MMSE spectral postfilter applied to the MVDR output z.

    The noise at the MVDR output is a one-dimensional mixture with variances
    sigma_m^2 = u^H Sigma_m u / (d^H u)^2, u = Sigma_n^-1 d. The gain is real
    and non-negative so the output keeps the phase of z.
    """
    single, frames = _frames(y)
    count = len(frames)
    nu = ctx.prior.nu
    sigma = ctx.sigma_s2(count)
    d = ctx.steering_block(count)
    active = sigma > 0
    safe_sigma = np.where(active, sigma, 1.0)

    z, lam = _distortionless(ctx.aggregate_factor, d, frames.T)
    u = ctx.aggregate_factor.solve(d)
    power = np.abs(z) ** 2

    log_num, log_den = [], []
    for m, weight in enumerate(ctx.mixture.weights):
        loaded = ctx.mixture.covariances[m] + ctx.component_factor(m).loading * np.eye(ctx.mixture.dim)
        variance = np.einsum('in,ij,jn->n', u.conj(), loaded, u).real / lam ** 2
        variance = np.maximum(variance, np.finfo(float).tiny)
        spread = nu * variance + safe_sigma
        p = safe_sigma * power / variance / spread
        log_weight = (np.log(weight) - nu * np.log(1.0 / variance + nu / safe_sigma)
                      - np.log(variance) - power / variance)
        log_num.append(log_weight + np.log(safe_sigma) - np.log(spread) + log_kummer_m(nu + 1.0, 2.0, p))
        log_den.append(log_weight + log_kummer_m(nu, 1.0, p))

    log_num = np.array(log_num)
    gain = nu * np.exp(logsumexp(log_num, axis=0) - logsumexp(np.array(log_den), axis=0))
    return _finish(np.where(active, gain * z, 0.0), single, "mvdr_postfilter")


class Method(str, Enum):
    MVDR = "mvdr"
    MWF = "mwf"
    MVDR_MMSE = "mvdr-mmse"
    NL_MMSE = "nl-mmse"


ESTIMATORS: Dict[Method, Callable[[BinContext, np.ndarray], np.ndarray]] = {
    Method.MVDR: mvdr,
    Method.MWF: mwf,
    Method.MVDR_MMSE: mvdr_postfilter,
    Method.NL_MMSE: nonlinear_mmse,
}


def _psd_floor(noise_psd: np.ndarray) -> float:
    return max(config.PSD_FLOOR * float(np.mean(noise_psd)), np.finfo(float).tiny)


def estimate_speech_psd(noisy: np.ndarray, noise_psd: np.ndarray,
                        sample_rate: int = constants.DEFAULT_SAMPLE_RATE) -> np.ndarray:
    """Cepstrally smoothed speech power of (bins, frames) coefficients.

    The ML estimate max(|X|^2 - noise_psd, floor) is taken to the real cepstrum
    and smoothed recursively over frames per quefrency: lightly at the lowest
    quefrencies and around the pitch peak, heavily elsewhere. The result is
    rescaled so every frame keeps the energy of its ML estimate.
    """
    noisy = np.asarray(noisy, dtype=complex)
    num_bins, num_frames = noisy.shape
    noise_psd = np.broadcast_to(np.asarray(noise_psd, dtype=float).reshape(num_bins, -1), noisy.shape)
    floor = _psd_floor(noise_psd)
    ml = np.maximum(np.abs(noisy) ** 2 - noise_psd, floor)

    fft_size = 2 * (num_bins - 1)
    cepstrum = np.fft.irfft(np.log(ml), n=fft_size, axis=0)
    quefrency = np.minimum(np.arange(fft_size), fft_size - np.arange(fft_size))
    low_pitch = int(np.floor(sample_rate / config.CEPSTRUM_PITCH_HZ[1]))
    high_pitch = min(int(np.ceil(sample_rate / config.CEPSTRUM_PITCH_HZ[0])), fft_size // 2)
    base = np.where(quefrency < config.CEPSTRUM_LOW_QUEFRENCY,
                    config.CEPSTRUM_SMOOTHING_LOW, config.CEPSTRUM_SMOOTHING_HIGH)

    smoothed = np.empty_like(cepstrum)
    state = cepstrum[:, 0]
    for i in range(num_frames):
        beta = base.copy()
        if low_pitch < high_pitch:
            peak = low_pitch + int(np.argmax(cepstrum[low_pitch:high_pitch + 1, i]))
            beta[np.abs(quefrency - peak) <= config.CEPSTRUM_PITCH_WIDTH] = config.CEPSTRUM_SMOOTHING_PITCH
        state = beta * state + (1.0 - beta) * cepstrum[:, i]
        smoothed[:, i] = state

    log_psd = np.fft.rfft(smoothed, axis=0).real
    log_psd += np.log(ml.sum(axis=0)) - logsumexp(log_psd, axis=0)
    return np.maximum(np.exp(log_psd), floor)


def oracle_speech_psd(clean: np.ndarray, smoothing: float = constants.ORACLE_PSD_SMOOTHING) -> np.ndarray:
    """Recursively smoothed |S|^2 of (bins, frames) clean coefficients"""
    power = np.abs(np.asarray(clean)) ** 2
    initial = smoothing * power[:, :1]
    smoothed, _ = lfilter([1.0 - smoothing], [1.0, -smoothing], power, axis=-1, zi=initial)
    return smoothed


def estimate_steering(clean: Spectrogram, smoothing: float = constants.STEERING_SMOOTHING) -> np.ndarray:
    """(bins, frames, mics) steering from recursively smoothed clean-speech covariances.

    Each vector is the principal eigenvector of the smoothed covariance divided
    by its reference-microphone entry. Frames without energy reuse the previous
    frame's vector; the first frame falls back to all ones.
    """
    coefficients = np.transpose(clean.coefficients, (1, 2, 0))
    num_bins, num_frames, num_mics = coefficients.shape
    steering = np.empty_like(coefficients)
    previous = np.ones((num_bins, num_mics), dtype=complex)
    covariance = np.zeros((num_bins, num_mics, num_mics), dtype=complex)
    for i in range(num_frames):
        s = coefficients[:, i]
        covariance = smoothing * covariance + (1.0 - smoothing) * s[:, :, None] * s[:, None, :].conj()
        vectors = principal_eigenvectors(covariance)
        energy = np.einsum('kii->k', covariance).real
        reference = vectors[:, 0]
        valid = (energy > np.finfo(float).tiny) & (np.abs(reference) > 1e-12 * np.max(np.abs(vectors), axis=-1))
        current = np.where(valid[:, None], vectors / np.where(valid, reference, 1.0)[:, None], previous)
        steering[:, i] = current
        previous = current
    return steering


def _steering_at(steering: np.ndarray, k: int, frames: np.ndarray) -> np.ndarray:
    return steering[k] if steering.ndim == 2 else steering[k, frames]


def mvdr_spectrogram(noisy: Spectrogram, model: NoiseModel, steering: np.ndarray,
                     window: Optional[int] = 0) -> Tuple[np.ndarray, np.ndarray]:
    """(bins, frames) MVDR output and its residual noise power 1/(d^H Sigma_n^-1 d).

    window=None uses each frame's nearest window model.
    """
    assignment = model.window_for_frames(noisy.num_frames)
    if window is not None:
        assignment = np.full(noisy.num_frames, window)
    output = np.zeros((noisy.num_bins, noisy.num_frames), dtype=complex)
    residual = np.zeros((noisy.num_bins, noisy.num_frames))
    aggregates = model.aggregate_covariances()
    for k in range(noisy.num_bins):
        frames = noisy.frames(k)
        for w in np.unique(assignment):
            idx = np.flatnonzero(assignment == w)
            d = _steering_at(steering, k, idx)
            d = np.repeat(d[:, None], idx.size, axis=1) if d.ndim == 1 else d.T
            estimate, gain = _distortionless(hermitian_factor(aggregates[w, k]), d, frames[idx].T)
            output[k, idx] = estimate
            residual[k, idx] = 1.0 / gain
    return output, residual


def speech_psd_from_mvdr(noisy: Spectrogram, model: NoiseModel, steering: np.ndarray,
                         psd_window: str = "first") -> np.ndarray:
    """Cepstral speech power of the MVDR output; 'first' uses window 0, 'nearest' each frame's own"""
    if psd_window not in ("first", "nearest"):
        raise ConfigError("psd_window must be 'first' or 'nearest'")
    output, residual = mvdr_spectrogram(noisy, model, steering, 0 if psd_window == "first" else None)
    return estimate_speech_psd(output, residual, noisy.config.sample_rate)


def enhance_spectrogram(noisy: Spectrogram, model: NoiseModel, steering: np.ndarray,
                        method: Union[Method, str], sigma_s2: Optional[np.ndarray] = None,
                        nu: float = constants.DEFAULT_NU, psd_window: str = "first") -> Spectrogram:
    """Apply one estimator to every (bin, frame); returns a single-channel spectrogram.

    steering is (bins, mics) or time-varying (bins, frames, mics). Without
    sigma_s2 the speech power is estimated from the MVDR output.
    """
    method = Method(method)
    if model.num_bins != noisy.num_bins or model.num_mics != noisy.num_channels:
        raise ConfigError(f"noise model ({model.num_bins} bins, {model.num_mics} mics) does not match "
                          f"input ({noisy.num_bins} bins, {noisy.num_channels} mics)")
    steering = np.asarray(steering, dtype=complex)
    if steering.shape[0] != noisy.num_bins or steering.shape[-1] != noisy.num_channels:
        raise ConfigError(f"steering shape {steering.shape} does not match the input")
    if sigma_s2 is None:
        sigma_s2 = (np.ones((noisy.num_bins, noisy.num_frames)) if method == Method.MVDR
                    else speech_psd_from_mvdr(noisy, model, steering, psd_window))
    sigma_s2 = np.broadcast_to(sigma_s2, (noisy.num_bins, noisy.num_frames))

    estimator = ESTIMATORS[method]
    assignment = model.window_for_frames(noisy.num_frames)
    output = np.zeros((noisy.num_bins, noisy.num_frames), dtype=complex)
    for k in range(noisy.num_bins):
        frames = noisy.frames(k)
        for w in np.unique(assignment):
            idx = np.flatnonzero(assignment == w)
            ctx = BinContext(_steering_at(steering, k, idx), model.mixture(k, w),
                             SpeechPrior(nu, sigma_s2[k, idx]))
            output[k, idx] = estimator(ctx, frames[idx])
    logger.debug("Enhanced %d bins x %d frames with %s", noisy.num_bins, noisy.num_frames, method.value)
    return noisy.with_coefficients(output[None])


def enhance(noisy: Spectrogram, model: NoiseModel, steering: np.ndarray, method: Union[Method, str],
            sigma_s2: Optional[np.ndarray] = None, nu: float = constants.DEFAULT_NU,
            psd_window: str = "first") -> np.ndarray:
    """Enhanced mono time signal"""
    enhanced = enhance_spectrogram(noisy, model, steering, method, sigma_s2, nu, psd_window)
    return synthesize(enhanced)[0]


def method_list(names: Optional[List[str]] = None) -> List[Method]:
    return [Method(name) for name in (names or constants.METHODS)]
