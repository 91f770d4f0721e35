"""Complex Gaussian mixture noise: construction, sampling, kurtosis and EM fitting"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ValidationError, field_validator
from scipy.special import logsumexp

import config
import constants
from errors import ConfigError, DegenerateComponent, InsufficientData
from numerics import as_hermitian, hermitian_factor
from spatial import ArrayGeometry, diffuse_covariance
from stft import Spectrogram, StftConfig

logger = logging.getLogger(__name__)

Seed = Union[int, np.random.Generator, None]


@dataclass
class ComplexGaussianMixture:
    """Zero-mean circular complex Gaussian mixture of one frequency bin"""

    weights: np.ndarray
    covariances: np.ndarray

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        covariances = np.asarray(self.covariances, dtype=complex)
        if covariances.ndim == 2:
            covariances = covariances[None]
        if covariances.ndim != 3 or covariances.shape[0] != self.weights.size:
            raise ValueError(f"need one covariance per weight, got {covariances.shape} for {self.weights.size} weights")
        if np.any(self.weights <= 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must be positive and sum to one")
        self.covariances = as_hermitian(covariances)

    @property
    def num_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.covariances.shape[-1]

    @property
    def aggregate_covariance(self) -> np.ndarray:
        """Sigma_n = sum_m c_m Sigma_m"""
        return np.einsum('m,mij->ij', self.weights, self.covariances)

    def scaled(self, gain: float) -> "ComplexGaussianMixture":
        """Mixture of the noise multiplied by a real gain"""
        return ComplexGaussianMixture(self.weights, self.covariances * gain ** 2)


@dataclass(frozen=True)
class ScaledMixtureSpec:
    num_components: int
    scale_factor: float
    base_covariance: np.ndarray


def _scale_powers(num_components: int, scale_factor: float) -> Tuple[np.ndarray, float]:
    if num_components < 1:
        raise ValueError("a mixture needs at least one component")
    if scale_factor <= 0:
        raise ValueError("scale factor must be positive")
    powers = float(scale_factor) ** np.arange(num_components)
    return powers, float(np.mean(powers))


def build_scaled_mixture(spec: ScaledMixtureSpec) -> ComplexGaussianMixture:
    """Equal-weight mixture with Sigma_m = b^(m-1)/r * base and r = sum_m c_m b^(m-1)"""
    powers, r = _scale_powers(spec.num_components, spec.scale_factor)
    base = np.asarray(spec.base_covariance, dtype=complex)
    weights = np.full(spec.num_components, 1.0 / spec.num_components)
    return ComplexGaussianMixture(weights, (powers / r)[:, None, None] * base[None])


def kurtosis_factor(num_components: int, scale_factor: float) -> float:
    """Factor q by which the scaled mixture raises the Gaussian kurtosis 2D(2+2D)"""
    powers, r = _scale_powers(num_components, scale_factor)
    return float(np.mean(powers ** 2) / r ** 2)


def sample(mix: ComplexGaussianMixture, count: int, rng_seed: Seed = None) -> np.ndarray:
    """Draw (count, D) observations; identical seeds give identical draws"""
    rng = np.random.default_rng(rng_seed)
    labels = rng.choice(mix.num_components, size=count, p=mix.weights)
    u = (rng.standard_normal((count, mix.dim)) + 1j * rng.standard_normal((count, mix.dim))) / np.sqrt(2.0)
    draws = np.zeros((count, mix.dim), dtype=complex)
    for m in range(mix.num_components):
        selected = labels == m
        if not np.any(selected) or not np.any(mix.covariances[m]):
            continue
        lower = hermitian_factor(mix.covariances[m]).lower
        draws[selected] = u[selected] @ lower.T
    return draws


def sample_kurtosis(samples: np.ndarray) -> float:
    """Empirical mean of (2 z^H C^-1 z)^2 with sample mean and covariance"""
    samples = np.atleast_2d(np.asarray(samples, dtype=complex))
    count, dim = samples.shape
    if count < dim ** 2:
        raise InsufficientData(f"kurtosis of {dim}-dim data needs at least {dim ** 2} samples")
    centered = samples - samples.mean(axis=0)
    covariance = centered.T @ centered.conj() / count
    quadratic = hermitian_factor(covariance, allow_loading=False).quadratic(centered.T)
    return float(np.mean((2.0 * quadratic) ** 2))


def sample_scaled_noise(geometry: ArrayGeometry, num_components: int, num_frames: int,
                        stft_cfg: StftConfig = StftConfig(),
                        scale_factor: float = constants.DEFAULT_SCALE_FACTOR,
                        white_fraction: float = constants.DIFFUSE_WHITE_FRACTION,
                        rng_seed: Seed = None) -> Tuple[np.ndarray, List[ComplexGaussianMixture]]:
    """STFT-domain heavy-tailed diffuse noise, (mics, bins, frames), with its per-bin mixtures"""
    streams = np.random.SeedSequence(rng_seed if isinstance(rng_seed, int) else None).spawn(stft_cfg.num_bins)
    mixtures = []
    coefficients = np.zeros((geometry.num_mics, stft_cfg.num_bins, num_frames), dtype=complex)
    for k, frequency in enumerate(stft_cfg.bin_frequencies()):
        base = diffuse_covariance(geometry, frequency, white_fraction)
        mix = build_scaled_mixture(ScaledMixtureSpec(num_components, scale_factor, base))
        coefficients[:, k, :] = sample(mix, num_frames, np.random.default_rng(streams[k])).T
        mixtures.append(mix)
    return coefficients, mixtures


@dataclass
class EmOptions:
    max_iter: int = config.EM_MAX_ITER
    tol: float = config.EM_TOL
    restarts: int = config.EM_RESTARTS
    loading: float = config.EM_LOADING
    weight_floor: float = config.EM_WEIGHT_FLOOR
    monotone_tol: float = config.EM_MONOTONE_TOL
    seed: int = 0


@dataclass
class EmResult:
    """Fitted mixture of one bin with its EM trace"""

    mixture: ComplexGaussianMixture
    log_likelihood: float
    history: List[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    monotone: bool = True


class _BatchEm:
    """MAP-EM over a batch of independent bins, data shaped (B, n, D).

    The M-step adds tau*I to every scatter matrix and alpha to every soft count,
    which is exact EM for the objective
        LL + alpha * sum_m log c_m - tau * sum_m tr(Sigma_m^-1),
    so the monitored objective never decreases. alpha is chosen so that no
    weight falls below the configured floor.
    """

    def __init__(self, data: np.ndarray, num_components: int, opts: EmOptions):
        self.data = data
        self.num_components = num_components
        self.opts = opts
        batch, count, dim = data.shape
        if count < num_components * dim:
            raise InsufficientData(f"EM with {num_components} components in {dim} dims needs "
                                   f"{num_components * dim} frames, got {count}")
        if num_components * opts.weight_floor >= 1.0:
            raise ValueError("weight floor too large for the number of components")
        scale = np.einsum('bnd,bnd->b', data, data.conj()).real / (count * dim)
        if np.any(scale <= 0):
            raise DegenerateComponent(f"{int(np.sum(scale <= 0))} bin(s) carry no energy")
        self.tau = opts.loading * scale * count
        self.alpha = opts.weight_floor * count / (1.0 - num_components * opts.weight_floor)
        self.eye = np.eye(dim)

    def maximize(self, resp: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Weights (B, M) and covariances (B, M, D, D) from responsibilities (B, M, n)"""
        count = self.data.shape[1]
        soft = resp.sum(axis=-1)
        weights = (soft + self.alpha) / (count + self.num_components * self.alpha)
        scatter = np.einsum('bmn,bni,bnj->bmij', resp, self.data, self.data.conj())
        scatter = scatter + self.tau[:, None, None, None] * self.eye
        covariances = scatter / np.maximum(soft, np.finfo(float).tiny)[..., None, None]
        return weights, as_hermitian(covariances)

    def expect(self, weights: np.ndarray, covariances: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Responsibilities, per-bin log-likelihood and per-bin penalized objective"""
        dim = self.data.shape[-1]
        try:
            lower = np.linalg.cholesky(covariances)
        except np.linalg.LinAlgError as e:
            raise DegenerateComponent("component covariance lost positive definiteness") from e
        logdet = 2.0 * np.sum(np.log(np.einsum('bmii->bmi', lower).real), axis=-1)
        whitened = np.linalg.solve(lower, np.swapaxes(self.data, 1, 2)[:, None])
        quadratic = np.sum(np.abs(whitened) ** 2, axis=-2)
        log_joint = (np.log(weights)[..., None] - dim * np.log(np.pi)
                     - logdet[..., None] - quadratic)
        log_marginal = logsumexp(log_joint, axis=1)
        resp = np.exp(log_joint - log_marginal[:, None])

        inverse_lower = np.linalg.solve(lower, np.broadcast_to(self.eye, lower.shape))
        trace_inverse = np.sum(np.abs(inverse_lower) ** 2, axis=(-2, -1))
        log_likelihood = log_marginal.sum(axis=-1)
        objective = (log_likelihood + self.alpha * np.log(weights).sum(axis=-1)
                     - self.tau * trace_inverse.sum(axis=-1))
        return resp, log_likelihood, objective

    def run(self, rng: np.random.Generator):
        batch, count, _ = self.data.shape
        resp = np.moveaxis(rng.dirichlet(np.ones(self.num_components), size=(batch, count)), -1, 1)
        weights, covariances = self.maximize(resp)
        history: List[np.ndarray] = []
        converged = np.zeros(batch, dtype=bool)
        monotone = np.ones(batch, dtype=bool)
        previous = None
        for _ in range(self.opts.max_iter):
            resp, log_likelihood, objective = self.expect(weights, covariances)
            history.append(objective)
            if previous is not None:
                drop = objective < previous - self.opts.monotone_tol * np.abs(previous)
                if np.any(drop):
                    logger.warning("EM objective decreased in %d bin(s)", int(np.sum(drop)))
                    monotone &= ~drop
                converged |= np.abs(objective - previous) < self.opts.tol * np.abs(previous)
                if np.all(converged):
                    break
            previous = objective
            weights, covariances = self.maximize(resp)
        return weights, covariances, log_likelihood, np.array(history).T, converged, monotone


def em_fit_batch(frames: np.ndarray, num_components: int,
                 opts: Optional[EmOptions] = None) -> List[EmResult]:
    """Fit one mixture per leading index of frames shaped (B, n, D); keeps the best restart per bin"""
    opts = opts or EmOptions()
    data = np.asarray(frames, dtype=complex)
    if data.ndim != 3:
        raise ValueError(f"em_fit_batch expects (bins, frames, mics), got {data.shape}")
    engine = _BatchEm(data, num_components, opts)
    rng = np.random.default_rng(opts.seed)
    restarts = 1 if num_components == 1 else opts.restarts

    best = None
    for restart in range(restarts):
        weights, covariances, log_likelihood, history, converged, monotone = engine.run(rng)
        final = history[:, -1]
        if best is None:
            best = [weights, covariances, log_likelihood, history, converged, monotone, final]
            continue
        better = final > best[6]
        logger.debug("EM restart %d improved %d of %d bins", restart, int(better.sum()), better.size)
        best[0] = np.where(better[:, None], weights, best[0])
        best[1] = np.where(better[:, None, None, None], covariances, best[1])
        best[2] = np.where(better, log_likelihood, best[2])
        best[4] = np.where(better, converged, best[4])
        best[5] = np.where(better, monotone, best[5])
        best[6] = np.where(better, final, best[6])
        traces = [best[3][b] if not better[b] else history[b] for b in range(better.size)]
        best[3] = traces

    weights, covariances, log_likelihood, history, converged, monotone, _ = best
    if not np.all(converged):
        logger.debug("EM hit %d iterations without converging in %d bin(s)",
                     opts.max_iter, int(np.sum(~converged)))
    results = []
    for b in range(data.shape[0]):
        trace = [float(v) for v in history[b]]
        results.append(EmResult(
            mixture=ComplexGaussianMixture(weights[b], covariances[b]),
            log_likelihood=float(log_likelihood[b]),
            history=trace,
            iterations=len(trace),
            converged=bool(converged[b]),
            monotone=bool(monotone[b]),
        ))
    return results


def em_fit(frames: np.ndarray, num_components: int, opts: Optional[EmOptions] = None) -> EmResult:
    """Fit a zero-mean complex Gaussian mixture to (n, D) observations of one bin"""
    frames = np.asarray(frames, dtype=complex)
    if frames.ndim != 2:
        raise ValueError(f"em_fit expects (frames, mics), got {frames.shape}")
    return em_fit_batch(frames[None], num_components, opts)[0]


def match_components(estimated: np.ndarray, reference: np.ndarray) -> List[int]:
    """Greedy Frobenius matching; entry i is the estimated component paired with reference i"""
    estimated = np.asarray(estimated)
    reference = np.asarray(reference)
    distance = np.linalg.norm(reference[:, None] - estimated[None], axis=(-2, -1))
    assignment = [-1] * reference.shape[0]
    for _ in range(min(reference.shape[0], estimated.shape[0])):
        i, j = np.unravel_index(np.argmin(distance), distance.shape)
        assignment[i] = int(j)
        distance[i, :] = np.inf
        distance[:, j] = np.inf
    return assignment


class _BinDocument(BaseModel):
    weights: List[float]
    covariances: List[List[List[Tuple[float, float]]]]


class _WindowDocument(BaseModel):
    center: float
    bins: List[_BinDocument]


class NoiseModelDocument(BaseModel):
    """JSON form of a fitted noise model"""

    schema_version: int = constants.MODEL_SCHEMA_VERSION
    sample_rate: int = constants.DEFAULT_SAMPLE_RATE
    window_ms: float = constants.DEFAULT_WINDOW_MS
    shift_ms: float = constants.DEFAULT_SHIFT_MS
    num_components: int
    num_mics: int
    windows: List[_WindowDocument]

    @field_validator("schema_version")
    @classmethod
    def _supported_version(cls, value: int) -> int:
        if value != constants.MODEL_SCHEMA_VERSION:
            raise ValueError(f"unsupported noise model schema_version {value}")
        return value


@dataclass
class NoiseModel:
    """Per-window, per-bin mixtures; weights (W, K, M), covariances (W, K, M, D, D)"""

    weights: np.ndarray
    covariances: np.ndarray
    window_centers: np.ndarray
    stft: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=float)
        self.covariances = np.asarray(self.covariances, dtype=complex)
        self.window_centers = np.asarray(self.window_centers, dtype=float).reshape(-1)
        if self.weights.ndim != 3 or self.covariances.shape[:3] != self.weights.shape:
            raise ConfigError("noise model weights and covariances disagree in shape")
        if self.window_centers.size != self.weights.shape[0]:
            raise ConfigError("one window center per window required")

    @classmethod
    def from_mixtures(cls, mixtures: Sequence[ComplexGaussianMixture],
                      stft: StftConfig = StftConfig()) -> "NoiseModel":
        """Single-window model from one mixture per bin"""
        weights = np.stack([m.weights for m in mixtures])[None]
        covariances = np.stack([m.covariances for m in mixtures])[None]
        return cls(weights, covariances, np.zeros(1), stft)

    @property
    def num_windows(self) -> int:
        return self.weights.shape[0]

    @property
    def num_bins(self) -> int:
        return self.weights.shape[1]

    @property
    def num_components(self) -> int:
        return self.weights.shape[2]

    @property
    def num_mics(self) -> int:
        return self.covariances.shape[-1]

    def mixture(self, k: int, window: int = 0) -> ComplexGaussianMixture:
        return ComplexGaussianMixture(self.weights[window, k], self.covariances[window, k])

    def aggregate_covariances(self) -> np.ndarray:
        """(W, K, D, D) aggregate covariance of every window and bin"""
        return np.einsum('wkm,wkmij->wkij', self.weights, self.covariances)

    def window_for_frame(self, frame: int) -> int:
        """Window whose center is nearest to the frame; ties go to the earlier window"""
        return int(np.argmin(np.abs(self.window_centers - frame)))

    def window_for_frames(self, num_frames: int) -> np.ndarray:
        distance = np.abs(self.window_centers[None, :] - np.arange(num_frames)[:, None])
        return np.argmin(distance, axis=1)

    def scaled(self, gain: float) -> "NoiseModel":
        return NoiseModel(self.weights, self.covariances * gain ** 2, self.window_centers, self.stft)

    def to_document(self) -> NoiseModelDocument:
        windows = []
        for w in range(self.num_windows):
            bins = []
            for k in range(self.num_bins):
                stacked = np.stack([self.covariances[w, k].real, self.covariances[w, k].imag], axis=-1)
                bins.append(_BinDocument(weights=self.weights[w, k].tolist(), covariances=stacked.tolist()))
            windows.append(_WindowDocument(center=float(self.window_centers[w]), bins=bins))
        return NoiseModelDocument(
            sample_rate=self.stft.sample_rate,
            window_ms=self.stft.window_ms,
            shift_ms=self.stft.shift_ms,
            num_components=self.num_components,
            num_mics=self.num_mics,
            windows=windows,
        )

    @classmethod
    def from_document(cls, document: NoiseModelDocument) -> "NoiseModel":
        weights = np.array([[b.weights for b in w.bins] for w in document.windows], dtype=float)
        parts = np.array([[b.covariances for b in w.bins] for w in document.windows], dtype=float)
        expected = (document.num_components, document.num_mics, document.num_mics, 2)
        if weights.ndim != 3 or parts.shape[2:] != expected:
            raise ConfigError("noise model document does not match its declared dimensions")
        stft = StftConfig(document.sample_rate, document.window_ms, document.shift_ms)
        centers = [w.center for w in document.windows]
        return cls(weights, parts[..., 0] + 1j * parts[..., 1], centers, stft)

    def to_json(self) -> str:
        return self.to_document().model_dump_json()

    @classmethod
    def from_json(cls, text: str) -> "NoiseModel":
        try:
            document = NoiseModelDocument.model_validate_json(text)
        except ValidationError as e:
            raise ConfigError(f"invalid noise model document: {e}") from e
        return cls.from_document(document)

    def save(self, path: str) -> None:
        with open(path, 'w') as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path: str) -> "NoiseModel":
        with open(path, 'r') as f:
            return cls.from_json(f.read())


def window_layout(num_frames: int, window_frames: int, hop: int) -> List[int]:
    """Window start frames; the last window is aligned to the end of the signal"""
    starts = list(range(0, num_frames - window_frames + 1, hop))
    if starts[-1] + window_frames < num_frames:
        starts.append(num_frames - window_frames)
    return starts


def _fill_silent(weights: np.ndarray, covariances: np.ndarray, silent: np.ndarray,
                 floor: float) -> None:
    """Give silent (window, bin) cells the parameters of the nearest active window of their bin.

    Bins without any active window get equal weights and floor * I covariances.
    """
    num_components, dim = covariances.shape[2], covariances.shape[-1]
    for w, k in zip(*np.nonzero(silent)):
        active = np.flatnonzero(~silent[:, k])
        if active.size:
            source = active[np.argmin(np.abs(active - w))]
            weights[w, k] = weights[source, k]
            covariances[w, k] = covariances[source, k]
        else:
            weights[w, k] = 1.0 / num_components
            covariances[w, k] = floor * np.eye(dim)


def em_fit_windowed(noise: Spectrogram, window_ms: Optional[float], overlap: float,
                    num_components: int, opts: Optional[EmOptions] = None) -> NoiseModel:
    """Independent EM fit per bin and per window; window_ms=None fits the full signal.

    Windows of a bin without any energy (digital silence) are not fitted; they
    take over the parameters of the nearest active window of the same bin.
    """
    if not 0.0 <= overlap < 1.0:
        raise ConfigError("overlap must lie in [0, 1)")
    opts = opts or EmOptions()
    num_frames = noise.num_frames
    if window_ms is None:
        window_frames = num_frames
    else:
        window_frames = min(int(round(window_ms / noise.config.shift_ms)), num_frames)
    needed = num_components * noise.num_channels
    if window_frames < needed:
        raise InsufficientData(f"EM window of {window_frames} frames is shorter than "
                               f"{num_components} x {noise.num_channels} = {needed}")
    hop = max(1, int(round(window_frames * (1.0 - overlap))))
    starts = window_layout(num_frames, window_frames, hop)

    observations = np.transpose(noise.coefficients, (1, 2, 0))
    batch = np.concatenate([observations[:, s:s + window_frames] for s in starts])
    energy = np.einsum('bnd,bnd->b', batch, batch.conj()).real
    silent = energy <= 0
    if np.all(silent):
        raise DegenerateComponent("noise signal carries no energy")
    if np.any(silent):
        logger.warning("%d of %d window/bin cells are silent; reusing neighbouring windows",
                       int(silent.sum()), silent.size)
    logger.info("Fitting %d-component mixtures on %d bins x %d windows of %d frames",
                num_components, noise.num_bins, len(starts), window_frames)
    results = em_fit_batch(batch[~silent], num_components, opts)

    shape = (len(starts), noise.num_bins)
    dim = noise.num_channels
    weights = np.zeros((silent.size, num_components))
    covariances = np.zeros((silent.size, num_components, dim, dim), dtype=complex)
    weights[~silent] = np.stack([r.mixture.weights for r in results])
    covariances[~silent] = np.stack([r.mixture.covariances for r in results])
    weights = weights.reshape(shape + (num_components,))
    covariances = covariances.reshape(shape + (num_components, dim, dim))
    floor = opts.loading * float(np.mean(energy[~silent])) / (window_frames * dim)
    _fill_silent(weights, covariances, silent.reshape(shape), floor)
    centers = np.array(starts, dtype=float) + (window_frames - 1) / 2.0
    return NoiseModel(weights, covariances, centers, noise.config)
