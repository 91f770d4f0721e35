import numpy as np
import pytest

from errors import ConfigError
from filters import (ESTIMATORS, BinContext, Method, SpeechPrior, enhance, enhance_spectrogram, estimate_speech_psd,
                     estimate_steering, method_list, mvdr, mvdr_component, mvdr_postfilter,
                     mvdr_spectrogram, mwf, nonlinear_mmse, oracle_speech_psd)
from noisemodel import ComplexGaussianMixture, NoiseModel, ScaledMixtureSpec, build_scaled_mixture
from spatial import ArrayGeometry, spatialize, steering_matrix
from stft import Spectrogram, StftConfig, analyze, synthesize


def _complex(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def _random_instance(rng, make_pd, dim, count, components=1, nu=None):
    covariances = np.stack([make_pd(rng, dim, rng.uniform(1.0, 100.0), rng.uniform(0.1, 10.0))
                            for _ in range(components)])
    weights = rng.dirichlet(np.ones(components)) if components > 1 else np.ones(1)
    prior = SpeechPrior(nu if nu is not None else rng.uniform(0.1, 2.0), rng.uniform(0.01, 100.0, count))
    ctx = BinContext(_complex(rng, dim), ComplexGaussianMixture(weights, covariances), prior)
    return ctx, _complex(rng, count, dim) * np.sqrt(rng.uniform(0.1, 10.0))


class TestMvdr:
    def test_distortionless(self, rng, make_pd):
        d = _complex(rng, 4)
        ctx = BinContext(d, ComplexGaussianMixture([1.0], make_pd(rng, 4)))
        assert mvdr(ctx, d * (2 + 3j)) == pytest.approx(2 + 3j, rel=1e-10)

    def test_delay_and_sum(self, rng):
        ctx = BinContext(np.ones(3), ComplexGaussianMixture([1.0], np.eye(3)))
        y = _complex(rng, 3)
        assert mvdr(ctx, y) == pytest.approx(np.mean(y), rel=1e-9)

    def test_matches_explicit_inverse(self, rng, make_pd):
        ctx, y = _random_instance(rng, make_pd, 5, 20)
        loaded = ctx.mixture.aggregate_covariance + ctx.aggregate_factor.loading * np.eye(5)
        inverse = np.linalg.inv(loaded)
        d = ctx.steering
        expected = (d.conj() @ inverse @ y.T) / (d.conj() @ inverse @ d)
        np.testing.assert_allclose(mvdr(ctx, y), expected, rtol=1e-9)

    def test_component_uses_its_own_covariance(self, rng, make_pd):
        ctx, y = _random_instance(rng, make_pd, 3, 10, components=2)
        single = BinContext(ctx.steering, ComplexGaussianMixture([1.0], ctx.mixture.covariances[1]))
        np.testing.assert_allclose(mvdr_component(ctx, 1, y), mvdr(single, y), rtol=1e-12)

    def test_maximum_likelihood_on_a_grid(self, rng, make_pd):
        offsets = np.linspace(-1e-3, 1e-3, 21)
        grid = (offsets[:, None] + 1j * offsets[None, :]).ravel()
        for _ in range(100):
            ctx, y = _random_instance(rng, make_pd, int(rng.integers(1, 6)), 1)
            y = y[0]
            inverse = np.linalg.inv(ctx.mixture.aggregate_covariance
                                    + ctx.aggregate_factor.loading * np.eye(ctx.mixture.dim))

            def log_likelihood(s):
                residual = y[None, :] - np.outer(np.atleast_1d(s), ctx.steering)
                return -np.einsum('ni,ij,nj->n', residual.conj(), inverse, residual).real

            s_hat = mvdr(ctx, y)
            assert np.max(log_likelihood(s_hat + grid)) <= log_likelihood(s_hat)[0] + 1e-9

    def test_time_varying_steering(self, rng, make_pd):
        steering = _complex(rng, 6, 3)
        ctx = BinContext(steering, ComplexGaussianMixture([1.0], make_pd(rng, 3)))
        y = _complex(rng, 6, 3)
        for i in range(6):
            fixed = BinContext(steering[i], ctx.mixture)
            assert mvdr(ctx, y)[i] == pytest.approx(mvdr(fixed, y[i]), rel=1e-12)


class TestReductions:
    def test_single_component_nonlinear_equals_postfilter(self, rng, make_pd):
        for trial in range(200):
            ctx, y = _random_instance(rng, make_pd, 1 + trial % 5, 50)
            np.testing.assert_allclose(nonlinear_mmse(ctx, y), mvdr_postfilter(ctx, y), rtol=1e-9)

    def test_postfilter_with_unit_shape_is_wiener(self, rng, make_pd):
        for trial in range(200):
            ctx, y = _random_instance(rng, make_pd, 1 + trial % 5, 50, nu=1.0)
            np.testing.assert_allclose(mvdr_postfilter(ctx, y), mwf(ctx, y), rtol=1e-10)

    def test_single_component_unit_shape_nonlinear_is_wiener(self, rng, make_pd):
        ctx, y = _random_instance(rng, make_pd, 3, 50, nu=1.0)
        np.testing.assert_allclose(nonlinear_mmse(ctx, y), mwf(ctx, y), rtol=1e-9)

    def test_equal_power_wiener_halves_mvdr(self, rng, make_pd):
        d = _complex(rng, 3)
        covariance = make_pd(rng, 3)
        residual = 1.0 / np.real(d.conj() @ np.linalg.solve(covariance, d))
        ctx = BinContext(d, ComplexGaussianMixture([1.0], covariance), SpeechPrior(0.25, residual))
        y = _complex(rng, 3)
        assert mwf(ctx, y) == pytest.approx(mvdr(ctx, y) / 2, rel=1e-8)


class TestNonlinearEstimators:
    @pytest.mark.parametrize("estimator", [nonlinear_mmse, mvdr_postfilter, mwf])
    def test_zero_speech_power(self, rng, make_pd, estimator):
        ctx, y = _random_instance(rng, make_pd, 3, 5, components=2)
        ctx.prior = SpeechPrior(0.25, 0.0)
        np.testing.assert_array_equal(estimator(ctx, y), 0.0)

    def test_postfilter_keeps_mvdr_phase(self, rng, make_pd):
        ctx, y = _random_instance(rng, make_pd, 4, 100, components=3)
        out = mvdr_postfilter(ctx, y)
        z = mvdr(ctx, y)
        rotation = out * z.conj()
        assert np.all(rotation.real > 0)
        np.testing.assert_allclose(rotation.imag, 0.0, atol=1e-12 * np.max(np.abs(rotation)))

    def test_postfilter_passes_dominant_speech(self, rng, make_pd):
        mixture = build_scaled_mixture(ScaledMixtureSpec(3, 2.0, make_pd(rng, 3)))
        d = np.exp(1j * rng.uniform(0, 2 * np.pi, 3))
        largest = np.max([np.real(np.vdot(d, np.linalg.solve(c, d))) ** -1 for c in mixture.covariances])
        sigma = 1e6 * largest
        speech = _complex(rng, 20) * np.sqrt(sigma)
        noise = _complex(rng, 20, 3) @ np.linalg.cholesky(mixture.covariances[2]).T
        y = speech[:, None] * d[None, :] + noise
        ctx = BinContext(d, mixture, SpeechPrior(0.25, sigma))
        z = mvdr(ctx, y)
        assert np.max(np.abs(mvdr_postfilter(ctx, y) - z) / np.abs(z)) < 1e-2

    @pytest.mark.parametrize("method", list(Method))
    def test_scaling_equivariance(self, rng, make_pd, method):
        c = 3 - 2j
        ctx, y = _random_instance(rng, make_pd, 3, 30, components=3)
        scaled = BinContext(ctx.steering,
                            ComplexGaussianMixture(ctx.mixture.weights, abs(c) ** 2 * ctx.mixture.covariances),
                            SpeechPrior(ctx.prior.nu, abs(c) ** 2 * ctx.prior.sigma_s2))
        estimator = ESTIMATORS[method]
        np.testing.assert_allclose(estimator(scaled, c * y), c * estimator(ctx, y), rtol=1e-9)

    def test_large_inputs_stay_finite(self, rng, make_pd):
        ctx, y = _random_instance(rng, make_pd, 5, 20, components=4)
        assert np.all(np.isfinite(nonlinear_mmse(ctx, 1e6 * y)))
        assert np.all(np.isfinite(mvdr_postfilter(ctx, 1e6 * y)))

    def test_single_frame_returns_scalar(self, rng, make_pd):
        ctx, y = _random_instance(rng, make_pd, 2, 1, components=2)
        ctx.prior = SpeechPrior(0.25, 1.0)
        assert isinstance(nonlinear_mmse(ctx, y[0]), complex)


class TestBinContext:
    def test_zero_steering_rejected(self):
        with pytest.raises(ConfigError):
            BinContext(np.zeros(2), ComplexGaussianMixture([1.0], np.eye(2)))

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            BinContext(np.ones(3), ComplexGaussianMixture([1.0], np.eye(2)))

    def test_negative_speech_power_rejected(self):
        with pytest.raises(ValueError):
            SpeechPrior(0.25, -1.0)


class TestSpeechPsd:
    def test_stationary_noise_sits_at_floor(self, rng):
        noise_psd = rng.uniform(0.5, 2.0, 257)
        noisy = np.sqrt(noise_psd)[:, None] * np.exp(2j * np.pi * rng.uniform(size=(257, 40)))
        psd = estimate_speech_psd(noisy, noise_psd)
        np.testing.assert_allclose(psd, 1e-6 * np.mean(noise_psd), rtol=1e-6)

    def test_noiseless_speech_keeps_frame_energy(self):
        from processor import AudioProcessor
        clean = AudioProcessor().synthetic_utterance(3, 2.0)
        spec = analyze(clean).channel(0)
        psd = estimate_speech_psd(spec, np.zeros(spec.shape[0]))
        power = np.abs(spec) ** 2
        active = power.sum(axis=0) > 1e-3 * power.sum(axis=0).max()
        np.testing.assert_allclose(psd.sum(axis=0)[active], power.sum(axis=0)[active], rtol=0.2)

    def test_oracle_recursion(self, rng):
        clean = _complex(rng, 4, 30)
        psd = oracle_speech_psd(clean, 0.72)
        power = np.abs(clean) ** 2
        expected = power[:, 0].copy()
        np.testing.assert_allclose(psd[:, 0], expected)
        for i in range(1, 30):
            expected = 0.72 * expected + 0.28 * power[:, i]
            np.testing.assert_allclose(psd[:, i], expected, rtol=1e-12)


class TestSteeringEstimation:
    @pytest.fixture
    def cfg(self):
        return StftConfig(sample_rate=1000, window_ms=8, shift_ms=4)

    def test_rank_one_recovery(self, rng, cfg):
        d = np.exp(1j * rng.uniform(0, 2 * np.pi, (3, cfg.num_bins)))
        d[0] = 1.0
        s = _complex(rng, cfg.num_bins, 60)
        steering = estimate_steering(Spectrogram(d[:, :, None] * s[None], cfg))
        assert steering.shape == (cfg.num_bins, 60, 3)
        np.testing.assert_allclose(steering[:, -1], d.T, atol=1e-6)

    def test_silence_falls_back_to_ones(self, cfg):
        steering = estimate_steering(Spectrogram(np.zeros((2, cfg.num_bins, 5)), cfg))
        np.testing.assert_array_equal(steering, 1.0)

    def test_tracks_a_moving_source(self, cfg):
        d1 = np.array([1.0, 1.0, 1.0])
        d2 = np.array([1.0, -1.0, 1.0])
        path = np.concatenate([np.tile(d1, (30, 1)), np.tile(d2, (70, 1))])
        coefficients = np.repeat(path.T[:, None, :], cfg.num_bins, axis=1)
        steering = estimate_steering(Spectrogram(coefficients, cfg), smoothing=0.9)

        def closer_to(frame, target, other):
            estimate = steering[0, frame]
            return np.linalg.norm(estimate - target) < np.linalg.norm(estimate - other)

        assert closer_to(31, d1, d2)
        assert closer_to(79, d2, d1)


class TestEnhance:
    @pytest.fixture
    def setup(self, rng):
        cfg = StftConfig()
        geometry = ArrayGeometry.linear(2, 0.06)
        angle = np.deg2rad(60.0)
        clean = rng.standard_normal(8000)
        steering = steering_matrix(geometry, angle, cfg.bin_frequencies())
        mixtures = [ComplexGaussianMixture([1.0], np.eye(2)) for _ in range(cfg.num_bins)]
        return cfg, geometry, angle, clean, steering, NoiseModel.from_mixtures(mixtures, cfg)

    def test_noiseless_mvdr_reconstructs_reference(self, setup):
        cfg, geometry, angle, clean, steering, model = setup
        noisy = spatialize(clean, geometry, angle, cfg)
        out = enhance(noisy, model, steering, Method.MVDR)
        reference = synthesize(analyze(clean, cfg))[0]
        assert np.max(np.abs(out - reference)) < 1e-8

    def test_single_component_methods_agree(self, rng, setup):
        cfg, geometry, angle, clean, steering, model = setup
        noisy = spatialize(clean, geometry, angle, cfg)
        noisy = noisy.with_coefficients(noisy.coefficients + _complex(rng, *noisy.coefficients.shape))
        sigma = rng.uniform(0.1, 10.0, (noisy.num_bins, noisy.num_frames))
        joint = enhance_spectrogram(noisy, model, steering, Method.NL_MMSE, sigma)
        postfilter = enhance_spectrogram(noisy, model, steering, "mvdr-mmse", sigma)
        np.testing.assert_allclose(joint.coefficients, postfilter.coefficients, rtol=1e-9)

    @pytest.mark.parametrize("method", list(Method))
    def test_zero_input_gives_zero_output(self, setup, method):
        cfg, _, _, _, steering, model = setup
        noisy = Spectrogram(np.zeros((2, cfg.num_bins, 20)), cfg, 5000)
        out = enhance(noisy, model, steering, method)
        assert out.shape == (5000,)
        np.testing.assert_array_equal(out, 0.0)

    def test_model_mismatch_rejected(self, rng, setup):
        cfg, _, _, _, steering, model = setup
        noisy = Spectrogram(_complex(rng, 3, cfg.num_bins, 10), cfg)
        with pytest.raises(ConfigError):
            enhance_spectrogram(noisy, model, np.ones((cfg.num_bins, 3)), Method.MVDR)

    def test_residual_power(self, rng, setup):
        cfg, _, _, _, steering, model = setup
        noisy = Spectrogram(_complex(rng, 2, cfg.num_bins, 10), cfg)
        _, residual = mvdr_spectrogram(noisy, model, steering)
        # identity noise and unit-modulus steering leave 1/D at the output
        np.testing.assert_allclose(residual, 0.5, rtol=1e-8)

    def test_method_list(self):
        assert method_list() == [Method.MVDR, Method.MWF, Method.MVDR_MMSE, Method.NL_MMSE]
        assert method_list(["mwf"]) == [Method.MWF]
        with pytest.raises(ValueError):
            method_list(["beamformer"])
