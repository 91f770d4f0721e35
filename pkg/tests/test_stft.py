import numpy as np
import pytest

from errors import ConfigError
from stft import Spectrogram, StftConfig, analyze, magnitude_db, synthesize


@pytest.fixture
def cfg():
    return StftConfig()


class TestStftConfig:
    def test_default_framing(self, cfg):
        assert cfg.window_length == 512
        assert cfg.shift == 256
        assert cfg.num_bins == 257
        assert cfg.bin_frequencies()[-1] == pytest.approx(8000.0)

    def test_num_frames_covers_signal(self, cfg):
        assert cfg.num_frames(512) == 1
        assert cfg.num_frames(513) == 2
        assert cfg.num_frames(16000) == 62

    def test_frame_times_are_centers(self, cfg):
        np.testing.assert_allclose(cfg.frame_times(3), [0.016, 0.032, 0.048])

    def test_fractional_window_rejected(self):
        with pytest.raises(ConfigError):
            StftConfig(window_ms=32.03)

    def test_shift_must_divide_window(self):
        with pytest.raises(ConfigError):
            StftConfig(window_ms=32, shift_ms=12)

    def test_cola_violation_raises(self):
        cfg = StftConfig(window_ms=32, shift_ms=32)
        with pytest.raises(ConfigError):
            cfg.synthesis_window()
        with pytest.raises(ConfigError):
            analyze(np.ones(2048), cfg)


class TestAnalyzeSynthesize:
    def test_interior_reconstruction(self, rng, cfg):
        signal = rng.standard_normal((2, 16000))
        spec = analyze(signal, cfg)
        assert spec.coefficients.shape == (2, 257, cfg.num_frames(16000))

        rebuilt = synthesize(spec)
        assert rebuilt.shape == signal.shape
        interior = slice(cfg.window_length, 16000 - cfg.window_length)
        assert np.max(np.abs(rebuilt[:, interior] - signal[:, interior])) < 1e-10

    def test_explicit_length_pads_or_trims(self, rng, cfg):
        spec = analyze(rng.standard_normal(4000), cfg)
        assert synthesize(spec, length=3000).shape == (1, 3000)
        assert synthesize(spec, length=6000).shape == (1, 6000)

    def test_sinusoid_energy_concentrated(self, cfg):
        t = np.arange(16000) / cfg.sample_rate
        spec = analyze(np.sin(2 * np.pi * 1000.0 * t), cfg)
        target_bin = int(round(1000.0 / (cfg.sample_rate / cfg.fft_size)))
        power = np.abs(spec.channel(0)[:, 2:-2]) ** 2
        near = power[target_bin - 2:target_bin + 3].sum(axis=0)
        assert np.all(near / power.sum(axis=0) >= 0.99)

    def test_single_frame_impulse(self, cfg):
        n0 = 100
        k = np.arange(cfg.num_bins)
        spec = Spectrogram(np.exp(-2j * np.pi * k * n0 / cfg.fft_size)[None, :, None], cfg)
        out = synthesize(spec)[0]
        expected = np.zeros(cfg.window_length)
        expected[n0] = cfg.synthesis_window()[n0]
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_channels_are_independent(self, rng, cfg):
        signal = rng.standard_normal((3, 3000))
        joint = analyze(signal, cfg)
        for c in range(3):
            np.testing.assert_allclose(joint.channel(c), analyze(signal[c], cfg).channel(0))

    def test_frame_energy_is_preserved(self, rng, cfg):
        x = rng.standard_normal(4 * cfg.window_length)
        spec = analyze(x, cfg)
        coefficients = spec.coefficients[0]
        power = np.abs(coefficients) ** 2
        one_sided = power[0] + power[-1] + 2 * power[1:-1].sum(axis=0)
        window = cfg.analysis_window()
        for i in range(spec.num_frames - 1):
            frame = x[i * cfg.shift:i * cfg.shift + cfg.window_length] * window
            assert one_sided[i] == pytest.approx(cfg.fft_size * np.sum(frame ** 2), rel=1e-10)

    def test_analysis_is_linear(self, rng, cfg):
        x = rng.standard_normal((2, 8000))
        y = rng.standard_normal((2, 8000))
        combined = analyze(2.5 * x - 0.75 * y, cfg).coefficients
        separate = 2.5 * analyze(x, cfg).coefficients - 0.75 * analyze(y, cfg).coefficients
        np.testing.assert_allclose(combined, separate, atol=1e-10)

    def test_silence_stays_silent(self, cfg):
        spec = analyze(np.zeros((2, 4000)), cfg)
        assert not np.any(spec.coefficients)
        assert not np.any(synthesize(spec))

    def test_short_signal_raises(self, cfg):
        with pytest.raises(ConfigError):
            analyze(np.zeros(cfg.window_length - 1), cfg)

    def test_bin_mismatch_raises(self, rng, cfg):
        spec = analyze(rng.standard_normal(4000), cfg)
        with pytest.raises(ConfigError):
            synthesize(spec, StftConfig(window_ms=64, shift_ms=32))


class TestSpectrogram:
    def test_frames_view(self, rng, cfg):
        spec = analyze(rng.standard_normal((2, 2000)), cfg)
        frames = spec.frames(10)
        assert frames.shape == (spec.num_frames, 2)
        np.testing.assert_array_equal(frames[:, 1], spec.coefficients[1, 10])

    def test_rejects_non_finite(self, cfg):
        coefficients = np.zeros((1, cfg.num_bins, 2), dtype=complex)
        coefficients[0, 3, 1] = np.nan
        with pytest.raises(ConfigError):
            Spectrogram(coefficients, cfg)

    def test_magnitude_floor(self, cfg):
        spec = Spectrogram(np.zeros((1, cfg.num_bins, 2)), cfg)
        assert np.all(magnitude_db(spec) == -120.0)
