"""Experiment orchestration: heavy-tailed diffuse noise, directional interferers and recorded pairs"""

import hashlib
import os
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

import constants
from analytics import ResultsAnalytics
from config import ExperimentConfig
from errors import ConfigError
from filters import (Method, enhance, estimate_steering, method_list, oracle_speech_psd,
                     speech_psd_from_mvdr)
from indexing import NoiseModelStore
from logger import ExperimentLogger
from metrics import si_sdr_segmental
from monitor import PerformanceMonitor
from noisemodel import EmOptions, NoiseModel, em_fit_windowed, kurtosis_factor, sample_scaled_noise
from processor import AudioProcessor
from spatial import ArrayGeometry, Scenario, directivity, mvdr_weights, spatialize, steering_matrix
from stft import Spectrogram, StftConfig, analyze, synthesize
from utils import config_hash, ensure_directory, format_timestamp, package_versions, save_json

CONDITIONS = {
    "heavy_tailed": ["components", "kurtosis_factor"],
    "interferer_speech": ["source"],
    "gaussian_bursts": ["source"],
    "external_pair": ["components"],
}


def burst_sources(num_samples: int, sample_rate: int, burst_ms: float, num_sources: int,
                  seed: int) -> np.ndarray:
    """(sources, samples) of non-overlapping unit-variance white bursts, source index cycling"""
    rng = np.random.default_rng(seed)
    length = int(round(burst_ms * sample_rate / 1000.0))
    sources = np.zeros((num_sources, num_samples))
    for j, start in enumerate(range(0, num_samples, length)):
        end = min(start + length, num_samples)
        sources[j % num_sources, start:end] = rng.standard_normal(end - start)
    return sources


def component_directivity(model: NoiseModel, steering: np.ndarray, geometry: ArrayGeometry,
                          window: int = 0, include_aggregate: bool = False) -> pd.DataFrame:
    """Directivity of the MVDR beamformer of every mixture component, stacked with a component column"""
    frequencies = model.stft.bin_frequencies()
    covariances = {f"component_{m}": model.covariances[window, :, m] for m in range(model.num_components)}
    if include_aggregate:
        covariances = {"aggregate": model.aggregate_covariances()[window], **covariances}
    frames = []
    for label, stack in covariances.items():
        weights = np.stack([mvdr_weights(stack[k], steering[k]) for k in range(model.num_bins)])
        frame = directivity(weights, geometry, freq_grid=frequencies).to_frame()
        frame.insert(0, "component", label)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


class ExperimentHarness:
    """Runs one configured experiment end to end and writes its tables"""

    def __init__(self, cfg: ExperimentConfig, run_id: Optional[str] = None):
        self.cfg = cfg
        self.run_id = run_id or f"{cfg.experiment}_{cfg.seed}"
        ensure_directory(cfg.output_dir)
        self.logger = ExperimentLogger(self.run_id, os.path.join(cfg.output_dir, "logs"))
        self.monitor = PerformanceMonitor()
        self.audio = AudioProcessor(cfg.sample_rate)
        self.stft = StftConfig(sample_rate=cfg.sample_rate)
        self.store = NoiseModelStore(cfg.cache_dir) if cfg.cache_dir else None
        self.methods = method_list()
        self.rows: List[Dict] = []
        self.outputs: Dict[str, str] = {}

    def em_options(self) -> EmOptions:
        return EmOptions(max_iter=self.cfg.em_max_iter, restarts=self.cfg.em_restarts, seed=self.cfg.seed)

    def geometry(self) -> ArrayGeometry:
        array = self.cfg.resolved_array()
        return ArrayGeometry.linear(array.num_mics, array.spacing, array.speed_of_sound)

    def scenario(self) -> Scenario:
        if self.cfg.interferer_angles_deg is None:
            angles = [constants.interferer_angle(i) for i in range(constants.NUM_INTERFERERS)]
        else:
            angles = [float(np.deg2rad(a)) % (2 * np.pi) for a in self.cfg.interferer_angles_deg]
        return Scenario(self.geometry(), float(np.deg2rad(self.cfg.target_angle_deg)) % (2 * np.pi),
                        angles, self.cfg.snr_db or 0.0, self.stft)

    def clean_utterances(self) -> List[Tuple[str, np.ndarray]]:
        """(name, mono signal) of the configured clean files or synthetic stand-ins"""
        if self.cfg.clean_files:
            return [(os.path.basename(path), self.audio.load_mono(path, self.cfg.max_seconds))
                    for path in self.cfg.clean_files]
        return [(f"synthetic_{i}", self.audio.synthetic_utterance(self.cfg.seed + i, self.cfg.max_seconds))
                for i in range(self.cfg.num_utterances)]

    def fit_noise(self, noise: Spectrogram, components: int, window_ms: Optional[float]) -> NoiseModel:
        """EM fit of the noise spectrogram, served from the model cache when possible"""
        description = {
            "noise": hashlib.sha256(noise.coefficients.tobytes()).hexdigest(),
            "components": components,
            "window_ms": window_ms,
            "overlap": self.cfg.em_overlap,
            "options": self.em_options().__dict__,
        }
        if self.store is not None:
            cached = self.store.get(description)
            if cached is not None:
                return cached
        with self.monitor.track("fit"):
            model = em_fit_windowed(noise, window_ms, self.cfg.em_overlap, components, self.em_options())
        self.logger.log_fit(components, model.num_bins, model.num_windows, self.monitor.metrics["fit"][-1])
        if self.store is not None:
            self.store.put(description, model)
        return model

    def _score(self, item: str, method: str, estimate: np.ndarray, target: np.ndarray,
               interference: np.ndarray, condition: Dict) -> None:
        with self.monitor.track("metrics"):
            report = si_sdr_segmental(estimate, target, interference, self.cfg.sample_rate)
        row = {"experiment": self.cfg.experiment, **condition, "item": item, "method": method,
               **report.to_dict()}
        self.logger.log_metrics(item, method, report.to_dict())
        self.rows.append(row)

    def _run_methods(self, item: str, noisy: Spectrogram, model: NoiseModel, steering: np.ndarray,
                     target: np.ndarray, interference: np.ndarray, condition: Dict,
                     sigma_s2: Optional[np.ndarray] = None) -> None:
        reference = synthesize(noisy.with_coefficients(noisy.coefficients[:1]))[0]
        self._score(item, constants.NOISY_LABEL, reference, target, interference, condition)
        if sigma_s2 is None:
            with self.monitor.track("speech_psd"):
                sigma_s2 = speech_psd_from_mvdr(noisy, model, steering, self.cfg.psd_window)
        for method in self.methods:
            with self.monitor.track(f"enhance_{method.value}"):
                estimate = enhance(noisy, model, steering, method,
                                   None if method == Method.MVDR else sigma_s2,
                                   self.cfg.nu, self.cfg.psd_window)
            self.logger.log_enhancement(item, method.value, self.monitor.metrics[f"enhance_{method.value}"][-1])
            self._score(item, method.value, estimate, target, interference, condition)

    def _oracle_psd(self, clean: Spectrogram) -> Optional[np.ndarray]:
        return oracle_speech_psd(clean.channel(0)) if self.cfg.speech_psd == "oracle" else None

    def run_heavy_tailed(self) -> pd.DataFrame:
        """Diffuse heavy-tailed noise at the configured SNR, oracle mixture parameters"""
        geometry = self.geometry()
        target_angle = float(np.deg2rad(self.cfg.target_angle_deg)) % (2 * np.pi)
        steering = steering_matrix(geometry, target_angle, self.stft.bin_frequencies())
        for u, (item, clean) in enumerate(self.clean_utterances()):
            clean_spec = spatialize(clean, geometry, target_angle, self.stft)
            target = synthesize(clean_spec.with_coefficients(clean_spec.coefficients[:1]))[0]
            for components in self.cfg.resolved_components():
                with self.monitor.track("simulate"):
                    noise, mixtures = sample_scaled_noise(
                        geometry, components, clean_spec.num_frames, self.stft,
                        self.cfg.scale_factor, self.cfg.white_fraction,
                        rng_seed=self.cfg.seed * 1000 + u * 10 + components)
                    noise_time = synthesize(Spectrogram(noise[:1], self.stft, clean_spec.num_samples))[0]
                    gain = self.audio.noise_gain(target, noise_time, self.cfg.snr_db or 0.0)
                    noisy = clean_spec.with_coefficients(clean_spec.coefficients + gain * noise)
                    model = NoiseModel.from_mixtures(mixtures, self.stft).scaled(gain)
                condition = {"components": components,
                             "kurtosis_factor": kurtosis_factor(components, self.cfg.scale_factor)}
                self._run_methods(item, noisy, model, steering, target, gain * noise_time,
                                  condition, self._oracle_psd(clean_spec))
        return pd.DataFrame(self.rows)

    def interferer_signals(self, num_samples: int, source_type: str) -> np.ndarray:
        """(interferers, samples) source signals before spatialization"""
        count = len(self.scenario().interferer_angles)
        if source_type == "gaussian_bursts":
            return burst_sources(num_samples, self.cfg.sample_rate, self.cfg.burst_ms, count, self.cfg.seed)
        signals = []
        for i in range(count):
            if self.cfg.interferer_files:
                signal = self.audio.load_mono(self.cfg.interferer_files[i % len(self.cfg.interferer_files)])
            else:
                signal = self.audio.synthetic_utterance(self.cfg.seed + 1000 + i, num_samples / self.cfg.sample_rate)
            signal = np.resize(signal, num_samples)
            signals.append(signal / max(np.std(signal), np.finfo(float).tiny))
        return np.stack(signals)

    def run_interferers(self, source_type: str = "speech") -> pd.DataFrame:
        """Five directional interferers around a two-microphone array, EM-fitted mixtures"""
        if source_type not in ("speech", "gaussian_bursts"):
            raise ConfigError(f"unknown interferer source type '{source_type}'")
        scenario = self.scenario()
        steering = scenario.target_steering()
        window_ms = self.cfg.resolved_window_ms() if source_type == "speech" else self.cfg.em_window_ms
        components = self.cfg.resolved_components()[0]
        for u, (item, clean) in enumerate(self.clean_utterances()):
            with self.monitor.track("simulate"):
                clean_spec = spatialize(clean, scenario.geometry, scenario.target_angle, self.stft)
                target = synthesize(clean_spec.with_coefficients(clean_spec.coefficients[:1]))[0]
                sources = self.interferer_signals(clean.size, source_type)
                noise = sum(spatialize(sources[i], scenario.geometry, angle, self.stft).coefficients
                            for i, angle in enumerate(scenario.interferer_angles))
                noise_spec = clean_spec.with_coefficients(noise)
                noise_time = synthesize(noise_spec.with_coefficients(noise[:1]))[0]
                gain = self.audio.noise_gain(target, noise_time, scenario.snr_db)
                noise_spec = noise_spec.with_coefficients(gain * noise)
                noisy = clean_spec.with_coefficients(clean_spec.coefficients + gain * noise)
            model = self.fit_noise(noise_spec, components, window_ms)
            self._run_methods(item, noisy, model, steering, target, gain * noise_time,
                              {"source": source_type}, self._oracle_psd(clean_spec))
            if u == 0:
                path = os.path.join(self.cfg.output_dir, f"{self.run_id}_directivity.csv")
                component_directivity(model, steering, scenario.geometry).to_csv(path, index=False)
                self.outputs["directivity"] = path
                self.logger.log_output("directivity", path)
        return pd.DataFrame(self.rows)

    def external_pairs(self) -> List[Tuple[str, np.ndarray, np.ndarray]]:
        """(name, clean, noise) multichannel pairs; synthetic burst scenes without files"""
        if self.cfg.clean_files:
            pairs = []
            for clean_path, noise_path in zip(self.cfg.clean_files, self.cfg.noise_files):
                clean = self.audio.load(clean_path, self.cfg.max_seconds)
                noise = self.audio.load(noise_path, self.cfg.max_seconds)
                if clean.shape != noise.shape:
                    raise ConfigError(f"{clean_path} and {noise_path} are not aligned: {clean.shape} vs {noise.shape}")
                pairs.append((os.path.basename(clean_path), clean, noise))
            return pairs
        scenario = self.scenario()
        pairs = []
        for item, clean in self.clean_utterances():
            clean_multi = synthesize(spatialize(clean, scenario.geometry, scenario.target_angle, self.stft))
            sources = burst_sources(clean.size, self.cfg.sample_rate, self.cfg.burst_ms,
                                    len(scenario.interferer_angles), self.cfg.seed)
            noise = sum(synthesize(spatialize(sources[i], scenario.geometry, angle, self.stft))
                        for i, angle in enumerate(scenario.interferer_angles))
            pairs.append((item, clean_multi, noise))
        return pairs

    def run_external_pair(self) -> pd.DataFrame:
        """Recorded clean/noise pairs: windowed EM noise models and steering from clean speech"""
        for item, clean, noise in self.external_pairs():
            if self.cfg.snr_db is not None:
                noise = noise * self.audio.noise_gain(clean[0], noise[0], self.cfg.snr_db)
            clean_spec = analyze(clean, self.stft)
            noise_spec = analyze(noise, self.stft)
            noisy = analyze(clean + noise, self.stft)
            with self.monitor.track("steering"):
                steering = estimate_steering(clean_spec)
            for components in self.cfg.resolved_components():
                model = self.fit_noise(noise_spec, components, self.cfg.resolved_window_ms())
                self._run_methods(item, noisy, model, steering, clean[0], noise[0],
                                  {"components": components}, self._oracle_psd(clean_spec))
        return pd.DataFrame(self.rows)

    def write_manifest(self) -> str:
        path = os.path.join(self.cfg.output_dir, f"{self.run_id}_manifest.json")
        settings = self.cfg.model_dump()
        save_json({
            "run_id": self.run_id,
            "created": format_timestamp(),
            "config": settings,
            "config_hash": config_hash(settings),
            "seed": self.cfg.seed,
            "versions": package_versions(),
            "timings": self.monitor.get_stats(),
            "average_seconds": self.monitor.get_average_times(),
            "outputs": self.outputs,
        }, path)
        return path

    def run(self) -> pd.DataFrame:
        """Run the configured experiment and write results, summary, gap and manifest files"""
        self.logger.log_run_start(self.cfg.experiment, self.cfg.seed)
        self.rows = []
        self.monitor.reset()
        try:
            if self.cfg.experiment == "heavy_tailed":
                self.run_heavy_tailed()
            elif self.cfg.experiment == "interferer_speech":
                self.run_interferers("speech")
            elif self.cfg.experiment == "gaussian_bursts":
                self.run_interferers("gaussian_bursts")
            else:
                self.run_external_pair()

            analytics = ResultsAnalytics(self.rows, CONDITIONS[self.cfg.experiment])
            written = analytics.export(os.path.join(self.cfg.output_dir, self.run_id))
            if self.cfg.experiment in ("heavy_tailed", "external_pair"):
                curve_path = os.path.join(self.cfg.output_dir, f"{self.run_id}_curve.csv")
                analytics.component_curve().to_csv(curve_path, index=False, float_format="%.6f")
                written["curve"] = curve_path
            self.outputs.update(written)
            for kind, path in written.items():
                self.logger.log_output(kind, path)
            manifest = self.write_manifest()
            self.logger.log_output("manifest", manifest)
            self.logger.log_run_end(len(self.rows))
            return analytics.frame
        except Exception as e:
            self.logger.log_error(e, f"run {self.cfg.experiment}")
            raise
        finally:
            self.logger.close()
