"""Command line interface: spatialmmse simulate|enhance|fit-noise|metrics|directivity|schema"""

import argparse
import json
import sys
from typing import List, Optional

import numpy as np
import pandas as pd
from pydantic import ValidationError

import constants
from config import ExperimentConfig, load_experiment_config
from errors import ConfigError, EnhancementError
from filters import Method, enhance_spectrogram
from harness import ExperimentHarness, component_directivity
from logger import ExperimentLogger
from metrics import si_sdr_segmental
from monitor import PerformanceMonitor, timing_decorator
from noisemodel import EmOptions, NoiseModel, em_fit_windowed
from processor import AudioProcessor
from spatial import ArrayGeometry, steering_matrix
from stft import StftConfig, analyze, magnitude_db, synthesize


def resolve_steering(spec: str, model: NoiseModel, geometry: Optional[str]) -> np.ndarray:
    """'ones' or a target angle in degrees (needs a geometry)"""
    if spec == "ones":
        return np.ones((model.num_bins, model.num_mics), dtype=complex)
    try:
        angle = float(np.deg2rad(float(spec))) % (2 * np.pi)
    except ValueError as e:
        raise ConfigError(f"--steering must be 'ones' or an angle in degrees, got '{spec}'") from e
    if geometry is None:
        raise ConfigError("--steering with an angle needs --geometry")
    array = ArrayGeometry.parse(geometry)
    if array.num_mics != model.num_mics:
        raise ConfigError(f"geometry has {array.num_mics} mics, noise model {model.num_mics}")
    return steering_matrix(array, angle, model.stft.bin_frequencies())


@timing_decorator
def cmd_simulate(args: argparse.Namespace, logger: ExperimentLogger) -> int:
    overrides = {
        "experiment": args.experiment,
        "seed": args.seed,
        "output_dir": args.output_dir,
        "components": args.components,
        "snr_db": args.snr_db,
        "clean_files": args.clean,
        "interferer_files": args.interferers,
        "noise_files": args.noise,
        "speech_psd": args.speech_psd,
        "num_utterances": args.num_utterances,
        "max_seconds": args.max_seconds,
        "cache_dir": args.cache_dir,
    }
    cfg = load_experiment_config(args.config, **overrides)
    frame = ExperimentHarness(cfg).run()
    print(f"{len(frame)} result rows written to {cfg.output_dir}")
    return 0


@timing_decorator
def cmd_enhance(args: argparse.Namespace, logger: ExperimentLogger) -> int:
    model = NoiseModel.load(args.noise_model)
    audio = AudioProcessor(model.stft.sample_rate)
    noisy = analyze(audio.load(args.noisy), model.stft)
    steering = resolve_steering(args.steering, model, args.geometry)
    enhanced = enhance_spectrogram(noisy, model, steering, Method(args.method),
                                   nu=args.nu, psd_window=args.psd_window)
    audio.write(args.out, synthesize(enhanced)[0])
    logger.log_output("enhanced", args.out)
    if args.spectrogram_csv:
        magnitude = magnitude_db(enhanced)
        frequency, time = np.meshgrid(model.stft.bin_frequencies(),
                                      model.stft.frame_times(enhanced.num_frames), indexing='ij')
        pd.DataFrame({"time": time.ravel(), "frequency": frequency.ravel(),
                      "magnitude_db": magnitude.ravel()}).to_csv(args.spectrogram_csv, index=False)
        logger.log_output("spectrogram", args.spectrogram_csv)
    return 0


@timing_decorator
def cmd_fit_noise(args: argparse.Namespace, logger: ExperimentLogger) -> int:
    stft = StftConfig(sample_rate=args.sample_rate)
    noise = analyze(AudioProcessor(args.sample_rate).load(args.input), stft)
    opts = EmOptions(max_iter=args.max_iter, restarts=args.restarts, seed=args.seed)
    monitor = PerformanceMonitor()
    with monitor.track("fit"):
        model = em_fit_windowed(noise, args.window_ms, args.overlap, args.components, opts)
    model.save(args.out)
    logger.log_fit(args.components, model.num_bins, model.num_windows, monitor.metrics["fit"][-1])
    logger.log_output("noise_model", args.out)
    return 0


@timing_decorator
def cmd_metrics(args: argparse.Namespace, logger: ExperimentLogger) -> int:
    audio = AudioProcessor(args.sample_rate)
    estimate = audio.load_mono(args.estimate)
    target = audio.load_mono(args.target)
    interference = audio.load_mono(args.interference) if args.interference else None
    length = min(estimate.size, target.size, interference.size if interference is not None else target.size)
    report = si_sdr_segmental(estimate[:length], target[:length],
                              None if interference is None else interference[:length],
                              args.sample_rate, args.segment_ms)
    logger.log_metrics(args.estimate, "file", report.to_dict())
    if args.out:
        with open(args.out, 'w') as f:
            f.write(report.to_json())
        logger.log_output("metrics", args.out)
    print(report.to_json())
    return 0


def cmd_directivity(args: argparse.Namespace, logger: ExperimentLogger) -> int:
    model = NoiseModel.load(args.model)
    geometry = ArrayGeometry.parse(args.geometry)
    steering = resolve_steering(str(args.target_deg), model, args.geometry)
    frame = component_directivity(model, steering, geometry, args.window, include_aggregate=True)
    frame.to_csv(args.out, index=False, float_format="%.6f")
    logger.log_output("directivity", args.out)
    return 0


def cmd_schema(args: argparse.Namespace, logger: ExperimentLogger) -> int:
    print(json.dumps(ExperimentConfig.model_json_schema(), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spatialmmse",
                                     description="Multichannel speech enhancement under Gaussian mixture noise")
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="run an experiment and write result tables")
    simulate.add_argument("--config", help="JSON experiment config; flags override its values")
    simulate.add_argument("--experiment", choices=constants.EXPERIMENTS)
    simulate.add_argument("--seed", type=int)
    simulate.add_argument("--output-dir")
    simulate.add_argument("--components", type=int, nargs="+")
    simulate.add_argument("--snr-db", type=float)
    simulate.add_argument("--clean", nargs="+", help="clean speech WAVs")
    simulate.add_argument("--interferers", nargs="+", help="interfering speech WAVs")
    simulate.add_argument("--noise", nargs="+", help="noise WAVs paired with --clean (external_pair)")
    simulate.add_argument("--speech-psd", choices=["cepstral", "oracle"])
    simulate.add_argument("--num-utterances", type=int)
    simulate.add_argument("--max-seconds", type=float)
    simulate.add_argument("--cache-dir")
    simulate.set_defaults(handler=cmd_simulate)

    enh = sub.add_parser("enhance", help="enhance a multichannel recording with a fitted noise model")
    enh.add_argument("--method", choices=[m.value for m in Method], default=Method.NL_MMSE.value)
    enh.add_argument("--noisy", required=True)
    enh.add_argument("--noise-model", required=True)
    enh.add_argument("--steering", default="ones", help="'ones' or target angle in degrees")
    enh.add_argument("--geometry", help="e.g. linear:2x0.06")
    enh.add_argument("--nu", type=float, default=constants.DEFAULT_NU)
    enh.add_argument("--psd-window", choices=["first", "nearest"], default="first")
    enh.add_argument("--out", required=True)
    enh.add_argument("--spectrogram-csv")
    enh.set_defaults(handler=cmd_enhance)

    fit = sub.add_parser("fit-noise", help="fit windowed Gaussian mixture noise models")
    fit.add_argument("--input", required=True)
    fit.add_argument("--components", type=int, required=True)
    fit.add_argument("--window-ms", type=float, help="omit to fit the full signal")
    fit.add_argument("--overlap", type=float, default=constants.EM_WINDOW_OVERLAP)
    fit.add_argument("--restarts", type=int, default=EmOptions.restarts)
    fit.add_argument("--max-iter", type=int, default=EmOptions.max_iter)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--sample-rate", type=int, default=constants.DEFAULT_SAMPLE_RATE)
    fit.add_argument("--out", required=True)
    fit.set_defaults(handler=cmd_fit_noise)

    met = sub.add_parser("metrics", help="segmental SI-SDR/SIR/SAR of an estimate")
    met.add_argument("--estimate", required=True)
    met.add_argument("--target", required=True)
    met.add_argument("--interference")
    met.add_argument("--segment-ms", type=float, default=constants.SEGMENT_MS)
    met.add_argument("--sample-rate", type=int, default=constants.DEFAULT_SAMPLE_RATE)
    met.add_argument("--out")
    met.set_defaults(handler=cmd_metrics)

    dirp = sub.add_parser("directivity", help="per-component MVDR directivity of a noise model")
    dirp.add_argument("--model", required=True)
    dirp.add_argument("--geometry", required=True)
    dirp.add_argument("--target-deg", type=float, default=90.0)
    dirp.add_argument("--window", type=int, default=0)
    dirp.add_argument("--out", required=True)
    dirp.set_defaults(handler=cmd_directivity)

    schema = sub.add_parser("schema", help="print the experiment config JSON schema")
    schema.set_defaults(handler=cmd_schema)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logger = ExperimentLogger(f"cli_{args.command}")
    try:
        return args.handler(args, logger)
    except (EnhancementError, OSError, ValidationError, ValueError) as e:
        logger.log_error(e, args.command)
        print(f"error: {e}", file=sys.stderr)
        return 1
    finally:
        logger.close()


if __name__ == "__main__":
    sys.exit(main())
