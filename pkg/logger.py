"""Logging utility for tracking experiment events"""

import logging
import os
from datetime import datetime
from typing import Any, Dict

import constants

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def _console_handler(root: logging.Logger) -> None:
    """Attach one shared stream handler to the root logger"""
    if any(getattr(h, "spatialmmse_console", False) for h in root.handlers):
        return
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler.spatialmmse_console = True
    root.addHandler(handler)


class ExperimentLogger:
    """Per-run log file on the root logger, so library module records land in it too.

    Every instance owns its file handler until close(); instances created
    later in the same process get their own file.
    """

    def __init__(self, run_id: str, log_dir: str = constants.LOGS_DIR):
        self.run_id = run_id
        self.log_dir = log_dir
        os.makedirs(self.log_dir, exist_ok=True)

        self.log_file = os.path.join(self.log_dir, f"run_{run_id}.log")

        root = logging.getLogger()
        if root.level == logging.NOTSET or root.level > logging.INFO:
            root.setLevel(logging.INFO)
        _console_handler(root)
        self.file_handler = logging.FileHandler(self.log_file)
        self.file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(self.file_handler)

        self.logger = logging.getLogger(f"SpatialMMSE_{run_id}")

    def close(self) -> None:
        """Detach and close this run's log file"""
        logging.getLogger().removeHandler(self.file_handler)
        self.file_handler.close()

    def log_run_start(self, experiment: str, seed: int) -> None:
        """Log run start"""
        self.logger.info(f"RUN_START | Run={self.run_id} | Experiment={experiment} | Seed={seed} | Time={datetime.now()}")

    def log_fit(self, components: int, bins: int, windows: int, seconds: float) -> None:
        """Log a noise model fit"""
        self.logger.info(
            f"FIT | Components={components} | Bins={bins} | Windows={windows} | Seconds={seconds:.2f}"
        )

    def log_enhancement(self, item: str, method: str, seconds: float) -> None:
        """Log one enhanced signal"""
        self.logger.info(f"ENHANCE | Item={item} | Method={method} | Seconds={seconds:.2f}")

    def log_metrics(self, item: str, method: str, scores: Dict[str, Any]) -> None:
        """Log metric scores"""
        formatted = " | ".join(f"{key}={value:.2f}" if isinstance(value, float) else f"{key}={value}"
                               for key, value in scores.items())
        self.logger.info(f"METRICS | Item={item} | Method={method} | {formatted}")

    def log_output(self, kind: str, path: str) -> None:
        """Log a written artifact"""
        self.logger.info(f"OUTPUT | Kind={kind} | Path={path}")

    def log_error(self, error: Exception, context: str = "") -> None:
        """Log errors"""
        self.logger.error(f"ERROR | Context='{context}' | Type={type(error).__name__} | Error={str(error)}")

    def log_run_end(self, rows: int) -> None:
        """Log run end"""
        self.logger.info(f"RUN_END | Run={self.run_id} | Rows={rows} | Time={datetime.now()}")
