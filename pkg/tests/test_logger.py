import logging
import os

from logger import ExperimentLogger


def _read(path):
    with open(path, 'r') as f:
        return f.read()


class TestExperimentLogger:
    def test_consecutive_runs_get_their_own_files(self, tmp_path):
        first = ExperimentLogger("first", str(tmp_path / "a"))
        first.log_run_start("heavy_tailed", 1)
        first.close()
        second = ExperimentLogger("second", str(tmp_path / "b"))
        second.log_run_start("gaussian_bursts", 2)
        logging.getLogger("noisemodel").info("library record")
        second.close()

        assert os.path.exists(first.log_file)
        assert os.path.exists(second.log_file)
        assert "RUN_START | Run=first" in _read(first.log_file)
        assert "Run=second" not in _read(first.log_file)
        assert "RUN_START | Run=second" in _read(second.log_file)
        assert "library record" in _read(second.log_file)

    def test_close_detaches_file_handler(self, tmp_path):
        run = ExperimentLogger("closing", str(tmp_path))
        assert run.file_handler in logging.getLogger().handlers
        run.close()
        assert run.file_handler not in logging.getLogger().handlers
