import os

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def _random_pd(rng, dim, condition=10.0, scale=1.0):
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim)))
    eigenvalues = scale * np.geomspace(1.0, condition, dim)
    matrix = (q * eigenvalues) @ q.conj().T
    return 0.5 * (matrix + matrix.conj().T)


@pytest.fixture
def make_pd():
    """Factory for random Hermitian positive definite matrices"""
    return _random_pd


@pytest.fixture
def corpus_files():
    """Clean speech WAVs of SPATIALMMSE_CORPUS, skipping when unset"""
    root = os.environ.get("SPATIALMMSE_CORPUS")
    if not root:
        pytest.skip("SPATIALMMSE_CORPUS not set")
    files = sorted(os.path.join(root, name) for name in os.listdir(root) if name.lower().endswith(".wav"))
    if len(files) < 2:
        pytest.skip("corpus needs at least two WAV files")
    return files


@pytest.fixture(autouse=True)
def _isolated_cwd(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
