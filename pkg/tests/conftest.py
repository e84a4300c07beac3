"""Shared fixtures for the qcmediator test suite."""

import numpy as np
import pytest

from qcmediator.config import DEFAULT_CONFIG


@pytest.fixture
def rng():
    """Seeded generator; every test gets the same stream."""
    return np.random.default_rng(DEFAULT_CONFIG.default_seed)


@pytest.fixture
def out_dir(tmp_path):
    path = tmp_path / "results"
    path.mkdir()
    return path


@pytest.fixture(autouse=True)
def _isolated_out_dir(monkeypatch, tmp_path):
    """Keep stray runs out of the working tree."""
    monkeypatch.setenv("QCMEDIATOR_OUT_DIR", str(tmp_path / "env-results"))
