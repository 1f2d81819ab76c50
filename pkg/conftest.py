"""
Shared pytest fixtures for stablepath.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent
sys.path.insert(0, str(ROOT))
sys.path.insert(0, str(ROOT / "features"))

from stablepath.mobility import build_fig2_scenario  # noqa: E402
from stablepath.observability import configure_logging  # noqa: E402


@pytest.fixture(scope="session", autouse=True)
def logging_setup():
    configure_logging(verbose=False)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def fig2():
    return build_fig2_scenario()


@pytest.fixture
def repo_root():
    return ROOT
