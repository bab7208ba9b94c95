import os
import sys

import numpy as np
import pytest

from newton_soliton import ground_state as gs
from newton_soliton.spectral import Grid3


@pytest.fixture(scope="session", autouse=True)
def _cache_dir(tmp_path_factory):
    # an explicitly configured cache is reused; otherwise each session starts clean
    if "NEWTON_SOLITON_CACHE" not in os.environ:
        os.environ["NEWTON_SOLITON_CACHE"] = str(tmp_path_factory.mktemp("ground_cache"))
    yield


@pytest.fixture(scope="session")
def ground32(_cache_dir):
    return gs.load_or_compute(Grid3(32, 24.0))


@pytest.fixture(scope="session")
def ground48(_cache_dir):
    return gs.load_or_compute(Grid3(48, 32.0))


@pytest.fixture(scope="session")
def ground64(_cache_dir):
    return gs.load_or_compute(Grid3(64, 32.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
