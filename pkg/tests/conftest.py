from __future__ import annotations

import os

import numpy as np
import pytest


@pytest.fixture(autouse=True, scope="session")
def _cache_env(tmp_path_factory):
    """Keep the full-FoV cache in a per-session directory unless one is set."""
    if "FRESNEL_LOCALITY_CACHE" not in os.environ:
        os.environ["FRESNEL_LOCALITY_CACHE"] = str(tmp_path_factory.mktemp("flc"))
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    from _oracles import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
