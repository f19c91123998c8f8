import time

import numpy as np
import pytest
from hypothesis import settings

from translum.core import LinkConfig

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def pwm_cfg():
    return LinkConfig(data_rate=1e6, modulation="PWM")


@pytest.fixture
def pdm_cfg():
    return LinkConfig(data_rate=1e6, modulation="PDM")


# ------------------------------------------------------------ acceptance report

_ACCEPTANCE = pytest.StashKey[dict]()


class _Criterion:
    def __init__(self, results: dict, number: int, title: str):
        self.results, self.number, self.title = results, number, title
        self.detail = ""

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        dt = time.perf_counter() - self.t0
        status = "PASS" if exc_type is None else "FAIL"
        note = self.detail if exc_type is None else f"{self.detail} {exc}".strip()
        self.results[self.number] = f"criterion {self.number} {status} ({dt:.1f} s) {self.title}: {note}"
        return False


@pytest.fixture
def criterion(request):
    results = request.config.stash.setdefault(_ACCEPTANCE, {})
    return lambda number, title: _Criterion(results, number, title)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_ACCEPTANCE, {})
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
