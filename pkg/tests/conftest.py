import copy
import json
from pathlib import Path

import numpy as np
import pytest

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


def load_config_dict(name):
    return json.loads((CONFIG_DIR / name).read_text())


@pytest.fixture
def config_dir():
    return CONFIG_DIR


@pytest.fixture
def example3_doc():
    return load_config_dict("example3_dtltv.json")


@pytest.fixture
def pendulum_doc():
    return load_config_dict("example2_pendulum.json")


def disturbance_free(doc):
    """Copy of a config document with truth disturbances and bounds set to zero."""
    doc = copy.deepcopy(doc)
    sig = doc["signals"]
    for key in ("d", "w"):
        if key in sig:
            n = len(sig[key])
            sig[key] = [0] * n
            sig[f"{key}_bounds"] = {"lo": [0] * n, "hi": [0] * n}
    return doc


def kron_sylvester(A, F, C):
    """Reference solution of T F = A T + C through (F^T kron I - I kron A) vec T = vec C."""
    nz, nx = C.shape
    K = np.kron(F.T, np.eye(nz)) - np.kron(np.eye(nx), A)
    return np.linalg.solve(K, C.reshape(-1, order="F")).reshape((nz, nx), order="F")


ACCEPTANCE_RESULTS = {}


class Criterion:
    """Collects the checks of one acceptance criterion and records a single verdict."""

    def __init__(self, number, title):
        self.number, self.title = number, title
        self.failures, self.notes = [], []

    def check(self, ok, detail):
        self.notes.append(detail)
        if not ok:
            self.failures.append(detail)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            self.failures.append(f"{exc_type.__name__}: {exc}")
        passed = not self.failures
        detail = "; ".join(self.failures if self.failures else self.notes)
        ACCEPTANCE_RESULTS[self.number] = (self.title, passed, detail)
        if exc_type is None and not passed:
            pytest.fail(f"criterion {self.number} failed: {detail}")
        return False


@pytest.fixture
def criterion():
    return Criterion


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        title, passed, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {n}. {title}: {detail}")
