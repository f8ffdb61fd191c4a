import json

import numpy as np
import pytest

from vrident import quat
from vrident.synthgen import DriftModel
from vrident.telemetry import Recording

from corpora import DRIFT_LEVEL, build_corpus


def make_recording(t, positions=None, orientations=None, pid="P000", session=1):
    t = np.asarray(t, dtype=float)
    n = len(t)
    if positions is None:
        positions = np.zeros((n, 3, 3))
        positions[:, 0] = [0.0, 1.7, 0.0]
        positions[:, 1] = [-0.2, 1.2, -0.3]
        positions[:, 2] = [0.2, 1.2, -0.3]
    if orientations is None:
        orientations = np.tile(quat.IDENTITY, (n, 3, 1))
    return Recording(pid, session, t, positions, orientations, 90.0)


def frame_line(t, head=None, left=None, right=None):
    ident = {"p": [0.0, 1.7, 0.0], "q": [0.0, 0.0, 0.0, 1.0]}
    obj = {"t": t, "head": head or ident, "left": left or dict(ident, p=[-0.2, 1.2, -0.3]),
           "right": right or dict(ident, p=[0.2, 1.2, -0.3])}
    return json.dumps(obj)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_unit_quats(rng, n):
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


_VERDICTS = []


@pytest.fixture
def verdict():
    """Record a one-line acceptance verdict; printed in the terminal summary."""
    def record(criterion, ok, detail=""):
        _VERDICTS.append((criterion, bool(ok), detail))
        return ok
    return record


# end-to-end corpora (20 participants x 8 weeks x 10 min), built once per run

@pytest.fixture(scope="session")
def drifting(tmp_path_factory):
    root = tmp_path_factory.mktemp("drift")
    idx, build_s = build_corpus(root, DriftModel.scaled(DRIFT_LEVEL))
    return root, idx, build_s


@pytest.fixture(scope="session")
def drift_free(tmp_path_factory):
    root = tmp_path_factory.mktemp("nodrift")
    idx, _ = build_corpus(root, None)
    return root, idx


@pytest.fixture(scope="session")
def low_noise(tmp_path_factory):
    root = tmp_path_factory.mktemp("lownoise")
    idx, _ = build_corpus(root, None, noise_level=0.25)
    return root, idx


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, ok, detail in sorted(_VERDICTS, key=lambda v: v[0]):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {criterion}: {detail}")
