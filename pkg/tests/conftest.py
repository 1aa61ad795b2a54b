import numpy as np
import pytest

from segens.raster import one_hot


def make_instance(rng, h=8, w=8, k=2, scale=1.0):
    """Softmax-of-normal prediction and a random one-hot target."""
    z = rng.normal(scale=scale, size=(h, w, k))
    p = np.exp(z)
    p /= p.sum(axis=2, keepdims=True)
    mask = rng.integers(0, k, size=(h, w))
    return p, one_hot(mask, k), mask


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def instance(rng):
    return lambda **kw: make_instance(rng, **kw)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
