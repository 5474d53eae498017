import numpy as np
import pytest

from isacwk import make_scenario


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def base_scenario():
    """N=4, K=2, L=20, QPSK, orthogonal LFM reference."""
    return make_scenario(4, 2, 20, "qpsk", "lfm", seed=1)


@pytest.fixture
def tiny_scenario():
    return make_scenario(2, 1, 2, "qpsk", "lfm", seed=3)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


ACCEPTANCE: list[tuple[int, str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {num:2d} {'PASS' if ok else 'FAIL'} {name}: {detail}")
