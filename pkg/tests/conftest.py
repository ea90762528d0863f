import numpy as np
import pytest

from adaptive_rm.rbm import RbmParams


def strong_rbm(n, h, seed, units, strength=3.0, scale=0.5):
    """Random RBM with entries U(-scale, scale) whose visible ``units`` are
    re-coupled to every hidden unit with weights of magnitude ``strength``
    and random signs."""
    rng = np.random.default_rng(seed)
    p = RbmParams.random(n, h, rng, scale=scale)
    w = p.w.copy()
    for u in units:
        w[u] = strength * rng.choice([-1.0, 1.0], h)
    return RbmParams(w, p.a, p.b)


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


@pytest.fixture
def small_rbm():
    return RbmParams.random(6, 4, np.random.default_rng(6))


# -- acceptance report --------------------------------------------------------

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def criterion(capsys):
    """Record one PASS/FAIL line for an acceptance criterion."""

    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        with capsys.disabled():
            print(f"\n{line}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
