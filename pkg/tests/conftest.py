import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from nesslab.markov import JumpModel

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@st.composite
def jump_models(draw, min_n=2, max_n=6, max_eps=1.0):
    """Connected models with a spanning path plus random extra edges."""
    n = draw(st.integers(min_n, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    eps = draw(st.floats(0.0, max_eps))
    beta = draw(st.floats(0.2, 2.0))
    rng = np.random.default_rng(seed)
    adj = np.zeros((n, n), dtype=bool)
    perm = rng.permutation(n)
    adj[perm[:-1], perm[1:]] = True
    adj |= rng.random((n, n)) < 0.4
    adj = np.triu(adj | adj.T, 1)
    adj = adj | adj.T
    g = np.triu(rng.uniform(0.3, 2.0, (n, n)), 1)
    gamma = np.where(adj, g + g.T, 0.0)
    F = np.triu(rng.normal(size=(n, n)), 1)
    F = np.where(adj, F - F.T, 0.0)
    return JumpModel(rng.normal(size=n), beta, F, gamma, eps)


@pytest.fixture
def two_state():
    """Bare two-state rate matrix with unit rates."""
    from nesslab.markov import RateMatrix

    return RateMatrix(np.array([[0.0, 1.0], [1.0, 0.0]]))


ACCEPTANCE_LINES = {}


@pytest.fixture
def acceptance():
    """Record ``(criterion, passed, detail)``; the lines print in the terminal summary."""

    def record(number, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  criterion {number}: {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
