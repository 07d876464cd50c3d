import numpy as np
import pytest


def random_instance(rng, n, k):
    """Cosine-scale cost matrix with random strictly positive marginals."""
    d = rng.uniform(0.0, 2.0, size=(n, k))
    a = rng.uniform(0.5, 1.5, size=n)
    b = rng.uniform(0.5, 1.5, size=k)
    return d, a / a.sum(), b / b.sum()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
