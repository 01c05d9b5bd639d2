import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cpapprox.cutproject import fibonacci_scheme, generate_model_set
from cpapprox.pointset import PointSet

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

PHI = (1 + 5 ** 0.5) / 2


def lattice_patch(R, spacing=1.0, offset=0.0):
    k = np.arange(-np.ceil(R / spacing) - 1, np.ceil(R / spacing) + 2)
    x = k * spacing + offset
    x = x[np.abs(x) <= R + 1e-12]
    return PointSet.from_points(x[:, None], R)


def brute_fibonacci(R, shift_internal=0.123, shift_physical=0.0, lo=-1 / PHI, hi=1.0, nmax=None):
    """Direct strip filtering over a generous box of integer pairs."""
    nmax = nmax or int(2 * R) + 20
    n1, n2 = np.meshgrid(np.arange(-nmax, nmax + 1), np.arange(-nmax, nmax + 1), indexing="ij")
    x = n1 + PHI * n2 + shift_physical
    h = n1 - n2 / PHI + shift_internal
    keep = (np.abs(x) <= R) & (h >= lo) & (h < hi)
    return np.sort(x[keep])


@pytest.fixture(scope="session")
def z50():
    return lattice_patch(50)


@pytest.fixture(scope="session")
def fib100():
    return generate_model_set(fibonacci_scheme(), 100)[0]


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
