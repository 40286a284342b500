import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mslap import accel
from mslap.linalg import SparseMatrix

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(params=[True, False], ids=["numba", "numpy"])
def backend(request):
    """Run the test once on the numba kernels and once on the numpy fallback."""
    if request.param and not accel.HAVE_NUMBA:
        pytest.skip("numba not installed")
    with accel.use_numba(request.param):
        yield request.param


def random_sparse(rng, n_rows, n_cols, density=0.2, symmetric=False):
    a = rng.standard_normal((n_rows, n_cols)) * (rng.random((n_rows, n_cols)) < density)
    if symmetric:
        a = np.triu(a) + np.triu(a, 1).T
    return SparseMatrix.from_dense(a), a


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
