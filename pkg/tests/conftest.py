import pytest

from perceptiq import kernels


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # compile the jit kernels once so per-test timings measure the
    # algorithms, not numba's compiler
    kernels.warm_up()
