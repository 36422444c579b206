"""Shared test configuration.

BLAS pools are pinned to one thread for the whole suite: the matrices here
are small enough that OpenBLAS threading adds noise and often slows things
down (tall-skinny QR in particular), and single-threaded kernels keep
timing-sensitive checks stable.
"""

import pytest
from threadpoolctl import threadpool_limits


@pytest.fixture(scope="session", autouse=True)
def _single_threaded_blas():
    with threadpool_limits(1):
        yield
