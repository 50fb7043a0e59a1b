"""Shared test configuration.

BLAS thread pools must be pinned before numpy loads: the matrices here are
small (n <= a few hundred) and multi-threaded BLAS spends more time
spawning threads than multiplying.
"""

import os

for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
