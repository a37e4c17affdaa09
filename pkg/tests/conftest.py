import numpy as np
import pytest

from clocklat import ClockSpec


@pytest.fixture
def binary_clock():
    """Two levels, unit spacing, balanced amplitudes."""
    return ClockSpec(units=[1.0], K=[[1]], probs=[0.5, 0.5])


@pytest.fixture
def ladder_clock():
    """Three levels at 0, 1, 2 energy units, uniform amplitudes."""
    return ClockSpec(units=[1.0], K=[[1, 2]], probs=[1 / 3, 1 / 3, 1 / 3])


@pytest.fixture
def incommensurable_clock():
    """Three levels on two independent units (rank-two lattice)."""
    return ClockSpec(units=[1.0, 2**0.5], K=[[1, 0], [0, 1]], probs=[1 / 3, 1 / 3, 1 / 3])


@pytest.fixture
def single_level_clock():
    """One level: no lattice directions, everything trivial."""
    return ClockSpec(units=[], K=[], probs=[1.0])


def random_full_rank_int_matrix(rng: np.random.Generator, max_rows=3, max_cols=5, bound=9):
    while True:
        r = int(rng.integers(1, max_rows + 1))
        c = int(rng.integers(r, max_cols + 1))
        K = rng.integers(-bound, bound + 1, size=(r, c))
        if np.linalg.matrix_rank(K) == r:
            return K
