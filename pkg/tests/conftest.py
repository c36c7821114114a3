import numpy as np
import pytest

from tdoaloc.geometry import SensorNetwork


@pytest.fixture
def square_net():
    """1 km square of towers at slightly different heights."""
    return SensorNetwork([(0, 0, 10), (1000, 0, 12), (1000, 1000, 8), (0, 1000, 15)])


def random_network(rng: np.random.Generator, n: int = 4, span: float = 1000.0) -> SensorNetwork:
    pts = np.column_stack([rng.uniform(-span, span, (n, 2)), rng.uniform(0, 50, n)])
    return SensorNetwork(pts, int(rng.integers(n)))


def random_point(rng: np.random.Generator, span: float = 800.0) -> np.ndarray:
    return np.array([*rng.uniform(-span, span, 2), rng.uniform(30, 150)])
