import numpy as np
import pytest

from gyolo import arch


def seeded(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


@pytest.fixture(scope="session")
def ghost_n_model():
    return arch.build(arch.make_graph("g-yolov11", "n", 9), seed=0)


@pytest.fixture(scope="session")
def base_n_model():
    return arch.build(arch.make_graph("yolov11", "n", 9), seed=0)
