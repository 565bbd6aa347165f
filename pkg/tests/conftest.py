import numpy as np
import pytest

from bufsgd import RunConfig


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def quad_config(**kwargs) -> RunConfig:
    base = dict(task="quadratic", n=60, d=4, workers=4, buffers=2,
                aggregator="mean", eta=0.1, steps=100, seed=0)
    base.update(kwargs)
    return RunConfig(**base).validated()
