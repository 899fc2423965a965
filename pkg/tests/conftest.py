import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nuclass.model import ModelConfig

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def tiny_config(**over):
    base = dict(branch_stages=[(1, 4, 3, 2, False, "relu6"), (2, 8, 3, 1, True, "hard_swish")],
                merge_stages=[(2, 8, 3, 1, True, "hard_swish")], head_hidden=(8,),
                input_size=16, stem_channels=4, se_reduction=4, seed=3)
    base.update(over)
    return ModelConfig(**base)


@pytest.fixture
def tiny():
    return tiny_config()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_pairs(rng, n, size=16):
    X = rng.random((n, 2, size, size))
    X[X < 0.7] = 0.0
    return X


def pytest_terminal_summary(terminalreporter):
    from helpers import CRITERIA
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA:
            terminalreporter.write_line(line)
