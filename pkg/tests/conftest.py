import numpy as np
import pytest

from handpd.model import ModelConfig, init_params
from handpd.numkit import Rng


@pytest.fixture
def tiny_cfg():
    return ModelConfig(input_dim=5, window=24, lstm_hidden=4, conv1_filters=3, conv2_filters=2)


@pytest.fixture
def tiny_params(tiny_cfg):
    return init_params(tiny_cfg, Rng(3))


@pytest.fixture
def np_rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
