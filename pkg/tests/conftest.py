import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for the reference module

from cnnscope import fixtures


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=fixtures.FIXTURE_NAMES)
def fixture_net(request):
    return fixtures.fixture_netspec(request.param)


def make_net(name):
    return fixtures.fixture_netspec(name)


def make_weights(net, seed=7):
    return fixtures.fixture_weights(net, seed=seed)


def make_image(shape, seed=11):
    return fixtures.fixture_image(shape, seed=seed)


DATA_DIR = Path(__file__).parent / "data"
