import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: long-running bound and sampler checks (run with -m slow)')


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
