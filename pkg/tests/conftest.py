import numpy as np
import pytest

from rsma_crc.harness.instances import random_instance


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_instances():
    rng = np.random.default_rng(7)
    return [random_instance(rng, num_cus=2, num_radars=1) for _ in range(4)]
