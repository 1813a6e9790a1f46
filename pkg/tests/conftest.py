import numpy as np
import pytest

from ris_resilience.config import SystemConfig


@pytest.fixture
def small_config():
    return SystemConfig(num_aps=2, antennas_per_ap=2, num_users=3,
                        num_ris_elements=16, rng_seed=7)


@pytest.fixture
def desk_config():
    return SystemConfig(num_aps=2, antennas_per_ap=4, num_users=4,
                        num_ris_elements=64, rng_seed=0)


def crandn(rng, *shape):
    """Circularly-symmetric standard complex normal."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
