import warnings

import numpy as np
import pytest

from spheremap.projection import ProjectionConfig
from spheremap.synthbench import SpheroidSpec, generate_spheroid

warnings.filterwarnings("ignore", message=".*TBB.*")


@pytest.fixture(scope="session")
def roi_config():
    return ProjectionConfig(delta=1.0, h_min=0.235, h_max=0.765)


@pytest.fixture(scope="session")
def small_sample():
    """One featured spheroid reused by the slower pipeline tests."""
    return generate_spheroid(SpheroidSpec(n_features=60, sample_count=30000,
                                          seed=11))


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
