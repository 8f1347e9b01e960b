import numpy as np
import pytest

from eegmci import dataio


@pytest.fixture(scope="session")
def tiny_cohort() -> dataio.CohortDataset:
    """Small separable cohort shared by read-only tests."""
    cfg = dataio.SynthConfig(n_patients_per_class=4, duration_s=30.0,
                             effect_size_delta=5.0, seed=1234)
    return dataio.generate_synthetic(cfg)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)
