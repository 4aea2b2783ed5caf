"""Shared fixtures: one small synthetic dataset reused by the slower suites."""

import numpy as np
import pytest

from hypnolearn.synth import gen_dataset


@pytest.fixture(scope="session")
def small_recordings():
    """Three short nights; enough epochs for every stage to appear."""
    return gen_dataset(3, 120, seed=0)


@pytest.fixture(scope="session")
def small_feature_sets(small_recordings):
    from hypnolearn.experiment import featurize

    return featurize(small_recordings)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
