import numpy as np
import pytest

from i2bgnn.features import FeatureSchema
from i2bgnn.sampler import SamplingConfig, extract_dataset
from i2bgnn.synth import SynthConfig, generate


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_synth():
    return generate(SynthConfig(seed=3, n_per_class=40, noise=0.1))


@pytest.fixture(scope="session")
def small_dataset(small_synth):
    d = small_synth
    schema = FeatureSchema(d.calls.vocabulary)
    return extract_dataset(d.graph, d.labeled, SamplingConfig(2, 10), d.calls, schema), schema
