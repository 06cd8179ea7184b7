import numpy as np
import pytest

from spatialcp import Dataset, MaternParams, RngSpec, ScenarioSpec, gen_scenario


@pytest.fixture(scope="session")
def scenario1_small():
    return gen_scenario(ScenarioSpec(1, 400, rng=RngSpec(11)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_dataset(n=200, seed=0, p=1):
    g = np.random.default_rng(seed)
    sites = g.uniform(size=(n, 2))
    feats = np.column_stack([g.normal(size=(n, p)), sites])
    y = feats[:, 0] + 0.3 * g.normal(size=n)
    return Dataset(sites, feats, y)
