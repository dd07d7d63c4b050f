import numpy as np
import pytest

from vqemit.model import ModelParams, local_dims, site_ops


def embed(params, n_max, site, op):
    """Dense operator acting with ``op`` on ``site`` (site 0 most significant)."""
    out = np.ones((1, 1))
    for x, d in enumerate(local_dims(params, n_max)):
        out = np.kron(out, op if x == site else np.eye(d))
    return out


def dense_op(params, n_max, site, name):
    return embed(params, n_max, site, site_ops(params, n_max, site)[name])


@pytest.fixture
def small_params():
    return ModelParams(n_sites=4, g=0.3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
