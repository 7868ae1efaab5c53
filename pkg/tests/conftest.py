import numpy as np
import pytest

from stepselect.expfam import (
    Bernoulli,
    ExponentialRate,
    GaussianKnownSigma,
    Poisson,
)


@pytest.fixture(params=["gaussian", "poisson", "exponential", "bernoulli"])
def family(request):
    return {
        "gaussian": GaussianKnownSigma(1.0),
        "poisson": Poisson(),
        "exponential": ExponentialRate(),
        "bernoulli": Bernoulli(),
    }[request.param]


def random_params(fam, rng, size):
    """Random parameters comfortably inside each family's domain."""
    if isinstance(fam, GaussianKnownSigma):
        return rng.uniform(-10.0, 10.0, size)
    if isinstance(fam, Poisson):
        return rng.uniform(np.log(0.1), np.log(50.0), size)
    if isinstance(fam, ExponentialRate):
        return rng.uniform(0.01, 20.0, size)
    return rng.uniform(-4.0, 4.0, size)


def random_series(fam, rng, n, spread=True):
    """A series with a couple of regimes, valid for the family."""
    params = random_params(fam, rng, 2 if spread else 1)
    half = n // 2
    if spread and n >= 2:
        a = fam.sample(np.full(half, params[0]), rng)
        b = fam.sample(np.full(n - half, params[1]), rng)
        return np.concatenate([np.atleast_1d(a), np.atleast_1d(b)]).astype(float)
    return np.atleast_1d(fam.sample(np.full(n, params[0]), rng)).astype(float)
