import math

import numpy as np
import pytest

from superramsey.model import MeanFieldState, SystemParams, ground_state, rhs

TWO_PI = 2 * math.pi


@pytest.fixture(scope="session", autouse=True)
def warm_jit():
    """Compile the RHS kernel once so timing checks measure simulation only."""
    rhs(ground_state(), SystemParams.operating_point())


@pytest.fixture
def base():
    return SystemParams.operating_point()


def random_state(rng, scale=0.3):
    """Arbitrary state whose physically real fields are real."""
    from superramsey.model import REAL_FIELDS
    data = scale * (rng.normal(size=26) + 1j * rng.normal(size=26))
    data[REAL_FIELDS] = data[REAL_FIELDS].real
    return MeanFieldState(data)


def random_params(rng, n=(3.0, 5.0)):
    return SystemParams(delta_c=rng.normal(), kappa=rng.uniform(0.1, 2), n_atoms=n,
                        delta=rng.normal(size=2), g=rng.normal(size=2),
                        gamma=rng.uniform(0, 1, 2), chi=rng.uniform(0, 1, 2),
                        omega=rng.normal(size=2))


def assert_close(a, b, rtol=1e-12, atol=1e-14):
    np.testing.assert_allclose(np.asarray(a), np.asarray(b), rtol=rtol, atol=atol)
