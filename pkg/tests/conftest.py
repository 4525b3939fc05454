import numpy as np
import pytest

from mfje.kernel import DestinationKernel, StateSpace, jd_to_js


@pytest.fixture
def two_state_space():
    return StateSpace.finite([[1.0], [2.0]], labels=["state1", "state2"])


def constant_rate_kernel(rate: float, space=None):
    """2-state chain jumping 1 -> 2 at a constant rate (test helper)."""
    space = space or StateSpace.finite([[1.0], [2.0]],
                                       labels=["state1", "state2"])
    table = np.array([[0.0, rate], [0.0, 0.0]])
    dk = DestinationKernel(space=space, rates=lambda t, rho: table,
                           c_lambda=rate, c_r=1.0, q=2.0, c_mu=0.0,
                           measure_dependent=False)
    return jd_to_js(dk)
