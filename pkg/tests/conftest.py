import numpy as np
import pytest

from ddpc.behavioral import IoTrajectory
from ddpc.plants import random_stable_system


def lti_data(sys, T, seed):
    u = np.random.default_rng(seed).uniform(-1, 1, (T, sys.kappa))
    return sys.trajectory(u)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_lti():
    return random_stable_system(np.random.default_rng(7), 3, 2, 2)


def scalar_lti(T, seed=0, a=0.5):
    """theta+ = a*theta + mu, eta = theta, from theta0 = 0."""
    u = np.random.default_rng(seed).uniform(-1, 1, T)
    y = np.zeros(T)
    th = 0.0
    for k in range(T):
        y[k] = th
        th = a * th + u[k]
    return IoTrajectory(u[:, None], y[:, None])
