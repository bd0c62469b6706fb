import numpy as np
import pytest

from contpomdp.domains import LightDark, SubHunt, TabularPomdp, VdpTag


def hmm_tables():
    """3 states, 2 actions, 2 observations, no terminal states."""
    T = np.array([
        [[0.7, 0.2, 0.1], [0.1, 0.1, 0.8]],
        [[0.3, 0.4, 0.3], [0.5, 0.25, 0.25]],
        [[0.2, 0.2, 0.6], [0.6, 0.3, 0.1]],
    ])
    Z = np.array([
        [[0.9, 0.1], [0.5, 0.5], [0.2, 0.8]],
        [[0.6, 0.4], [0.3, 0.7], [0.85, 0.15]],
    ])
    R = np.array([[1.0, 0.0], [0.0, 2.0], [-1.0, 0.5]])
    b0 = np.array([0.5, 0.3, 0.2])
    return T, Z, R, b0


def deterministic_chain(rollout_action=0):
    """3-state chain with point-mass transitions and identity observations.

    Action 0 moves right (absorbing at the end), action 1 stays put; being
    in state 2 pays 1 per step.
    """
    T = np.zeros((3, 2, 3))
    for s in range(3):
        T[s, 0, min(s + 1, 2)] = 1.0
        T[s, 1, s] = 1.0
    Z = np.zeros((2, 3, 3))
    for a in range(2):
        Z[a] = np.eye(3)
    R = np.array([[0.0, 0.1], [0.0, 0.2], [1.0, 1.0]])
    return TabularPomdp(T, Z, R, b0=np.array([1.0, 0.0, 0.0]), discount=0.9, rollout_action=rollout_action)


@pytest.fixture(scope="session")
def lightdark():
    return LightDark()


@pytest.fixture(scope="session")
def subhunt_small():
    return SubHunt(size=10)


@pytest.fixture(scope="session")
def vdptag():
    return VdpTag()


@pytest.fixture(scope="session")
def hmm():
    return TabularPomdp(*hmm_tables())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
