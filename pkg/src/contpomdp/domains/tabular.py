"""Small explicit POMDPs given as transition/observation/reward tables.

States, actions and observations are encoded as one-element vectors holding
the integer index.  Used as exact-Bayes oracles and for hand-traceable trees.
"""

import numpy as np
from numba import float64, int64, njit
from numba.experimental import jitclass

from contpomdp.core import GenerativePomdp


@njit(cache=True)
def _categorical(p):
    u = np.random.random()
    acc = 0.0
    for i in range(p.shape[0]):
        acc += p[i]
        if u < acc:
            return i
    # rounding slack: last index with positive mass
    for i in range(p.shape[0] - 1, -1, -1):
        if p[i] > 0.0:
            return i
    return p.shape[0] - 1


_spec = [
    ("state_dim", int64),
    ("obs_dim", int64),
    ("action_dim", int64),
    ("n_actions", int64),
    ("actions", float64[:, :]),
    ("discount", float64),
    ("T", float64[:, :, :]),
    ("Z", float64[:, :, :]),
    ("R", float64[:, :]),
    ("terminal", float64[:]),
    ("b0", float64[:]),
    ("rollout_index", int64),
]


@jitclass(_spec)
class TabularKernel:
    def __init__(self, T, Z, R, terminal, b0, discount, rollout_index):
        self.state_dim = 1
        self.obs_dim = 1
        self.action_dim = 1
        self.n_actions = T.shape[1]
        self.actions = np.arange(float(T.shape[1])).reshape((T.shape[1], 1))
        self.discount = discount
        self.T = T
        self.Z = Z
        self.R = R
        self.terminal = terminal
        self.b0 = b0
        self.rollout_index = rollout_index

    def is_terminal(self, s):
        return self.terminal[int(s[0])] != 0.0

    def reward(self, s, a, sp):
        if self.is_terminal(s):
            return 0.0
        return self.R[int(s[0]), int(a[0])]

    def transition(self, s, a, sp):
        i = int(s[0])
        if self.terminal[i] != 0.0:
            sp[0] = s[0]
            return 0.0
        k = int(a[0])
        sp[0] = float(_categorical(self.T[i, k]))
        return self.R[i, k]

    def step(self, s, a, sp, o):
        r = self.transition(s, a, sp)
        o[0] = float(_categorical(self.Z[int(a[0]), int(sp[0])]))
        return r

    def obs_density(self, s, a, sp, o):
        return self.Z[int(a[0]), int(sp[0]), int(o[0])]

    def sample_action(self, out):
        out[0] = float(np.random.randint(self.n_actions))

    def rollout_action(self, s, out):
        if self.rollout_index < 0:
            out[0] = float(np.random.randint(self.n_actions))
        else:
            out[0] = float(self.rollout_index)

    def sample_initial(self, out):
        out[0] = float(_categorical(self.b0))

    def reinvigorate(self, particles, n):
        pass


class TabularPomdp(GenerativePomdp):
    """POMDP from explicit tables.

    ``T[s, a, s']``, ``Z[a, s', o]``, ``R[s, a]``; ``terminal`` marks absorbing
    zero-reward states.  ``rollout_action=None`` rolls out uniformly at random.
    """

    name = "tabular"

    def __init__(self, T, Z, R, b0, discount=0.95, terminal=None, rollout_action=None):
        T = np.ascontiguousarray(T, dtype=np.float64)
        Z = np.ascontiguousarray(Z, dtype=np.float64)
        R = np.ascontiguousarray(R, dtype=np.float64)
        b0 = np.ascontiguousarray(b0, dtype=np.float64)
        n_s, n_a, _ = T.shape
        if not np.allclose(T.sum(axis=2), 1.0) or not np.allclose(Z.sum(axis=2), 1.0):
            raise ValueError("transition and observation rows must sum to 1")
        if Z.shape[:2] != (n_a, n_s) or R.shape != (n_s, n_a) or b0.shape != (n_s,):
            raise ValueError("table shapes disagree")
        term = np.zeros(n_s) if terminal is None else np.asarray(terminal, dtype=np.float64)
        kernel = TabularKernel(T, Z, R, term, b0, float(discount),
                               -1 if rollout_action is None else int(rollout_action))
        super().__init__(kernel, discount=discount)
        self.T, self.Z, self.R, self.b0, self.terminal = T, Z, R, b0, term.astype(bool)

    @property
    def n_states(self) -> int:
        return self.T.shape[0]

    def exact_update(self, b: np.ndarray, a: int, o: int) -> np.ndarray:
        """Exact Bayes filter step on a probability vector."""
        pred = b @ self.T[:, a, :]
        post = pred * self.Z[a, :, o]
        return post / post.sum()

    def enumerate_mdp(self):
        from contpomdp.baselines import EnumerableMdpView

        return EnumerableMdpView.from_dense(
            states=np.arange(self.n_states, dtype=np.float64).reshape(-1, 1),
            actions=np.arange(self.T.shape[1], dtype=np.float64).reshape(-1, 1),
            T=self.T, R=self.R, discount=self.discount, terminal=self.terminal,
            index_of=lambda p: np.asarray(p, dtype=np.float64)[:, 0].astype(np.int64),
        )
