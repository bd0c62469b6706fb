"""QMDP by value iteration on enumerable state spaces, plus a random policy."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

from contpomdp.belief import WeightedParticleBelief
from contpomdp.core import ConfigurationError, DomainError, GenerativePomdp

_MAGIC = b"QMDPTAB1"
_HEADER = struct.Struct("<8sQQdd")


class ConvergenceError(RuntimeError):
    """Value iteration hit its sweep limit before reaching the tolerance."""

    def __init__(self, residual: float, iterations: int):
        super().__init__(f"value iteration stopped after {iterations} sweeps with residual {residual:.3e}")
        self.residual = residual
        self.iterations = iterations


@dataclass
class EnumerableMdpView:
    """Fully observable MDP with an explicit state list.

    ``T[a]`` is a sparse ``S x S`` row-stochastic matrix, ``R[s, a]`` the
    expected immediate reward and ``index_of`` maps state vectors (rows) to
    indices, raising :class:`DomainError` for states outside the list.
    """

    states: np.ndarray
    actions: np.ndarray
    T: list
    R: np.ndarray
    discount: float
    terminal: np.ndarray
    index_of: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    def __post_init__(self):
        n = len(self.states)
        if self.R.shape != (n, len(self.actions)) or len(self.T) != len(self.actions):
            raise ValueError("reward/transition shapes disagree with the state and action lists")
        for a, t in enumerate(self.T):
            if t.shape != (n, n):
                raise ValueError(f"transition matrix for action {a} has shape {t.shape}")
            rows = np.asarray(t.sum(axis=1)).ravel()
            if not np.allclose(rows, 1.0, atol=1e-9):
                raise ValueError(f"transition rows for action {a} do not sum to 1")

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @classmethod
    def from_dense(cls, states, actions, T, R, discount, terminal, index_of) -> EnumerableMdpView:
        T = np.asarray(T, dtype=np.float64)
        mats = [sp.csr_matrix(T[:, a, :]) for a in range(T.shape[1])]
        return cls(np.asarray(states, dtype=np.float64), np.asarray(actions, dtype=np.float64), mats,
                   np.asarray(R, dtype=np.float64), float(discount), np.asarray(terminal, dtype=bool), index_of)


@dataclass
class QTable:
    """State-action values with the settings that produced them."""

    Q: np.ndarray
    discount: float
    tol: float
    residuals: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.residuals)

    def save(self, path) -> None:
        """Write a flat binary file: magic, ``(S, A, discount, tol)`` header, row-major values."""
        q = np.ascontiguousarray(self.Q, dtype="<f8")
        with open(path, "wb") as f:
            f.write(_HEADER.pack(_MAGIC, q.shape[0], q.shape[1], self.discount, self.tol))
            f.write(q.tobytes())

    @classmethod
    def load(cls, path) -> QTable:
        data = Path(path).read_bytes()
        if len(data) < _HEADER.size:
            raise ValueError(f"{path}: too short for a Q-table header")
        magic, n_s, n_a, discount, tol = _HEADER.unpack_from(data)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a Q-table file")
        body = data[_HEADER.size:]
        if len(body) != 8 * n_s * n_a:
            raise ValueError(f"{path}: expected {n_s}x{n_a} values, found {len(body) // 8}")
        q = np.frombuffer(body, dtype="<f8").reshape(n_s, n_a).astype(np.float64)
        return cls(q, discount, tol)


def value_iterate(view: EnumerableMdpView, tol: float = 1e-3, max_iters: int = 100_000,
                  horizon: int | None = None) -> QTable:
    """Synchronous value iteration.

    With ``horizon=None`` sweeps run until the sup-norm change of V drops to
    ``tol`` and :class:`ConvergenceError` is raised if ``max_iters`` is hit
    first.  With an integer ``horizon`` exactly that many backups are applied
    from V = 0, giving the finite-horizon Q.
    """
    if horizon is None and not view.discount < 1.0:
        raise ConfigurationError("an undiscounted problem needs a finite horizon")
    if tol <= 0:
        raise ConfigurationError("tol must be positive")
    live = ~view.terminal
    R = np.where(live[:, None], view.R, 0.0)
    V = np.zeros(view.n_states)
    Q = np.zeros((view.n_states, view.n_actions))
    residuals = []
    sweeps = horizon if horizon is not None else max_iters
    for _ in range(sweeps):
        for a, t in enumerate(view.T):
            Q[:, a] = R[:, a] + view.discount * (t @ V)
        Q[~live] = 0.0
        V_new = Q.max(axis=1)
        residuals.append(float(np.max(np.abs(V_new - V))))
        V = V_new
        if horizon is None and residuals[-1] <= tol:
            return QTable(Q, view.discount, tol, residuals)
    if horizon is None:
        raise ConvergenceError(residuals[-1] if residuals else np.inf, sweeps)
    return QTable(Q, view.discount, tol, residuals)


def qmdp_values(table: QTable, view: EnumerableMdpView, belief: WeightedParticleBelief) -> np.ndarray:
    """Expected Q_MDP(s, a) under the belief, one entry per action."""
    idx = view.index_of(belief.particles)
    return belief.probabilities @ table.Q[idx]


def qmdp_action(table: QTable, view: EnumerableMdpView, belief: WeightedParticleBelief) -> np.ndarray:
    """QMDP action (lowest index on ties)."""
    return view.actions[int(np.argmax(qmdp_values(table, view, belief)))].copy()


class QmdpPlanner:
    """Acts greedily on the belief-averaged fully observable Q values."""

    def __init__(self, model: GenerativePomdp, view: EnumerableMdpView, table: QTable):
        if table.Q.shape != (view.n_states, view.n_actions):
            raise ConfigurationError("Q table does not match the enumerated MDP")
        self.model, self.view, self.table = model, view, table
        self.last_info: dict = {}

    def plan(self, belief: WeightedParticleBelief, rng: np.random.Generator) -> np.ndarray:
        self.last_info = {"fallback": False}
        return qmdp_action(self.table, self.view, belief)


class RandomPlanner:
    """Uniformly random legal actions."""

    def __init__(self, model: GenerativePomdp):
        self.model = model
        self.last_info: dict = {}

    def plan(self, belief: WeightedParticleBelief, rng: np.random.Generator) -> np.ndarray:
        self.last_info = {"fallback": False}
        return self.model.sample_action(rng)


# ---------------------------------------------------------------------------
# Enumerations of the discrete benchmark domains


def enumerate_lightdark(model) -> EnumerableMdpView:
    """Integer positions in ``[-bound, bound]`` plus one absorbing terminal state."""
    bound = int(model.params["bound"])
    pos = np.arange(-bound, bound + 1, dtype=np.float64)
    n = len(pos)
    term = n
    states = np.column_stack([np.append(pos, 0.0), np.append(np.zeros(n), 1.0)])
    actions = model.actions
    rows = np.arange(n + 1)
    T, R = [], np.zeros((n + 1, len(actions)))
    for k, a in enumerate(actions[:, 0]):
        if a == 0.0:
            succ = np.full(n + 1, term)
            R[:n, k] = np.where(pos == 0.0, 100.0, -100.0)
        else:
            succ = np.append(np.clip(pos + a, -bound, bound) + bound, term).astype(np.int64)
            R[:n, k] = -1.0
        T.append(sp.csr_matrix((np.ones(n + 1), (rows, succ)), shape=(n + 1, n + 1)))

    def index_of(particles):
        p = np.atleast_2d(particles)
        x = p[:, 0]
        done = p[:, 1] != 0.0
        if np.any(~done & ((x != np.round(x)) | (np.abs(x) > bound))):
            raise DomainError("Light Dark particle outside the enumerated integer range")
        return np.where(done, term, np.round(x).astype(np.int64) + bound)

    terminal = np.zeros(n + 1, dtype=bool)
    terminal[term] = True
    return EnumerableMdpView(states, actions, T, R, model.discount, terminal, index_of)


def _subhunt_target_moves(tx, ty, goal, n):
    """Three possible target moves: (probability factor, new x, new y, escaped)."""
    fx = np.select([goal == 2, goal == 3], [1, -1], 0)
    fy = np.select([goal == 0, goal == 1], [1, -1], 0)
    out = []
    for prob, dx, dy in ((None, 2 * fx, 2 * fy), (1, fx + fy, fy - fx), (-1, fx - fy, fy + fx)):
        nx = np.clip(tx + dx, 1, n)
        ny = np.clip(ty + dy, 1, n)
        esc = np.select([goal == 0, goal == 1, goal == 2], [ny >= n, ny <= 1, nx >= n], nx <= 1)
        out.append((prob, nx, ny, esc))
    return out


def enumerate_subhunt(model) -> EnumerableMdpView:
    """All ``size^4 * 2 * 4`` live states plus one absorbing terminal state."""
    p = model.params
    n = int(p["size"])
    step = int(p["agent_step"])
    p_straight = float(p["p_straight"])
    ax, ay, tx, ty, aw, g = (x.ravel() for x in np.meshgrid(
        np.arange(1, n + 1), np.arange(1, n + 1), np.arange(1, n + 1), np.arange(1, n + 1),
        np.arange(2), np.arange(4), indexing="ij"))
    n_live = len(ax)
    term = n_live

    def idx(ax, ay, tx, ty, aw, g):
        return (((((ax - 1) * n + (ay - 1)) * n + (tx - 1)) * n + (ty - 1)) * 2 + aw) * 4 + g

    states = np.zeros((n_live + 1, 7))
    states[:n_live] = np.column_stack([ax, ay, tx, ty, aw, g, np.zeros(n_live)])
    states[term, 6] = 1.0
    moves = _subhunt_target_moves(tx, ty, g, n)
    weights = [p_straight, 0.5 * (1 - p_straight), 0.5 * (1 - p_straight)]
    dist = np.hypot(tx - ax, ty - ay)
    in_range = dist <= float(p["engage_range"])
    p_hit = np.where(in_range, np.where(aw == 1, float(p["aware_hit"]), 1.0), 0.0)

    T, R = [], np.zeros((n_live + 1, 6))
    src = np.arange(n_live)
    for act in range(6):
        nax, nay, naw = ax.copy(), ay.copy(), aw.copy()
        if act == 0:
            nay = np.minimum(ay + step, n)
        elif act == 1:
            nay = np.maximum(ay - step, 1)
        elif act == 2:
            nax = np.minimum(ax + step, n)
        elif act == 3:
            nax = np.maximum(ax - step, 1)
        elif act == 5:
            naw = np.ones_like(aw)
        survive = 1.0 - p_hit if act == 4 else np.ones(n_live)
        rows, cols, vals = [src], [np.full(n_live, term)], [1.0 - survive]
        for w, (_, nx, ny, esc) in zip(weights, moves):
            rows.append(src)
            cols.append(np.where(esc, term, idx(nax, nay, nx, ny, naw, g)))
            vals.append(w * survive)
        rows.append(np.array([term]))
        cols.append(np.array([term]))
        vals.append(np.array([1.0]))
        t = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n_live + 1, n_live + 1))
        t.eliminate_zeros()
        T.append(t)
        if act == 4:
            R[:n_live, act] = float(p["hit_reward"]) * p_hit

    def index_of(particles):
        q = np.atleast_2d(particles)
        done = q[:, 6] != 0.0
        cells = q[:, 0:4]
        if np.any(~done & (np.any((cells < 1) | (cells > n) | (cells != np.round(cells)), axis=1))):
            raise DomainError("Sub Hunt particle outside the enumerated grid")
        i = q[:, :6].astype(np.int64)
        return np.where(done, term, idx(i[:, 0], i[:, 1], i[:, 2], i[:, 3], i[:, 4], i[:, 5]))

    terminal = np.zeros(n_live + 1, dtype=bool)
    terminal[term] = True
    return EnumerableMdpView(states, model.actions, T, R, model.discount, terminal, index_of)


def enumerate_model(model) -> EnumerableMdpView:
    """Enumerated MDP for a supported model, or :class:`ConfigurationError`."""
    from contpomdp.domains.lightdark import LightDark
    from contpomdp.domains.subhunt import SubHunt
    from contpomdp.domains.tabular import TabularPomdp

    if isinstance(model, LightDark):
        return enumerate_lightdark(model)
    if isinstance(model, SubHunt):
        return enumerate_subhunt(model)
    if isinstance(model, TabularPomdp):
        return model.enumerate_mdp()
    raise ConfigurationError(f"QMDP needs an enumerable state space; {model.name} has none")
