"""Tree-search planners: POMCP, POMCP-DPW, modified POMCP-DPW, POMCPOW, PFT-DPW.

Every planner shares the action-widening step and differs only in how one
simulation descends the tree.  Simulations are written as a descent loop that
records ``(history, action node, reward)`` per layer followed by a backup
pass; this is the same computation as the recursive formulation, one frame
per loop turn.
"""

from __future__ import annotations

import logging
import math
import time
from collections import namedtuple
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from contpomdp.belief import WeightedParticleBelief, gpf_kernel
from contpomdp.core import ConfigurationError, GenerativePomdp, _vec, seed_kernels
from contpomdp.tree import SearchTree, new_tree

log = logging.getLogger(__name__)

ALGORITHMS = ("pomcp", "pomcp_dpw", "modified_pomcp_dpw", "pomcpow", "pft_dpw")
TIME_CHECK_INTERVAL = 64

KernelParams = namedtuple(
    "KernelParams",
    "c k_a alpha_a k_o alpha_o d_max widen_actions widen_obs heuristic m alpha_a_d alpha_o_d e_d",
)


def default_schedules(d_max: int):
    """Depth-indexed ``(alpha_a, alpha_o, e)`` for the modified solver.

    Entry ``d`` applies with ``d`` layers still to go, i.e. at depth
    ``d_max - d`` below the root.  Widening exponents are ``1 / (10 d + 3)``:
    smallest at the root and growing toward the leaves.  The exploration
    exponent stays at 1/2.
    """
    d = np.arange(d_max + 1, dtype=np.float64)
    alpha = 1.0 / (10.0 * d + 3.0)
    return alpha.copy(), alpha.copy(), np.full(d_max + 1, 0.5)


@dataclass
class SolverConfig:
    """Hyperparameters for one planner.

    ``widen_actions=None`` considers every action of a finite action space at
    the first visit and widens progressively on continuous spaces.  Exactly
    one of ``iterations`` and ``time_budget_ms`` must be set.
    """

    c: float = 1.0
    k_a: float = 10.0
    alpha_a: float = 0.5
    k_o: float = 5.0
    alpha_o: float = 1.0 / 15.0
    m: int = 20
    d_max: int = 20
    iterations: int | None = 1000
    time_budget_ms: float | None = None
    seed: int = 0
    rollout: str = "heuristic"
    widen_actions: bool | None = None
    widen_observations: bool = True
    alpha_a_schedule: tuple | None = None
    alpha_o_schedule: tuple | None = None
    e_schedule: tuple | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.k_a > 0 or not self.k_o > 0:
            raise ConfigurationError("k_a and k_o must be positive")
        for name in ("alpha_a", "alpha_o"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {v}")
        if self.d_max < 1:
            raise ConfigurationError("d_max must be >= 1")
        if self.m < 1:
            raise ConfigurationError("m must be >= 1")
        if (self.iterations is None) == (self.time_budget_ms is None):
            raise ConfigurationError("set exactly one of iterations and time_budget_ms")
        if self.iterations is not None and self.iterations < 0:
            raise ConfigurationError("iterations must be >= 0")
        if self.time_budget_ms is not None and self.time_budget_ms <= 0:
            raise ConfigurationError("time_budget_ms must be positive")
        if self.rollout not in ("heuristic", "random"):
            raise ConfigurationError(f"unknown rollout policy {self.rollout!r}")
        for name in ("alpha_a_schedule", "alpha_o_schedule", "e_schedule"):
            v = getattr(self, name)
            if v is not None and len(v) != self.d_max + 1:
                raise ConfigurationError(f"{name} needs d_max + 1 entries")

    def replace(self, **changes) -> SolverConfig:
        return replace(self, **changes)

    def kernel_params(self, model: GenerativePomdp) -> KernelParams:
        aa, ao, e = default_schedules(self.d_max)
        if self.alpha_a_schedule is not None:
            aa = np.asarray(self.alpha_a_schedule, dtype=np.float64)
        if self.alpha_o_schedule is not None:
            ao = np.asarray(self.alpha_o_schedule, dtype=np.float64)
        if self.e_schedule is not None:
            e = np.asarray(self.e_schedule, dtype=np.float64)
        widen = (not model.has_finite_actions) if self.widen_actions is None else bool(self.widen_actions)
        if not widen and not model.has_finite_actions:
            raise ConfigurationError("cannot enumerate a continuous action space")
        return KernelParams(
            float(self.c), float(self.k_a), float(self.alpha_a), float(self.k_o), float(self.alpha_o),
            int(self.d_max), widen, bool(self.widen_observations), self.rollout == "heuristic",
            int(self.m), aa, ao, e,
        )


# ---------------------------------------------------------------------------
# Selection and widening rules


@njit(cache=True)
def ucb_score(q, n_parent, n_child, c):
    """Q + c sqrt(log N(h) / N(ha)); untried children score +inf."""
    if n_child == 0:
        return np.inf
    if n_parent <= 1:
        return q
    return q + c * math.sqrt(math.log(n_parent) / n_child)


@njit(cache=True)
def polynomial_score(q, n_parent, n_child, e, scale=1.0):
    """Q + scale * sqrt(N(h)^e / N(ha)); untried children score +inf.

    ``scale`` puts the bonus on the reward scale of the domain.
    """
    if n_child == 0:
        return np.inf
    return q + scale * math.sqrt(float(n_parent) ** e / n_child)


@njit(cache=True)
def widening_allows(n_children, n_visits, k, alpha):
    """Progressive widening gate |C| <= k N^alpha."""
    return n_children <= k * float(n_visits) ** alpha


@njit(cache=True)
def floor_increment(n, alpha):
    """True when floor(n^alpha) > floor((n - 1)^alpha), for visit number n >= 1."""
    return math.floor(float(n) ** alpha + 1e-9) > math.floor(float(n - 1) ** alpha + 1e-9)


@njit
def next_action(tree, dom, h, buf):
    """Add the next candidate action under ``h``; returns the new node or -1.

    Finite spaces yield untried actions in enumeration order and nothing once
    exhausted; continuous spaces draw from the domain's action sampler.
    """
    n = tree.h_nchild[h]
    if dom.n_actions > 0:
        if n < dom.n_actions:
            return tree.new_action(h, dom.actions[n], n)
        return -1
    dom.sample_action(buf)
    return tree.new_action(h, buf, -1)


@njit
def _expand_all(tree, dom, h):
    if tree.h_nchild[h] == 0:
        for i in range(dom.n_actions):
            tree.new_action(h, dom.actions[i], i)


@njit
def select_ucb(tree, h, c):
    best = -np.inf
    best_a = -1
    n_h = tree.h_N[h]
    ha = tree.h_first[h]
    while ha >= 0:
        v = ucb_score(tree.a_Q[ha], n_h, tree.a_N[ha], c)
        if v > best or best_a < 0:
            best = v
            best_a = ha
        ha = tree.a_next[ha]
    return best_a


@njit
def select_polynomial(tree, h, e, scale):
    best = -np.inf
    best_a = -1
    n_h = tree.h_N[h]
    ha = tree.h_first[h]
    while ha >= 0:
        v = polynomial_score(tree.a_Q[ha], n_h, tree.a_N[ha], e, scale)
        if v > best or best_a < 0:
            best = v
            best_a = ha
        ha = tree.a_next[ha]
    return best_a


@njit
def action_prog_widen(tree, dom, h, p, buf):
    """Widen the action set of ``h`` if allowed, then pick a child by UCB."""
    if not p.widen_actions:
        _expand_all(tree, dom, h)
    elif widening_allows(tree.h_nchild[h], tree.h_N[h], p.k_a, p.alpha_a):
        next_action(tree, dom, h, buf)
    return select_ucb(tree, h, p.c)


@njit
def action_prog_widen_modified(tree, dom, h, d, p, buf):
    """Floor-increment widening and polynomial exploration at depth-to-go ``d``."""
    if not p.widen_actions:
        _expand_all(tree, dom, h)
    elif tree.h_nchild[h] == 0 or floor_increment(tree.h_N[h] + 1, p.alpha_a_d[d]):
        next_action(tree, dom, h, buf)
    return select_polynomial(tree, h, p.e_d[d], p.c)


# ---------------------------------------------------------------------------
# Rollouts


@njit
def rollout_kernel(dom, s, d, heuristic):
    """Discounted return of the rollout policy from ``s`` for up to ``d`` steps."""
    cur = s.copy()
    nxt = np.empty(dom.state_dim)
    a = np.empty(dom.action_dim)
    gamma = dom.discount
    total = 0.0
    disc = 1.0
    for _ in range(d):
        if dom.is_terminal(cur):
            break
        if heuristic:
            dom.rollout_action(cur, a)
        else:
            dom.sample_action(a)
        r = dom.transition(cur, a, nxt)
        total += disc * r
        disc *= gamma
        cur, nxt = nxt, cur
    return total


@njit
def _backup(tree, path_h, path_a, path_r, depth, leaf, gamma):
    total = leaf
    for i in range(depth - 1, -1, -1):
        total = path_r[i] + gamma * total
        tree.backup(path_h[i], path_a[i], total)
    return total


# ---------------------------------------------------------------------------
# One simulation per algorithm


@njit
def simulate_pomcp_dpw(tree, dom, s0, h, d, p):
    """POMCP with double progressive widening (vanilla POMCP when widening is off)."""
    s = s0.copy()
    sp = np.empty(dom.state_dim)
    o = np.empty(dom.obs_dim)
    act = np.empty(dom.action_dim)
    path_h = np.empty(d + 1, np.int64)
    path_a = np.empty(d + 1, np.int64)
    path_r = np.empty(d + 1)
    depth = 0
    leaf = 0.0
    while d > 0 and not dom.is_terminal(s):
        ha = action_prog_widen(tree, dom, h, p, act)
        act[:] = tree.a_act[ha]
        path_h[depth] = h
        path_a[depth] = ha
        if not p.widen_obs or widening_allows(tree.a_nchild[ha], tree.a_N[ha], p.k_o, p.alpha_o):
            r = dom.step(s, act, sp, o)
            hao = tree.find_observation(ha, o)
            if hao < 0:
                hao = tree.new_history(ha, o)
            tree.h_M[hao] += 1
            tree.a_Msum[ha] += 1
            tree.h_passes[hao] += 1
            tree.append_particle(hao, sp, 1.0)
            path_r[depth] = r
            depth += 1
            if tree.h_M[hao] == 1:
                leaf = rollout_kernel(dom, sp, d - 1, p.heuristic)
                break
        else:
            hao = tree.select_by_generation(ha)
            tree.h_passes[hao] += 1
            sp[:] = tree.p_s[tree.sample_particle_uniform(hao)]
            path_r[depth] = dom.reward(s, act, sp)
            depth += 1
        s[:] = sp
        h = hao
        d -= 1
    return _backup(tree, path_h, path_a, path_r, depth, leaf, dom.discount)


@njit
def simulate_modified_pomcp_dpw(tree, dom, s0, h, d, p):
    """Modified POMCP-DPW: polynomial exploration, floor-increment widening,
    least-visited observation re-selection and no rollouts."""
    s = s0.copy()
    sp = np.empty(dom.state_dim)
    o = np.empty(dom.obs_dim)
    act = np.empty(dom.action_dim)
    path_h = np.empty(d + 1, np.int64)
    path_a = np.empty(d + 1, np.int64)
    path_r = np.empty(d + 1)
    depth = 0
    while d > 0 and not dom.is_terminal(s):
        ha = action_prog_widen_modified(tree, dom, h, d, p, act)
        act[:] = tree.a_act[ha]
        path_h[depth] = h
        path_a[depth] = ha
        if floor_increment(tree.a_N[ha] + 1, p.alpha_o_d[d]):
            r = dom.step(s, act, sp, o)
            hao = tree.find_observation(ha, o)
            if hao < 0:
                hao = tree.new_history(ha, o)
            tree.h_M[hao] += 1
            tree.a_Msum[ha] += 1
            tree.append_particle(hao, sp, 1.0)
        else:
            hao = tree.select_least_visited(ha)
            sp[:] = tree.p_s[tree.sample_particle_uniform(hao)]
            r = dom.reward(s, act, sp)
        tree.h_passes[hao] += 1
        path_r[depth] = r
        depth += 1
        s[:] = sp
        h = hao
        d -= 1
    return _backup(tree, path_h, path_a, path_r, depth, 0.0, dom.discount)


@njit
def simulate_pomcpow(tree, dom, s0, h, d, p):
    """POMCPOW: every visit adds a weighted particle to the chosen observation node."""
    s = s0.copy()
    sp = np.empty(dom.state_dim)
    o = np.empty(dom.obs_dim)
    act = np.empty(dom.action_dim)
    path_h = np.empty(d + 1, np.int64)
    path_a = np.empty(d + 1, np.int64)
    path_r = np.empty(d + 1)
    depth = 0
    leaf = 0.0
    while d > 0 and not dom.is_terminal(s):
        ha = action_prog_widen(tree, dom, h, p, act)
        act[:] = tree.a_act[ha]
        path_h[depth] = h
        path_a[depth] = ha
        r = dom.step(s, act, sp, o)
        is_new = False
        if not p.widen_obs or widening_allows(tree.a_nchild[ha], tree.a_N[ha], p.k_o, p.alpha_o):
            hao = tree.find_observation(ha, o)
            if hao < 0:
                hao = tree.new_history(ha, o)
                is_new = True
            tree.h_M[hao] += 1
            tree.a_Msum[ha] += 1
        else:
            hao = tree.select_by_generation(ha)
        tree.h_passes[hao] += 1
        tree.append_particle(hao, sp, dom.obs_density(s, act, sp, tree.h_obs[hao]))
        depth += 1
        if is_new:
            path_r[depth - 1] = r
            leaf = rollout_kernel(dom, sp, d - 1, p.heuristic)
            break
        sp[:] = tree.p_s[tree.sample_particle(hao)]
        path_r[depth - 1] = dom.reward(s, act, sp)
        s[:] = sp
        h = hao
        d -= 1
    return _backup(tree, path_h, path_a, path_r, depth, leaf, dom.discount)


@njit
def _all_terminal(dom, particles, start, n):
    for i in range(start, start + n):
        if not dom.is_terminal(particles[i]):
            return False
    return True


@njit
def simulate_pft(tree, dom, h, d, p):
    """PFT-DPW: MCTS-DPW over particle beliefs of ``m`` particles each."""
    m = p.m
    sd = dom.state_dim
    act = np.empty(dom.action_dim)
    o_sim = np.empty(dom.obs_dim)
    tmp_s = np.empty((m, sd))
    tmp_w = np.empty(m)
    tmp_r = np.empty(m)
    path_h = np.empty(d + 1, np.int64)
    path_a = np.empty(d + 1, np.int64)
    path_r = np.empty(d + 1)
    depth = 0
    leaf = 0.0
    while d > 0 and tree.h_terminal[h] == 0:
        ha = action_prog_widen(tree, dom, h, p, act)
        act[:] = tree.a_act[ha]
        path_h[depth] = h
        path_a[depth] = ha
        if not p.widen_obs or widening_allows(tree.a_nchild[ha], tree.a_N[ha], p.k_o, p.alpha_o):
            child = tree.new_history(ha, o_sim)
            start = tree.reserve(child, m)
            rbar, depleted = gpf_kernel(
                dom, tree.p_s, tree.p_cw, tree.h_pstart[h], tree.h_plen[h], act, m,
                tree.p_s, start, o_sim, tmp_s, tmp_w, tmp_r,
            )
            tree.set_uniform(child, m)
            tree.h_obs[child] = o_sim
            tree.h_reward[child] = rbar
            tree.h_M[child] = 1
            tree.h_passes[child] += 1
            tree.a_Msum[ha] += 1
            if depleted:
                tree.n_depleted += 1
            if _all_terminal(dom, tree.p_s, start, m):
                tree.h_terminal[child] = 1
            path_r[depth] = rbar
            depth += 1
            if tree.h_terminal[child] == 0:
                s = tree.p_s[tree.sample_particle(child)].copy()
                leaf = rollout_kernel(dom, s, d - 1, p.heuristic)
            break
        child = tree.select_uniform_child(ha)
        tree.h_passes[child] += 1
        path_r[depth] = tree.h_reward[child]
        depth += 1
        h = child
        d -= 1
    return _backup(tree, path_h, path_a, path_r, depth, leaf, dom.discount)


# ---------------------------------------------------------------------------
# Batched drivers (one compiled loop per algorithm)


@njit
def _run_pomcp_dpw(tree, dom, n, p):
    for _ in range(n):
        s = tree.p_s[tree.sample_particle(0)].copy()
        simulate_pomcp_dpw(tree, dom, s, 0, p.d_max, p)
        tree.iterations += 1


@njit
def _run_modified(tree, dom, n, p):
    for _ in range(n):
        s = tree.p_s[tree.sample_particle(0)].copy()
        simulate_modified_pomcp_dpw(tree, dom, s, 0, p.d_max, p)
        tree.iterations += 1


@njit
def _run_pomcpow(tree, dom, n, p):
    for _ in range(n):
        s = tree.p_s[tree.sample_particle(0)].copy()
        simulate_pomcpow(tree, dom, s, 0, p.d_max, p)
        tree.iterations += 1


@njit
def _run_pft(tree, dom, n, p):
    for _ in range(n):
        simulate_pft(tree, dom, 0, p.d_max, p)
        tree.iterations += 1


_RUNNERS = {
    "pomcp": _run_pomcp_dpw,
    "pomcp_dpw": _run_pomcp_dpw,
    "modified_pomcp_dpw": _run_modified,
    "pomcpow": _run_pomcpow,
    "pft_dpw": _run_pft,
}


@njit
def load_root(tree, dom, particles, weights):
    """Copy the root belief into node 0's particle slice."""
    n = particles.shape[0]
    start = tree.reserve(0, n)
    acc = 0.0
    for i in range(n):
        tree.p_s[start + i] = particles[i]
        tree.p_w[start + i] = weights[i]
        acc += weights[i]
        tree.p_cw[start + i] = acc
    tree.h_plen[0] = n
    if _all_terminal(dom, tree.p_s, start, n):
        tree.h_terminal[0] = 1


def best_root_action(tree: SearchTree) -> int:
    """Visited root action node with the largest Q (earliest on ties), or -1."""
    best, best_q = -1, -np.inf
    ha = tree.h_first[0]
    while ha >= 0:
        if tree.a_N[ha] > 0 and tree.a_Q[ha] > best_q:
            best, best_q = int(ha), float(tree.a_Q[ha])
        ha = tree.a_next[ha]
    return best


class TreePlanner:
    """Online planner building a fresh tree from the given belief at every call.

    After :meth:`plan` the tree stays available as ``last_tree`` and a few
    diagnostics in ``last_info``.
    """

    def __init__(self, model: GenerativePomdp, config: SolverConfig | None = None, algorithm: str = "pomcpow"):
        if algorithm not in ALGORITHMS:
            raise ConfigurationError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
        self.model = model
        self.config = config or SolverConfig()
        if algorithm == "pomcp":
            self.config = self.config.replace(widen_observations=False)
        self.algorithm = algorithm
        self.params = self.config.kernel_params(model)
        self._run = _RUNNERS[algorithm]
        self.last_tree: SearchTree | None = None
        self.last_info: dict = {}

    def __repr__(self) -> str:
        return f"TreePlanner({self.algorithm}, {self.model.name})"

    def build_tree(self, belief: WeightedParticleBelief, rng: np.random.Generator) -> SearchTree:
        """Run the search from ``belief`` and return the resulting tree."""
        m = self.model
        cfg = self.config
        tree = new_tree(m.state_dim, m.obs_dim, m.action_dim, capacity=max(1024, len(belief) + 64))
        load_root(tree, m.kernel, belief.particles, belief.weights)
        seed_kernels(rng)
        if cfg.iterations is not None:
            if cfg.iterations > 0:
                self._run(tree, m.kernel, cfg.iterations, self.params)
        else:
            deadline = time.perf_counter() + cfg.time_budget_ms / 1000.0
            while time.perf_counter() < deadline:
                self._run(tree, m.kernel, TIME_CHECK_INTERVAL, self.params)
        return tree

    def plan(self, belief: WeightedParticleBelief, rng: np.random.Generator) -> np.ndarray:
        """Best root action after the configured budget of simulations."""
        t0 = time.perf_counter()
        tree = self.build_tree(belief, rng)
        ha = best_root_action(tree)
        fallback = ha < 0
        if fallback:
            log.warning("%s finished no simulation; acting randomly", self)
            action = self.model.sample_action(rng)
        else:
            action = np.array(tree.a_act[ha])
        self.last_tree = tree
        self.last_info = {
            "iterations": int(tree.iterations),
            "fallback": fallback,
            "seconds": time.perf_counter() - t0,
            "zero_weight_resamples": int(tree.n_zero_weight),
            "depleted": int(tree.n_depleted),
        }
        return action


# ---------------------------------------------------------------------------
# Python entry points for single operations (tests, debugging)


def _params(model, config):
    return (config or SolverConfig()).kernel_params(model)


def start_tree(model: GenerativePomdp, belief: WeightedParticleBelief) -> SearchTree:
    tree = new_tree(model.state_dim, model.obs_dim, model.action_dim)
    load_root(tree, model.kernel, belief.particles, belief.weights)
    return tree


@njit
def _apw_entry(tree, dom, h, p):
    buf = np.empty(dom.action_dim)
    return action_prog_widen(tree, dom, h, p, buf)


@njit
def _next_action_entry(tree, dom, h):
    buf = np.empty(dom.action_dim)
    return next_action(tree, dom, h, buf)


def run_action_prog_widen(tree, model, h, config, rng) -> int:
    """Apply action widening at ``h`` and return the selected action node id."""
    seed_kernels(rng)
    return int(_apw_entry(tree, model.kernel, h, _params(model, config)))


def run_next_action(tree, model, h, rng) -> int:
    seed_kernels(rng)
    return int(_next_action_entry(tree, model.kernel, h))


def rollout(model: GenerativePomdp, s, d: int, policy: str, rng: np.random.Generator) -> float:
    """Discounted return of ``policy`` ("heuristic" or "random") from state ``s``."""
    if policy not in ("heuristic", "random"):
        raise ConfigurationError(f"unknown rollout policy {policy!r}")
    seed_kernels(rng)
    return float(rollout_kernel(model.kernel, _vec(s), int(d), policy == "heuristic"))


def simulate(algorithm: str, tree, model, start, d: int, config, rng, h: int = 0) -> float:
    """One simulation of ``algorithm`` from history node ``h``.

    ``start`` is the sampled state for the state-trajectory solvers and is
    ignored by ``pft_dpw``, which simulates from the belief stored at ``h``.
    """
    p = _params(model, config if algorithm != "pomcp" else (config or SolverConfig()).replace(widen_observations=False))
    seed_kernels(rng)
    k = model.kernel
    if algorithm in ("pomcp", "pomcp_dpw"):
        return float(simulate_pomcp_dpw(tree, k, _vec(start), h, d, p))
    if algorithm == "modified_pomcp_dpw":
        return float(simulate_modified_pomcp_dpw(tree, k, _vec(start), h, d, p))
    if algorithm == "pomcpow":
        return float(simulate_pomcpow(tree, k, _vec(start), h, d, p))
    if algorithm == "pft_dpw":
        return float(simulate_pft(tree, k, h, d, p))
    raise ConfigurationError(f"unknown algorithm {algorithm!r}")
