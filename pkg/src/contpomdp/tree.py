"""Array-backed search tree shared by every tree-search planner.

History nodes (the root belief and every observation-terminated history) and
action nodes live in parallel arrays indexed by integer ids; node 0 is the
root.  Children are singly linked lists kept in insertion order so argmax
ties resolve to the earliest child.  Each history node owns a contiguous slice
of a particle pool holding its states ``B``, raw weights ``W`` and running
weight sums; slices relocate with doubling capacity as they grow.
"""

from __future__ import annotations

import json
import math

import numpy as np
from numba import float64, int64, njit
from numba.experimental import jitclass

from contpomdp.belief import sample_index
from contpomdp.core import History

_spec = [
    ("state_dim", int64),
    ("obs_dim", int64),
    ("action_dim", int64),
    # history nodes
    ("n_h", int64),
    ("h_N", int64[:]),
    ("h_M", int64[:]),
    ("h_passes", int64[:]),
    ("h_parent", int64[:]),
    ("h_depth", int64[:]),
    ("h_first", int64[:]),
    ("h_last", int64[:]),
    ("h_nchild", int64[:]),
    ("h_next", int64[:]),
    ("h_obs", float64[:, :]),
    ("h_reward", float64[:]),
    ("h_terminal", int64[:]),
    ("h_pstart", int64[:]),
    ("h_plen", int64[:]),
    ("h_pcap", int64[:]),
    # action nodes
    ("n_a", int64),
    ("a_N", int64[:]),
    ("a_Q", float64[:]),
    ("a_sum", float64[:]),
    ("a_parent", int64[:]),
    ("a_act", float64[:, :]),
    ("a_index", int64[:]),
    ("a_next", int64[:]),
    ("a_first", int64[:]),
    ("a_last", int64[:]),
    ("a_nchild", int64[:]),
    ("a_Msum", int64[:]),
    # particle pool
    ("p_used", int64),
    ("p_s", float64[:, :]),
    ("p_w", float64[:]),
    ("p_cw", float64[:]),
    # diagnostics
    ("n_zero_weight", int64),
    ("n_depleted", int64),
    ("iterations", int64),
]


@njit(cache=True)
def _grow1(x, n):
    y = np.zeros(n, dtype=x.dtype)
    y[: x.shape[0]] = x
    return y


@njit(cache=True)
def _grow2(x, n):
    y = np.zeros((n, x.shape[1]), dtype=x.dtype)
    y[: x.shape[0]] = x
    return y


@jitclass(_spec)
class SearchTree:
    def __init__(self, state_dim, obs_dim, action_dim, capacity):
        cap = max(capacity, 4)
        self.state_dim = state_dim
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.n_h = 0
        self.h_N = np.zeros(cap, np.int64)
        self.h_M = np.zeros(cap, np.int64)
        self.h_passes = np.zeros(cap, np.int64)
        self.h_parent = np.zeros(cap, np.int64)
        self.h_depth = np.zeros(cap, np.int64)
        self.h_first = np.zeros(cap, np.int64)
        self.h_last = np.zeros(cap, np.int64)
        self.h_nchild = np.zeros(cap, np.int64)
        self.h_next = np.zeros(cap, np.int64)
        self.h_obs = np.zeros((cap, obs_dim))
        self.h_reward = np.zeros(cap)
        self.h_terminal = np.zeros(cap, np.int64)
        self.h_pstart = np.zeros(cap, np.int64)
        self.h_plen = np.zeros(cap, np.int64)
        self.h_pcap = np.zeros(cap, np.int64)
        self.n_a = 0
        self.a_N = np.zeros(cap, np.int64)
        self.a_Q = np.zeros(cap)
        self.a_sum = np.zeros(cap)
        self.a_parent = np.zeros(cap, np.int64)
        self.a_act = np.zeros((cap, action_dim))
        self.a_index = np.zeros(cap, np.int64)
        self.a_next = np.zeros(cap, np.int64)
        self.a_first = np.zeros(cap, np.int64)
        self.a_last = np.zeros(cap, np.int64)
        self.a_nchild = np.zeros(cap, np.int64)
        self.a_Msum = np.zeros(cap, np.int64)
        self.p_used = 0
        self.p_s = np.zeros((cap, state_dim))
        self.p_w = np.zeros(cap)
        self.p_cw = np.zeros(cap)
        self.n_zero_weight = 0
        self.n_depleted = 0
        self.iterations = 0
        self.new_history(-1, np.zeros(obs_dim))

    # -- allocation -------------------------------------------------------

    def _ensure_h(self):
        if self.n_h < self.h_N.shape[0]:
            return
        n = 2 * self.h_N.shape[0]
        self.h_N = _grow1(self.h_N, n)
        self.h_M = _grow1(self.h_M, n)
        self.h_passes = _grow1(self.h_passes, n)
        self.h_parent = _grow1(self.h_parent, n)
        self.h_depth = _grow1(self.h_depth, n)
        self.h_first = _grow1(self.h_first, n)
        self.h_last = _grow1(self.h_last, n)
        self.h_nchild = _grow1(self.h_nchild, n)
        self.h_next = _grow1(self.h_next, n)
        self.h_obs = _grow2(self.h_obs, n)
        self.h_reward = _grow1(self.h_reward, n)
        self.h_terminal = _grow1(self.h_terminal, n)
        self.h_pstart = _grow1(self.h_pstart, n)
        self.h_plen = _grow1(self.h_plen, n)
        self.h_pcap = _grow1(self.h_pcap, n)

    def _ensure_a(self):
        if self.n_a < self.a_N.shape[0]:
            return
        n = 2 * self.a_N.shape[0]
        self.a_N = _grow1(self.a_N, n)
        self.a_Q = _grow1(self.a_Q, n)
        self.a_sum = _grow1(self.a_sum, n)
        self.a_parent = _grow1(self.a_parent, n)
        self.a_act = _grow2(self.a_act, n)
        self.a_index = _grow1(self.a_index, n)
        self.a_next = _grow1(self.a_next, n)
        self.a_first = _grow1(self.a_first, n)
        self.a_last = _grow1(self.a_last, n)
        self.a_nchild = _grow1(self.a_nchild, n)
        self.a_Msum = _grow1(self.a_Msum, n)

    def _ensure_p(self, k):
        need = self.p_used + k
        if need <= self.p_w.shape[0]:
            return
        n = self.p_w.shape[0]
        while n < need:
            n *= 2
        self.p_s = _grow2(self.p_s, n)
        self.p_w = _grow1(self.p_w, n)
        self.p_cw = _grow1(self.p_cw, n)

    def new_history(self, parent_a, o):
        """Append a history node under action node ``parent_a`` (-1 for the root)."""
        self._ensure_h()
        h = self.n_h
        self.n_h += 1
        self.h_N[h] = 0
        self.h_M[h] = 0
        self.h_passes[h] = 0
        self.h_parent[h] = parent_a
        self.h_first[h] = -1
        self.h_last[h] = -1
        self.h_nchild[h] = 0
        self.h_next[h] = -1
        self.h_obs[h] = o
        self.h_reward[h] = 0.0
        self.h_terminal[h] = 0
        self.h_pstart[h] = 0
        self.h_plen[h] = 0
        self.h_pcap[h] = 0
        if parent_a < 0:
            self.h_depth[h] = 0
        else:
            self.h_depth[h] = self.h_depth[self.a_parent[parent_a]] + 1
            last = self.a_last[parent_a]
            if last < 0:
                self.a_first[parent_a] = h
            else:
                self.h_next[last] = h
            self.a_last[parent_a] = h
            self.a_nchild[parent_a] += 1
        return h

    def new_action(self, h, act, index):
        """Append an action node for action vector ``act`` under history ``h``."""
        self._ensure_a()
        ha = self.n_a
        self.n_a += 1
        self.a_N[ha] = 0
        self.a_Q[ha] = 0.0
        self.a_sum[ha] = 0.0
        self.a_parent[ha] = h
        self.a_act[ha] = act
        self.a_index[ha] = index
        self.a_next[ha] = -1
        self.a_first[ha] = -1
        self.a_last[ha] = -1
        self.a_nchild[ha] = 0
        self.a_Msum[ha] = 0
        last = self.h_last[h]
        if last < 0:
            self.h_first[h] = ha
        else:
            self.a_next[last] = ha
        self.h_last[h] = ha
        self.h_nchild[h] += 1
        return ha

    # -- particles --------------------------------------------------------

    def reserve(self, h, k):
        """Give ``h`` a fresh slice of ``k`` particle slots; returns its start."""
        self._ensure_p(k)
        start = self.p_used
        self.p_used += k
        self.h_pstart[h] = start
        self.h_pcap[h] = k
        self.h_plen[h] = 0
        return start

    def set_uniform(self, h, k):
        """Mark the first ``k`` reserved slots of ``h`` as unit-weight particles."""
        start = self.h_pstart[h]
        for i in range(k):
            self.p_w[start + i] = 1.0
            self.p_cw[start + i] = i + 1.0
        self.h_plen[h] = k

    def append_particle(self, h, s, w):
        """Append state ``s`` with weight ``w`` to ``B(h)``/``W(h)``."""
        n = self.h_plen[h]
        if n == self.h_pcap[h]:
            old = self.h_pstart[h]
            cap = max(4, 2 * n)
            self._ensure_p(cap)
            start = self.p_used
            self.p_used += cap
            for i in range(n):
                self.p_s[start + i] = self.p_s[old + i]
                self.p_w[start + i] = self.p_w[old + i]
                self.p_cw[start + i] = self.p_cw[old + i]
            self.h_pstart[h] = start
            self.h_pcap[h] = cap
        start = self.h_pstart[h]
        self.p_s[start + n] = s
        self.p_w[start + n] = w
        prev = self.p_cw[start + n - 1] if n > 0 else 0.0
        self.p_cw[start + n] = prev + w
        self.h_plen[h] = n + 1

    def sample_particle(self, h):
        """Pool index of a particle of ``h`` drawn proportionally to weight."""
        start = self.h_pstart[h]
        n = self.h_plen[h]
        if not self.p_cw[start + n - 1] > 0.0:
            self.n_zero_weight += 1
        return sample_index(self.p_cw, start, n)

    def sample_particle_uniform(self, h):
        return self.h_pstart[h] + np.random.randint(self.h_plen[h])

    # -- lookups ----------------------------------------------------------

    def find_observation(self, ha, o):
        """Child of ``ha`` whose observation equals ``o`` exactly, or -1."""
        c = self.a_first[ha]
        while c >= 0:
            same = True
            for i in range(self.obs_dim):
                if self.h_obs[c, i] != o[i]:
                    same = False
                    break
            if same:
                return c
            c = self.h_next[c]
        return -1

    def select_by_generation(self, ha):
        """Child of ``ha`` drawn with probability ``M(hao) / sum M``."""
        u = np.random.random() * self.a_Msum[ha]
        c = self.a_first[ha]
        acc = 0.0
        last = c
        while c >= 0:
            acc += self.h_M[c]
            if u < acc:
                return c
            last = c
            c = self.h_next[c]
        return last

    def select_least_visited(self, ha):
        """Child of ``ha`` minimising ``N(hao) / M(hao)`` (earliest on ties)."""
        c = self.a_first[ha]
        best = -1
        best_v = np.inf
        while c >= 0:
            v = self.h_N[c] / max(self.h_M[c], 1)
            if v < best_v:
                best_v = v
                best = c
            c = self.h_next[c]
        return best

    def select_uniform_child(self, ha):
        k = np.random.randint(self.a_nchild[ha])
        c = self.a_first[ha]
        for _ in range(k):
            c = self.h_next[c]
        return c

    def backup(self, h, ha, total):
        self.h_N[h] += 1
        n = self.a_N[ha] + 1
        self.a_N[ha] = n
        self.a_Q[ha] += (total - self.a_Q[ha]) / n
        self.a_sum[ha] += total


def new_tree(state_dim: int, obs_dim: int, action_dim: int, capacity: int = 1024) -> SearchTree:
    return SearchTree(state_dim, obs_dim, action_dim, capacity)


# ---------------------------------------------------------------------------
# Inspection helpers (Python side)


def action_children(tree: SearchTree, h: int) -> list[int]:
    out = []
    c = tree.h_first[h]
    while c >= 0:
        out.append(int(c))
        c = tree.a_next[c]
    return out


def observation_children(tree: SearchTree, ha: int) -> list[int]:
    out = []
    c = tree.a_first[ha]
    while c >= 0:
        out.append(int(c))
        c = tree.h_next[c]
    return out


def root_values(tree: SearchTree) -> list[tuple[np.ndarray, int, float]]:
    """``(action, N(ba), Q(ba))`` for every root action in insertion order."""
    return [(np.array(tree.a_act[ha]), int(tree.a_N[ha]), float(tree.a_Q[ha])) for ha in action_children(tree, 0)]


def node_history(tree: SearchTree, h: int) -> History:
    """Reconstruct the action/observation history leading to node ``h``."""
    acts, obs = [], []
    while h > 0:
        ha = tree.h_parent[h]
        obs.append(tuple(tree.h_obs[h]))
        acts.append(tuple(tree.a_act[ha]))
        h = tree.a_parent[ha]
    return History(0, tuple(reversed(acts)), tuple(reversed(obs)))


def tree_summary(tree: SearchTree) -> dict:
    """Plain-dict snapshot of every node's statistics."""
    nh, na = tree.n_h, tree.n_a
    return {
        "iterations": int(tree.iterations),
        "history_nodes": {
            "N": tree.h_N[:nh].tolist(),
            "M": tree.h_M[:nh].tolist(),
            "depth": tree.h_depth[:nh].tolist(),
            "parent": tree.h_parent[:nh].tolist(),
            "n_particles": tree.h_plen[:nh].tolist(),
            "n_children": tree.h_nchild[:nh].tolist(),
        },
        "action_nodes": {
            "N": tree.a_N[:na].tolist(),
            "Q": [q if math.isfinite(q) else None for q in tree.a_Q[:na].tolist()],
            "parent": tree.a_parent[:na].tolist(),
            "action": tree.a_act[:na].tolist(),
            "n_children": tree.a_nchild[:na].tolist(),
        },
    }


def dump_tree(tree: SearchTree, path=None) -> str:
    """Serialise :func:`tree_summary` to JSON, optionally writing it to ``path``."""
    text = json.dumps(tree_summary(tree))
    if path is not None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
    return text


def tree_fingerprint(tree: SearchTree) -> bytes:
    """Bytes of all node statistics; equal trees give equal fingerprints."""
    nh, na = tree.n_h, tree.n_a
    parts = [
        tree.h_N[:nh], tree.h_M[:nh], tree.h_parent[:nh], tree.h_plen[:nh], tree.h_obs[:nh],
        tree.a_N[:na], tree.a_Q[:na], tree.a_parent[:na], tree.a_act[:na],
    ]
    return b"".join(np.ascontiguousarray(p).tobytes() for p in parts)
