"""Weighted particle beliefs and particle-filter updates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from contpomdp.core import GenerativePomdp, _vec, seed_kernels

REINVIGORATION_ESS_FRACTION = 0.1


@njit(cache=True)
def sample_index(cumw, start, n):
    """Index in ``[start, start + n)`` drawn proportionally to the weights.

    ``cumw`` holds running sums of the weights over that range.  An all-zero
    range falls back to a uniform draw.
    """
    total = cumw[start + n - 1]
    if not total > 0.0:
        return start + np.random.randint(n)
    u = np.random.random() * total
    lo = start
    hi = start + n - 1
    while lo < hi:
        mid = (lo + hi) >> 1
        if cumw[mid] > u:
            hi = mid
        else:
            lo = mid + 1
    return lo


@njit(cache=True)
def _cumsum_inplace(w, n):
    acc = 0.0
    for i in range(n):
        acc += w[i]
        w[i] = acc
    return acc


@njit
def gpf_kernel(dom, src, src_cw, src_start, src_n, a, m, dst, dst_start, o_sim, tmp_s, tmp_w, tmp_r):
    """Particle-filter generative step of the belief MDP.

    Simulates one observation from a state drawn from the source belief,
    propagates ``m`` drawn particles, weights them by that observation and
    resamples them into ``dst[dst_start:dst_start + m]``.  Returns the
    weight-averaged reward and whether every weight was zero.
    """
    i = sample_index(src_cw, src_start, src_n)
    dom.step(src[i], a, tmp_s[0], o_sim)
    for j in range(m):
        i = sample_index(src_cw, src_start, src_n)
        tmp_r[j] = dom.transition(src[i], a, tmp_s[j])
        tmp_w[j] = dom.obs_density(src[i], a, tmp_s[j], o_sim)
    total = 0.0
    for j in range(m):
        total += tmp_w[j]
    depleted = not total > 0.0
    if depleted:
        for j in range(m):
            tmp_w[j] = 1.0
        total = float(m)
    rbar = 0.0
    for j in range(m):
        rbar += tmp_w[j] * tmp_r[j]
    rbar /= total
    _cumsum_inplace(tmp_w, m)
    for j in range(m):
        k = sample_index(tmp_w, 0, m)
        dst[dst_start + j] = tmp_s[k]
    return rbar, depleted


@njit
def filter_kernel(dom, src, src_cw, a, o, m, out, reinvigorate):
    """Sequential importance resampling step against a real observation."""
    n = src.shape[0]
    tmp_s = np.empty((m, src.shape[1]))
    w = np.empty(m)
    for j in range(m):
        i = sample_index(src_cw, 0, n)
        dom.transition(src[i], a, tmp_s[j])
        w[j] = dom.obs_density(src[i], a, tmp_s[j], o)
    total = 0.0
    sq = 0.0
    for j in range(m):
        total += w[j]
        sq += w[j] * w[j]
    depleted = not total > 0.0
    if depleted:
        for j in range(m):
            w[j] = 1.0
        total = float(m)
        sq = float(m)
    ess = total * total / sq
    _cumsum_inplace(w, m)
    for j in range(m):
        out[j] = tmp_s[sample_index(w, 0, m)]
    reinvigorated = False
    if reinvigorate and ess < REINVIGORATION_ESS_FRACTION * m:
        dom.reinvigorate(out, m)
        reinvigorated = True
    return depleted, ess, reinvigorated


@dataclass
class WeightedParticleBelief:
    """Particles (one state per row) with nonnegative weights.

    ``cumulative`` caches the running weight sums used for binary-search
    sampling.  Beliefs are treated as values: operations return new ones.
    """

    particles: np.ndarray
    weights: np.ndarray
    depleted: bool = False
    reinvigorated: bool = False
    cumulative: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.particles = np.ascontiguousarray(np.atleast_2d(self.particles), dtype=np.float64)
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64).reshape(-1)
        if len(self.particles) != len(self.weights) or len(self.weights) == 0:
            raise ValueError("need at least one particle and one weight per particle")
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite and nonnegative")
        if not self.weights.sum() > 0:
            raise ValueError("at least one weight must be positive")
        self.cumulative = np.cumsum(self.weights)

    @classmethod
    def uniform(cls, particles, **flags) -> WeightedParticleBelief:
        particles = np.atleast_2d(np.asarray(particles, dtype=np.float64))
        return cls(particles, np.ones(len(particles)), **flags)

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def probabilities(self) -> np.ndarray:
        return self.weights / self.cumulative[-1]

    def mean(self) -> np.ndarray:
        return self.probabilities @ self.particles


def sample_state(belief: WeightedParticleBelief, rng: np.random.Generator) -> np.ndarray:
    """One particle drawn with probability proportional to its weight."""
    u = rng.random() * belief.cumulative[-1]
    i = min(int(np.searchsorted(belief.cumulative, u, side="right")), len(belief) - 1)
    return belief.particles[i].copy()


def sample_states(belief: WeightedParticleBelief, rng: np.random.Generator, k: int) -> np.ndarray:
    """``k`` independent draws, returned as row indices."""
    u = rng.random(k) * belief.cumulative[-1]
    return np.minimum(np.searchsorted(belief.cumulative, u, side="right"), len(belief) - 1)


def effective_sample_size(belief: WeightedParticleBelief) -> float:
    w = belief.weights
    return float(w.sum() ** 2 / np.dot(w, w))


def filter_update(
    model: GenerativePomdp,
    belief: WeightedParticleBelief,
    a,
    o_env,
    m: int,
    rng: np.random.Generator,
    reinvigorate: bool = True,
) -> WeightedParticleBelief:
    """SIR update of ``belief`` after taking ``a`` and observing ``o_env``.

    The result has ``m`` equally weighted particles.  If every importance
    weight vanishes the propagated particles are kept unweighted and the
    result is flagged ``depleted``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    seed_kernels(rng)
    out = np.empty((m, model.state_dim))
    depleted, _, reinvigorated = filter_kernel(
        model.kernel, belief.particles, belief.cumulative, _vec(a), _vec(o_env), m, out, reinvigorate
    )
    return WeightedParticleBelief.uniform(out, depleted=bool(depleted), reinvigorated=bool(reinvigorated))


def gpf_step(model: GenerativePomdp, belief: WeightedParticleBelief, a, m: int, rng: np.random.Generator):
    """Sample ``(b', r)`` from the particle-filter belief-MDP model with ``m`` particles."""
    if m < 1:
        raise ValueError("m must be >= 1")
    seed_kernels(rng)
    sd = model.state_dim
    out = np.empty((m, sd))
    rbar, depleted = gpf_kernel(
        model.kernel, belief.particles, belief.cumulative, 0, len(belief), _vec(a), m, out, 0,
        np.empty(model.obs_dim), np.empty((m, sd)), np.empty(m), np.empty(m),
    )
    return WeightedParticleBelief.uniform(out, depleted=bool(depleted)), float(rbar)
