"""Problem abstractions shared by every solver and domain.

A domain is a numba ``jitclass`` instance (the *kernel*) exposing a fixed set
of attributes and methods that the compiled solvers call directly:

``state_dim``, ``obs_dim``, ``action_dim``, ``n_actions`` (0 for a continuous
action space), ``actions`` (``n_actions x action_dim`` table), ``discount``,
``step(s, a, sp, o) -> r``, ``transition(s, a, sp) -> r`` (``step`` without
the observation draw), ``obs_density(s, a, sp, o)``, ``reward(s, a, sp)``,
``is_terminal(s)``, ``sample_action(out)``, ``rollout_action(s, out)``,
``sample_initial(out)`` and ``reinvigorate(particles, n)``.

States, actions and observations are flat ``float64`` vectors.  Kernel methods
draw randomness from numba's internal generator, which is reseeded from a
caller-owned :class:`numpy.random.Generator` every time Python enters compiled
code, so a seeded run is replayable bit for bit.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from numba import float64, int64, njit, typeof
from numba.experimental import jitclass


class DomainError(RuntimeError):
    """Raised when a model is asked for something its dynamics forbid."""


class ConfigurationError(ValueError):
    """Raised for invalid solver, domain or experiment settings."""


# ---------------------------------------------------------------------------
# RNG plumbing


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator for ``seed`` mixed with an optional stream path.

    ``make_rng(seed, episode, k)`` yields independent streams per episode and
    per consumer while staying a pure function of its arguments.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *stream])))


@njit(cache=True)
def _seed_numba(seed):
    np.random.seed(seed)


def seed_kernels(rng: np.random.Generator) -> None:
    """Reseed numba's generator from ``rng`` before entering compiled code."""
    _seed_numba(int(rng.integers(0, 2**32 - 1)))


# ---------------------------------------------------------------------------
# Kernel trampolines (compiled once per kernel type)


@njit
def _k_step(kernel, s, a):
    sp = np.empty(kernel.state_dim)
    o = np.empty(kernel.obs_dim)
    r = kernel.step(s, a, sp, o)
    return sp, o, r


@njit
def _k_obs_density(kernel, s, a, sp, o):
    return kernel.obs_density(s, a, sp, o)


@njit
def _k_reward(kernel, s, a, sp):
    return kernel.reward(s, a, sp)


@njit
def _k_is_terminal(kernel, s):
    return kernel.is_terminal(s)


@njit
def _k_sample_initial(kernel, n):
    out = np.empty((n, kernel.state_dim))
    for i in range(n):
        kernel.sample_initial(out[i])
    return out


@njit
def _k_sample_action(kernel):
    out = np.empty(kernel.action_dim)
    kernel.sample_action(out)
    return out


@njit
def _k_rollout_action(kernel, s):
    out = np.empty(kernel.action_dim)
    kernel.rollout_action(s, out)
    return out


def _vec(x) -> np.ndarray:
    return np.ascontiguousarray(np.atleast_1d(np.asarray(x, dtype=np.float64)))


class GenerativePomdp:
    """Python face of a compiled generative POMDP.

    Subclasses build ``self.kernel`` and may override :meth:`initial_belief`
    when part of the initial state is known to the agent.
    """

    name = "pomdp"

    def __init__(self, kernel, **params):
        self.kernel = kernel
        self.params = params

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.params})"

    @property
    def state_dim(self) -> int:
        return self.kernel.state_dim

    @property
    def obs_dim(self) -> int:
        return self.kernel.obs_dim

    @property
    def action_dim(self) -> int:
        return self.kernel.action_dim

    @property
    def discount(self) -> float:
        return self.kernel.discount

    @property
    def has_finite_actions(self) -> bool:
        return self.kernel.n_actions > 0

    @property
    def actions(self) -> np.ndarray | None:
        """The action table (one row per action) or ``None`` if continuous."""
        if self.kernel.n_actions == 0:
            return None
        return np.array(self.kernel.actions)

    def generative_step(self, s, a, rng: np.random.Generator):
        """Sample ``(s', o, r)`` from G(s, a)."""
        s, a = _vec(s), _vec(a)
        if _k_is_terminal(self.kernel, s):
            raise DomainError(f"generative step from terminal state {s}")
        seed_kernels(rng)
        return _k_step(self.kernel, s, a)

    def obs_density(self, o, s, a, sp) -> float:
        return _k_obs_density(self.kernel, _vec(s), _vec(a), _vec(sp), _vec(o))

    def reward(self, s, a, sp) -> float:
        return _k_reward(self.kernel, _vec(s), _vec(a), _vec(sp))

    def is_terminal(self, s) -> bool:
        return bool(_k_is_terminal(self.kernel, _vec(s)))

    def sample_initial(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        """One initial state, or an ``(n, state_dim)`` array when ``n`` is given."""
        seed_kernels(rng)
        out = _k_sample_initial(self.kernel, 1 if n is None else n)
        return out[0] if n is None else out

    def initial_belief(self, s0, n: int, rng: np.random.Generator):
        """Agent's belief at the start of an episode whose true state is ``s0``."""
        from contpomdp.belief import WeightedParticleBelief

        return WeightedParticleBelief.uniform(self.sample_initial(rng, n))

    def sample_action(self, rng: np.random.Generator) -> np.ndarray:
        seed_kernels(rng)
        return _k_sample_action(self.kernel)

    def rollout_action(self, s, rng: np.random.Generator) -> np.ndarray:
        seed_kernels(rng)
        return _k_rollout_action(self.kernel, _vec(s))

    def describe_action(self, a) -> str:
        return " ".join(f"{x:g}" for x in _vec(a))


# ---------------------------------------------------------------------------
# Histories


@dataclass(frozen=True)
class History:
    """Action/observation sequence hanging off a root belief."""

    root: int = 0
    actions: tuple = ()
    observations: tuple = ()

    def __post_init__(self):
        if len(self.observations) not in (len(self.actions), len(self.actions) - 1):
            raise ValueError("actions and observations must alternate")

    @property
    def depth(self) -> int:
        return len(self.actions)

    def with_action(self, a) -> History:
        if len(self.actions) != len(self.observations):
            raise ValueError("history already ends with an action")
        return History(self.root, self.actions + (tuple(_vec(a)),), self.observations)

    def with_observation(self, o) -> History:
        if len(self.actions) != len(self.observations) + 1:
            raise ValueError("history must end with an action before an observation")
        return History(self.root, self.actions, self.observations + (tuple(_vec(o)),))

    def is_prefix_of(self, other: History) -> bool:
        n, m = len(self.actions), len(self.observations)
        return (
            self.root == other.root
            and other.actions[:n] == self.actions
            and other.observations[:m] == self.observations
            and len(other.actions) >= n
            and len(other.observations) >= m
        )


# ---------------------------------------------------------------------------
# Discretization


@njit(cache=True)
def snap_to_bins(x, width):
    """In-place snap of every coordinate to the centre of its bin."""
    for i in range(x.shape[0]):
        w = width[i]
        x[i] = (np.floor(x[i] / w) + 0.5) * w


@functools.lru_cache(maxsize=None)
def _discretized_class(inner_type):
    spec = [
        ("inner", inner_type),
        ("obs_width", float64[:]),
        ("snap_obs", int64),
        ("actions", float64[:, :]),
        ("n_actions", int64),
        ("state_dim", int64),
        ("obs_dim", int64),
        ("action_dim", int64),
        ("discount", float64),
    ]

    @jitclass(spec)
    class Discretized:
        def __init__(self, inner, obs_width, snap_obs, actions):
            self.inner = inner
            self.obs_width = obs_width
            self.snap_obs = snap_obs
            self.actions = actions
            self.n_actions = actions.shape[0]
            self.state_dim = inner.state_dim
            self.obs_dim = inner.obs_dim
            self.action_dim = inner.action_dim
            self.discount = inner.discount

        def step(self, s, a, sp, o):
            r = self.inner.step(s, a, sp, o)
            if self.snap_obs:
                snap_to_bins(o, self.obs_width)
            return r

        def transition(self, s, a, sp):
            return self.inner.transition(s, a, sp)

        def obs_density(self, s, a, sp, o):
            if self.snap_obs:
                o = o.copy()
                snap_to_bins(o, self.obs_width)
            return self.inner.obs_density(s, a, sp, o)

        def reward(self, s, a, sp):
            return self.inner.reward(s, a, sp)

        def is_terminal(self, s):
            return self.inner.is_terminal(s)

        def sample_action(self, out):
            i = np.random.randint(self.n_actions)
            out[:] = self.actions[i]

        def rollout_action(self, s, out):
            self.inner.rollout_action(s, out)

        def sample_initial(self, out):
            self.inner.sample_initial(out)

        def reinvigorate(self, particles, n):
            self.inner.reinvigorate(particles, n)

    return Discretized


class DiscretizationWrapper(GenerativePomdp):
    """Model whose observations (and optionally actions) are snapped to a grid.

    Transitions and rewards are those of the wrapped model; only ``o`` is
    replaced by the centre of its bin.  With ``action_grid`` the action space
    becomes that finite table.
    """

    def __init__(self, model: GenerativePomdp, obs_width=None, action_grid=None):
        if obs_width is None:
            width = np.ones(model.obs_dim)
        else:
            width = np.broadcast_to(np.asarray(obs_width, dtype=np.float64), (model.obs_dim,)).copy()
            if np.any(width <= 0) or not np.all(np.isfinite(width)):
                raise ConfigurationError(f"bin widths must be positive, got {obs_width!r}")
        if action_grid is None:
            if not model.has_finite_actions:
                raise ConfigurationError("a continuous action space needs an action_grid")
            grid = model.actions
        else:
            grid = np.atleast_2d(np.asarray(action_grid, dtype=np.float64))
            if grid.shape[1] != model.action_dim or grid.shape[0] == 0:
                raise ConfigurationError("action grid must be (n, action_dim) with n >= 1")
        cls = _discretized_class(typeof(model.kernel))
        kernel = cls(model.kernel, width, int(obs_width is not None), np.ascontiguousarray(grid))
        super().__init__(kernel, obs_width=obs_width, action_grid=action_grid)
        self.inner = model
        self.obs_width = width if obs_width is not None else None
        self.name = f"{model.name}-discretized"

    def initial_belief(self, s0, n, rng):
        return self.inner.initial_belief(s0, n, rng)

    def describe_action(self, a) -> str:
        return self.inner.describe_action(a)


def discretize(wrapper: DiscretizationWrapper, o_raw) -> np.ndarray:
    """Bin centre of the cell containing ``o_raw`` (per dimension)."""
    o = _vec(o_raw).copy()
    if wrapper.obs_width is None:
        return o
    snap_to_bins(o, wrapper.obs_width)
    return o
