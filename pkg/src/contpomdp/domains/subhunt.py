"""Sub Hunt: track and engage a submarine heading for an unknown grid edge.

State vector: ``[agent_x, agent_y, target_x, target_y, aware, goal, terminal]``
with cells numbered ``1..size``, ``goal`` in ``0..3`` for N, S, E, W and
``terminal`` 0 (running), 1 (hit) or 2 (target escaped).

Actions: 0-3 move the agent three cells N, S, E, W; 4 engages; 5 pings.
"""

import math

import numpy as np
from numba import float64, int64
from numba.experimental import jitclass

from contpomdp.core import GenerativePomdp

NORTH, SOUTH, EAST, WEST, ENGAGE, PING = range(6)
ACTION_NAMES = ("north", "south", "east", "west", "engage", "ping")
GOALS = ("N", "S", "E", "W")

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

_spec = [
    ("state_dim", int64),
    ("obs_dim", int64),
    ("action_dim", int64),
    ("n_actions", int64),
    ("actions", float64[:, :]),
    ("discount", float64),
    ("size", int64),
    ("agent_step", int64),
    ("engage_range", float64),
    ("aware_hit", float64),
    ("hit_reward", float64),
    ("passive_range", float64),
    ("sonar_sigma", float64),
    ("miss_mean", float64),
    ("miss_sigma", float64),
    ("p_straight", float64),
    ("n_beams", int64),
]


@jitclass(_spec)
class SubHuntKernel:
    def __init__(self, discount, size, agent_step, engage_range, aware_hit, hit_reward,
                 passive_range, sonar_sigma, miss_mean, miss_sigma, p_straight, n_beams):
        self.state_dim = 7
        self.obs_dim = n_beams
        self.action_dim = 1
        self.n_actions = 6
        self.actions = np.arange(6.0).reshape((6, 1))
        self.discount = discount
        self.size = size
        self.agent_step = agent_step
        self.engage_range = engage_range
        self.aware_hit = aware_hit
        self.hit_reward = hit_reward
        self.passive_range = passive_range
        self.sonar_sigma = sonar_sigma
        self.miss_mean = miss_mean
        self.miss_sigma = miss_sigma
        self.p_straight = p_straight
        self.n_beams = n_beams

    def clamp(self, x):
        return float(min(max(x, 1), self.size))

    def is_terminal(self, s):
        return s[6] != 0.0

    def reward(self, s, a, sp):
        if s[6] == 0.0 and sp[6] == 1.0:
            return self.hit_reward
        return 0.0

    def at_goal(self, tx, ty, goal):
        if goal == 0:
            return ty >= self.size
        if goal == 1:
            return ty <= 1
        if goal == 2:
            return tx >= self.size
        return tx <= 1

    def step(self, s, a, sp, o):
        r = self.transition(s, a, sp)
        self.observe(sp, s[6] == 0.0 and int(a[0]) == 5, o)
        return r

    def transition(self, s, a, sp):
        sp[:] = s
        act = int(a[0])
        if s[6] != 0.0:
            return 0.0
        if act == 4:
            dx = s[2] - s[0]
            dy = s[3] - s[1]
            if math.sqrt(dx * dx + dy * dy) <= self.engage_range:
                p_hit = self.aware_hit if s[4] != 0.0 else 1.0
                if np.random.random() < p_hit:
                    sp[6] = 1.0
                    return self.hit_reward
        elif act < 4:
            k = self.agent_step
            if act == 0:
                sp[1] = self.clamp(s[1] + k)
            elif act == 1:
                sp[1] = self.clamp(s[1] - k)
            elif act == 2:
                sp[0] = self.clamp(s[0] + k)
            else:
                sp[0] = self.clamp(s[0] - k)
        if act == 5:
            sp[4] = 1.0
        self.move_target(sp)
        return 0.0

    def move_target(self, sp):
        goal = int(sp[5])
        fx, fy = 0, 0
        if goal == 0:
            fy = 1
        elif goal == 1:
            fy = -1
        elif goal == 2:
            fx = 1
        else:
            fx = -1
        if np.random.random() < self.p_straight:
            dx, dy = 2 * fx, 2 * fy
        else:
            side = 1 if np.random.random() < 0.5 else -1
            # perpendicular of (fx, fy) is (-fy, fx)
            dx = fx - side * fy
            dy = fy + side * fx
        sp[2] = self.clamp(sp[2] + dx)
        sp[3] = self.clamp(sp[3] + dy)
        if self.at_goal(sp[2], sp[3], goal):
            sp[6] = 2.0

    def beam_of(self, dx, dy):
        width = 2.0 * math.pi / self.n_beams
        bearing = math.atan2(dy, dx)
        if bearing < 0.0:
            bearing += 2.0 * math.pi
        return int(math.floor(bearing / width + 0.5)) % self.n_beams

    def observe(self, sp, active, o):
        dx = sp[2] - sp[0]
        dy = sp[3] - sp[1]
        dist = math.sqrt(dx * dx + dy * dy)
        beam = -1
        if active or dist <= self.passive_range:
            beam = self.beam_of(dx, dy)
        for i in range(self.n_beams):
            if i == beam:
                o[i] = dist + self.sonar_sigma * np.random.standard_normal()
            else:
                o[i] = self.miss_mean + self.miss_sigma * np.random.standard_normal()

    def obs_density(self, s, a, sp, o):
        dx = sp[2] - sp[0]
        dy = sp[3] - sp[1]
        dist = math.sqrt(dx * dx + dy * dy)
        active = s[6] == 0.0 and sp[6] != 1.0 and int(a[0]) == 5
        beam = -1
        if active or dist <= self.passive_range:
            beam = self.beam_of(dx, dy)
        logp = 0.0
        for i in range(self.n_beams):
            if i == beam:
                z = (o[i] - dist) / self.sonar_sigma
                logp -= 0.5 * z * z + math.log(self.sonar_sigma) + _LOG_SQRT_2PI
            else:
                z = (o[i] - self.miss_mean) / self.miss_sigma
                logp -= 0.5 * z * z + math.log(self.miss_sigma) + _LOG_SQRT_2PI
        return math.exp(logp)

    def sample_action(self, out):
        out[0] = float(np.random.randint(6))

    def rollout_action(self, s, out):
        # chase the (known) target and engage once in range
        dx = s[2] - s[0]
        dy = s[3] - s[1]
        if math.sqrt(dx * dx + dy * dy) <= self.engage_range:
            out[0] = 4.0
        elif abs(dx) >= abs(dy):
            out[0] = 2.0 if dx > 0 else 3.0
        else:
            out[0] = 0.0 if dy > 0 else 1.0

    def sample_initial(self, out):
        out[0] = float(np.random.randint(1, self.size + 1))
        out[1] = float(np.random.randint(1, self.size + 1))
        goal = np.random.randint(4)
        # the target never starts on its own goal edge
        tx = np.random.randint(1, self.size + 1)
        ty = np.random.randint(1, self.size + 1)
        while self.at_goal(tx, ty, goal):
            tx = np.random.randint(1, self.size + 1)
            ty = np.random.randint(1, self.size + 1)
        out[2] = float(tx)
        out[3] = float(ty)
        out[4] = 0.0
        out[5] = float(goal)
        out[6] = 0.0

    def reinvigorate(self, particles, n):
        pass


class SubHunt(GenerativePomdp):
    """Sub Hunt on a ``size x size`` grid (20 in the full problem, 10 when small).

    The agent knows its own cell, so :meth:`initial_belief` pins it.
    """

    name = "subhunt"

    def __init__(
        self,
        size: int = 20,
        discount: float = 0.95,
        agent_step: int = 3,
        engage_range: float = 2.0,
        aware_hit: float = 0.6,
        hit_reward: float = 100.0,
        passive_range: float = 3.0,
        sonar_sigma: float = 0.5,
        miss_mean: float = 40.0,
        miss_sigma: float = 5.0,
        p_straight: float = 0.5,
        n_beams: int = 8,
    ):
        if size < 3:
            raise ValueError("grid must be at least 3x3")
        kernel = SubHuntKernel(
            float(discount), int(size), int(agent_step), float(engage_range), float(aware_hit),
            float(hit_reward), float(passive_range), float(sonar_sigma), float(miss_mean),
            float(miss_sigma), float(p_straight), int(n_beams),
        )
        super().__init__(
            kernel, size=size, discount=discount, agent_step=agent_step, engage_range=engage_range,
            aware_hit=aware_hit, hit_reward=hit_reward, passive_range=passive_range,
            sonar_sigma=sonar_sigma, miss_mean=miss_mean, miss_sigma=miss_sigma,
            p_straight=p_straight, n_beams=n_beams,
        )
        self.size = size

    @staticmethod
    def state(agent, target, aware=False, goal="N", terminal=0) -> np.ndarray:
        g = GOALS.index(goal) if isinstance(goal, str) else int(goal)
        return np.array([agent[0], agent[1], target[0], target[1], float(aware), float(g), float(terminal)],
                        dtype=np.float64)

    def initial_belief(self, s0, n, rng):
        from contpomdp.belief import WeightedParticleBelief

        particles = self.sample_initial(rng, n)
        particles[:, 0:2] = np.asarray(s0)[0:2]
        return WeightedParticleBelief.uniform(particles)

    def describe_action(self, a) -> str:
        return ACTION_NAMES[int(np.atleast_1d(a)[0])]
