"""Van der Pol tag: chase a target drifting on a Van der Pol limit cycle.

State vector ``[agent_x, agent_y, target_x, target_y, terminal]``, action
``[heading, look]`` with heading in ``[0, 2pi)`` and look in ``{0, 1}``.
Four barriers run from 0.2 to 3.0 along each half-axis and block the agent
only.
"""

import math

import numpy as np
from numba import float64, int64, njit
from numba.experimental import jitclass

from contpomdp.core import GenerativePomdp

TWO_PI = 2.0 * math.pi
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@njit(cache=True)
def vdp_derivative(x, y, mu=2.0):
    """Right-hand side of the Van der Pol system."""
    return mu * (x - x * x * x / 3.0 - y), x / mu


@njit(cache=True)
def rk4_step(x, y, dt, substeps=1, mu=2.0):
    """Classical fourth-order Runge-Kutta over ``dt`` in ``substeps`` pieces."""
    h = dt / substeps
    half = 0.5 * h
    sixth = h / 6.0
    inv_mu = 1.0 / mu
    third = 1.0 / 3.0
    for _ in range(substeps):
        # derivatives inlined: divisions sit on the critical path otherwise
        k1x = mu * (x - x * x * x * third - y)
        k1y = x * inv_mu
        x2, y2 = x + half * k1x, y + half * k1y
        k2x = mu * (x2 - x2 * x2 * x2 * third - y2)
        k2y = x2 * inv_mu
        x3, y3 = x + half * k2x, y + half * k2y
        k3x = mu * (x3 - x3 * x3 * x3 * third - y3)
        k3y = x3 * inv_mu
        x4, y4 = x + h * k3x, y + h * k3y
        k4x = mu * (x4 - x4 * x4 * x4 * third - y4)
        k4y = x4 * inv_mu
        x += sixth * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        y += sixth * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
    return x, y


@njit(cache=True)
def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


@njit(cache=True)
def segment_hit(px, py, dx, dy, ax, ay, bx, by):
    """Smallest t in [0, 1] with p + t*d on segment a-b, or -1 if none."""
    ex, ey = bx - ax, by - ay
    denom = _cross(dx, dy, ex, ey)
    wx, wy = ax - px, ay - py
    if abs(denom) < 1e-14:
        if abs(_cross(wx, wy, dx, dy)) > 1e-12:
            return -1.0
        dd = dx * dx + dy * dy
        if dd == 0.0:
            return -1.0
        t1 = (wx * dx + wy * dy) / dd
        t2 = ((bx - px) * dx + (by - py) * dy) / dd
        lo, hi = min(t1, t2), max(t1, t2)
        if hi < 0.0 or lo > 1.0:
            return -1.0
        return max(lo, 0.0)
    t = _cross(wx, wy, ex, ey) / denom
    u = _cross(wx, wy, dx, dy) / denom
    if 0.0 <= t <= 1.0 and 0.0 <= u <= 1.0:
        return t
    return -1.0


_spec = [
    ("state_dim", int64),
    ("obs_dim", int64),
    ("action_dim", int64),
    ("n_actions", int64),
    ("actions", float64[:, :]),
    ("discount", float64),
    ("mu", float64),
    ("agent_speed", float64),
    ("dt", float64),
    ("substeps", int64),
    ("target_noise", float64),
    ("tag_radius", float64),
    ("tag_reward", float64),
    ("step_cost", float64),
    ("look_cost", float64),
    ("look_sigma", float64),
    ("blind_sigma", float64),
    ("beam_max_range", float64),
    ("n_beams", int64),
    ("barriers", float64[:, :]),
    ("init_box", float64),
    ("backoff", float64),
]


@jitclass(_spec)
class VdpTagKernel:
    def __init__(self, discount, mu, agent_speed, dt, substeps, target_noise, tag_radius, tag_reward,
                 step_cost, look_cost, look_sigma, blind_sigma, beam_max_range, n_beams, barriers,
                 init_box):
        self.state_dim = 5
        self.obs_dim = n_beams
        self.action_dim = 2
        self.n_actions = 0
        self.actions = np.zeros((0, 2))
        self.discount = discount
        self.mu = mu
        self.agent_speed = agent_speed
        self.dt = dt
        self.substeps = substeps
        self.target_noise = target_noise
        self.tag_radius = tag_radius
        self.tag_reward = tag_reward
        self.step_cost = step_cost
        self.look_cost = look_cost
        self.look_sigma = look_sigma
        self.blind_sigma = blind_sigma
        self.beam_max_range = beam_max_range
        self.n_beams = n_beams
        self.barriers = barriers
        self.init_box = init_box
        self.backoff = 1e-4

    def is_terminal(self, s):
        return s[4] != 0.0

    def reward(self, s, a, sp):
        if s[4] != 0.0:
            return 0.0
        r = -self.step_cost
        if a[1] >= 0.5:
            r -= self.look_cost
        if sp[4] != 0.0:
            r += self.tag_reward
        return r

    def move_agent(self, x, y, heading):
        length = self.agent_speed * self.dt
        dx = length * math.cos(heading)
        dy = length * math.sin(heading)
        t_stop = 1.0
        for i in range(self.barriers.shape[0]):
            b = self.barriers[i]
            t = segment_hit(x, y, dx, dy, b[0], b[1], b[2], b[3])
            if t >= 0.0 and t < t_stop:
                t_stop = t
        if t_stop < 1.0:
            t_stop = max(t_stop - self.backoff / length, 0.0)
        return x + t_stop * dx, y + t_stop * dy

    def step(self, s, a, sp, o):
        r = self.transition(s, a, sp)
        self.observe(sp, s[4] == 0.0 and a[1] >= 0.5, o)
        return r

    def transition(self, s, a, sp):
        sp[:] = s
        if s[4] != 0.0:
            return 0.0
        sp[0], sp[1] = self.move_agent(s[0], s[1], a[0])
        tx, ty = rk4_step(s[2], s[3], self.dt, self.substeps, self.mu)
        sp[2] = tx + self.target_noise * np.random.standard_normal()
        sp[3] = ty + self.target_noise * np.random.standard_normal()
        dx = sp[2] - sp[0]
        dy = sp[3] - sp[1]
        if math.sqrt(dx * dx + dy * dy) <= self.tag_radius:
            sp[4] = 1.0
        return self.reward(s, a, sp)

    def beam_of(self, dx, dy):
        width = TWO_PI / self.n_beams
        bearing = math.atan2(dy, dx)
        if bearing < 0.0:
            bearing += TWO_PI
        return int(math.floor(bearing / width + 0.5)) % self.n_beams

    def observe(self, sp, look, o):
        dx = sp[2] - sp[0]
        dy = sp[3] - sp[1]
        dist = math.sqrt(dx * dx + dy * dy)
        beam = self.beam_of(dx, dy)
        sig = self.look_sigma if look else self.blind_sigma
        for i in range(self.n_beams):
            mean = dist if i == beam else self.beam_max_range
            o[i] = mean + sig * np.random.standard_normal()

    def obs_density(self, s, a, sp, o):
        dx = sp[2] - sp[0]
        dy = sp[3] - sp[1]
        dist = math.sqrt(dx * dx + dy * dy)
        beam = self.beam_of(dx, dy)
        look = s[4] == 0.0 and a[1] >= 0.5
        sig = self.look_sigma if look else self.blind_sigma
        logp = -self.n_beams * (math.log(sig) + _LOG_SQRT_2PI)
        for i in range(self.n_beams):
            mean = dist if i == beam else self.beam_max_range
            z = (o[i] - mean) / sig
            logp -= 0.5 * z * z
        return math.exp(logp)

    def sample_action(self, out):
        out[0] = TWO_PI * np.random.random()
        out[1] = float(np.random.randint(2))

    def rollout_action(self, s, out):
        # random heading, never pays for an accurate look
        out[0] = TWO_PI * np.random.random()
        out[1] = 0.0

    def sample_initial(self, out):
        out[0] = 0.0
        out[1] = 0.0
        out[2] = self.init_box * (2.0 * np.random.random() - 1.0)
        out[3] = self.init_box * (2.0 * np.random.random() - 1.0)
        out[4] = 0.0

    def reinvigorate(self, particles, n):
        pass


def default_barriers(inner: float = 0.2, outer: float = 3.0) -> np.ndarray:
    return np.array([
        [inner, 0.0, outer, 0.0],
        [-outer, 0.0, -inner, 0.0],
        [0.0, inner, 0.0, outer],
        [0.0, -outer, 0.0, -inner],
    ])


class VdpTag(GenerativePomdp):
    """Van der Pol tag with heading/look actions.

    The agent starts at the origin and knows its own position; the target
    starts uniformly in ``[-init_box, init_box]^2``.
    """

    name = "vdptag"

    def __init__(
        self,
        discount: float = 0.95,
        mu: float = 2.0,
        agent_speed: float = 1.0,
        dt: float = 0.5,
        substeps: int = 10,
        target_noise: float = 0.05,
        tag_radius: float = 0.1,
        tag_reward: float = 100.0,
        step_cost: float = 1.0,
        look_cost: float = 5.0,
        look_sigma: float = 0.1,
        blind_sigma: float = 5.0,
        beam_max_range: float = 10.0,
        n_beams: int = 8,
        init_box: float = 4.0,
    ):
        if dt <= 0 or substeps < 1:
            raise ValueError("need dt > 0 and substeps >= 1")
        kernel = VdpTagKernel(
            float(discount), float(mu), float(agent_speed), float(dt), int(substeps),
            float(target_noise), float(tag_radius), float(tag_reward), float(step_cost),
            float(look_cost), float(look_sigma), float(blind_sigma), float(beam_max_range),
            int(n_beams), default_barriers(), float(init_box),
        )
        super().__init__(
            kernel, discount=discount, mu=mu, agent_speed=agent_speed, dt=dt, substeps=substeps,
            target_noise=target_noise, tag_radius=tag_radius, tag_reward=tag_reward,
            step_cost=step_cost, look_cost=look_cost, look_sigma=look_sigma,
            blind_sigma=blind_sigma, beam_max_range=beam_max_range, n_beams=n_beams,
            init_box=init_box,
        )

    @staticmethod
    def state(agent, target, terminal=False) -> np.ndarray:
        return np.array([agent[0], agent[1], target[0], target[1], float(terminal)], dtype=np.float64)

    @staticmethod
    def action(heading: float, look: bool = False) -> np.ndarray:
        return np.array([heading % TWO_PI, float(look)])

    def initial_belief(self, s0, n, rng):
        from contpomdp.belief import WeightedParticleBelief

        particles = self.sample_initial(rng, n)
        particles[:, 0:2] = np.asarray(s0)[0:2]
        return WeightedParticleBelief.uniform(particles)

    def describe_action(self, a) -> str:
        a = np.atleast_1d(a)
        return f"{a[0]:.4f}{' look' if a[1] >= 0.5 else ''}"

    def action_grid(self, n_headings: int = 8) -> np.ndarray:
        """Finite heading x look grid used by discretized solvers."""
        headings = TWO_PI * np.arange(n_headings) / n_headings
        return np.array([[h, look] for look in (0.0, 1.0) for h in headings])
