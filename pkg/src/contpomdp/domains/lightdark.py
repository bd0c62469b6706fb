"""One-dimensional Light Dark.

The state is an integer position plus a terminal flag.  Moves are
deterministic, observations are Gaussian around the new position with a
standard deviation equal to the distance from the light at 10 (floored so the
density stays finite).
"""

import math

import numpy as np
from numba import float64, int64
from numba.experimental import jitclass

from contpomdp.core import GenerativePomdp

ACTIONS = (-10.0, -1.0, 0.0, 1.0, 10.0)

_spec = [
    ("state_dim", int64),
    ("obs_dim", int64),
    ("action_dim", int64),
    ("n_actions", int64),
    ("actions", float64[:, :]),
    ("discount", float64),
    ("light", float64),
    ("sigma_min", float64),
    ("bound", float64),
    ("init_radius", int64),
    ("reinvig_prob", float64),
    ("reinvig_radius", int64),
]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@jitclass(_spec)
class LightDarkKernel:
    def __init__(self, discount, light, sigma_min, bound, init_radius, reinvig_prob, reinvig_radius):
        self.state_dim = 2
        self.obs_dim = 1
        self.action_dim = 1
        self.n_actions = 5
        self.actions = np.array([[-10.0], [-1.0], [0.0], [1.0], [10.0]])
        self.discount = discount
        self.light = light
        self.sigma_min = sigma_min
        self.bound = bound
        self.init_radius = init_radius
        self.reinvig_prob = reinvig_prob
        self.reinvig_radius = reinvig_radius

    def sigma(self, x):
        return max(abs(x - self.light), self.sigma_min)

    def is_terminal(self, s):
        return s[1] != 0.0

    def reward(self, s, a, sp):
        if s[1] != 0.0:
            return 0.0
        if a[0] == 0.0:
            return 100.0 if s[0] == 0.0 else -100.0
        return -1.0

    def transition(self, s, a, sp):
        r = self.reward(s, a, sp)
        if s[1] != 0.0 or a[0] == 0.0:
            sp[0] = s[0]
            sp[1] = 1.0
        else:
            sp[0] = min(max(s[0] + a[0], -self.bound), self.bound)
            sp[1] = 0.0
        return r

    def step(self, s, a, sp, o):
        r = self.transition(s, a, sp)
        o[0] = sp[0] + self.sigma(sp[0]) * np.random.standard_normal()
        return r

    def obs_density(self, s, a, sp, o):
        sig = self.sigma(sp[0])
        z = (o[0] - sp[0]) / sig
        return _INV_SQRT_2PI / sig * math.exp(-0.5 * z * z)

    def sample_action(self, out):
        out[0] = self.actions[np.random.randint(5), 0]

    def rollout_action(self, s, out):
        # greedy walk to the origin, then declare
        x = s[0]
        if x == 0.0:
            out[0] = 0.0
        elif abs(x) >= 10.0:
            out[0] = -10.0 if x > 0 else 10.0
        else:
            out[0] = -1.0 if x > 0 else 1.0

    def sample_initial(self, out):
        k = np.random.randint(2 * self.init_radius)
        x = k - self.init_radius
        if x >= 0:
            x += 1
        out[0] = float(x)
        out[1] = 0.0

    def reinvigorate(self, particles, n):
        for i in range(n):
            if np.random.random() < self.reinvig_prob:
                step = np.random.randint(-self.reinvig_radius, self.reinvig_radius + 1)
                x = particles[i, 0] + step
                particles[i, 0] = min(max(x, -self.bound), self.bound)


class LightDark(GenerativePomdp):
    """Light Dark with actions ``{-10, -1, 0, 1, 10}``.

    Initial positions are uniform over the nonzero integers in
    ``[-init_radius, init_radius]``.
    """

    name = "lightdark"

    def __init__(
        self,
        discount: float = 0.95,
        light: float = 10.0,
        sigma_min: float = 1e-2,
        bound: float = 60.0,
        init_radius: int = 10,
        reinvig_prob: float = 0.05,
        reinvig_radius: int = 5,
    ):
        if sigma_min <= 0:
            raise ValueError("sigma_min must be positive")
        kernel = LightDarkKernel(
            float(discount), float(light), float(sigma_min), float(bound), int(init_radius),
            float(reinvig_prob), int(reinvig_radius),
        )
        super().__init__(
            kernel, discount=discount, light=light, sigma_min=sigma_min, bound=bound,
            init_radius=init_radius, reinvig_prob=reinvig_prob, reinvig_radius=reinvig_radius,
        )

    @staticmethod
    def state(position: int, terminal: bool = False) -> np.ndarray:
        return np.array([float(position), float(terminal)])
