import math

import numpy as np
import pytest

from contpomdp.core import (
    ConfigurationError,
    DiscretizationWrapper,
    DomainError,
    History,
    discretize,
    make_rng,
)
from contpomdp.domains import LightDark, SubHunt, VdpTag


def test_lightdark_move_is_deterministic(lightdark, rng):
    sp, _, r = lightdark.generative_step(LightDark.state(5), [1.0], rng)
    assert sp[0] == 6 and not lightdark.is_terminal(sp)
    assert r == -1.0


def test_lightdark_declare_at_origin_terminates_with_reward(lightdark, rng):
    sp, _, r = lightdark.generative_step(LightDark.state(0), [0.0], rng)
    assert r == 100.0
    assert lightdark.is_terminal(sp)


def test_step_from_terminal_state_raises(lightdark, rng):
    with pytest.raises(DomainError):
        lightdark.generative_step(LightDark.state(0, terminal=True), [1.0], rng)


@pytest.mark.parametrize("model", [LightDark(), SubHunt(size=10), VdpTag()], ids=lambda m: m.name)
def test_generative_step_replays_under_same_seed(model):
    s = model.sample_initial(make_rng(3))
    a = model.sample_action(make_rng(4))
    first = model.generative_step(s, a, make_rng(7))
    second = model.generative_step(s, a, make_rng(7))
    np.testing.assert_array_equal(first[0], second[0])
    np.testing.assert_array_equal(first[1], second[1])
    assert first[2] == second[2]


def test_rng_streams_differ_by_index():
    a = make_rng(1, 0, 0).random(4)
    b = make_rng(1, 1, 0).random(4)
    c = make_rng(1, 0, 0).random(4)
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(a, c)


def test_lightdark_density_peak_away_from_light(lightdark):
    sp = LightDark.state(12)
    assert lightdark.obs_density([12.0], LightDark.state(11), [1.0], sp) == pytest.approx(
        1 / (2 * math.sqrt(2 * math.pi)), rel=1e-12
    )
    assert lightdark.obs_density([12.0], LightDark.state(11), [1.0], sp) == pytest.approx(0.1995, abs=1e-4)


def test_lightdark_density_at_light_uses_floor(lightdark):
    sigma_min = lightdark.params["sigma_min"]
    d = lightdark.obs_density([10.0], LightDark.state(9), [1.0], LightDark.state(10))
    assert d == pytest.approx(1 / (sigma_min * math.sqrt(2 * math.pi)))
    assert math.isfinite(d)


def test_lightdark_density_integrates_to_one(lightdark):
    sp = LightDark.state(4)
    grid = np.linspace(-40, 50, 20001)
    vals = [lightdark.obs_density([o], LightDark.state(3), [1.0], sp) for o in grid]
    assert np.trapezoid(vals, grid) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("o_raw,expected", [(3.7, 3.5), (3.5, 3.5), (-0.2, -0.5), (4.0, 4.5)])
def test_discretize_bin_centre(lightdark, o_raw, expected):
    w = DiscretizationWrapper(lightdark, obs_width=1.0)
    assert discretize(w, o_raw)[0] == pytest.approx(expected)
    assert discretize(w, discretize(w, o_raw))[0] == pytest.approx(expected)


def test_discretize_is_per_dimension(subhunt_small):
    w = DiscretizationWrapper(subhunt_small, obs_width=2.0)
    o = np.array([0.1, 1.9, 2.0, 3.3, -0.1, 39.0, 40.2, 7.99])
    np.testing.assert_allclose(discretize(w, o), [1, 1, 3, 3, -1, 39, 41, 7])


@pytest.mark.parametrize("width", [0.0, -1.0, float("nan")])
def test_nonpositive_bin_width_rejected(lightdark, width):
    with pytest.raises(ConfigurationError):
        DiscretizationWrapper(lightdark, obs_width=width)


def test_continuous_actions_need_a_grid(vdptag):
    with pytest.raises(ConfigurationError):
        DiscretizationWrapper(vdptag, obs_width=1.0)


def test_wrapped_density_evaluates_snapped_bin(lightdark):
    w = DiscretizationWrapper(lightdark, obs_width=1.0)
    s, a, sp = LightDark.state(3), [1.0], LightDark.state(4)
    assert w.obs_density([4.9], s, a, sp) == pytest.approx(lightdark.obs_density([4.5], s, a, sp))


@pytest.mark.parametrize("seed", range(20))
def test_wrapper_preserves_transitions_and_rewards(seed):
    for model, grid in ((LightDark(), None), (SubHunt(size=10), None), (VdpTag(), VdpTag().action_grid(8))):
        w = DiscretizationWrapper(model, obs_width=0.5, action_grid=grid)
        s = model.sample_initial(make_rng(seed, 1))
        a = w.sample_action(make_rng(seed, 2))
        sp1, o1, r1 = model.generative_step(s, a, make_rng(seed, 3))
        sp2, o2, r2 = w.generative_step(s, a, make_rng(seed, 3))
        np.testing.assert_array_equal(sp1, sp2)
        assert r1 == r2
        np.testing.assert_allclose(o2, discretize(w, o1))


def test_wrapper_action_grid_is_enumeration(vdptag):
    w = DiscretizationWrapper(vdptag, obs_width=1.0, action_grid=vdptag.action_grid(4))
    assert w.has_finite_actions
    assert w.actions.shape == (8, 2)


def test_finite_action_enumeration_is_stable(subhunt_small):
    np.testing.assert_array_equal(subhunt_small.actions, subhunt_small.actions)
    np.testing.assert_array_equal(subhunt_small.actions[:, 0], np.arange(6))


def test_history_alternation_and_prefix():
    h = History()
    ha = h.with_action([1.0])
    hao = ha.with_observation([0.3])
    assert h.is_prefix_of(ha) and ha.is_prefix_of(hao) and h.is_prefix_of(hao)
    assert not hao.is_prefix_of(ha)
    assert hao.depth == 1
    with pytest.raises(ValueError):
        ha.with_action([0.0])
    with pytest.raises(ValueError):
        h.with_observation([0.0])
