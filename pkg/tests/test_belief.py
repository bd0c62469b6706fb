import numpy as np
import pytest
from scipy import stats

from contpomdp.belief import (
    WeightedParticleBelief,
    effective_sample_size,
    filter_update,
    gpf_step,
    sample_state,
    sample_states,
)
from contpomdp.core import make_rng
from contpomdp.domains import LightDark, SubHunt, TabularPomdp, VdpTag

from conftest import hmm_tables


def _histogram(belief, n_states):
    idx = belief.particles[:, 0].astype(int)
    return np.bincount(idx, weights=belief.probabilities, minlength=n_states)


def test_single_particle_always_returned(rng):
    b = WeightedParticleBelief.uniform([[4.0, 0.0]])
    for _ in range(10):
        np.testing.assert_array_equal(sample_state(b, rng), [4.0, 0.0])


@pytest.mark.parametrize("weights,expected", [([1, 1], 0.5), ([3, 1], 0.75)])
def test_sampling_frequencies(weights, expected, rng):
    b = WeightedParticleBelief([[0.0], [1.0]], weights)
    idx = sample_states(b, rng, 100_000)
    assert np.mean(idx == 0) == pytest.approx(expected, abs=0.01)


def test_sampling_chi_square(rng):
    w = np.array([0.5, 3.0, 1.0, 0.0, 2.5, 7.0])
    b = WeightedParticleBelief(np.arange(6.0).reshape(-1, 1), w)
    n = 100_000
    counts = np.bincount(sample_states(b, rng, n), minlength=6)
    assert counts[3] == 0
    keep = w > 0
    p = stats.chisquare(counts[keep], n * w[keep] / w.sum()).pvalue
    assert p > 0.001


def test_scalar_sampler_agrees_with_vector_sampler():
    b = WeightedParticleBelief(np.arange(4.0).reshape(-1, 1), [1, 2, 3, 4])
    draws = np.array([sample_state(b, make_rng(0, i))[0] for i in range(4000)])
    assert np.mean(draws == 3) == pytest.approx(0.4, abs=0.03)


def test_invalid_beliefs_rejected():
    with pytest.raises(ValueError):
        WeightedParticleBelief([[0.0], [1.0]], [0.0, 0.0])
    with pytest.raises(ValueError):
        WeightedParticleBelief([[0.0], [1.0]], [1.0, -0.5])
    with pytest.raises(ValueError):
        WeightedParticleBelief([[0.0], [1.0]], [1.0])


def test_cumulative_weights_nondecreasing():
    b = WeightedParticleBelief(np.zeros((5, 1)), [0.2, 0.0, 1.0, 3.0, 0.5])
    assert np.all(np.diff(b.cumulative) >= 0)
    assert b.cumulative[-1] == pytest.approx(4.7)


@pytest.mark.parametrize("weights,ess", [(np.ones(7), 7.0), ([0, 0, 2.0, 0], 1.0), ([3, 1], 1.6)])
def test_effective_sample_size(weights, ess):
    b = WeightedParticleBelief(np.zeros((len(weights), 1)), weights)
    assert effective_sample_size(b) == pytest.approx(ess)


def _random_trajectory(model, rng, length):
    """True-process action/observation sequence on a tabular model."""
    s = model.sample_initial(rng)
    steps = []
    for _ in range(length):
        a = int(rng.integers(model.T.shape[1]))
        s, o, _ = model.generative_step(s, [float(a)], rng)
        steps.append((a, int(o[0])))
    return steps


def test_filter_matches_exact_bayes_on_hmm(hmm):
    rng = make_rng(2024)
    m = 10_000
    worst = 0.0
    for _ in range(5):
        belief = WeightedParticleBelief.uniform(hmm.sample_initial(rng, m))
        exact = hmm.b0.copy()
        for a, o in _random_trajectory(hmm, rng, 10):
            belief = filter_update(hmm, belief, [a], [o], m, rng)
            exact = hmm.exact_update(exact, a, o)
            worst = max(worst, 0.5 * np.abs(_histogram(belief, 3) - exact).sum())
    assert worst < 0.02


def test_uninformative_observation_keeps_propagated_prior(rng):
    T, _, R, b0 = hmm_tables()
    Z = np.full((2, 3, 2), 0.5)
    model = TabularPomdp(T, Z, R, b0)
    m = 50_000
    belief = WeightedParticleBelief.uniform(model.sample_initial(rng, m))
    post = filter_update(model, belief, [1], [0], m, rng)
    np.testing.assert_allclose(_histogram(post, 3), b0 @ T[:, 1, :], atol=0.01)
    assert np.all(post.weights == post.weights[0])


def test_lightdark_filter_concentrates_near_light(lightdark, rng):
    # prior uniform on [-10, 10] without 0; step +1 and observe 10.003 right at the light
    xs = [x for x in range(-10, 11) if x != 0]
    belief = WeightedParticleBelief.uniform(np.array([LightDark.state(x) for x in xs]))
    post = filter_update(lightdark, belief, [1.0], [10.003], 20_000, rng, reinvigorate=False)
    support = np.array(xs, dtype=float) + 1
    like = np.array([lightdark.obs_density([10.003], LightDark.state(x - 1), [1.0], LightDark.state(x))
                     for x in support])
    exact = like / like.sum()
    assert exact[support == 10][0] > 0.9
    empirical = np.array([np.mean(post.particles[:, 0] == x) for x in support])
    assert 0.5 * np.abs(empirical - exact).sum() < 0.02


def test_depleted_update_is_flagged(rng):
    # observation impossible from every particle
    T = np.array([[[1.0, 0.0]], [[0.0, 1.0]]])
    Z = np.array([[[1.0, 0.0], [1.0, 0.0]]])
    model = TabularPomdp(T, Z, np.zeros((2, 1)), np.array([0.5, 0.5]))
    belief = WeightedParticleBelief.uniform([[0.0], [1.0]])
    post = filter_update(model, belief, [0], [1], 100, rng)
    assert post.depleted
    assert set(post.particles[:, 0]) <= {0.0, 1.0}
    assert len(post) == 100


def test_filter_requires_positive_particle_count(hmm, rng):
    b = WeightedParticleBelief.uniform([[0.0]])
    with pytest.raises(ValueError):
        filter_update(hmm, b, [0], [0], 0, rng)
    with pytest.raises(ValueError):
        gpf_step(hmm, b, [0], 0, rng)


def test_gpf_single_particle_collapse(lightdark, rng):
    b = WeightedParticleBelief.uniform([LightDark.state(3), LightDark.state(-4)])
    nb, r = gpf_step(lightdark, b, [1.0], 1, rng)
    assert len(nb) == 1
    assert nb.particles[0, 0] in (4.0, -3.0)
    assert r == -1.0


def test_gpf_concentrates_on_true_successor(rng):
    # deterministic moves, observations correct with probability 0.98
    T = np.zeros((3, 1, 3))
    T[0, 0, 1] = T[1, 0, 2] = T[2, 0, 0] = 1.0
    Z = np.full((1, 3, 3), 0.01)
    Z[0] += np.eye(3) * 0.97
    model = TabularPomdp(T, Z, np.zeros((3, 1)), np.array([1 / 3] * 3))
    b = WeightedParticleBelief.uniform([[0.0]] * 50 + [[1.0]] * 30 + [[2.0]] * 20)
    for _ in range(20):
        nb, _ = gpf_step(model, b, [0], 2000, rng)
        hist = _histogram(nb, 3)
        # the sampled observation decides the successor; exact posterior puts >= 0.95 there
        top = int(np.argmax(hist))
        prior = np.array([0.2, 0.5, 0.3])
        lik = Z[0, :, top]
        exact = prior * lik / np.dot(prior, lik)
        assert exact[top] > 0.95
        assert hist[top] == pytest.approx(exact[top], abs=0.02)


@pytest.mark.parametrize("model", [LightDark(), SubHunt(size=10), VdpTag()], ids=lambda m: m.name)
def test_gpf_mean_reward_within_single_step_range(model):
    rng = make_rng(8)
    lo, hi = {"lightdark": (-100, 100), "subhunt": (0, 100), "vdptag": (-6, 99)}[model.name]
    for i in range(30):
        parts = model.sample_initial(rng, 50)
        b = WeightedParticleBelief.uniform(parts)
        a = model.sample_action(rng)
        nb, r = gpf_step(model, b, a, 20, rng)
        assert lo - 1e-9 <= r <= hi + 1e-9
        assert len(nb) == 20
