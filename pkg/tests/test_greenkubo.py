import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nesslab.greenkubo import (
    driving_work,
    gk_correlation_estimate,
    gk_deterministic,
    gk_deterministic_terms,
    gk_finite_T_bias,
    green_kubo_report,
    interference_check,
    linear_response_current,
    onsager_check,
    stationary_current,
)
from nesslab.markov import build_rates, equilibrium_density, reference_rates, spectral_gap, stationary
from nesslab.models import random_driving, random_jump_model, ring_model
from nesslab.paths import combined_z

from .conftest import jump_models


def gradient_driving(model, V):
    return np.where(model.gamma > 0, V[:, None] - V[None, :], 0.0)


def current_at(model, F, eps):
    m = model.with_driving(F).with_epsilon(eps)
    rates = build_rates(m)
    return stationary_current(rates, stationary(rates))


def random_pair(model, seed):
    rng = np.random.default_rng(seed)
    sup = model.gamma > 0
    return random_driving(model.n_states, rng, sup), random_driving(model.n_states, rng, sup)


M5 = random_jump_model(5, seed=7, beta=1.4)


# --- first-order current -------------------------------------------------------------


def test_gradient_driving_produces_no_current():
    V = np.array([0.1, -0.7, 1.2, 0.4, 0.0])
    np.testing.assert_allclose(linear_response_current(M5, gradient_driving(M5, V)), 0.0, atol=1e-13)


def central_current_derivative(model, F, h):
    """Richardson-extrapolated d J / d eps at zero; negative eps is a flipped F."""
    d = lambda s: (current_at(model, F, s) - current_at(model, -F, s)) / (2 * s)  # noqa: E731
    return (4 * d(h / 2) - d(h)) / 3


def test_ring_current_is_uniform_and_matches_finite_difference():
    m = ring_model(3)
    j1 = linear_response_current(m, m.F1)
    np.testing.assert_allclose(central_current_derivative(m, m.F1, 1e-4), j1, atol=1e-8)
    for x in range(3):
        assert j1[x, (x + 1) % 3] == pytest.approx(j1[0, 1], rel=1e-12)
    assert j1[0, 1] == pytest.approx(1.0, rel=1e-12)  # beta gamma F with h = 0


def test_random_model_current_matches_finite_difference():
    F, _ = random_pair(M5, 3)
    np.testing.assert_allclose(
        central_current_derivative(M5, F, 1e-4), linear_response_current(M5, F), atol=1e-8
    )


@given(jump_models(min_n=3), st.integers(0, 1000))
def test_first_order_current_is_divergence_free(m, seed):
    F, _ = random_pair(m, seed)
    j = linear_response_current(m, F)
    assert np.max(np.abs(j.sum(axis=1))) < 1e-11 * max(1.0, np.abs(j).max())
    np.testing.assert_allclose(j, -j.T, atol=1e-14)


# --- reciprocity --------------------------------------------------------------------------


@given(jump_models(min_n=3), st.integers(0, 1000))
def test_reciprocity(m, seed):
    F, G = random_pair(m, seed)
    a, b = onsager_check(m, F, G)
    assert abs(a - b) <= 1e-10 * max(1.0, abs(a))
    assert a == pytest.approx(gk_deterministic(m, F, G), abs=1e-10 * max(1.0, abs(a)))


def test_reciprocity_same_field():
    F, _ = random_pair(M5, 1)
    a, b = onsager_check(M5, F, F)
    assert a == b and a > 0


def test_gradient_G_gives_zero_pairings():
    F, _ = random_pair(M5, 2)
    G = gradient_driving(M5, np.array([0.3, 0.1, -0.5, 0.9, -1.0]))
    np.testing.assert_allclose(onsager_check(M5, F, G), 0.0, atol=1e-12)


@given(st.integers(0, 1000))
def test_gauge_invariance(seed):
    F, G = random_pair(M5, seed)
    V = np.random.default_rng(seed + 1).normal(size=5)
    Fg = F + gradient_driving(M5, V)
    np.testing.assert_allclose(
        linear_response_current(M5, Fg), linear_response_current(M5, F), atol=1e-10
    )
    np.testing.assert_allclose(onsager_check(M5, Fg, G), onsager_check(M5, F, G), atol=1e-10)


def test_deterministic_terms_split():
    F, G = random_pair(M5, 4)
    local, transient = gk_deterministic_terms(M5, F, G)
    assert local == pytest.approx(0.5 * M5.beta * (M5.gamma * F * G).sum(), rel=1e-14)
    assert local + transient == pytest.approx(gk_deterministic(M5, F, G), rel=1e-14)


def test_interference_is_twice_the_pairing():
    F, G = random_pair(M5, 5)
    errs = []
    for eps in (0.02, 0.01):
        lhs, rhs = interference_check(M5.with_epsilon(eps), F, G)
        errs.append(abs(lhs - rhs) / eps**2)
    # relative error O(eps): halves with eps
    assert errs[1] < 0.6 * errs[0]
    assert errs[1] < 0.05 * abs(rhs / 0.01**2)


# --- Green-Kubo correlation -------------------------------------------------------------------


def test_gk_estimate_zero_for_zero_field():
    _, G = random_pair(M5, 6)
    est = gk_correlation_estimate(M5, np.zeros((5, 5)), G, 1.0, 1000, seed=1)
    assert est.mean == 0.0 and est.std_error == 0.0


def test_finite_T_bias_is_exact():
    m = random_jump_model(4, seed=3)
    F, G = random_pair(m, 8)
    T = 0.5
    est = gk_correlation_estimate(m, F, G, T, 100_000, seed=2)
    assert est.within(gk_deterministic(m, F, G) + gk_finite_T_bias(m, F, G, T))


def test_finite_T_bias_decays_like_inverse_T():
    m = random_jump_model(4, seed=3)
    F, G = random_pair(m, 8)
    gap = spectral_gap(reference_rates(m))
    b1 = gk_finite_T_bias(m, F, G, 20 / gap)
    b2 = gk_finite_T_bias(m, F, G, 40 / gap)
    assert b2 == pytest.approx(b1 / 2, rel=1e-6)


def test_report_consistency_and_estimator_symmetry():
    m = random_jump_model(4, seed=3)
    F, G = random_pair(m, 9)
    rep = green_kubo_report(m, F, G, 100_000, seed=5)
    assert rep.reciprocity_error < 1e-10
    assert rep.gk_consistent()
    swapped = gk_correlation_estimate(m, G, F, rep.T, 100_000, seed=6)
    assert abs(combined_z(rep.gk_estimate, swapped)) <= 3
    assert set(rep.as_row()) >= {"pairing_GF", "gk_mean", "gk_bias", "T"}


def test_driving_work_has_zero_mean():
    F, _ = random_pair(M5, 10)
    assert abs(equilibrium_density(M5) @ driving_work(M5, F)) < 1e-13


def test_rejects_non_antisymmetric_driving():
    with pytest.raises(ValueError):
        linear_response_current(M5, np.ones((5, 5)))
