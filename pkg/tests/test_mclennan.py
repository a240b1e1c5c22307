import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nesslab.errors import ModelError, SolvabilityError
from nesslab.markov import (
    JumpModel,
    RateMatrix,
    backward_generator,
    build_rates,
    equilibrium_density,
    reference_rates,
    spectral_gap,
    stationary,
)
from nesslab.mclennan import (
    LinearizationWarning,
    coupling_entropic_correction,
    coupling_perturbation_correction,
    default_eps_grid,
    entropic_residual,
    ftc_correction,
    ftc_full_quadrature,
    limit_exchange_table,
    linear_work,
    mclennan_correction,
    mclennan_density,
    poisson_by_quadrature,
    poisson_inverse,
    solve_poisson,
    stationary_entropy_flux,
    transient_excess,
)
from nesslab.models import random_jump_model, ring_model, two_block_example

from .conftest import jump_models

RANDOM4 = random_jump_model(4, seed=1)


def log_ratio(model, eps):
    m = model.with_epsilon(eps)
    return np.log(stationary(build_rates(m)) / equilibrium_density(m))


def richardson_derivative(f, h):
    """Central difference at step h, extrapolated with step h/2."""
    d = lambda s: (f(s) - f(-s)) / (2 * s)  # noqa: E731
    return (4 * d(h / 2) - d(h)) / 3


# --- linear work -----------------------------------------------------------------------


def test_linear_work_zero_without_driving():
    m = JumpModel(RANDOM4.U, 1.0, np.zeros((4, 4)), RANDOM4.gamma)
    np.testing.assert_array_equal(linear_work(m), 0.0)


def test_linear_work_cancels_on_uniform_ring():
    np.testing.assert_allclose(linear_work(ring_model(3)), 0.0, atol=1e-15)


# --- Poisson problem ---------------------------------------------------------------------


def test_poisson_zero_rhs():
    np.testing.assert_array_equal(solve_poisson(RANDOM4, np.zeros(4)), 0.0)


@given(jump_models())
def test_poisson_solution_solves_and_is_centred(m):
    rho0 = equilibrium_density(m)
    rhs = np.random.default_rng(0).normal(size=m.n_states)
    rhs -= rho0 @ rhs
    g = solve_poisson(m, rhs)
    L0 = backward_generator(reference_rates(m))
    assert np.max(np.abs(L0 @ g - rhs)) < 1e-11 * max(1.0, np.abs(L0).max())
    assert abs(rho0 @ g) < 1e-12 * max(1.0, np.abs(g).max())


def test_poisson_matches_semigroup_quadrature():
    rho0 = equilibrium_density(RANDOM4)
    rhs = np.array([1.0, -2.0, 0.5, 0.3])
    rhs -= rho0 @ rhs
    np.testing.assert_allclose(
        solve_poisson(RANDOM4, rhs), poisson_by_quadrature(RANDOM4, rhs), atol=1e-8
    )


@given(jump_models(), st.integers(0, 1000))
def test_poisson_inverse_is_self_adjoint_in_rho0(m, seed):
    rng = np.random.default_rng(seed)
    rho0 = equilibrium_density(m)
    f, h = rng.normal(size=(2, m.n_states))
    f -= rho0 @ f
    h -= rho0 @ h
    lhs = rho0 @ (f * solve_poisson(m, h))
    rhs = rho0 @ (solve_poisson(m, f) * h)
    assert lhs == pytest.approx(rhs, abs=1e-10 * (1 + abs(lhs)))


def test_poisson_rejects_rhs_with_nonzero_mean():
    with pytest.raises(SolvabilityError):
        solve_poisson(RANDOM4, np.ones(4))


def test_poisson_inverse_on_reducible_chain_works_per_class():
    rho0, base, _ = two_block_example()
    rhs = np.array([0.2, -0.3, -0.2, 0.3])
    g = poisson_inverse(backward_generator(base), rho0, rhs)
    np.testing.assert_allclose(backward_generator(base) @ g, rhs, atol=1e-13)
    with pytest.raises(SolvabilityError):
        poisson_inverse(backward_generator(base), rho0, np.array([1.0, 0.0, 0.0, 0.0]))


# --- first-order density ---------------------------------------------------------------


def test_no_driving_gives_no_correction():
    m = JumpModel(RANDOM4.U, 1.0, np.zeros((4, 4)), RANDOM4.gamma, 0.3)
    res = mclennan_correction(m)
    np.testing.assert_array_equal(res.h1, 0.0)
    np.testing.assert_allclose(res.rho_mclennan, equilibrium_density(m), atol=1e-16)


def signed_log_ratio(model, eps):
    """log(rho_eps/rho0) for either sign of eps; negative eps flips F1."""
    m = model if eps >= 0 else model.with_driving(-model.F1)
    return log_ratio(m, abs(eps))


def test_h1_matches_finite_difference_of_exact_law():
    h1 = mclennan_correction(RANDOM4).h1
    rho0 = equilibrium_density(RANDOM4)
    for step in (1e-3, 1e-4):
        d = richardson_derivative(lambda e: signed_log_ratio(RANDOM4, e), step)
        # a log-law fixes h1 only up to the normalization constant
        np.testing.assert_allclose(d - rho0 @ d, h1, atol=1e-6)


@given(jump_models(min_n=3, max_n=5))
def test_gauge_of_h1(m):
    res = mclennan_correction(m.with_epsilon(0.2))
    rho0 = equilibrium_density(m)
    assert abs(rho0 @ res.h1) < 1e-12 * max(1.0, np.abs(res.h1).max())
    np.testing.assert_allclose(
        mclennan_density(rho0, res.h1 + 3.7, 0.2), res.rho_mclennan, atol=1e-14
    )


def test_first_order_exactness_ratio_is_stable():
    eps = default_eps_grid()
    assert eps == [0.1, 0.05, 0.025, 0.0125]
    h1 = mclennan_correction(RANDOM4).h1
    rho0 = equilibrium_density(RANDOM4)
    ratios = []
    for e in eps:
        err = log_ratio(RANDOM4, e) - e * h1
        err -= rho0 @ err
        ratios.append(np.max(np.abs(err)) / e**2)
    assert max(ratios) / min(ratios) < 2


# --- entropy flux ---------------------------------------------------------------------------


def test_entropy_flux_forms():
    m = RANDOM4.with_epsilon(0.3)
    rates = build_rates(m)
    rho = stationary(rates)
    a = stationary_entropy_flux(rates, rho, m)
    b = stationary_entropy_flux(rates, rho, m, antisymmetrized=True)
    assert a == pytest.approx(b, abs=1e-12)
    assert a > 0
    m0 = m.with_epsilon(0.0)
    assert stationary_entropy_flux(build_rates(m0), stationary(build_rates(m0)), m0) == 0.0


def test_entropy_flux_is_second_order():
    vals = []
    for e in (0.1, 0.05, 0.025):
        m = RANDOM4.with_epsilon(e)
        rates = build_rates(m)
        vals.append(stationary_entropy_flux(rates, stationary(rates), m) / e**2)
    d1, d2 = abs(vals[0] - vals[1]), abs(vals[1] - vals[2])
    assert d2 < 0.6 * d1  # differences shrink roughly in proportion to eps


# --- counterterm --------------------------------------------------------------------------


def test_transient_excess_zero_horizon():
    assert transient_excess(RANDOM4.with_epsilon(0.1), 0, 0.0) == 0.0


def test_transient_excess_converges_and_matches_minus_eps_h1():
    gap = spectral_gap(reference_rates(RANDOM4))
    h1 = mclennan_correction(RANDOM4).h1
    C = []
    for e in default_eps_grid():
        m = RANDOM4.with_epsilon(e)
        worst = 0.0
        for x in range(4):
            a, b = transient_excess(m, x, 20 / gap), transient_excess(m, x, 40 / gap)
            assert abs(a - b) <= 1e-8
            assert transient_excess(m, x, math.inf) == pytest.approx(b, abs=1e-8)
            worst = max(worst, abs(b + e * h1[x]))
        C.append(worst / e**2)
    assert max(C) / min(C) < 2


# --- limit exchange ---------------------------------------------------------------------------


def test_limit_table_vanishes_without_driving():
    m = JumpModel(RANDOM4.U, 1.0, np.zeros((4, 4)), RANDOM4.gamma)
    tab = limit_exchange_table(m, [0.1, 0.01], [1.0, 5.0])
    np.testing.assert_allclose(tab.values, 0.0, atol=1e-11)


def test_iterated_limits_agree_with_h1():
    gap = spectral_gap(reference_rates(RANDOM4))
    tab = limit_exchange_table(RANDOM4, [0.1, 0.01, 0.001], [5 / gap, 20 / gap, 40 / gap])
    assert np.max(np.abs(tab.limit_T_then_eps - tab.h1)) <= 1e-4
    assert np.max(np.abs(tab.limit_eps_then_T - tab.h1)) <= 1e-3
    assert tab.values.shape == (3, 3, 4)
    assert tab.monotone_in_T().shape == (3,)
    assert tab.monotone_in_eps().shape == (3,)
    rows = tab.rows()
    assert {r[1] for r in rows} >= {math.inf}
    assert {r[0] for r in rows} >= {0.0}


# --- alternative derivation ----------------------------------------------------------------------


@given(jump_models(min_n=3, max_n=5))
def test_ftc_route_equals_mcLennan_route(m):
    m = m.with_epsilon(0.07)
    np.testing.assert_allclose(
        ftc_correction(m), 0.07 * mclennan_correction(m).h1, atol=1e-10
    )


def test_ftc_zero_driving():
    np.testing.assert_array_equal(ftc_correction(RANDOM4.with_epsilon(0.0)), 0.0)


def test_ftc_density_error_is_second_order():
    errs = []
    rho0 = equilibrium_density(RANDOM4)
    for e in (0.04, 0.02, 0.01):
        m = RANDOM4.with_epsilon(e)
        errs.append(np.max(np.abs(rho0 * (1 + ftc_correction(m)) - stationary(build_rates(m)))))
    assert 3.2 < errs[0] / errs[1] < 4.8 and 3.2 < errs[1] / errs[2] < 4.8


def test_unlinearized_source_is_centred_and_agrees_to_first_order():
    # local detailed balance makes the full source rho0-mean zero, so no warning
    h1 = mclennan_correction(RANDOM4).h1
    for e in (1e-2, 1e-3):
        with warnings.catch_warnings():
            warnings.simplefilter("error", LinearizationWarning)
            full = ftc_full_quadrature(RANDOM4.with_epsilon(e))
        assert np.max(np.abs(full / e - h1)) < 5 * e


# --- forbidden-transition coupling -------------------------------------------------------------------


def coupled_stationary(base, k, eps):
    return stationary(RateMatrix(base.lam + eps * k))


def test_coupling_correction_matches_finite_difference():
    rho0, base, k = two_block_example()
    corr = coupling_perturbation_correction(rho0, base, k, 1.0)
    np.testing.assert_allclose(corr, [0.04, -0.04, 0.04, -0.04], atol=1e-12)
    h = 1e-4
    fd = lambda s: (coupled_stationary(base, k, s) - rho0) / s  # noqa: E731
    richardson = 2 * fd(h / 2) - fd(h)
    np.testing.assert_allclose(corr, richardson, atol=1e-6)


def test_balanced_coupling_gives_no_correction():
    rho0 = np.array([0.25, 0.25, 0.25, 0.25])
    lam = np.zeros((4, 4))
    lam[0, 1] = lam[1, 0] = lam[2, 3] = lam[3, 2] = 1.0
    k = np.zeros((4, 4))
    k[1, 2] = k[2, 1] = 0.5
    k[0, 3] = k[3, 0] = 0.5
    corr = coupling_perturbation_correction(rho0, RateMatrix(lam), k, 0.1)
    np.testing.assert_allclose(corr, 0.0, atol=1e-15)


def test_coupling_validation():
    rho0, base, k = two_block_example()
    bad = k.copy()
    bad[0, 1] = 1.0  # already connected by the base chain
    with pytest.raises(ModelError):
        coupling_perturbation_correction(rho0, base, bad, 0.1)
    one_way = k.copy()
    one_way[3, 0] = 0.0
    with pytest.raises(ModelError):
        coupling_perturbation_correction(rho0, base, one_way, 0.1)


def test_entropic_source_carries_net_flow_between_blocks():
    rho0, base, k = two_block_example()
    with pytest.raises(SolvabilityError):
        coupling_entropic_correction(rho0, base, k, 0.1)


def test_entropic_family_spans_block_mean_zero_vectors():
    # every block-weight-preserving vector is reachable by some base-edge driving
    rho0, base, k = two_block_example()
    v = np.array([0.2, -0.2, -0.1, 0.1])  # absolute density change; each block sums to zero
    assert entropic_residual(rho0, base, v) < 1e-12
    # a vector that moves weight between the blocks is not
    assert entropic_residual(rho0, base, np.array([1.0, 0.0, 0.0, 0.0])) > 0.1
