import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nesslab.diffusion import (
    DiffusionModel,
    GridDensity,
    SDEPath,
    TimeStepError,
    cell_centres,
    chain_gk_limit,
    current_density,
    default_dt,
    fp_generator,
    gk_diffusion_deterministic,
    gk_diffusion_estimate,
    interpolate_periodic,
    jump_chain,
    mclennan_h1_diffusion,
    sde_ensemble,
    sde_sample,
    stationary_density,
    stratonovich_integral,
    work_density,
)
from nesslab.markov import build_rates, check_detailed_balance, equilibrium_density, stationary
from nesslab.paths import PathEstimate

TWO_PI = 2 * np.pi


def smooth_model(n=32, eps=0.0, beta=1.0):
    return DiffusionModel.from_functions(
        lambda x: 1.0 + 0.3 * np.cos(TWO_PI * x),
        lambda x: 0.8 * (np.sin(TWO_PI * x) + 0.4 * np.cos(2 * TWO_PI * x)),
        lambda x: 1.0 + 0.5 * np.cos(TWO_PI * x),
        n, beta, eps,
    )


def flat_model(n=16, F=0.0, eps=0.0, chi=1.0, beta=1.0):
    return DiffusionModel.from_functions(chi, 0.0, F, n, beta, eps)


# --- generator ---------------------------------------------------------------------------


def test_flat_generator_is_discrete_laplacian():
    m = flat_model(8, chi=2.0, beta=2.0)
    L = fp_generator(m).backward
    n, dx = 8, 1 / 8
    lap = (np.roll(np.eye(n), 1, axis=1) + np.roll(np.eye(n), -1, axis=1) - 2 * np.eye(n)) / dx**2
    np.testing.assert_allclose(L, 1.0 * lap, atol=1e-12)
    np.testing.assert_allclose(stationary_density(m).values, 1.0, atol=1e-13)


def test_chain_is_reversible_without_driving():
    chain = jump_chain(smooth_model())
    ok, viol = check_detailed_balance(build_rates(chain), equilibrium_density(chain), tol=1e-14 * 1e3)
    assert ok, viol


def test_stationary_density_is_cellwise_boltzmann():
    m = smooth_model(48)
    w = np.exp(-m.beta * m.U)
    np.testing.assert_allclose(stationary_density(m).probabilities, w / w.sum(), atol=1e-12)


def test_model_validation():
    with pytest.raises(ValueError, match="3 cells"):
        flat_model(2)
    with pytest.raises(ValueError, match="chi"):
        DiffusionModel.from_functions(-1.0, 0.0, 0.0, 8)


def test_grid_density_normalization():
    with pytest.raises(ValueError):
        GridDensity(np.ones(4), 0.5)
    g = GridDensity.from_probabilities(np.full(4, 0.25), 0.25)
    np.testing.assert_allclose(g.values, 1.0)


# --- currents and work -------------------------------------------------------------------------


def test_equilibrium_has_no_current():
    m = smooth_model()
    np.testing.assert_allclose(current_density(m, stationary_density(m)), 0.0, atol=1e-12)


def test_constant_force_on_flat_ring_gives_closed_form_current():
    n, F, eps, chi = 20, 1.3, 0.4, 0.7
    m = flat_model(n, F=F, eps=eps, chi=chi)
    j = current_density(m, stationary_density(m))
    dx = 1 / n
    expected = (1 / n) * (chi / dx**2) * 2 * math.sinh(eps * dx * F / 2)
    np.testing.assert_allclose(j, expected, rtol=1e-11)
    # continuum limit: j = chi eps F / length
    assert expected == pytest.approx(chi * eps * F, rel=1e-3)


@given(st.integers(0, 10_000))
def test_current_divergence_telescopes(seed):
    m = smooth_model(12, eps=0.3)
    p = np.random.default_rng(seed).dirichlet(np.ones(12))
    j = current_density(m, GridDensity.from_probabilities(p, m.dx))
    div = j - np.roll(j, 1)
    assert abs(div.sum()) < 1e-12 * max(1.0, np.abs(j).max())


def test_work_density_cases():
    w, w1 = work_density(flat_model(10))
    np.testing.assert_array_equal(w, 0.0)
    np.testing.assert_array_equal(w1, 0.0)
    _, w1 = work_density(flat_model(10, F=2.0, chi=1.5))
    np.testing.assert_allclose(w1, 0.0, atol=1e-10)
    m = smooth_model(40, eps=0.2)
    _, w1 = work_density(m)
    assert abs(stationary_density(m.with_epsilon(0)).probabilities @ w1) < 1e-12 * np.abs(w1).max()


# --- first-order density --------------------------------------------------------------------


def test_h1_zero_without_force():
    m = DiffusionModel(smooth_model().chi, smooth_model().U, np.zeros(32))
    np.testing.assert_allclose(mclennan_h1_diffusion(m), 0.0, atol=1e-15)


def test_h1_first_order_exactness_on_the_chain():
    m = smooth_model(32)
    h1 = mclennan_h1_diffusion(m)
    rho0 = stationary_density(m).probabilities
    errs = []
    for e in (0.1, 0.05, 0.025):
        exact = stationary_density(m.with_epsilon(e)).probabilities
        approx = rho0 * np.exp(e * h1)
        errs.append(np.max(np.abs(exact - approx / approx.sum())))
    assert 3.2 < errs[0] / errs[1] < 4.8 and 3.2 < errs[1] / errs[2] < 4.8


def test_h1_grid_refinement_is_second_order():
    def coarse(n):
        h = mclennan_h1_diffusion(smooth_model(n))
        # average pairs of fine cells down to 16 cells
        return h.reshape(16, -1).mean(axis=1)

    a, b, c = coarse(32), coarse(64), coarse(128)
    r = np.max(np.abs(a - b)) / np.max(np.abs(b - c))
    assert 3.0 < r < 5.0


# --- interpolation -----------------------------------------------------------------------------------


def test_trigonometric_interpolation_is_exact_for_low_modes():
    n = 16
    x = cell_centres(n)
    vals = np.sin(TWO_PI * x) + 0.5 * np.cos(3 * TWO_PI * x)
    y = np.linspace(0, 1, 37)
    np.testing.assert_allclose(
        interpolate_periodic(vals, 1.0, y), np.sin(TWO_PI * y) + 0.5 * np.cos(3 * TWO_PI * y), atol=1e-12
    )
    np.testing.assert_allclose(
        interpolate_periodic(vals, 1.0, y, derivative=1),
        TWO_PI * np.cos(TWO_PI * y) - 1.5 * TWO_PI * np.sin(3 * TWO_PI * y),
        atol=1e-10,
    )


# --- SDE sampling ----------------------------------------------------------------------------------------


def test_brownian_variance():
    chi, beta, T = 0.8, 2.0, 0.05
    m = flat_model(16, chi=chi, beta=beta)
    ens = sde_ensemble(m, 0.5, T / 50, T, 10_000, seed=3)
    d = ens.displacement
    n = d.size
    var = d.var(ddof=1)
    se = var * math.sqrt(2 / (n - 1))
    assert abs(var - 2 * (chi / beta) * T) < 3 * se


def test_stationary_histogram_matches_equilibrium_density():
    m = smooth_model(64)
    rho = stationary_density(m)
    T = 0.3
    ens = sde_ensemble(m, rho, default_dt(m, T), T, 100_000, seed=2)
    obs, _ = np.histogram(ens.x_final, np.linspace(0, 1, 9))
    p = rho.probabilities.reshape(8, 8).sum(axis=1)
    chi2 = float(((obs - 1e5 * p) ** 2 / (1e5 * p)).sum())
    assert chi2 < 21.67  # chi-square, 7 dof, upper 0.27%: the 3 sigma level


def test_weak_order_one_in_dt():
    m = DiffusionModel.from_functions(
        lambda x: 1.0 + 0.3 * np.cos(TWO_PI * x),
        lambda x: 1.5 * (np.sin(TWO_PI * x) + 0.4 * np.cos(2 * TWO_PI * x)),
        0.0, 64,
    )
    means = []
    for dt in (0.004, 0.002, 0.001):
        # a shared seed correlates the Gaussian draws across step sizes
        ens = sde_ensemble(m, 0.3, dt, 0.2, 200_000, seed=1)
        means.append(np.cos(TWO_PI * ens.x_final).mean())
    d1, d2 = means[0] - means[1], means[1] - means[2]
    assert abs(d1) > 5 * 0.0013  # bias well resolved at the coarsest step
    assert 0.2 < d2 / d1 < 0.8  # roughly halves with dt


def test_single_path_and_text_dump():
    m = smooth_model(16)
    p = sde_sample(m, 0.25, 0.001, 0.05, seed=4)
    assert p.n_steps == 50 and p.x.size == 51
    assert p.x[0] == 0.25
    assert np.all((p.x >= 0) & (p.x < 1))
    text = p.to_text().splitlines()
    assert text[0].startswith("#sde-path") and text[1] == "step,position" and len(text) == 53
    q = sde_sample(m, 0.25, 0.001, 0.05, seed=4)
    np.testing.assert_array_equal(p.x, q.x)


def test_horizon_must_be_multiple_of_step():
    with pytest.raises(ValueError, match="multiple"):
        sde_sample(smooth_model(8), 0.1, 0.003, 0.01, seed=0)


# --- Stratonovich integrals -------------------------------------------------------------------------------


def test_stratonovich_constant_field_is_displacement():
    p = sde_sample(smooth_model(16), 0.1, 0.001, 0.2, seed=5)
    assert stratonovich_integral(p, lambda x: np.full_like(x, 2.5)) == pytest.approx(
        2.5 * p.displacement, rel=1e-12
    )


def test_stratonovich_chain_rule_for_gradients():
    V = lambda x: np.sin(TWO_PI * x) + 0.3 * np.cos(2 * TWO_PI * x)  # noqa: E731
    dV = lambda x: TWO_PI * np.cos(TWO_PI * x) - 0.6 * TWO_PI * np.sin(2 * TWO_PI * x)  # noqa: E731
    errs = []
    for dt in (1e-4, 2.5e-5):
        p = sde_sample(smooth_model(16), 0.1, dt, 0.1, seed=6)
        errs.append(abs(stratonovich_integral(p, dV) - (V(p.x[-1]) - V(p.x[0]))))
    assert errs[0] < 2e-3 and errs[1] < errs[0]


def test_stratonovich_is_odd_under_reversal():
    m = smooth_model(16)
    p = sde_sample(m, 0.4, 0.001, 0.1, seed=7)
    f = m.F1 * 1.7
    assert stratonovich_integral(p.time_reversed(), f) == pytest.approx(
        -stratonovich_integral(p, f), abs=1e-13
    )


def test_stratonovich_rejects_huge_steps():
    p = SDEPath(np.array([0.0, 0.9]), np.array([0.9]), 1.0, 1.0)
    with pytest.raises(TimeStepError):
        stratonovich_integral(p, lambda x: x)


def test_ito_decomposition_of_stratonovich_integral():
    m = smooth_model(64)
    x = cell_centres(64)
    F = m.F1
    D = m.D
    dF = interpolate_periodic(F, 1.0, x, derivative=1)
    dD = interpolate_periodic(D, 1.0, x, derivative=1)
    dU = interpolate_periodic(m.U, 1.0, x, derivative=1)
    # int F o dx = int [F (D' - chi U') + D F'] dt + int F sqrt(2D) dB
    w = F * (dD - m.chi * dU) + D * dF
    rho = stationary_density(m)
    T = 0.2
    ens = sde_ensemble(m, rho, default_dt(m, T), T, 50_000, seed=8,
                       strat_fields=(F,), time_fields=(w,), ito_fields=(F * np.sqrt(2 * D),))
    s = ens.strat[:, 0]
    decomposed = ens.time[:, 0] + ens.ito[:, 0]
    diff = PathEstimate.from_samples(s - decomposed, 8)
    assert diff.within(0.0) or abs(diff.mean) < 0.01 * np.std(s)
    assert PathEstimate.from_samples(s, 8).within(decomposed.mean(), 3.0 * math.sqrt(2))


# --- Green-Kubo --------------------------------------------------------------------------------------------


def test_gk_zero_force():
    m = smooth_model(16)
    r = gk_diffusion_estimate(m, np.zeros(16), m.F1, 0.05, 1000, 0.001, seed=1)
    assert r.estimate.mean == 0.0 and r.deterministic == 0.0


def test_gk_flat_landscape_reduces_to_mobility_term():
    chi, F = 0.9, 1.5
    m = flat_model(16, F=F, chi=chi)
    local, transient = gk_diffusion_deterministic(m, m.F1, m.F1)
    assert local == pytest.approx(chi * F**2, rel=1e-14)  # <D F^2> at beta = 1
    assert transient == pytest.approx(0.0, abs=1e-12)
    r = gk_diffusion_estimate(m, m.F1, m.F1, 0.2, 50_000, 0.002, seed=3)
    assert r.consistent()


def test_gk_cell_term_agrees_with_chain_to_second_order():
    errs = []
    for n in (32, 64):
        m = smooth_model(n)
        G = 0.5 + np.sin(TWO_PI * cell_centres(n))
        errs.append(abs(sum(gk_diffusion_deterministic(m, m.F1, G)) - chain_gk_limit(m, m.F1, G)))
    assert errs[1] < errs[0] / 3
