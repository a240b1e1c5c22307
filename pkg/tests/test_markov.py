import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from nesslab.errors import DegenerateChainError, ModelError, RangeError
from nesslab.markov import (
    JumpModel,
    RateMatrix,
    backward_generator,
    build_rates,
    check_detailed_balance,
    equilibrium_density,
    evolve,
    evolve_with_integral,
    forward_generator,
    spectral_gap,
    stationary,
)
from nesslab.mclennan import linear_work
from nesslab.models import LatticeGasSpec, lattice_gas_model, random_jump_model, ring_model

from .conftest import jump_models


def two_state_rates(a, b):
    return RateMatrix(np.array([[0.0, a], [b, 0.0]]))


# --- equilibrium density ------------------------------------------------------


def test_equilibrium_flat_potential_is_uniform():
    m = JumpModel(np.zeros(5), 2.7, np.zeros((5, 5)), ring_model(5).gamma)
    np.testing.assert_allclose(equilibrium_density(m), np.full(5, 0.2), atol=1e-15)


def test_equilibrium_two_states_log2():
    m = JumpModel([0.0, math.log(2.0)], 1.0, np.zeros((2, 2)), [[0, 1], [1, 0]])
    np.testing.assert_allclose(equilibrium_density(m), [2 / 3, 1 / 3], atol=1e-15)


def test_equilibrium_lattice_gas_matches_direct_sum():
    spec = LatticeGasSpec(2, beta=1.3, J=0.7, field=0.2)
    m = lattice_gas_model(spec)
    E = spec.energies()
    assert E.size == 8
    w = [math.exp(-1.3 * e) for e in E]
    np.testing.assert_allclose(equilibrium_density(m), np.array(w) / sum(w), rtol=1e-13)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_equilibrium_rejects_overflowing_exponent():
    m = JumpModel([0.0, 1e308], 1e10, np.zeros((2, 2)), [[0, 1], [1, 0]], validate=False)
    with pytest.raises(RangeError):
        equilibrium_density(m)


# --- model validation -------------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs, match",
    [
        (dict(F1=[[0, 1], [1, 0]]), "antisymmetric"),
        (dict(gamma=[[0, 1], [2, 0]]), "symmetric"),
        (dict(gamma=[[0, 0], [0, 0]]), "connected"),
        (dict(beta=-1.0), "beta"),
        (dict(epsilon=-0.1), "epsilon"),
    ],
)
def test_model_validation(kwargs, match):
    base = dict(U=[0.0, 0.0], beta=1.0, F1=[[0, 1], [-1, 0]], gamma=[[0, 1], [1, 0]])
    base.update(kwargs)
    with pytest.raises(ModelError, match=match):
        JumpModel(**base)


# --- rates ------------------------------------------------------------------------


def test_ring_rates_by_hand():
    eps = 0.37
    lam = build_rates(ring_model(3, epsilon=eps)).lam
    for x in range(3):
        assert lam[x, (x + 1) % 3] == pytest.approx(3 * math.exp(eps / 2), rel=1e-14)
        assert lam[x, (x - 1) % 3] == pytest.approx(3 * math.exp(-eps / 2), rel=1e-14)


@given(jump_models())
def test_rate_ratio_is_local_detailed_balance(m):
    lam = build_rates(m).lam
    x, y = np.nonzero(m.gamma > 0)
    log_ratio = np.log(lam[x, y] / lam[y, x])
    expected = m.beta * (m.epsilon * m.F1[x, y] + m.U[x] - m.U[y])
    np.testing.assert_allclose(log_ratio, expected, atol=1e-10)


@given(jump_models())
def test_symmetric_part_of_flux(m):
    rho0 = equilibrium_density(m)
    a = rho0[:, None] * build_rates(m).lam * np.exp(-m.beta * m.epsilon * m.F1 / 2)
    np.testing.assert_allclose(a, a.T, atol=1e-12 * max(1.0, a.max()))


@given(jump_models(max_eps=0.0))
def test_zero_driving_is_detailed_balance(m):
    ok, viol = check_detailed_balance(build_rates(m), equilibrium_density(m), tol=1e-12)
    assert ok, viol


def test_driven_ring_breaks_detailed_balance_by_known_amount():
    eps = 0.2
    ok, viol = check_detailed_balance(build_rates(ring_model(3, epsilon=eps)), np.full(3, 1 / 3))
    assert not ok
    assert viol == pytest.approx(3 * (math.exp(eps / 2) - math.exp(-eps / 2)) / 3, rel=1e-13)


def test_gradient_driving_is_absorbed_into_potential():
    m = random_jump_model(5, seed=4)
    V = np.array([0.3, -1.0, 0.5, 2.0, -0.4])
    eps = 0.3
    F = np.where(m.gamma > 0, V[:, None] - V[None, :], 0.0)
    driven = JumpModel(m.U, m.beta, F, m.gamma, eps)
    # ratio convention lam(x,y)/lam(y,x) = exp(beta[eps F + U(x) - U(y)]) absorbs +eps V
    w = np.exp(-m.beta * (m.U + eps * V))
    ok, viol = check_detailed_balance(build_rates(driven), w / w.sum(), tol=1e-12)
    assert ok, viol


# --- generators and evolution -----------------------------------------------------


def test_forward_generator_two_state():
    a, b = 0.7, 1.9
    Ls = forward_generator(two_state_rates(a, b))
    mu = np.array([0.25, 0.75])
    np.testing.assert_allclose(Ls @ mu, [b * mu[1] - a * mu[0], a * mu[0] - b * mu[1]], atol=1e-15)


@given(jump_models())
def test_forward_generator_conserves_probability(m):
    Ls = forward_generator(build_rates(m))
    np.testing.assert_allclose(Ls.sum(axis=0), 0.0, atol=1e-12 * max(1, np.abs(Ls).max()))
    np.testing.assert_allclose(Ls, backward_generator(build_rates(m)).T)


def test_evolve_two_state_closed_form():
    mu = evolve(two_state_rates(1.0, 1.0), np.array([1.0, 0.0]), 1.0)
    e = math.exp(-2.0)
    np.testing.assert_allclose(mu, [(1 + e) / 2, (1 - e) / 2], atol=1e-13)


def test_evolve_zero_time_is_identity():
    rates = build_rates(random_jump_model(4, seed=2, epsilon=0.5))
    mu = np.array([0.1, 0.2, 0.3, 0.4])
    np.testing.assert_array_equal(evolve(rates, mu, 0.0), mu)


@given(jump_models(), st.floats(0.0, 5.0))
def test_evolve_matches_matrix_exponential(m, T):
    rates = build_rates(m)
    mu0 = np.zeros(m.n_states)
    mu0[0] = 1.0
    mu = evolve(rates, mu0, T)
    oracle = scipy.linalg.expm(T * forward_generator(rates)) @ mu0
    np.testing.assert_allclose(mu, oracle, atol=1e-10)
    assert np.all(mu >= 0)
    assert abs(mu.sum() - 1) < 1e-12


def test_evolve_time_integral_matches_block_exponential():
    rates = build_rates(random_jump_model(4, seed=3, epsilon=0.4))
    mu0 = np.array([1.0, 0, 0, 0])
    _, integral = evolve_with_integral(rates, mu0, 2.0)
    # expm([[L, I], [0, 0]] T) carries int_0^T exp(tL) dt in its upper-right block
    n = 4
    B = np.zeros((2 * n, 2 * n))
    B[:n, :n] = forward_generator(rates)
    B[:n, n:] = np.eye(n)
    oracle = scipy.linalg.expm(2.0 * B)[:n, n:] @ mu0
    np.testing.assert_allclose(integral, oracle, atol=1e-11)


# --- stationary law ---------------------------------------------------------------


@given(jump_models(max_eps=0.0))
def test_stationary_at_zero_driving_is_boltzmann(m):
    np.testing.assert_allclose(stationary(build_rates(m)), equilibrium_density(m), atol=1e-12)


@pytest.mark.parametrize("eps", [0.0, 0.3, 2.0])
def test_driven_ring_stationary_is_uniform(eps):
    np.testing.assert_allclose(stationary(build_rates(ring_model(3, epsilon=eps))), 1 / 3, atol=1e-14)


@given(jump_models())
def test_stationary_is_null_vector_and_fixed_point(m):
    rates = build_rates(m)
    rho = stationary(rates)
    scale = max(1.0, np.abs(rates.lam).max())
    assert np.max(np.abs(forward_generator(rates) @ rho)) < 1e-11 * scale
    np.testing.assert_allclose(evolve(rates, rho, 1.7), rho, atol=1e-10)
    oracle = scipy.linalg.null_space(forward_generator(rates))[:, 0]
    np.testing.assert_allclose(rho, oracle / oracle.sum(), atol=1e-10)


def test_stationary_matches_long_time_evolution():
    rates = build_rates(random_jump_model(4, seed=9, epsilon=0.8))
    T = 40.0 / spectral_gap(rates)
    np.testing.assert_allclose(stationary(rates), evolve(rates, np.full(4, 0.25), T), atol=1e-8)


@given(jump_models())
def test_mean_of_linear_work_vanishes(m):
    assert abs(equilibrium_density(m) @ linear_work(m)) < 1e-12 * max(1.0, np.abs(m.F1).max())


# --- spectral gap -----------------------------------------------------------------


def test_gap_two_state():
    assert spectral_gap(two_state_rates(1.0, 1.0)) == pytest.approx(2.0, rel=1e-14)


def test_gap_uniform_ring_is_nine():
    assert spectral_gap(build_rates(ring_model(3))) == pytest.approx(9.0, rel=1e-13)


@given(jump_models(), st.randoms(use_true_random=False))
def test_gap_invariant_under_relabeling(m, rnd):
    perm = list(range(m.n_states))
    rnd.shuffle(perm)
    p = np.array(perm)
    q = JumpModel(m.U[p], m.beta, m.F1[np.ix_(p, p)], m.gamma[np.ix_(p, p)], m.epsilon)
    assert spectral_gap(build_rates(q)) == pytest.approx(spectral_gap(build_rates(m)), rel=1e-9)


def test_gap_of_one_state_chain_raises():
    with pytest.raises(DegenerateChainError):
        spectral_gap(RateMatrix(np.zeros((1, 1))))
