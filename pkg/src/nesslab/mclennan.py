"""First-order nonequilibrium corrections around a detailed-balance chain.

Central objects, all for a :class:`~nesslab.markov.JumpModel`:

* ``w1(x) = sum_y lam0(x, y) F1(x, y)``, the linear mean work rate at ``x``;
* the Poisson inverse ``L0^{-1}`` on ``rho0``-mean-zero functions;
* ``h1 = beta L0^{-1} w1``, so that ``rho_eps ∝ rho0 exp(eps h1 + O(eps^2))``.

Tools here compute these exactly and also expose the finite-time and
finite-driving quantities whose limits they are.
"""

from __future__ import annotations

import dataclasses
import math
import warnings

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse import csgraph

from .errors import ModelError, SolvabilityError
from .markov import (
    backward_generator,
    build_rates,
    check_detailed_balance,
    equilibrium_density,
    evolve_with_integral,
    forward_generator,
    propagate_function,
    reference_rates,
    spectral_gap,
    stationary,
)

__all__ = [
    "McLennanResult",
    "LimitExchangeTable",
    "LinearizationWarning",
    "linear_work",
    "poisson_inverse",
    "solve_poisson",
    "poisson_by_quadrature",
    "mclennan_correction",
    "mclennan_density",
    "stationary_entropy_flux",
    "transient_excess",
    "limit_exchange_table",
    "default_eps_grid",
    "ftc_correction",
    "ftc_full_quadrature",
    "coupling_perturbation_correction",
    "coupling_entropic_correction",
    "entropic_residual",
]

SOLVABILITY_TOL = 1e-10
QUADRATURE_GAP_MULTIPLE = 30.0


class LinearizationWarning(UserWarning):
    """A semigroup integral was requested for a source with nonzero mean."""


@dataclasses.dataclass(frozen=True, eq=False)
class McLennanResult:
    """First-order stationary correction.

    Attributes
    ----------
    h1 : ndarray
        Log-density correction per unit ``epsilon``, ``rho0``-mean zero.
    w1 : ndarray
        Bare linear work rate ``sum_y lam0 F1`` (no factor ``beta``).
    sigma_eps : float
        Stationary entropy flux at the model's ``epsilon``.
    rho_mclennan : ndarray
        Normalized ``rho0 exp(epsilon h1)``.
    """

    h1: np.ndarray
    w1: np.ndarray
    sigma_eps: float
    rho_mclennan: np.ndarray


def linear_work(model):
    """``w1(x) = sum_y lam0(x, y) F1(x, y)`` with the equilibrium rates."""
    lam0 = reference_rates(model).lam
    return (lam0 * model.F1).sum(axis=1)


def _closed_classes(lam):
    n_comp, labels = csgraph.connected_components(
        sparse.csr_matrix(lam > 0), directed=True, connection="strong"
    )
    return [np.flatnonzero(labels == c) for c in range(n_comp)]


def _bordered_solve(L, rho, rhs):
    n = L.shape[0]
    A = np.zeros((n + 1, n + 1))
    A[:n, :n] = L
    A[:n, n] = 1.0
    A[n, :n] = rho
    b = np.concatenate([rhs, [0.0]])
    lu = scipy.linalg.lu_factor(A)
    sol = scipy.linalg.lu_solve(lu, b)
    sol += scipy.linalg.lu_solve(lu, b - A @ sol)
    return sol[:n]


def poisson_inverse(L, rho, rhs, tol=SOLVABILITY_TOL):
    """Solve ``L g = rhs`` with ``sum rho g = 0`` on each closed class.

    ``L`` is a backward generator that is reversible with respect to
    ``rho``; it may be reducible, in which case every class is solved
    separately in its own mean-zero gauge.

    Raises
    ------
    SolvabilityError
        If ``rhs`` has nonzero ``rho``-mean on some class, so that the
        time integral ``-int_0^inf exp(tL) rhs dt`` diverges.
    """
    L = np.asarray(L, dtype=float)
    rho = np.asarray(rho, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    lam = L - np.diag(np.diag(L))
    g = np.zeros_like(rhs)
    scale = max(1.0, float(np.max(np.abs(rhs)))) if rhs.size else 1.0
    for block in _closed_classes(lam):
        r = rho[block] / rho[block].sum()
        mean = float(r @ rhs[block])
        if abs(mean) > tol * scale:
            raise SolvabilityError(
                f"right-hand side has mean {mean:.3e} on states {block.tolist()}; "
                "the Poisson equation has no solution"
            )
        if block.size == 1:
            continue
        g[block] = _bordered_solve(L[np.ix_(block, block)], r, rhs[block] - mean)
    return g


def solve_poisson(model, rhs, tol=SOLVABILITY_TOL):
    """``g`` with ``L0 g = rhs`` and ``sum rho0 g = 0`` for the equilibrium chain."""
    L0 = backward_generator(reference_rates(model))
    return poisson_inverse(L0, equilibrium_density(model), rhs, tol=tol)


def poisson_by_quadrature(model, rhs, T_max=None):
    """``-int_0^T_max exp(t L0) rhs dt``, the semigroup form of the Poisson inverse."""
    rates0 = reference_rates(model)
    if T_max is None:
        T_max = QUADRATURE_GAP_MULTIPLE / spectral_gap(rates0)
    _, integral = propagate_function(rates0, rhs, T_max, integral=True)
    return -integral


def stationary_entropy_flux(rates, rho, model, antisymmetrized=False):
    """Mean entropy flux per unit time in the law ``rho``.

    ``beta sum_x rho(x) sum_y lam(x, y) eps F1(x, y)``, or the equal
    antisymmetrized form ``(beta/2) sum (rho lam - (rho lam)^T) eps F1``.
    """
    rho = np.asarray(rho, dtype=float)
    work = model.epsilon * model.F1
    if antisymmetrized:
        flux = rho[:, None] * rates.lam
        return 0.5 * model.beta * float(((flux - flux.T) * work).sum())
    return model.beta * float(rho @ (rates.lam * work).sum(axis=1))


def mclennan_density(rho0, h1, epsilon):
    """Normalized ``rho0 exp(epsilon h1)``; invariant under constant shifts of ``h1``."""
    a = epsilon * np.asarray(h1, dtype=float)
    w = np.asarray(rho0) * np.exp(a - a.max())
    return w / w.sum()


def mclennan_correction(model):
    """``h1 = beta L0^{-1} w1`` and the resulting first-order density."""
    w1 = linear_work(model)
    rho0 = equilibrium_density(model)
    h1 = model.beta * solve_poisson(model, w1)
    rates = build_rates(model)
    sigma = stationary_entropy_flux(rates, stationary(rates), model)
    return McLennanResult(h1, w1, sigma, mclennan_density(rho0, h1, model.epsilon))


def _entropy_rate(rates, model):
    return model.beta * model.epsilon * (rates.lam * model.F1).sum(axis=1)


def transient_excess(model, x, T):
    """``<S_IRR^T>_x - sigma_eps T`` evaluated on the master-equation flow.

    Equals ``r . int_0^T (mu_t - rho_eps) dt`` with ``mu_0 = delta_x`` and
    ``r`` the mean entropy production rate per state; integrating the
    difference keeps the result accurate for large ``T``.  ``T = inf``
    gives the limit through a group-inverse solve.
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    rates = build_rates(model)
    r = _entropy_rate(rates, model)
    rho = stationary(rates)
    v = -rho.copy()
    v[x] += 1.0
    if T == 0 or model.epsilon == 0:
        return 0.0
    if math.isinf(T):
        # int_0^inf exp(t L*) v dt = z with L* z = -v, sum z = 0
        Ls = forward_generator(rates)
        n = rates.n_states
        A = np.vstack([Ls, np.ones((1, n))])
        b = np.concatenate([-v, [0.0]])
        z = np.linalg.lstsq(A, b, rcond=None)[0]
        return float(r @ z)
    _, integral = evolve_with_integral(rates, v, T)
    return float(r @ integral)


def default_eps_grid(k=4, start=0.1):
    """Geometric grid ``start * 2**-j`` for ``j < k``."""
    return [start * 2.0**-j for j in range(k)]


@dataclasses.dataclass(frozen=True, eq=False)
class LimitExchangeTable:
    """Scaled log-ratios ``(1/eps) log(rho_T^eps(x) / rho0(x))`` from ``rho0``.

    Attributes
    ----------
    eps, T : ndarray
        Sorted grids.
    values : ndarray, shape (n_eps, n_T, n_states)
        Grid entries.
    at_stationarity : ndarray, shape (n_eps, n_states)
        ``T = inf`` column from the stationary solver.
    at_zero_driving : ndarray, shape (n_T, n_states)
        ``eps -> 0`` row, ``-beta int_0^T <w1(x_t)>^0_x dt``.
    h1 : ndarray
        Exact limit of both orders.
    """

    eps: np.ndarray
    T: np.ndarray
    values: np.ndarray
    at_stationarity: np.ndarray
    at_zero_driving: np.ndarray
    h1: np.ndarray

    @property
    def limit_T_then_eps(self):
        """Inner limit ``eps -> 0`` at the largest horizon."""
        return self.at_zero_driving[-1]

    @property
    def limit_eps_then_T(self):
        """Inner limit ``T -> inf`` at the smallest driving."""
        return self.at_stationarity[0]

    def monotone_in_T(self):
        """Per ``eps``: is the distance to the ``T = inf`` value nonincreasing in ``T``?"""
        dist = np.abs(self.values - self.at_stationarity[:, None, :]).max(axis=2)
        return np.all(np.diff(dist, axis=1) <= 1e-12, axis=1)

    def monotone_in_eps(self):
        """Per ``T``: is the distance to the ``eps -> 0`` value nondecreasing in ``eps``?"""
        dist = np.abs(self.values - self.at_zero_driving[None, :, :]).max(axis=2)
        return np.all(np.diff(dist, axis=0) >= -1e-12, axis=0)

    def rows(self):
        """Long-format ``(eps, T, state, value)`` tuples, ``inf`` / 0 for the limits."""
        out = []
        for i, e in enumerate(self.eps):
            for j, t in enumerate(self.T):
                out += [(e, t, x, v) for x, v in enumerate(self.values[i, j])]
            out += [(e, math.inf, x, v) for x, v in enumerate(self.at_stationarity[i])]
        for j, t in enumerate(self.T):
            out += [(0.0, t, x, v) for x, v in enumerate(self.at_zero_driving[j])]
        return out


def limit_exchange_table(model, eps_grid, T_grid):
    """Tabulate the finite-``(eps, T)`` approach to ``h1`` from both sides."""
    eps = np.sort(np.asarray(eps_grid, dtype=float))
    T = np.sort(np.asarray(T_grid, dtype=float))
    if eps.size == 0 or T.size == 0:
        raise ValueError("grids must be nonempty")
    if np.any(eps <= 0):
        raise ValueError("eps values must be positive")
    if np.any(T < 0) or not np.all(np.isfinite(T)):
        raise ValueError("T values must be finite and nonnegative")
    rho0 = equilibrium_density(model)
    n = model.n_states
    values = np.empty((eps.size, T.size, n))
    at_stat = np.empty((eps.size, n))
    for i, e in enumerate(eps):
        rates = build_rates(model.with_epsilon(e))
        mu, t_prev = rho0, 0.0
        for j, t in enumerate(T):
            mu, _ = evolve_with_integral(rates, mu, t - t_prev, integral=False)
            t_prev = t
            values[i, j] = np.log(mu / rho0) / e
        at_stat[i] = np.log(stationary(rates) / rho0) / e
    rates0 = reference_rates(model)
    w1 = linear_work(model)
    at_zero = np.empty((T.size, n))
    for j, t in enumerate(T):
        _, integral = propagate_function(rates0, w1, t, integral=True)
        at_zero[j] = -model.beta * integral
    h1 = model.beta * solve_poisson(model, w1)
    return LimitExchangeTable(eps, T, values, at_stat, at_zero, h1)


def ftc_correction(model):
    """First-order relative density correction ``int_0^inf exp(t L0)(-eps beta w1) dt``.

    This is ``eps beta L0^{-1} w1 = eps h1``: ``rho_eps = rho0 (1 + correction)``
    up to ``O(eps^2)``.
    """
    w1 = linear_work(model)
    return model.epsilon * model.beta * solve_poisson(model, w1)


def ftc_full_quadrature(model, T_max=None, tol=SOLVABILITY_TOL):
    """``int_0^T_max exp(t L0) h dt`` with the unlinearized source.

    ``h(x) = sum_y lam(x, y) [exp(-beta eps F1(x, y)) - 1]`` at the model's
    ``epsilon``.  Local detailed balance makes its ``rho0``-mean vanish
    exactly, so the integral converges at every ``epsilon``.  A source whose
    mean is nonzero beyond ``tol`` (rates not of the model form, or
    round-off at extreme driving) makes the integral grow linearly in
    ``T_max``; a :class:`LinearizationWarning` is then issued.
    """
    rates = build_rates(model)
    h = (rates.lam * np.expm1(-model.beta * model.epsilon * model.F1)).sum(axis=1)
    rho0 = equilibrium_density(model)
    mean = float(rho0 @ h)
    if abs(mean) > tol * max(1.0, float(np.abs(h).max())):
        warnings.warn(
            f"source has rho0-mean {mean:.3e}; the time integral diverges as T_max grows "
            "and is meaningful only to first order",
            LinearizationWarning,
            stacklevel=2,
        )
    rates0 = reference_rates(model)
    if T_max is None:
        T_max = QUADRATURE_GAP_MULTIPLE / spectral_gap(rates0)
    _, integral = propagate_function(rates0, h, T_max, integral=True)
    return integral


def _coupling_setup(rho0, base_rates, k):
    rho0 = np.asarray(rho0, dtype=float)
    k = np.array(k, dtype=float)
    n = rho0.size
    if k.shape != (n, n) or base_rates.n_states != n:
        raise ModelError("rho0, base rates and coupling must have matching sizes")
    np.fill_diagonal(k, 0.0)
    if np.any(k < 0) or not np.all(np.isfinite(k)):
        raise ModelError("coupling rates must be finite and nonnegative")
    support = k > 0
    if np.any(support & ((base_rates.lam > 0) | (base_rates.lam.T > 0))):
        raise ModelError("coupling placed on a pair that the base dynamics already connects")
    if np.any(support != support.T):
        raise ModelError("coupling must be positive in both directions on each pair")
    scale = max(1.0, float(base_rates.escape.max()))
    ok, viol = check_detailed_balance(base_rates, rho0, tol=1e-10 * scale)
    if not ok:
        raise ModelError(f"base rates violate detailed balance w.r.t. rho0 by {viol:.3e}")
    phi = np.zeros_like(k)
    phi[support] = np.log((rho0[:, None] * k)[support] / (rho0[None, :] * k.T)[support])
    return rho0, k, phi


def _coupled_irreducible(base_rates, k):
    lam = base_rates.lam + k
    n_comp, _ = csgraph.connected_components(
        sparse.csr_matrix(lam > 0), directed=True, connection="strong"
    )
    return n_comp == 1


def coupling_perturbation_correction(rho0, base_rates, k, eps):
    """First-order density change when forbidden transitions are switched on.

    The coupled chain has rates ``base + eps k`` where ``k`` lives only on
    pairs the base dynamics does not connect.  Returns
    ``rho0 * int_0^inf exp(t L0) h dt`` with
    ``h(x) = eps sum_y k(x, y) [exp(-phi(x, y)) - 1]`` and
    ``phi(x, y) = log(rho0(x) k(x, y) / (rho0(y) k(y, x)))``.

    The base chain may split into several classes; the integral is then
    taken class by class and needs ``h`` to be ``rho0``-mean zero on each,
    i.e. no net probability flow between classes in the law ``rho0``.
    First-order shifts of the class weights are not part of this
    formula.

    Raises
    ------
    ModelError
        If ``k`` touches a pair with nonzero base rate, or the inputs are
        otherwise inconsistent.
    SolvabilityError
        If ``h`` has nonzero mean on some class of the base chain.
    """
    rho0, k, phi = _coupling_setup(rho0, base_rates, k)
    if not _coupled_irreducible(base_rates, k):
        raise ModelError("the coupled chain is not irreducible")
    h = eps * (k * np.where(k > 0, np.expm1(-phi), 0.0)).sum(axis=1)
    g = poisson_inverse(backward_generator(base_rates), rho0, h)
    return -rho0 * g


def coupling_entropic_correction(rho0, base_rates, k, eps):
    """Same as :func:`coupling_perturbation_correction` with ``exp(-phi) - 1`` replaced by ``-phi``.

    This is the form a McLennan-type correction built from the coupling's
    own entropy flux would take.  Its source ``-eps sum_y k phi`` generally
    carries net flow between the classes of the base chain, in which case
    the Poisson problem has no solution and :class:`SolvabilityError` is
    raised; when it is solvable it still differs from the true correction
    unless ``phi`` is small.
    """
    rho0, k, phi = _coupling_setup(rho0, base_rates, k)
    h = -eps * (k * phi).sum(axis=1)
    g = poisson_inverse(backward_generator(base_rates), rho0, h)
    return -rho0 * g


def entropic_residual(rho0, base_rates, correction, beta=1.0):
    """Relative least-squares distance from ``correction`` to the entropic family.

    The family is ``{-rho0 * eps beta L0^{-1} w1^F}`` with ``F``
    antisymmetric on the edges of the base graph; it is linear in ``F``, so
    ``eps`` is absorbed.  Returns ``min_F ||c - c_F|| / ||c||``.
    """
    rho0 = np.asarray(rho0, dtype=float)
    correction = np.asarray(correction, dtype=float)
    lam = base_rates.lam
    L0 = backward_generator(base_rates)
    edges = [(x, y) for x, y in zip(*np.nonzero(np.triu(lam > 0)))]
    cols = []
    for x, y in edges:
        F = np.zeros_like(lam)
        F[x, y], F[y, x] = 1.0, -1.0
        w1 = (lam * F).sum(axis=1)
        cols.append(-rho0 * beta * poisson_inverse(L0, rho0, w1))
    norm = float(np.linalg.norm(correction))
    if not cols or norm == 0:
        return 0.0 if norm == 0 else 1.0
    B = np.column_stack(cols)
    coef = np.linalg.lstsq(B, correction, rcond=None)[0]
    return float(np.linalg.norm(B @ coef - correction) / norm)
