"""Finite-state continuous-time Markov jump processes.

Rates are built in the local-detailed-balance form

    rho0(x) lambda(x, y) = gamma(x, y) * exp(beta * eps * F1(x, y) / 2)

with ``rho0 ∝ exp(-beta U)``, a symmetric activity ``gamma`` and an
antisymmetric driving ``F1``.  States are indexed ``0..n-1``.

Conventions
-----------
* ``rates.lam[x, y]`` is the jump rate x -> y (zero diagonal).
* The backward generator ``L = lam - diag(escape)`` acts on functions
  (row sums vanish, ``(L f)(x) = sum_y lam(x, y) (f(y) - f(x))``).
* The forward generator ``L* = L.T`` acts on probability vectors
  (column sums vanish).

Distributions are plain 1-D float arrays summing to one.
"""

from __future__ import annotations

import dataclasses
import math
from functools import cached_property

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse import csgraph
from scipy.stats import poisson

from .errors import (
    DegenerateChainError,
    IntegrationError,
    ModelError,
    NonUniquenessError,
    RangeError,
)

__all__ = [
    "JumpModel",
    "RateMatrix",
    "equilibrium_density",
    "build_rates",
    "reference_rates",
    "forward_generator",
    "backward_generator",
    "evolve",
    "evolve_with_integral",
    "propagate_function",
    "stationary",
    "check_detailed_balance",
    "spectral_gap",
    "is_irreducible",
]

ALGEBRAIC_TOL = 1e-12
FIXED_POINT_TOL = 1e-10

# Poisson mean per uniformization segment; keeps the number of matrix-vector
# products close to q*T while the weights stay representable.
_SEGMENT_MEAN = 200.0
_TAIL_TOL = 1e-17


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclasses.dataclass(frozen=True, eq=False)
class JumpModel:
    """Driven jump model on ``n`` states.

    Parameters
    ----------
    U : (n,) array_like
        Potential.
    beta : float
        Inverse temperature, ``beta >= 0``.
    F1 : (n, n) array_like
        Antisymmetric driving work per jump at unit strength.
    gamma : (n, n) array_like
        Symmetric nonnegative activity with zero diagonal.  Held independent
        of ``epsilon``.
    epsilon : float
        Driving strength; the process is in detailed balance at zero.
    labels : sequence of str, optional
        Human-readable state names used for CSV output.
    """

    U: np.ndarray
    beta: float
    F1: np.ndarray
    gamma: np.ndarray
    epsilon: float = 0.0
    labels: tuple | None = None
    validate: dataclasses.InitVar[bool] = True

    def __post_init__(self, validate):
        object.__setattr__(self, "U", _frozen(self.U))
        object.__setattr__(self, "F1", _frozen(self.F1))
        object.__setattr__(self, "gamma", _frozen(self.gamma))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "epsilon", float(self.epsilon))
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))
        if validate:
            self._check()

    def _check(self):
        n = self.U.shape[0]
        if self.U.ndim != 1 or n < 1:
            raise ModelError("U must be a nonempty vector")
        if self.F1.shape != (n, n) or self.gamma.shape != (n, n):
            raise ModelError(f"F1 and gamma must have shape ({n}, {n})")
        if not np.all(np.isfinite(self.U)):
            raise ModelError("U must be finite")
        if self.beta < 0 or not math.isfinite(self.beta):
            raise ModelError("beta must be finite and nonnegative")
        if self.epsilon < 0:
            raise ModelError("epsilon must be nonnegative")
        if not np.allclose(self.F1, -self.F1.T, rtol=0, atol=1e-12):
            raise ModelError("F1 must be antisymmetric")
        if np.any(self.gamma < 0) or not np.allclose(self.gamma, self.gamma.T, rtol=1e-12, atol=0):
            raise ModelError("gamma must be symmetric and nonnegative")
        if np.any(np.diag(self.gamma) != 0):
            raise ModelError("gamma must have zero diagonal")
        if self.labels is not None and len(self.labels) != n:
            raise ModelError("labels must match the number of states")
        n_comp, _ = csgraph.connected_components(
            sparse.csr_matrix(self.gamma > 0), directed=False
        )
        if n_comp != 1:
            raise ModelError("the graph of gamma > 0 must be connected")

    @property
    def n_states(self):
        return self.U.shape[0]

    def with_epsilon(self, epsilon):
        """Copy of the model at another driving strength."""
        return dataclasses.replace(self, epsilon=epsilon, validate=False)

    def with_driving(self, F1):
        return dataclasses.replace(self, F1=F1)

    def state_labels(self):
        if self.labels is not None:
            return list(self.labels)
        return [str(i) for i in range(self.n_states)]


@dataclasses.dataclass(frozen=True, eq=False)
class RateMatrix:
    """Off-diagonal jump rates and the derived escape rates."""

    lam: np.ndarray

    def __post_init__(self):
        lam = np.array(self.lam, dtype=float)
        if lam.ndim != 2 or lam.shape[0] != lam.shape[1]:
            raise ModelError("rate matrix must be square")
        np.fill_diagonal(lam, 0.0)
        if not np.all(np.isfinite(lam)):
            raise RangeError("rates must be finite")
        if np.any(lam < 0):
            raise ModelError("rates must be nonnegative")
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)

    @cached_property
    def escape(self):
        e = self.lam.sum(axis=1)
        e.setflags(write=False)
        return e

    @property
    def n_states(self):
        return self.lam.shape[0]


def equilibrium_density(model):
    """Boltzmann weights ``exp(-beta U)`` normalized over the states."""
    a = -model.beta * model.U
    if not np.all(np.isfinite(a)):
        raise RangeError("non-finite exponent in equilibrium density")
    a = a - a.max()
    w = np.exp(a)
    return w / w.sum()


def build_rates(model):
    """Rates of ``model`` at its own driving strength."""
    rho0 = equilibrium_density(model)
    with np.errstate(over="raise"):
        try:
            drive = np.exp(0.5 * model.beta * model.epsilon * model.F1)
        except FloatingPointError as exc:
            raise RangeError("overflow in driving factor") from exc
    lam = model.gamma * drive / rho0[:, None]
    return RateMatrix(lam)


def reference_rates(model):
    """Equilibrium (``epsilon = 0``) rates of ``model``."""
    return build_rates(model.with_epsilon(0.0))


def backward_generator(rates):
    """``L = lam - diag(escape)``; acts on observables, rows sum to zero."""
    return rates.lam - np.diag(rates.escape)


def forward_generator(rates):
    """``L* = L.T``; acts on probability vectors, columns sum to zero.

    ``(L* mu)(x) = sum_y lam(y, x) mu(y) - escape(x) mu(x)``.
    """
    return backward_generator(rates).T.copy()


def _poisson_weights(mean):
    """pmf and upper tails ``P(N > k)`` truncated where the tail is negligible."""
    kmax = int(math.ceil(mean + 12.0 * math.sqrt(mean) + 40.0))
    while poisson.sf(kmax, mean) > _TAIL_TOL:
        kmax = int(kmax * 1.5) + 10
    k = np.arange(kmax + 1)
    pmf = poisson.pmf(k, mean)
    # renormalize so rounding in the weights does not leak mass across segments
    return pmf / math.fsum(pmf), poisson.sf(k, mean)


def _uniformize(M, v, t, q, with_integral):
    """Apply ``exp(t G)`` where ``M = I + G/q`` is (sub)stochastic.

    Returns ``(exp(tG) v, int_0^t exp(sG) v ds)``; the integral is ``None``
    unless requested.  Long horizons are split so each segment has Poisson
    mean at most ``_SEGMENT_MEAN``.
    """
    v = np.array(v, dtype=float)
    integral = np.zeros_like(v) if with_integral else None
    if t == 0.0 or q == 0.0:
        if with_integral:
            integral = t * v
        return v, integral
    n_seg = max(1, int(math.ceil(q * t / _SEGMENT_MEAN)))
    tau = t / n_seg
    pmf, tail = _poisson_weights(q * tau)
    for seg in range(n_seg):
        acc = np.zeros_like(v)
        acc_int = np.zeros_like(v) if with_integral else None
        u = v
        for k in range(pmf.size):
            acc += pmf[k] * u
            if with_integral:
                acc_int += (tail[k] / q) * u
            u = M @ u
        if not np.all(np.isfinite(acc)):
            raise IntegrationError("non-finite state during uniformization", seg * tau)
        if with_integral:
            integral += acc_int
        v = acc
    return v, integral


def _uniformization_rate(rates):
    q = float(rates.escape.max()) if rates.n_states else 0.0
    return q


def evolve(rates, mu0, T):
    """Solve the master equation ``d mu/dt = L* mu`` up to time ``T``.

    Uses uniformization, which is positivity preserving; truncation error is
    below 1e-16 per segment.
    """
    mu_T, _ = evolve_with_integral(rates, mu0, T, integral=False)
    return mu_T


def evolve_with_integral(rates, mu0, T, integral=True):
    """``(mu_T, int_0^T mu_t dt)`` for the forward flow from ``mu0``.

    ``mu0`` may also be a 2-D array whose columns are propagated together.
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    if math.isinf(T):
        raise ValueError("T must be finite; use stationary() for T = inf")
    q = _uniformization_rate(rates)
    M = np.eye(rates.n_states) + forward_generator(rates) / q if q > 0 else np.eye(rates.n_states)
    return _uniformize(M, mu0, float(T), q, integral)


def propagate_function(rates, f, t, integral=False):
    """Backward semigroup ``exp(t L) f`` and optionally ``int_0^t exp(sL) f ds``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    q = _uniformization_rate(rates)
    M = np.eye(rates.n_states) + backward_generator(rates) / q if q > 0 else np.eye(rates.n_states)
    out, integ = _uniformize(M, f, float(t), q, integral)
    return (out, integ) if integral else out


def is_irreducible(rates):
    n_comp, _ = csgraph.connected_components(
        sparse.csr_matrix(rates.lam > 0), directed=True, connection="strong"
    )
    return n_comp == 1


def stationary(rates):
    """Unique stationary law of an irreducible chain.

    Solves ``L* rho = 0`` with the last equation replaced by the
    normalization, using dense LU plus one step of iterative refinement.
    """
    n = rates.n_states
    if n == 1:
        return np.ones(1)
    if not is_irreducible(rates):
        raise NonUniquenessError("chain is reducible; stationary law is not unique")
    Ls = forward_generator(rates)
    A = Ls.copy()
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    lu = scipy.linalg.lu_factor(A)
    rho = scipy.linalg.lu_solve(lu, b)
    rho += scipy.linalg.lu_solve(lu, b - A @ rho)
    return rho


def check_detailed_balance(rates, rho, tol=ALGEBRAIC_TOL):
    """``(holds, max |rho(x) lam(x,y) - rho(y) lam(y,x)|)``."""
    flux = np.asarray(rho)[:, None] * rates.lam
    violation = float(np.max(np.abs(flux - flux.T))) if rates.n_states else 0.0
    return violation <= tol, violation


def spectral_gap(rates, tol=1e-12):
    """Smallest nonzero decay rate of the generator.

    Reversible chains are symmetrized and handled by ``eigvalsh``; otherwise
    a dense nonsymmetric eigensolve is used.
    """
    n = rates.n_states
    if n < 2:
        raise DegenerateChainError("a one-state chain has no gap")
    rho = stationary(rates)
    L = backward_generator(rates)
    scale = max(float(rates.escape.max()), 1.0)
    reversible, _ = check_detailed_balance(rates, rho, tol=1e-10 * scale)
    if reversible:
        s = np.sqrt(rho)
        S = s[:, None] * L / s[None, :]
        S = 0.5 * (S + S.T)
        ev = np.sort(scipy.linalg.eigvalsh(S))[::-1]
        gap = -ev[1]
    else:
        ev = scipy.linalg.eigvals(L)
        ev = ev[np.argsort(np.abs(ev))]
        gap = float(np.min(-ev[1:].real))
    if gap < tol:
        raise DegenerateChainError(f"spectral gap {gap:.3g} below {tol:g}")
    return float(gap)
