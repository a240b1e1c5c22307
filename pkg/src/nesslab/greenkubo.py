"""Linear response of stationary currents for jump processes.

For a driving ``F`` (antisymmetric edge function) the stationary current at
strength ``eps`` is ``J = eps * j1^F + O(eps^2)`` with

    j1^F(x, y) = beta gamma(x, y) [F(x, y) + hF(x) - hF(y)],  hF = L0^{-1} w1^F,

and ``w1^F = sum_y lam0 F``.  The response of the ``G``-work to ``F`` is the
pairing ``(1/2) sum G j1^F``, which is symmetric in ``(F, G)`` and equals
the equilibrium current-current correlation

    lim_T (beta / 2T) <J_G J_F>^0,   J_F = sum_jumps F(x_{t-}, x_t).

The current convention includes ``beta`` so that ``j1^F = dJ/d eps`` at any
inverse temperature.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .markov import (
    backward_generator,
    build_rates,
    equilibrium_density,
    propagate_function,
    reference_rates,
    spectral_gap,
    stationary,
)
from .mclennan import poisson_inverse
from .paths import PathEstimate, sample_paths

__all__ = [
    "ResponseReport",
    "driving_work",
    "linear_response_current",
    "stationary_current",
    "onsager_check",
    "gk_deterministic",
    "gk_deterministic_terms",
    "gk_finite_T_bias",
    "gk_correlation_estimate",
    "green_kubo_report",
    "mean_work_rate",
    "interference_check",
]

DEFAULT_GAP_MULTIPLE = 20.0


def _antisym(F, n):
    F = np.asarray(F, dtype=float)
    if F.shape != (n, n):
        raise ValueError(f"driving must have shape ({n}, {n})")
    if not np.allclose(F, -F.T, rtol=0, atol=1e-12):
        raise ValueError("driving must be antisymmetric")
    return F


def driving_work(model, F):
    """``w1^F(x) = sum_y lam0(x, y) F(x, y)``."""
    F = _antisym(F, model.n_states)
    return (reference_rates(model).lam * F).sum(axis=1)


def _potential_response(model, F):
    L0 = backward_generator(reference_rates(model))
    return poisson_inverse(L0, equilibrium_density(model), driving_work(model, F))


def linear_response_current(model, F):
    """First-order stationary current ``j1^F`` as an antisymmetric edge matrix."""
    F = _antisym(F, model.n_states)
    h = _potential_response(model, F)
    return model.beta * model.gamma * (F + h[:, None] - h[None, :])


def stationary_current(rates, rho):
    """Net probability current ``rho(x) lam(x, y) - rho(y) lam(y, x)``."""
    flux = np.asarray(rho)[:, None] * rates.lam
    return flux - flux.T


def onsager_check(model, F, G):
    """``((1/2) sum G j1^F, (1/2) sum F j1^G)``; equal by reciprocity."""
    jF = linear_response_current(model, F)
    jG = linear_response_current(model, G)
    return 0.5 * float((np.asarray(G) * jF).sum()), 0.5 * float((np.asarray(F) * jG).sum())


def gk_deterministic_terms(model, F, G):
    """Split of the pairing into the instantaneous and the transient part.

    Returns ``(beta/2 sum gamma G F, beta sum rho0 w1^G L0^{-1} w1^F)``.
    The first is the jump-process counterpart of ``<G chi F>`` for
    diffusions.
    """
    F = _antisym(F, model.n_states)
    G = _antisym(G, model.n_states)
    rho0 = equilibrium_density(model)
    local = 0.5 * model.beta * float((model.gamma * G * F).sum())
    transient = model.beta * float(rho0 @ (driving_work(model, G) * _potential_response(model, F)))
    return local, transient


def gk_deterministic(model, F, G):
    """Limit of the Green-Kubo correlation, ``sum`` of :func:`gk_deterministic_terms`."""
    return sum(gk_deterministic_terms(model, F, G))


def gk_finite_T_bias(model, F, G, T):
    """Exact ``(beta / 2T) <J_G J_F>^0 - gk_deterministic`` at horizon ``T``.

    Equals ``(beta / T) <w1^G, L0^{-2} (1 - exp(T L0)) w1^F>_rho0``, which
    decays like ``1/T``.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    rates0 = reference_rates(model)
    L0 = backward_generator(rates0)
    rho0 = equilibrium_density(model)
    wF = driving_work(model, F)
    wG = driving_work(model, G)
    v = wF - propagate_function(rates0, wF, T)
    v = poisson_inverse(L0, rho0, poisson_inverse(L0, rho0, v))
    return model.beta / T * float(rho0 @ (wG * v))


def _current_pair(model, F, G, T, n, seed, workers, backend):
    batch = sample_paths(
        reference_rates(model), equilibrium_density(model), T, n, seed,
        stream=6, workers=workers, backend=backend,
    )
    return batch.edge_sum(F), batch.edge_sum(G)


def gk_correlation_estimate(model, F, G, T, n, seed, workers=None, backend=None):
    """Monte Carlo ``(beta / 2T) <J_G J_F>`` over equilibrium paths from ``rho0``.

    Both integrals are read off the same path.  The raw second moment is
    used: ``<J_F>^0 = 0`` exactly, so it is an unbiased covariance.
    """
    F = _antisym(F, model.n_states)
    G = _antisym(G, model.n_states)
    if T <= 0:
        raise ValueError("T must be positive")
    jF, jG = _current_pair(model, F, G, T, n, seed, workers, backend)
    return PathEstimate.from_samples(model.beta / (2.0 * T) * jF * jG, seed)


@dataclasses.dataclass(frozen=True)
class ResponseReport:
    """Reciprocity and Green-Kubo summary for one ``(F, G)`` pair."""

    pairing_GF: float
    pairing_FG: float
    gk_estimate: PathEstimate
    gk_deterministic: float
    gk_bias: float
    T: float

    @property
    def reciprocity_error(self):
        return abs(self.pairing_GF - self.pairing_FG)

    def gk_consistent(self, n_sigma=3.0):
        """MC within ``n_sigma`` errors plus the finite-``T`` bias of the limit."""
        dev = abs(self.gk_estimate.mean - self.gk_deterministic)
        return dev <= n_sigma * self.gk_estimate.std_error + abs(self.gk_bias)

    def as_row(self):
        return {
            "pairing_GF": self.pairing_GF,
            "pairing_FG": self.pairing_FG,
            "gk_mean": self.gk_estimate.mean,
            "gk_std_error": self.gk_estimate.std_error,
            "gk_n": self.gk_estimate.n_samples,
            "gk_seed": self.gk_estimate.seed,
            "gk_deterministic": self.gk_deterministic,
            "gk_bias": self.gk_bias,
            "T": self.T,
        }


def green_kubo_report(model, F, G, n, seed, T=None, workers=None, backend=None):
    """Pairings, exact limit, its ``T``-bias and the MC estimate; ``T`` defaults to 20/gap."""
    if T is None:
        T = DEFAULT_GAP_MULTIPLE / spectral_gap(reference_rates(model))
    p_gf, p_fg = onsager_check(model, F, G)
    est = gk_correlation_estimate(model, F, G, T, n, seed, workers=workers, backend=backend)
    return ResponseReport(
        p_gf, p_fg, est, gk_deterministic(model, F, G), gk_finite_T_bias(model, F, G, T), float(T)
    )


def mean_work_rate(model, F):
    """Stationary ``sum rho_eps lam_eps eps F`` for the model driven by ``F``."""
    driven = model.with_driving(F)
    rates = build_rates(driven)
    rho = stationary(rates)
    return model.epsilon * float(rho @ (rates.lam * np.asarray(F)).sum(axis=1))


def interference_check(model, F, G):
    """``(W^{F+G} - W^F - W^G, 2 eps^2 pairing)`` at the model's ``epsilon``.

    The two agree up to ``O(eps^3)``.
    """
    F = _antisym(F, model.n_states)
    G = _antisym(G, model.n_states)
    lhs = mean_work_rate(model, F + G) - mean_work_rate(model, F) - mean_work_rate(model, G)
    pairing = onsager_check(model, F, G)[0]
    return lhs, 2.0 * model.epsilon**2 * pairing
