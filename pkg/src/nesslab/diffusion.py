"""Periodic one-dimensional diffusions and their finite-volume jump chains.

The model is the Ito diffusion on the circle ``[0, length)``

    dx = [chi (eps F1 - U') + D'] dt + sqrt(2 D) dB,     D = chi / beta.

Deterministic analysis goes through a finite-volume chain on ``n_cells``
cells, itself a :class:`~nesslab.markov.JumpModel` with nearest-neighbour
rates

    lam(i, i+-1) = (D_e / dx^2) exp(-beta (U_{i+-1} - U_i) / 2) exp(+-beta eps dx F1_e / 2),

where ``D_e`` and ``F1_e`` are edge averages.  At ``eps = 0`` the chain is
reversible with respect to the discrete Boltzmann weights, so every exact
identity of the jump-process theory holds for it at any resolution.

Path sampling uses Euler-Maruyama with coefficients trigonometrically
interpolated from the cell values.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from . import _backend
from .greenkubo import gk_deterministic, gk_deterministic_terms, gk_finite_T_bias
from .markov import (
    JumpModel,
    backward_generator,
    build_rates,
    equilibrium_density,
    forward_generator,
    reference_rates,
    spectral_gap,
    stationary,
)
from .mclennan import linear_work, solve_poisson
from .paths import PathEstimate

__all__ = [
    "DiffusionModel",
    "GridDensity",
    "FPGenerators",
    "SDEPath",
    "SDEEnsemble",
    "GKDiffusionResult",
    "TimeStepError",
    "cell_centres",
    "chain_gap",
    "chain_gk_limit",
    "jump_chain",
    "fp_generator",
    "stationary_density",
    "current_density",
    "work_density",
    "mclennan_h1_diffusion",
    "interpolate_periodic",
    "sde_sample",
    "sde_ensemble",
    "stratonovich_integral",
    "edge_driving",
    "gk_diffusion_deterministic",
    "gk_diffusion_estimate",
    "default_dt",
]

# fine-table points per cell for the interpolated SDE coefficients
TABLE_REFINEMENT = 16


class TimeStepError(ValueError):
    """A single Euler step moved further than half the circle."""


def _cell_array(a, n, name):
    a = np.broadcast_to(np.asarray(a, dtype=float), (n,)).copy()
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite")
    a.setflags(write=False)
    return a


@dataclasses.dataclass(frozen=True, eq=False)
class DiffusionModel:
    """Cell data for a periodic diffusion.

    Parameters
    ----------
    chi, U, F1 : (n_cells,) array_like
        Mobility (positive), potential and unit driving force at cell centres.
    beta : float
        Inverse temperature, strictly positive (``D = chi / beta``).
    epsilon : float
        Driving strength; the force is ``epsilon * F1``.
    length : float
        Circumference of the circle.
    """

    chi: np.ndarray
    U: np.ndarray
    F1: np.ndarray
    beta: float = 1.0
    epsilon: float = 0.0
    length: float = 1.0

    def __post_init__(self):
        n = np.size(self.U)
        if n < 3:
            raise ValueError("need at least 3 cells")
        object.__setattr__(self, "U", _cell_array(self.U, n, "U"))
        object.__setattr__(self, "chi", _cell_array(self.chi, n, "chi"))
        object.__setattr__(self, "F1", _cell_array(self.F1, n, "F1"))
        if np.any(self.chi <= 0):
            raise ValueError("chi must be positive")
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ValueError("beta must be positive and finite")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if not self.length > 0:
            raise ValueError("length must be positive")
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "epsilon", float(self.epsilon))
        object.__setattr__(self, "length", float(self.length))

    @classmethod
    def from_functions(cls, chi, U, F1, n_cells, beta=1.0, epsilon=0.0, length=1.0):
        """Sample callables (or constants) at the cell centres."""
        x = cell_centres(n_cells, length)

        def ev(f):
            return f(x) if callable(f) else np.full(n_cells, float(f))

        return cls(ev(chi), ev(U), ev(F1), beta, epsilon, length)

    @property
    def n_cells(self):
        return self.U.size

    @property
    def dx(self):
        return self.length / self.n_cells

    @property
    def D(self):
        return self.chi / self.beta

    def with_epsilon(self, epsilon):
        return dataclasses.replace(self, epsilon=epsilon)

    def with_driving(self, F1):
        return dataclasses.replace(self, F1=F1)


def cell_centres(n_cells, length=1.0):
    return (np.arange(n_cells) + 0.5) * (length / n_cells)


@dataclasses.dataclass(frozen=True, eq=False)
class GridDensity:
    """Piecewise-constant density: ``values[i]`` per unit length on cell ``i``."""

    values: np.ndarray
    width: float

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if np.any(v < -1e-12):
            raise ValueError("density must be nonnegative")
        if abs(v.sum() * self.width - 1.0) > 1e-9:
            raise ValueError("density must integrate to one")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_probabilities(cls, p, width):
        return cls(np.asarray(p, dtype=float) / width, width)

    @property
    def probabilities(self):
        return self.values * self.width


def edge_average(a):
    """Value on edge ``(i, i+1)`` as the mean of its two cells."""
    return 0.5 * (a + np.roll(a, -1))


def edge_driving(model, field):
    """Antisymmetric jump matrix ``dx * field_e`` on ring edges ``(i, i+1)``."""
    n = model.n_cells
    fe = model.dx * edge_average(np.asarray(field, dtype=float))
    i = np.arange(n)
    j = (i + 1) % n
    F = np.zeros((n, n))
    F[i, j] = fe
    F[j, i] = -fe
    return F


def jump_chain(model):
    """The finite-volume chain as a :class:`~nesslab.markov.JumpModel`."""
    n, dx = model.n_cells, model.dx
    De = edge_average(model.D)
    rho0 = np.exp(-model.beta * (model.U - model.U.min()))
    rho0 /= rho0.sum()
    i = np.arange(n)
    j = (i + 1) % n
    gamma = np.zeros((n, n))
    g = De / dx**2 * np.sqrt(rho0[i] * rho0[j])
    gamma[i, j] = g
    gamma[j, i] = g
    return JumpModel(model.U, model.beta, edge_driving(model, model.F1), gamma, model.epsilon)


@dataclasses.dataclass(frozen=True, eq=False)
class FPGenerators:
    """``backward``: equilibrium ``L0`` on functions; ``forward``: driven ``L*`` on cell probabilities."""

    backward: np.ndarray
    forward: np.ndarray


def fp_generator(model):
    chain = jump_chain(model)
    return FPGenerators(backward_generator(reference_rates(chain)), forward_generator(build_rates(chain)))


def stationary_density(model):
    """Exact stationary law of the finite-volume chain at the model's ``epsilon``."""
    p = stationary(build_rates(jump_chain(model)))
    return GridDensity.from_probabilities(p, model.dx)


def current_density(model, mu):
    """Net current across edge ``(i, i+1)`` (probability per time) in the law ``mu``."""
    p = mu.probabilities if isinstance(mu, GridDensity) else np.asarray(mu, dtype=float) * model.dx
    lam = build_rates(jump_chain(model)).lam
    n = model.n_cells
    i = np.arange(n)
    j = (i + 1) % n
    return p[i] * lam[i, j] - p[j] * lam[j, i]


def work_density(model):
    """Per-cell mean work rates ``(w, w1)``.

    ``w(i) = sum_j lam(i, j) eps F(i, j)`` at the model's driving and
    ``w1(i) = sum_j lam0(i, j) F1(i, j)``; both use the edge stencil of the
    chain, so ``sum rho0 w1 = 0`` holds exactly.
    """
    chain = jump_chain(model)
    rates = build_rates(chain)
    w = model.epsilon * (rates.lam * chain.F1).sum(axis=1)
    return w, linear_work(chain)


def mclennan_h1_diffusion(model):
    """``h1 = beta L0^{-1} w1`` per cell in the mean-zero gauge."""
    chain = jump_chain(model)
    return model.beta * solve_poisson(chain, linear_work(chain))


# --- SDE sampling -------------------------------------------------------------


def _fourier(values):
    n = values.size
    k = np.fft.fftfreq(n, d=1.0 / n)
    return np.fft.fft(values) / n, k


def interpolate_periodic(values, length, points, derivative=0):
    """Trigonometric interpolant of cell-centre data (or its derivative) at ``points``."""
    c, k = _fourier(np.asarray(values, dtype=float))
    n = values.size
    if derivative and n % 2 == 0:
        c = c.copy()
        c[n // 2] = 0.0
    omega = 2j * np.pi * k / length
    phase = np.exp(np.outer(np.asarray(points) - 0.5 * length / n, omega))
    return (phase @ (c * omega**derivative)).real


def _fine_grid(model):
    m = TABLE_REFINEMENT * model.n_cells
    return np.arange(m) * (model.length / m)


def _coefficient_tables(model):
    y = _fine_grid(model)
    chi = interpolate_periodic(model.chi, model.length, y)
    dU = interpolate_periodic(model.U, model.length, y, derivative=1)
    dD = interpolate_periodic(model.D, model.length, y, derivative=1)
    F1 = interpolate_periodic(model.F1, model.length, y)
    if np.any(chi <= 0):
        raise ValueError("interpolated mobility is not positive; use a smoother chi")
    drift = chi * (model.epsilon * F1 - dU) + dD
    noise = np.sqrt(2.0 * chi / model.beta)
    return np.ascontiguousarray(drift), np.ascontiguousarray(noise)


def _field_tables(model, fields):
    if not fields:
        return np.zeros((0, TABLE_REFINEMENT * model.n_cells))
    y = _fine_grid(model)
    return np.ascontiguousarray(
        np.vstack([interpolate_periodic(f, model.length, y) for f in fields])
    )


def default_dt(model, T=None):
    """Step with rms displacement ``length / 50``, capped at ``T / 200``.

    The coefficients are smooth on the scale of the circle, so the step is
    tied to that scale rather than to the cell width.  At this step the
    Euler bias of the stationary histogram of the presets stays below the
    Monte Carlo error of ``1e5`` paths; at ``length / 25`` it does not.
    """
    dt = (model.length / 50.0) ** 2 / (2.0 * float(model.D.max()))
    if T is not None:
        dt = min(dt, T / 200.0)
        dt = T / math.ceil(T / dt)
    return dt


@dataclasses.dataclass(frozen=True, eq=False)
class SDEPath:
    """Discrete-time path: wrapped positions and raw (unwrapped) increments."""

    x: np.ndarray
    dx: np.ndarray
    dt: float
    length: float

    @property
    def n_steps(self):
        return self.dx.size

    @property
    def displacement(self):
        return float(self.dx.sum())

    def time_reversed(self):
        return SDEPath(self.x[::-1].copy(), -self.dx[::-1], self.dt, self.length)

    def to_text(self):
        lines = [f"#sde-path dt={self.dt!r} length={self.length!r}", "step,position"]
        lines += [f"{k},{v!r}" for k, v in enumerate(self.x.tolist())]
        return "\n".join(lines) + "\n"


def _steps(T, dt):
    if dt <= 0:
        raise ValueError("dt must be positive")
    if T < 0:
        raise ValueError("T must be nonnegative")
    n = int(round(T / dt))
    if not math.isclose(n * dt, T, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError("T must be an integer multiple of dt")
    return n


def sde_sample(model, x0, dt, T, seed):
    """One Euler-Maruyama path, deterministic given ``seed``."""
    n_steps = _steps(T, dt)
    drift, noise = _coefficient_tables(model)
    empty = np.zeros((0, drift.size))
    rng = _backend.block_rng(seed, 0, 0)
    x0 = np.array([float(x0) % model.length])
    *_, hist = _backend.kernels("python").em_block(
        x0, dt, n_steps, model.length, drift, noise, empty, empty, empty, rng, record=True
    )
    x = hist[:, 0]
    raw = np.diff(x)
    raw -= model.length * np.round(raw / model.length)
    return SDEPath(x, raw, float(dt), model.length)


def stratonovich_integral(path, field, length=None):
    """Midpoint sum ``sum f((x_k + x_{k+1})/2) (x_{k+1} - x_k)``.

    ``field`` is a callable on positions or cell-centre values (then
    interpolated).  Increments are the raw Euler steps.

    Raises
    ------
    TimeStepError
        If some step exceeds half the circumference.
    """
    length = path.length if length is None else length
    if path.n_steps and np.max(np.abs(path.dx)) > 0.5 * length:
        raise TimeStepError("a step exceeds half the circle; reduce dt")
    mid = (path.x[:-1] + 0.5 * path.dx) % length
    if callable(field):
        f = np.asarray(field(mid), dtype=float)
    else:
        f = interpolate_periodic(np.asarray(field, dtype=float), length, mid)
    return float(np.sum(f * path.dx))


@dataclasses.dataclass(frozen=True, eq=False)
class SDEEnsemble:
    """Per-path summaries of an Euler-Maruyama ensemble.

    ``strat[:, k]``, ``time[:, k]`` and ``ito[:, k]`` hold the Stratonovich,
    time and Ito integrals of the requested fields.
    """

    x_final: np.ndarray
    displacement: np.ndarray
    strat: np.ndarray
    time: np.ndarray
    ito: np.ndarray
    dt: float
    T: float


def sde_ensemble(model, x0, dt, T, n, seed, strat_fields=(), time_fields=(), ito_fields=(),
                 stream=0, workers=None, backend=None):
    """Sample ``n`` Euler-Maruyama paths and accumulate path integrals.

    ``x0`` is a position or a :class:`GridDensity` (positions drawn
    uniformly within cells chosen by their probabilities).  Fields are
    cell-centre arrays.  Output is independent of worker count and backend.
    """
    n_steps = _steps(T, dt)
    drift, noise = _coefficient_tables(model)
    strat = _field_tables(model, strat_fields)
    timef = _field_tables(model, time_fields)
    ito = _field_tables(model, ito_fields)
    kern = _backend.kernels(backend)

    def block(rng, size, offset):
        if isinstance(x0, GridDensity):
            p = x0.probabilities / x0.probabilities.sum()
            cells = rng.choice(model.n_cells, size=size, p=p)
            start = (cells + rng.random(size)) * model.dx
        else:
            start = np.full(size, float(x0) % model.length)
        return kern.em_block(start, float(dt), n_steps, model.length, drift, noise,
                             strat, timef, ito, rng)

    parts = _backend.run_blocks(block, n, seed, stream=stream, workers=workers)
    cat = [np.concatenate([p[i] for p in parts]) for i in range(5)]
    return SDEEnsemble(*cat, float(dt), float(T))


# --- Green-Kubo -----------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class GKDiffusionResult:
    """MC correlation, the resolution-``n_cells`` limit and its finite-``T`` bias."""

    estimate: PathEstimate
    deterministic: float
    local_term: float
    transient_term: float
    bias: float
    T: float
    dt: float

    def consistent(self, n_sigma=3.0):
        dev = abs(self.estimate.mean - self.deterministic)
        return dev <= n_sigma * self.estimate.std_error + abs(self.bias)


def gk_diffusion_deterministic(model, F1, G1):
    """``(<G chi F>_rho0, beta sum rho0 w1^G L0^{-1} w1^F)`` on the chain.

    The first term uses cell values directly; it equals the chain's own
    instantaneous term up to ``O(dx^2)``.
    """
    chain = jump_chain(model.with_epsilon(0.0))
    rho0 = equilibrium_density(chain)
    local = float(rho0 @ (np.asarray(G1) * model.chi * np.asarray(F1)))
    _, transient = gk_deterministic_terms(chain, edge_driving(model, F1), edge_driving(model, G1))
    return local, transient


def gk_diffusion_estimate(model, F1, G1, T, n, dt, seed, workers=None, backend=None):
    """Equilibrium estimate of ``(beta / 2T) <int G1 o dx  int F1 o dx>``.

    Paths start from the chain's ``rho0`` and run at ``epsilon = 0``.  The
    deterministic side and the exact finite-``T`` bias are evaluated on the
    finite-volume chain.
    """
    eq = model.with_epsilon(0.0)
    start = GridDensity.from_probabilities(equilibrium_density(jump_chain(eq)), eq.dx)
    ens = sde_ensemble(eq, start, dt, T, n, seed, strat_fields=(F1, G1), stream=7,
                       workers=workers, backend=backend)
    vals = model.beta / (2.0 * T) * ens.strat[:, 0] * ens.strat[:, 1]
    local, transient = gk_diffusion_deterministic(model, F1, G1)
    chain = jump_chain(eq)
    bias = gk_finite_T_bias(chain, edge_driving(model, F1), edge_driving(model, G1), T)
    return GKDiffusionResult(
        PathEstimate.from_samples(vals, seed), local + transient, local, transient,
        bias, float(T), float(dt),
    )


def chain_gap(model):
    return spectral_gap(reference_rates(jump_chain(model.with_epsilon(0.0))))


def chain_gk_limit(model, F1, G1):
    """Green-Kubo limit of the chain itself (edge-stencil instantaneous term)."""
    chain = jump_chain(model.with_epsilon(0.0))
    return gk_deterministic(chain, edge_driving(model, F1), edge_driving(model, G1))
