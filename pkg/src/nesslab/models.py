"""Ready-made models: small random and ring chains, a two-block chain with
forbidden couplings, the boundary-driven lattice gas and the noisy RLC
circuit.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
import scipy.linalg

from . import _backend
from .errors import ModelError, SizeLimitError
from .markov import (
    JumpModel,
    RateMatrix,
    backward_generator,
    equilibrium_density,
    reference_rates,
)
from .mclennan import linear_work, mclennan_correction, mclennan_density, solve_poisson
from .paths import PathEstimate

__all__ = [
    "random_jump_model",
    "random_driving",
    "ring_model",
    "two_block_example",
    "LatticeGasSpec",
    "lattice_configurations",
    "lattice_gas_model",
    "lattice_gas_w1",
    "bond_currents",
    "verify_los_identity",
    "LocalEquilibrium",
    "local_equilibrium_density",
    "RLCSpec",
    "LinearSDE",
    "RLCPaths",
    "RLCReport",
    "rlc_model",
    "rlc_sample",
    "rlc_entropy_flux",
    "rlc_h1_coefficients",
    "rlc_mclennan_check",
    "MAX_LATTICE_SITES_EXPONENT",
]


# --- small jump models ---------------------------------------------------------


def random_driving(n, rng, support=None, scale=1.0):
    """Antisymmetric Gaussian matrix, optionally restricted to ``support``."""
    F = rng.normal(scale=scale, size=(n, n))
    F = np.triu(F, 1)
    F = F - F.T
    if support is not None:
        F = np.where(support, F, 0.0)
    return F


def random_jump_model(n=4, seed=0, beta=1.0, epsilon=0.0, chord_prob=0.5):
    """Random connected model: ring backbone plus random chords.

    ``U ~ N(0, 1)``, ``gamma ~ U(0.5, 1.5)`` on edges and ``F1 ~ N(0, 1)``
    antisymmetric on edges.
    """
    if n < 2:
        raise ModelError("need at least two states")
    rng = np.random.default_rng(seed)
    U = rng.normal(size=n)
    adj = np.zeros((n, n), dtype=bool)
    i = np.arange(n)
    adj[i, (i + 1) % n] = True
    adj |= np.triu(rng.random((n, n)) < chord_prob, 1)
    adj = np.triu(adj | adj.T, 1)
    adj = adj | adj.T
    np.fill_diagonal(adj, False)
    g = np.triu(rng.uniform(0.5, 1.5, size=(n, n)), 1)
    gamma = np.where(adj, g + g.T, 0.0)
    F1 = random_driving(n, rng, support=adj)
    return JumpModel(U, beta, F1, gamma, epsilon)


def ring_model(n=3, beta=1.0, epsilon=0.0, gamma=1.0, U=None):
    """Ring with activity ``gamma`` on neighbours and unit clockwise driving."""
    if n < 3:
        raise ModelError("a ring needs at least three states")
    i = np.arange(n)
    G = np.zeros((n, n))
    G[i, (i + 1) % n] = gamma
    G = G + G.T
    F = np.zeros((n, n))
    F[i, (i + 1) % n] = 1.0
    F = F - F.T
    return JumpModel(np.zeros(n) if U is None else U, beta, F, G, epsilon)


def two_block_example():
    """Two reversible 2-state blocks joined by forbidden-transition couplings.

    Blocks ``{0, 1}`` and ``{2, 3}`` with ``rho0 = (0.3, 0.2, 0.3, 0.2)``.
    The couplings ``0 <-> 3`` and ``1 <-> 2`` carry no net flow between
    the blocks in ``rho0``, and the layout is symmetric under swapping the
    blocks, so the block weights stay fixed to first order.

    Returns
    -------
    rho0 : ndarray
    base_rates : RateMatrix
    k : ndarray
        Coupling rates, zero except on the two forbidden pairs.
    """
    rho0 = np.array([0.3, 0.2, 0.3, 0.2])
    lam = np.zeros((4, 4))
    for a, b in ((0, 1), (2, 3)):
        lam[a, b] = 0.3 / rho0[a]
        lam[b, a] = 0.3 / rho0[b]
    k = np.zeros((4, 4))
    k[0, 3], k[3, 0] = 1.0, 2.0
    k[2, 1], k[1, 2] = 1.0, 2.0
    return rho0, RateMatrix(lam), k


# --- boundary-driven lattice gas ---------------------------------------------------

MAX_LATTICE_SITES_EXPONENT = 11  # at most 2**11 configurations


@dataclasses.dataclass(frozen=True, eq=False)
class LatticeGasSpec:
    """Exclusion gas on sites ``-N..0`` with reservoirs at both ends.

    Parameters
    ----------
    N : int
        The chain has ``N + 1`` sites; ``1 <= N <= 10``.
    beta : float
    J, field : float
        Default energy ``J sum x(i) x(i+1) + field sum x(i)``.
    U : callable or array_like, optional
        Custom energy: a function of the ``(N+1,)`` occupation vector
        (site ``-N`` first) or a table over all configurations.
    a : array_like, optional
        Exchange prefactors for the ``N`` bonds, left to right.
    a_left, a_right : float
        Prefactors of the boundary creation/annihilation moves.
    epsilon : float
        Chemical potential of the right reservoir; the left one is zero.
    """

    N: int
    beta: float = 1.0
    J: float = 0.0
    field: float = 0.0
    U: object = None
    a: object = None
    a_left: float = 1.0
    a_right: float = 1.0
    epsilon: float = 0.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ModelError("N must be a positive integer")
        if self.N + 1 > MAX_LATTICE_SITES_EXPONENT:
            raise SizeLimitError(
                f"N = {self.N} gives 2^{self.N + 1} configurations; the limit is N <= "
                f"{MAX_LATTICE_SITES_EXPONENT - 1}"
            )
        if self.a is not None and np.size(self.a) != self.N:
            raise ModelError("need one exchange prefactor per bond")
        if min(self.a_left, self.a_right) <= 0 or (self.a is not None and np.any(np.asarray(self.a) <= 0)):
            raise ModelError("prefactors must be positive")

    @property
    def n_sites(self):
        return self.N + 1

    @property
    def n_states(self):
        return 2 ** (self.N + 1)

    def bond_prefactors(self):
        return np.ones(self.N) if self.a is None else np.asarray(self.a, dtype=float)

    def energies(self):
        X = lattice_configurations(self.N)
        if self.U is None:
            return self.J * (X[:, :-1] * X[:, 1:]).sum(axis=1) + self.field * X.sum(axis=1)
        if callable(self.U):
            return np.array([float(self.U(x)) for x in X])
        U = np.asarray(self.U, dtype=float)
        if U.shape != (self.n_states,):
            raise ModelError(f"energy table must have {self.n_states} entries")
        return U


def lattice_configurations(N):
    """``(2^(N+1), N+1)`` occupations; site ``i`` is bit ``i + N`` of the state index."""
    s = np.arange(2 ** (N + 1))[:, None]
    return (s >> np.arange(N + 1)[None, :]) & 1


def _flip(states, k):
    return states ^ (1 << k)


def _exchange_targets(spec):
    """Per bond: target index of the exchange move and a validity mask."""
    X = lattice_configurations(spec.N)
    states = np.arange(spec.n_states)
    out = []
    for k in range(spec.N):
        differs = X[:, k] != X[:, k + 1]
        out.append((states ^ (3 << k), differs))
    return out


def lattice_gas_model(spec):
    """The lattice gas as a :class:`~nesslab.markov.JumpModel`.

    Exchange across bond ``i`` has rate ``a_i exp(-beta dU / 2)``; creation
    or annihilation at a boundary site with reservoir potential ``b`` has
    rate ``exp(-beta dU / 2) exp(-beta b (2 x(i) - 1) / 2)``.  The right
    reservoir's potential is ``epsilon``, so the unit driving is
    ``F1(x, x^0) = 1 - 2 x(0)`` on right-boundary moves.
    """
    U = spec.energies()
    n, N = spec.n_states, spec.N
    X = lattice_configurations(N)
    beta = spec.beta
    rho_u = np.exp(-beta * (U - U.min()))
    Z = rho_u.sum()
    states = np.arange(n)

    def sym(a, y):
        # gamma = a exp(-beta (U(x) + U(y)) / 2) / Z, formed from shifted energies
        return a * np.sqrt(rho_u[states] * rho_u[y]) / Z

    gamma = np.zeros((n, n))
    F1 = np.zeros((n, n))
    for (y, ok), a in zip(_exchange_targets(spec), spec.bond_prefactors()):
        gamma[states[ok], y[ok]] = sym(a, y)[ok]
    y_left = _flip(states, 0)
    gamma[states, y_left] = sym(spec.a_left, y_left)
    y_right = _flip(states, N)
    gamma[states, y_right] = sym(spec.a_right, y_right)
    F1[states, y_right] = 1.0 - 2.0 * X[:, N]
    labels = ["".join(map(str, row)) for row in X]
    return JumpModel(U, beta, F1, gamma, spec.epsilon, labels=labels)


def lattice_gas_w1(spec):
    """Closed form ``a_right exp(-beta (U(x^0) - U(x)) / 2) (1 - 2 x(0))``."""
    U = spec.energies()
    X = lattice_configurations(spec.N)
    y = _flip(np.arange(spec.n_states), spec.N)
    return spec.a_right * np.exp(-0.5 * spec.beta * (U[y] - U)) * (1.0 - 2.0 * X[:, spec.N])


def bond_currents(spec, model=None):
    """``j_i(x) = lam0(x, x^{i,i+1}) [x(i+1) - x(i)]`` for each bond, shape ``(N, n_states)``."""
    model = lattice_gas_model(spec) if model is None else model
    lam0 = reference_rates(model).lam
    X = lattice_configurations(spec.N)
    states = np.arange(spec.n_states)
    out = np.zeros((spec.N, spec.n_states))
    for k, (y, ok) in enumerate(_exchange_targets(spec)):
        out[k] = np.where(ok, lam0[states, y] * (X[:, k + 1] - X[:, k]), 0.0)
    return out


def linear_profile(N):
    """``v_i = 1 + i / N`` for ``i = -N..0``, listed left to right."""
    return 1.0 + np.arange(-N, 1) / N


def verify_los_identity(spec, v=None):
    """``max |L0 g + (1/N) sum_i j_i - w1|`` with ``g(x) = sum v_i x(i)``.

    ``v`` defaults to the linear profile from 0 at the left end to 1 at the
    right end, for which the identity is exact.
    """
    model = lattice_gas_model(spec)
    L0 = backward_generator(reference_rates(model))
    v = linear_profile(spec.N) if v is None else np.asarray(v, dtype=float)
    g = lattice_configurations(spec.N) @ v
    lhs = L0 @ g
    rhs = -bond_currents(spec, model).sum(axis=0) / spec.N + linear_work(model)
    return float(np.max(np.abs(lhs - rhs)))


@dataclasses.dataclass(frozen=True, eq=False)
class LocalEquilibrium:
    """Split of the first-order density into a profile factor and a current remainder.

    ``local_equilibrium`` is normalized ``rho0 exp(eps beta g)``;
    ``remainder`` is ``(eps beta / N) sum_i L0^{-1} j_i`` (equivalently
    ``-(eps beta / N) sum_i int_0^inf <j_i(x_t)>^0 dt``); ``density`` is the
    normalized product ``rho0 exp(eps beta g + remainder)``.
    """

    local_equilibrium: np.ndarray
    remainder: np.ndarray
    density: np.ndarray


def local_equilibrium_density(spec):
    model = lattice_gas_model(spec)
    rho0 = equilibrium_density(model)
    g = lattice_configurations(spec.N) @ linear_profile(spec.N)
    log_le = spec.epsilon * spec.beta * g
    j = bond_currents(spec, model).sum(axis=0)
    remainder = spec.epsilon * spec.beta / spec.N * solve_poisson(model, j)
    return LocalEquilibrium(
        mclennan_density(rho0, log_le, 1.0),
        remainder,
        mclennan_density(rho0, log_le + remainder, 1.0),
    )


# --- RLC circuit -------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class RLCSpec:
    """Series RLC loop with a source ``E``; Johnson noise in both resistors.

    State is ``(U, I)``: capacitor voltage and inductor current.
    """

    R1: float = 1.0
    R2: float = 1.0
    L: float = 1.0
    C: float = 1.0
    beta: float = 1.0
    E: float = 0.0

    def __post_init__(self):
        for name in ("R1", "R2", "L", "C", "beta"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ModelError(f"{name} must be positive and finite")
        if not math.isfinite(self.E):
            raise ModelError("E must be finite")


@dataclasses.dataclass(frozen=True, eq=False)
class LinearSDE:
    """``dx = (A x + b) dt + sigma dB``; ``Q = sigma sigma^T``."""

    A: np.ndarray
    b: np.ndarray
    sigma: np.ndarray

    @property
    def Q(self):
        return self.sigma @ self.sigma.T

    def stationary_mean(self):
        return -np.linalg.solve(self.A, self.b)

    def stationary_covariance(self):
        return scipy.linalg.solve_continuous_lyapunov(self.A, -self.Q)

    def relaxation_time(self):
        return 1.0 / float(np.min(-np.linalg.eigvals(self.A).real))

    def propagator(self, dt):
        """Exact one-step map ``x -> M x + c + N(0, Sigma)``; returns ``(M, c, Sigma)``."""
        M = scipy.linalg.expm(self.A * dt)
        c = np.linalg.solve(self.A, (M - np.eye(M.shape[0])) @ self.b)
        S = self.stationary_covariance()
        Sigma = S - M @ S @ M.T
        return M, c, 0.5 * (Sigma + Sigma.T)


def rlc_model(spec):
    """Kirchhoff dynamics with Johnson-Nyquist noise as a linear SDE.

    ``C dU = (I - U / R1) dt + sqrt(2 / (beta R1)) dB1`` and
    ``L dI = (E - R2 I - U) dt + sqrt(2 R2 / beta) dB2``; at ``E = 0`` the
    stationary law is ``∝ exp(-beta (C U^2 + L I^2) / 2)``.
    """
    R1, R2, L, C, beta = spec.R1, spec.R2, spec.L, spec.C, spec.beta
    A = np.array([[-1.0 / (R1 * C), 1.0 / C], [-1.0 / L, -R2 / L]])
    b = np.array([0.0, spec.E / L])
    sigma = np.diag([math.sqrt(2.0 / (beta * R1)) / C, math.sqrt(2.0 * R2 / beta) / L])
    return LinearSDE(A, b, sigma)


@dataclasses.dataclass(frozen=True, eq=False)
class RLCPaths:
    """Sampled RLC paths on a uniform grid.

    ``final`` has shape ``(n, 2)``; ``current_integral`` is the trapezoidal
    ``int_0^T I dt`` per path; ``history`` is ``(n_steps + 1, n, 2)`` when
    recorded.
    """

    final: np.ndarray
    current_integral: np.ndarray
    dt: float
    T: float
    history: np.ndarray | None = None


def rlc_sample(spec, x0, dt, n_steps, n, seed, record=False, workers=None):
    """Exact Gaussian propagation of ``n`` paths for ``n_steps`` steps of ``dt``."""
    sde = rlc_model(spec)
    M, c, Sigma = sde.propagator(dt)
    chol = np.linalg.cholesky(Sigma)
    start = np.asarray(x0, dtype=float)

    def block(rng, size, offset):
        x = np.broadcast_to(start, (size, 2)).copy()
        integ = np.zeros(size)
        hist = np.empty((n_steps + 1, size, 2)) if record else None
        if record:
            hist[0] = x
        for k in range(n_steps):
            z = rng.standard_normal((size, 2))
            x_new = x @ M.T + c + z @ chol.T
            integ += 0.5 * dt * (x[:, 1] + x_new[:, 1])
            x = x_new
            if record:
                hist[k + 1] = x
        return x, integ, hist

    parts = _backend.run_blocks(block, n, seed, stream=8, workers=workers)
    final = np.concatenate([p[0] for p in parts])
    integ = np.concatenate([p[1] for p in parts])
    hist = np.concatenate([p[2] for p in parts], axis=1) if record else None
    return RLCPaths(final, integ, float(dt), float(dt * n_steps), hist)


def rlc_entropy_flux(path, spec):
    """``beta E int_0^T I dt`` per path (the battery's work times ``beta``)."""
    return spec.beta * spec.E * path.current_integral


def rlc_h1_coefficients(spec):
    """Coefficients ``(c_U, c_I)`` with ``h1 = beta E (c_U U + c_I I)``, computed two ways.

    ``h1 = -beta E (L0^+)^{-1} I`` where ``L0^+`` is the equilibrium
    generator's adjoint in ``L^2(rho0)``.  On linear functions its
    coefficient map is ``S^{-1} A S`` (``S`` the equilibrium covariance);
    by generalized detailed balance it also equals ``P A^T P`` with
    ``P = diag(1, -1)`` the current reversal.  Returns both results.
    """
    sde = rlc_model(dataclasses.replace(spec, E=0.0))
    A = sde.A
    S = sde.stationary_covariance()
    P = np.diag([1.0, -1.0])
    e_I = np.array([0.0, 1.0])
    via_adjoint = -np.linalg.solve(np.linalg.solve(S, A @ S), e_I)
    via_reversal = -np.linalg.solve(P @ A.T @ P, e_I)
    return via_adjoint, via_reversal


@dataclasses.dataclass(frozen=True, eq=False)
class RLCReport:
    """Outcome of :func:`rlc_mclennan_check`."""

    coefficients: np.ndarray
    coefficients_reversal: np.ndarray
    expected_coefficients: np.ndarray
    implied_means: np.ndarray
    exact_means: np.ndarray
    simulated_U: PathEstimate
    simulated_I: PathEstimate
    coefficient_error: float
    propagator_balance_error: float

    def passed(self, tol=1e-12, n_sigma=3.0):
        return (
            self.coefficient_error <= tol
            and np.max(np.abs(self.coefficients - self.coefficients_reversal)) <= tol
            and self.simulated_U.within(self.exact_means[0], n_sigma)
            and self.simulated_I.within(self.exact_means[1], n_sigma)
        )


def propagator_balance_error(spec, dt=0.1):
    """``max |M S - P S M^T P|`` for the equilibrium propagator: zero under reversal symmetry."""
    sde = rlc_model(dataclasses.replace(spec, E=0.0))
    M, _, _ = sde.propagator(dt)
    S = sde.stationary_covariance()
    P = np.diag([1.0, -1.0])
    return float(np.max(np.abs(M @ S - P @ S @ M.T @ P)))


def rlc_mclennan_check(spec, n=100_000, seed=0, n_steps=20, workers=None):
    """Verify the first-order density of the driven circuit.

    Checks the ``h1`` coefficients against ``R1 C / (R1 + R2)`` and
    ``L / (R1 + R2)``, the Gaussian mean shift they imply against the
    exact stationary means, and samples ``n`` paths from the origin over
    20 relaxation times to compare the simulated means.
    """
    cU, cI = rlc_h1_coefficients(spec)[0]
    via_rev = rlc_h1_coefficients(spec)[1]
    s = spec.R1 + spec.R2
    expected = np.array([spec.R1 * spec.C / s, spec.L / s])
    # rho0 exp(beta E (cU U + cI I)) is Gaussian with mean E (cU / C, cI / L)
    implied = spec.E * np.array([cU / spec.C, cI / spec.L])
    sde = rlc_model(spec)
    exact = sde.stationary_mean()
    T = 20.0 * sde.relaxation_time()
    paths = rlc_sample(spec, [0.0, 0.0], T / n_steps, n_steps, n, seed, workers=workers)
    return RLCReport(
        np.array([cU, cI]),
        via_rev,
        expected,
        implied,
        exact,
        PathEstimate.from_samples(paths.final[:, 0], seed),
        PathEstimate.from_samples(paths.final[:, 1], seed),
        float(np.max(np.abs(np.array([cU, cI]) - expected))),
        propagator_balance_error(spec),
    )


def lattice_mclennan(spec):
    """:func:`~nesslab.mclennan.mclennan_correction` of the lattice gas."""
    return mclennan_correction(lattice_gas_model(spec))
