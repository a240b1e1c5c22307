"""Trajectories of jump processes and path-space functionals.

A sampled ensemble is held as a :class:`PathBatch` (flat jump arrays indexed
per path); single paths are :class:`Trajectory` objects.  All functionals
accept either.

The action of the driven process relative to its equilibrium reference is

    A = int_0^T (xi - xi0)(x_t) dt - sum_jumps log(lam / lam0)

with time-antisymmetric part ``S = A o theta - A = beta eps sum F1`` (the
irreversible entropy flux) and time-symmetric part ``Tr = A o theta + A``
(the traffic).
"""

from __future__ import annotations

import dataclasses
import math
import re
import warnings
from functools import cached_property

import numpy as np

from . import _backend
from .errors import AbsoluteContinuityError
from .markov import build_rates, equilibrium_density, reference_rates

__all__ = [
    "Trajectory",
    "PathBatch",
    "PathEstimate",
    "WeightDegeneracyWarning",
    "EndStateIndicator",
    "JumpCount",
    "PathFunction",
    "sample_path",
    "sample_paths",
    "time_reverse",
    "entropy_flux",
    "action",
    "action_between",
    "traffic",
    "fluctuation_symmetry_test",
    "density_via_entropy",
    "density_via_equilibrium",
    "normalization_check",
]


class WeightDegeneracyWarning(UserWarning):
    """Exponential path weights are likely to have a heavy-tailed estimator."""


# beta * eps * max|F1| * (mean jump count) above this triggers a warning
DEGENERACY_THRESHOLD = 2.0


@dataclasses.dataclass(frozen=True, eq=False)
class Trajectory:
    """Right-continuous piecewise-constant path on ``[0, T]``.

    ``times[k]`` is the k-th jump time, from ``frm[k]`` to ``to[k]``.
    """

    x0: int
    times: np.ndarray
    frm: np.ndarray
    to: np.ndarray
    T: float

    def __post_init__(self):
        times = np.array(self.times, dtype=float).reshape(-1)
        frm = np.array(self.frm, dtype=np.int64).reshape(-1)
        to = np.array(self.to, dtype=np.int64).reshape(-1)
        if not (times.size == frm.size == to.size):
            raise ValueError("times, frm and to must have equal length")
        if times.size:
            if np.any(np.diff(times) <= 0):
                raise ValueError("jump times must be strictly increasing")
            if times[0] <= 0 or times[-1] > self.T:
                raise ValueError("jump times must lie in (0, T]")
            expected = np.concatenate([[self.x0], to[:-1]])
            if np.any(frm != expected):
                raise ValueError("each jump must start where the previous one ended")
            if np.any(frm == to):
                raise ValueError("a jump must change the state")
        for a in (times, frm, to):
            a.setflags(write=False)
        object.__setattr__(self, "x0", int(self.x0))
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "frm", frm)
        object.__setattr__(self, "to", to)

    @property
    def n_jumps(self):
        return self.times.size

    @property
    def final_state(self):
        return int(self.to[-1]) if self.n_jumps else self.x0

    def state_at(self, t):
        k = np.searchsorted(self.times, t, side="right")
        return self.x0 if k == 0 else int(self.to[k - 1])

    def to_text(self):
        """Line format: ``#trajectory x0=.. T=..`` then ``time,from,to`` per jump."""
        lines = [f"#trajectory x0={self.x0} T={self.T!r}"]
        lines += [f"{t!r},{a},{b}" for t, a, b in zip(self.times.tolist(), self.frm, self.to)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        rows = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
        m = re.fullmatch(r"#trajectory\s+x0=(-?\d+)\s+T=(\S+)", rows[0])
        if m is None:
            raise ValueError("missing '#trajectory x0=.. T=..' header")
        jumps = [r.split(",") for r in rows[1:]]
        times = [float(j[0]) for j in jumps]
        frm = [int(j[1]) for j in jumps]
        to = [int(j[2]) for j in jumps]
        return cls(int(m.group(1)), times, frm, to, float(m.group(2)))


def time_reverse(traj):
    """Right-continuous modification of ``t -> x_{T-t}``."""
    if isinstance(traj, PathBatch):
        return traj.time_reversed()
    return Trajectory(
        traj.final_state,
        traj.T - traj.times[::-1],
        traj.to[::-1],
        traj.frm[::-1],
        traj.T,
    )


@dataclasses.dataclass(frozen=True, eq=False)
class PathBatch:
    """Ensemble of paths on a common horizon, stored as flat jump arrays.

    Jumps of path ``p`` are ``times[ptr[p]:ptr[p+1]]`` (increasing) with
    post-jump states ``to[...]``.
    """

    x0: np.ndarray
    ptr: np.ndarray
    times: np.ndarray
    to: np.ndarray
    T: float

    @classmethod
    def from_events(cls, x0, ev_path, ev_time, ev_to, T):
        x0 = np.asarray(x0, dtype=np.int64)
        order = np.argsort(ev_path, kind="stable")
        counts = np.bincount(ev_path, minlength=x0.size)
        ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        return cls(x0, ptr, np.asarray(ev_time)[order], np.asarray(ev_to)[order], float(T))

    @classmethod
    def from_trajectories(cls, trajs):
        trajs = list(trajs)
        T = trajs[0].T
        x0 = np.array([t.x0 for t in trajs], dtype=np.int64)
        ptr = np.concatenate([[0], np.cumsum([t.n_jumps for t in trajs])]).astype(np.int64)
        times = np.concatenate([t.times for t in trajs]) if trajs else np.empty(0)
        to = np.concatenate([t.to for t in trajs]).astype(np.int64)
        return cls(x0, ptr, times, to, T)

    @classmethod
    def concat(cls, batches):
        batches = list(batches)
        x0 = np.concatenate([b.x0 for b in batches])
        shifts = np.cumsum([0] + [b.times.size for b in batches[:-1]])
        ptr = np.concatenate([[0]] + [b.ptr[1:] + s for b, s in zip(batches, shifts)])
        return cls(
            x0,
            ptr.astype(np.int64),
            np.concatenate([b.times for b in batches]),
            np.concatenate([b.to for b in batches]).astype(np.int64),
            batches[0].T,
        )

    @property
    def n_paths(self):
        return self.x0.size

    @cached_property
    def jump_counts(self):
        return np.diff(self.ptr)

    @cached_property
    def event_path(self):
        return np.repeat(np.arange(self.n_paths), self.jump_counts)

    @cached_property
    def frm(self):
        frm = np.empty_like(self.to)
        if frm.size:
            frm[1:] = self.to[:-1]
            starts = self.ptr[:-1][self.jump_counts > 0]
            frm[starts] = self.x0[self.jump_counts > 0]
        return frm

    @cached_property
    def final_states(self):
        out = self.x0.copy()
        has = self.jump_counts > 0
        out[has] = self.to[self.ptr[1:][has] - 1]
        return out

    def trajectory(self, i):
        a, b = self.ptr[i], self.ptr[i + 1]
        return Trajectory(self.x0[i], self.times[a:b], self.frm[a:b], self.to[a:b], self.T)

    def __iter__(self):
        return (self.trajectory(i) for i in range(self.n_paths))

    def edge_sum(self, W):
        """Per-path ``sum_jumps W[from, to]``."""
        vals = np.asarray(W)[self.frm, self.to]
        return np.bincount(self.event_path, weights=vals, minlength=self.n_paths)

    def time_integral(self, f):
        """Per-path ``int_0^T f(x_t) dt``, exact over the holding intervals."""
        f = np.asarray(f, dtype=float)
        base = f[self.x0] * self.T
        if not self.times.size:
            return base
        inc = (f[self.to] - f[self.frm]) * (self.T - self.times)
        return base + np.bincount(self.event_path, weights=inc, minlength=self.n_paths)

    def time_reversed(self):
        counts = self.jump_counts
        local = np.arange(self.times.size) - self.ptr[self.event_path]
        new_pos = self.ptr[self.event_path] + counts[self.event_path] - 1 - local
        perm = np.empty_like(new_pos)
        perm[new_pos] = np.arange(self.times.size)
        rev = PathBatch(
            self.final_states.copy(),
            self.ptr.copy(),
            self.T - self.times[perm],
            self.frm[perm],
            self.T,
        )
        return rev


@dataclasses.dataclass(frozen=True)
class PathEstimate:
    """Monte Carlo mean with its standard error and the seed that produced it."""

    mean: float
    std_error: float
    n_samples: int
    seed: int

    @classmethod
    def from_samples(cls, values, seed):
        values = np.asarray(values, dtype=float)
        n = values.size
        se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(float(values.mean()), se, int(n), int(seed))

    def within(self, value, n_sigma=3.0):
        return abs(self.mean - value) <= n_sigma * self.std_error

    def z_score(self, value):
        if self.std_error == 0:
            return 0.0 if self.mean == value else math.inf
        return (self.mean - value) / self.std_error


def combined_z(a, b):
    """Two-sample z statistic for independent estimates."""
    se = math.hypot(a.std_error, b.std_error)
    if se == 0:
        return 0.0 if a.mean == b.mean else math.inf
    return (a.mean - b.mean) / se


# --- observables -----------------------------------------------------------


class EndStateIndicator:
    """``1[x_T in states]``; its time reversal is ``1[x_0 in states]``."""

    def __init__(self, states):
        self.states = np.atleast_1d(np.asarray(states, dtype=np.int64))

    def __call__(self, batch):
        return np.isin(batch.final_states, self.states).astype(float)

    def __repr__(self):
        return f"EndStateIndicator({self.states.tolist()})"


class JumpCount:
    """Number of jumps, optionally only those along ``edge = (a, b)``."""

    def __init__(self, edge=None):
        self.edge = edge

    def __call__(self, batch):
        if self.edge is None:
            return batch.jump_counts.astype(float)
        a, b = self.edge
        hit = ((batch.frm == a) & (batch.to == b)).astype(float)
        return np.bincount(batch.event_path, weights=hit, minlength=batch.n_paths)

    def __repr__(self):
        return f"JumpCount({self.edge})"


class PathFunction:
    """Wrap an arbitrary ``Trajectory -> float`` callable (slow path)."""

    def __init__(self, func):
        self.func = func

    def __call__(self, batch):
        return np.array([self.func(tr) for tr in batch], dtype=float)


def _evaluate(f, batch):
    if isinstance(f, (EndStateIndicator, JumpCount, PathFunction)):
        return f(batch)
    return PathFunction(f)(batch)


# --- sampling ----------------------------------------------------------------


def _neighbor_tables(rates):
    lam = rates.lam
    rows, cols = np.nonzero(lam > 0)
    ptr = np.searchsorted(rows, np.arange(rates.n_states + 1)).astype(np.int64)
    vals = lam[rows, cols]
    cum = np.empty_like(vals)
    for x in range(rates.n_states):
        a, b = ptr[x], ptr[x + 1]
        cum[a:b] = np.cumsum(vals[a:b])
    return ptr, cols.astype(np.int64), cum, np.ascontiguousarray(rates.escape, dtype=float)


def sample_paths(rates, start, T, n, seed, stream=0, workers=None, backend=None):
    """Sample ``n`` independent paths on ``[0, T]``.

    ``start`` is a state index or a probability vector over the states; in
    the latter case initial states are drawn from the block substreams
    before the dynamics.  Output is identical for any worker count and for
    both kernel backends.
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    tables = _neighbor_tables(rates)
    kern = _backend.kernels(backend)
    if np.ndim(start) == 0:
        x_fixed = int(start)
        if not 0 <= x_fixed < rates.n_states:
            raise ValueError("start state out of range")
        mu = None
    else:
        mu = np.asarray(start, dtype=float)
        if mu.shape != (rates.n_states,) or np.any(mu < 0) or abs(mu.sum() - 1) > 1e-9:
            raise ValueError("start must be a state or a probability vector")
        mu = mu / mu.sum()

    def block(rng, size, offset):
        if mu is None:
            x0 = np.full(size, x_fixed, dtype=np.int64)
        else:
            x0 = rng.choice(rates.n_states, size=size, p=mu).astype(np.int64)
        ev = kern.ssa_block(*tables, x0, float(T), rng)
        return PathBatch.from_events(x0, *ev, T)

    parts = _backend.run_blocks(block, n, seed, stream=stream, workers=workers)
    return PathBatch.concat(parts)


def sample_path(rates, x0, T, seed, backend=None):
    """One exact-in-law trajectory, deterministic given ``seed``."""
    return sample_paths(rates, int(x0), T, 1, seed, backend=backend).trajectory(0)


def _as_batch(path):
    if isinstance(path, PathBatch):
        return path, False
    return PathBatch.from_trajectories([path]), True


def _unwrap(values, single):
    return float(values[0]) if single else values


# --- path functionals -------------------------------------------------------


def entropy_flux(path, model):
    """Irreversible entropy flux ``beta * eps * sum_jumps F1(from, to)``."""
    batch, single = _as_batch(path)
    s = model.beta * model.epsilon * batch.edge_sum(model.F1)
    return _unwrap(s, single)


def _log_ratio(rates, reference):
    lam, lam0 = rates.lam, reference.lam
    out = np.zeros_like(lam)
    both = (lam > 0) & (lam0 > 0)
    out[both] = np.log(lam[both] / lam0[both])
    return out


def _check_continuity(batch, rates, reference):
    if batch.times.size and np.any(reference.lam[batch.frm, batch.to] == 0):
        raise AbsoluteContinuityError(
            "path jumps along a transition forbidden for the reference process"
        )


def action_between(path, rates, reference):
    """Girsanov action of ``rates`` relative to ``reference`` along a path."""
    batch, single = _as_batch(path)
    _check_continuity(batch, rates, reference)
    a = batch.time_integral(rates.escape - reference.escape)
    a -= batch.edge_sum(_log_ratio(rates, reference))
    return _unwrap(a, single)


def action(path, model):
    """Action of the driven model relative to its ``epsilon = 0`` reference."""
    return action_between(path, build_rates(model), reference_rates(model))


def traffic_between(path, rates, reference):
    batch, single = _as_batch(path)
    _check_continuity(batch, rates, reference)
    lr = _log_ratio(rates, reference)
    t = 2.0 * batch.time_integral(rates.escape - reference.escape)
    t -= batch.edge_sum(lr + lr.T)
    return _unwrap(t, single)


def traffic(path, model):
    """Time-symmetric part ``A o theta + A`` of the action."""
    return traffic_between(path, build_rates(model), reference_rates(model))


# --- Monte Carlo identities ---------------------------------------------------


def _warn_degeneracy(model, batch):
    f_max = float(np.max(np.abs(model.F1))) if model.F1.size else 0.0
    load = model.beta * model.epsilon * f_max * float(batch.jump_counts.mean())
    if load > DEGENERACY_THRESHOLD:
        warnings.warn(
            f"beta*eps*max|F1|*E[jumps] = {load:.2f} exceeds {DEGENERACY_THRESHOLD}; "
            "exponential weights may be degenerate",
            WeightDegeneracyWarning,
            stacklevel=3,
        )


def fluctuation_symmetry_test(model, f, T, n, seed, workers=None, backend=None):
    """Estimate both sides of ``<f>_rho0 = <(f o theta) exp(-S)>_rho0``.

    Both expectations are over the driven process started from the
    equilibrium law; the two sides use independent substreams.
    """
    rates = build_rates(model)
    rho0 = equilibrium_density(model)
    b1 = sample_paths(rates, rho0, T, n, seed, stream=1, workers=workers, backend=backend)
    b2 = sample_paths(rates, rho0, T, n, seed, stream=2, workers=workers, backend=backend)
    _warn_degeneracy(model, b2)
    lhs = _evaluate(f, b1)
    rhs = _evaluate(f, b2.time_reversed()) * np.exp(-entropy_flux(b2, model))
    return PathEstimate.from_samples(lhs, seed), PathEstimate.from_samples(rhs, seed)


def density_via_entropy(model, x, T, n, seed, workers=None, backend=None):
    """``<exp(-S)>_x`` under the driven process; times ``rho0(x)`` gives ``rho_T(x)``."""
    if model.epsilon == 0:
        return PathEstimate(1.0, 0.0, int(n), int(seed))
    batch = sample_paths(build_rates(model), int(x), T, n, seed, stream=3,
                         workers=workers, backend=backend)
    _warn_degeneracy(model, batch)
    return PathEstimate.from_samples(np.exp(-entropy_flux(batch, model)), seed)


def density_via_equilibrium(model, x, T, n, seed, workers=None, backend=None):
    """``<exp(-(S + Tr)/2)>^0_x`` with paths from the equilibrium process."""
    ref = reference_rates(model)
    batch = sample_paths(ref, int(x), T, n, seed, stream=4, workers=workers, backend=backend)
    rates = build_rates(model)
    s = model.beta * model.epsilon * batch.edge_sum(model.F1)
    tr = traffic_between(batch, rates, ref)
    return PathEstimate.from_samples(np.exp(-0.5 * (s + tr)), seed)


def normalization_check(model, mu, T, n, seed, workers=None, backend=None):
    """``<exp((S - Tr)/2)>^0_mu``; equals one for every ``mu`` and ``T``."""
    ref = reference_rates(model)
    start = mu if np.ndim(mu) else int(mu)
    batch = sample_paths(ref, start, T, n, seed, stream=5, workers=workers, backend=backend)
    rates = build_rates(model)
    s = model.beta * model.epsilon * batch.edge_sum(model.F1)
    tr = traffic_between(batch, rates, ref)
    return PathEstimate.from_samples(np.exp(0.5 * (s - tr)), seed)
