"""Experiment runners behind the command-line interface.

Each runner takes a validated :class:`~nesslab.config.ExperimentConfig` and
returns tables to write plus the list of contracts it checked.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .config import ExperimentConfig
from .diffusion import chain_gap, edge_driving, gk_diffusion_estimate, jump_chain
from .greenkubo import green_kubo_report, onsager_check
from .markov import (
    build_rates,
    equilibrium_density,
    evolve,
    reference_rates,
    spectral_gap,
    stationary,
)
from .mclennan import (
    default_eps_grid,
    limit_exchange_table,
    mclennan_correction,
    transient_excess,
)
from .models import (
    lattice_gas_model,
    linear_profile,
    local_equilibrium_density,
    rlc_mclennan_check,
    verify_los_identity,
)
from .paths import (
    EndStateIndicator,
    combined_z,
    density_via_entropy,
    density_via_equilibrium,
    fluctuation_symmetry_test,
    normalization_check,
)
from .presets import build_driving, build_model

__all__ = ["Contract", "Table", "ExperimentResult", "run_experiment", "RUNNERS"]


@dataclasses.dataclass(frozen=True)
class Contract:
    """A checked inequality ``value <= tolerance`` with a readable name."""

    name: str
    value: float
    tolerance: float
    passed: bool

    @classmethod
    def at_most(cls, name, value, tolerance):
        value = float(value)
        return cls(name, value, float(tolerance), bool(value <= tolerance))

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}: {self.value:.6g} <= {self.tolerance:.6g}"


@dataclasses.dataclass(frozen=True)
class Table:
    suffix: str
    identity: str
    columns: tuple
    rows: list


@dataclasses.dataclass(frozen=True)
class ExperimentResult:
    name: str
    tables: list
    contracts: list

    @property
    def passed(self):
        return all(c.passed for c in self.contracts)


def _gap(built):
    if built.kind == "diffusion":
        return chain_gap(built.obj)
    return spectral_gap(reference_rates(built.jump_model()))


def _times(cfg, built, default):
    specs = cfg.T_grid if cfg.T_grid else default
    gap = _gap(built) if any(s.per_gap for s in specs) else None
    return [s.resolve(gap) for s in specs]


def _T(value, per_gap=True):
    from .config import TimeSpec

    return TimeSpec(value, per_gap)


def _labels(jm):
    return jm.state_labels()


def _stability(ratios):
    r = np.asarray(ratios, dtype=float)
    if r.size < 2 or np.max(r) < 1e-9:
        return 1.0
    return float(np.max(r) / max(np.min(r), 1e-300))


# --- runners -------------------------------------------------------------------


def run_limit_exchange(cfg, built, workers, backend):
    jm = built.jump_model()
    eps = cfg.eps_grid or (0.1, 0.01, 0.001)
    T = _times(cfg, built, (_T(1), _T(5), _T(20), _T(40)))
    tab = limit_exchange_table(jm, eps, T)
    labels = _labels(jm)
    rows = [(e, t, labels[x], v) for e, t, x, v in tab.rows()]
    tol = cfg.tolerance or 1e-3
    a, b, h1 = tab.limit_T_then_eps, tab.limit_eps_then_T, tab.h1
    summary = [(labels[x], a[x], b[x], h1[x]) for x in range(jm.n_states)]
    mono_T = tab.monotone_in_T()
    mono_e = tab.monotone_in_eps()
    summary += [("monotone_in_T[eps=" + repr(float(e)) + "]", float(m), "", "") for e, m in zip(tab.eps, mono_T)]
    summary += [("monotone_in_eps[T=" + repr(float(t)) + "]", float(m), "", "") for t, m in zip(tab.T, mono_e)]
    contracts = [
        Contract.at_most("iterated limits agree", np.max(np.abs(a - b)), tol),
        Contract.at_most("T-then-eps limit equals h1", np.max(np.abs(a - h1)), tol),
        Contract.at_most("eps-then-T limit equals h1", np.max(np.abs(b - h1)), tol),
    ]
    return [
        Table("", "limit exchange: (1/eps) log(rho_T^eps/rho0) on the (eps, T) grid; "
                  "T=inf from the stationary solver, eps=0 from the linear transient integral",
              ("epsilon", "T", "state", "value"), rows),
        Table("_summary", "iterated limits of the limit-exchange table against the McLennan h1",
              ("state", "T_then_eps", "eps_then_T", "h1"), summary),
    ], contracts


def run_mclennan_vs_exact(cfg, built, workers, backend):
    jm = built.jump_model()
    eps = cfg.eps_grid or tuple(default_eps_grid())
    res = mclennan_correction(jm)
    rho0 = equilibrium_density(jm)
    labels = _labels(jm)
    rows, ratios = [], []
    for e in eps:
        rho = stationary(build_rates(jm.with_epsilon(e)))
        log_ratio = np.log(rho / rho0)
        err = log_ratio - e * res.h1
        # compare up to the normalization constant, which is also O(eps^2)
        err -= rho0 @ err
        ratios.append(float(np.max(np.abs(err))) / e**2)
        rows += [(e, labels[x], log_ratio[x], e * res.h1[x], err[x] / e**2) for x in range(jm.n_states)]
    contracts = [
        Contract.at_most("second-order remainder ratio stable within factor 2", _stability(ratios), 2.0),
        Contract.at_most("h1 in mean-zero gauge", abs(rho0 @ res.h1), 1e-10),
    ]
    return [Table("", "first-order McLennan density against the exact stationary law: "
                      "log(rho_eps/rho0) = eps h1 + O(eps^2)",
                  ("epsilon", "state", "log_ratio", "eps_h1", "remainder_over_eps2"), rows)], contracts


def _observables(n):
    obs = [EndStateIndicator([x]) for x in range(min(n, 4))]
    obs.append(EndStateIndicator(list(range(max(1, n // 2)))))
    return obs


def run_fluctuation_symmetry(cfg, built, workers, backend):
    jm = built.jump_model()
    T = _times(cfg, built, (_T(2.0, False),))
    n = cfg.n_samples or 100_000
    rows, contracts = [], []
    for t in T:
        for k, f in enumerate(_observables(jm.n_states)):
            lhs, rhs = fluctuation_symmetry_test(jm, f, t, n, cfg.seed + k, workers, backend)
            z = combined_z(lhs, rhs)
            rows.append((t, repr(f), lhs.mean, lhs.std_error, rhs.mean, rhs.std_error, z, lhs.seed))
            contracts.append(Contract.at_most(f"finite-time symmetry T={t:.4g} {f!r} |z|", abs(z), 3.0))
    return [Table("", "transient fluctuation symmetry <f>_rho0 = <(f o theta) exp(-S)>_rho0 at finite T",
                  ("T", "observable", "lhs", "lhs_se", "rhs", "rhs_se", "z", "seed"), rows)], contracts


def run_dent_norm(cfg, built, workers, backend):
    jm = built.jump_model()
    T = _times(cfg, built, (_T(2.0, False),))
    n = cfg.n_samples or 100_000
    rho0 = equilibrium_density(jm)
    rates = build_rates(jm)
    rows, contracts = [], []
    states = range(min(jm.n_states, 4))
    for t in T:
        exact = evolve(rates, rho0, t) / rho0
        for x in states:
            eq = density_via_equilibrium(jm, x, t, n, cfg.seed + x, workers, backend)
            ne = density_via_entropy(jm, x, t, n, cfg.seed + x, workers, backend)
            rows.append((t, "density", str(x), exact[x], eq.mean, eq.std_error, ne.mean, ne.std_error))
            contracts.append(Contract.at_most(
                f"equilibrium-path density T={t:.4g} x={x} |z|", abs(eq.z_score(exact[x])), 3.0))
            contracts.append(Contract.at_most(
                f"entropy-weighted density T={t:.4g} x={x} |z|", abs(ne.z_score(exact[x])), 3.0))
        delta = np.zeros(jm.n_states)
        delta[0] = 1.0
        laws = {"uniform": np.full(jm.n_states, 1.0 / jm.n_states), "rho0": rho0, "delta0": delta}
        for k, (name, mu) in enumerate(laws.items()):
            est = normalization_check(jm, mu, t, n, cfg.seed + 100 + k, workers, backend)
            rows.append((t, "normalization", name, 1.0, est.mean, est.std_error, "", ""))
            contracts.append(Contract.at_most(
                f"normalization T={t:.4g} mu={name} |z|", abs(est.z_score(1.0)), 3.0))
    return [Table("", "path-space representation of rho_T/rho0 from equilibrium paths "
                      "with weight exp(-(S+traffic)/2), and normalization <exp((S-traffic)/2)> = 1",
                  ("T", "check", "state_or_law", "exact", "estimate", "std_error",
                   "entropy_estimate", "entropy_std_error"), rows)], contracts


def run_green_kubo(cfg, built, workers, backend):
    F = build_driving(cfg.F1, built)
    G = build_driving(cfg.G1, built)
    n = cfg.n_samples or 100_000
    T = _times(cfg, built, (_T(20),))[0]
    if built.kind == "diffusion":
        model = built.obj
        chain = jump_chain(model.with_epsilon(0.0))
        p_gf, p_fg = onsager_check(chain, edge_driving(model, F), edge_driving(model, G))
        dt = cfg.dt
        if dt is None:
            from .diffusion import default_dt

            dt = default_dt(model, T)
        T = dt * max(1, round(T / dt))
        r = gk_diffusion_estimate(model, F, G, T, n, dt, cfg.seed, workers, backend)
        est, det, bias = r.estimate, r.deterministic, r.bias
    else:
        rep = green_kubo_report(built.jump_model(), F, G, n, cfg.seed, T, workers, backend)
        p_gf, p_fg, est, det, bias = (rep.pairing_GF, rep.pairing_FG, rep.gk_estimate,
                                      rep.gk_deterministic, rep.gk_bias)
    tol = 3.0 * est.std_error + abs(bias)
    contracts = [
        Contract.at_most("Onsager reciprocity |pairing_GF - pairing_FG|", abs(p_gf - p_fg), 1e-10),
        Contract.at_most("Green-Kubo estimate vs limit (3 se + T-bias)", abs(est.mean - det), tol),
    ]
    row = (p_gf, p_fg, est.mean, est.std_error, est.n_samples, est.seed, det, bias, T)
    return [Table("", "linear response: reciprocity of the current pairing and its "
                      "Green-Kubo current-correlation representation",
                  ("pairing_GF", "pairing_FG", "gk_mean", "gk_std_error", "gk_n", "gk_seed",
                   "gk_deterministic", "gk_bias", "T"), [row])], contracts


def run_los_identity(cfg, built, workers, backend):
    spec = built.obj
    res = verify_los_identity(spec)
    shifted = verify_los_identity(spec, linear_profile(spec.N) + 1.0)
    rows = [("linear_profile", res), ("profile_plus_one", shifted)]
    contracts = [Contract.at_most("lattice-gas identity L0 g = -(1/N) sum j_i + w1", res, 1e-12)]
    return [Table("", "lattice gas: generator of the linear profile splits into bond currents "
                      "and the boundary work",
                  ("profile", "max_residual"), rows)], contracts


def run_local_equilibrium(cfg, built, workers, backend):
    spec = built.obj
    model = lattice_gas_model(spec)
    le = local_equilibrium_density(spec)
    mcl = mclennan_correction(model).rho_mclennan
    labels = _labels(model)
    rho0 = equilibrium_density(model)
    rows = [(labels[x], rho0[x], le.local_equilibrium[x], le.remainder[x], le.density[x], mcl[x])
            for x in range(model.n_states)]
    contracts = [Contract.at_most("local-equilibrium regrouping equals McLennan density",
                                  np.max(np.abs(le.density - mcl)), 1e-10)]
    return [Table("", "lattice gas: McLennan density as local equilibrium with a linear profile "
                      "times a bond-current remainder",
                  ("configuration", "rho0", "local_equilibrium", "remainder", "product",
                   "mclennan"), rows)], contracts


def run_rlc_check(cfg, built, workers, backend):
    spec = built.obj
    n = cfg.n_samples or 100_000
    r = rlc_mclennan_check(spec, n=n, seed=cfg.seed, workers=workers)
    rows = [
        ("h1_coefficient_U", r.expected_coefficients[0], r.coefficients[0], ""),
        ("h1_coefficient_I", r.expected_coefficients[1], r.coefficients[1], ""),
        ("mean_U", r.exact_means[0], r.simulated_U.mean, r.simulated_U.std_error),
        ("mean_I", r.exact_means[1], r.simulated_I.mean, r.simulated_I.std_error),
        ("implied_mean_U", r.exact_means[0], r.implied_means[0], ""),
        ("implied_mean_I", r.exact_means[1], r.implied_means[1], ""),
    ]
    contracts = [
        Contract.at_most("h1 coefficients R1C/(R1+R2), L/(R1+R2)", r.coefficient_error, 1e-12),
        Contract.at_most("adjoint and reversal routes agree",
                         np.max(np.abs(r.coefficients - r.coefficients_reversal)), 1e-12),
        Contract.at_most("propagator reversal symmetry M S = P S M^T P",
                         r.propagator_balance_error, 1e-12),
        Contract.at_most("simulated mean U |z|", abs(r.simulated_U.z_score(r.exact_means[0])), 3.0),
        Contract.at_most("simulated mean I |z|", abs(r.simulated_I.z_score(r.exact_means[1])), 3.0),
    ]
    return [Table("", "RLC circuit: linear h1 and the stationary Gaussian means "
                      "<I> = E/(R1+R2), <U> = R1 E/(R1+R2)",
                  ("quantity", "expected", "measured", "std_error"), rows)], contracts


def run_transient_excess(cfg, built, workers, backend):
    jm = built.jump_model()
    eps = cfg.eps_grid or tuple(default_eps_grid())
    T = sorted(_times(cfg, built, (_T(20), _T(40))))
    h1 = mclennan_correction(jm).h1
    labels = _labels(jm)
    rows, ratios, conv = [], [], 0.0
    for e in eps:
        m = jm.with_epsilon(e)
        worst = 0.0
        for x in range(jm.n_states):
            vals = [transient_excess(m, x, t) for t in T]
            limit = transient_excess(m, x, math.inf)
            rows += [(e, t, labels[x], v, -e * h1[x]) for t, v in zip(T, vals)]
            rows.append((e, math.inf, labels[x], limit, -e * h1[x]))
            if len(vals) > 1:
                conv = max(conv, abs(vals[-1] - vals[-2]))
            worst = max(worst, abs(limit + e * h1[x]))
        ratios.append(worst / e**2)
    contracts = [
        Contract.at_most("counterterm remainder ratio stable within factor 2", _stability(ratios), 2.0),
    ]
    if len(T) > 1:
        contracts.append(Contract.at_most("convergence in T between the two largest horizons", conv, 1e-8))
    return [Table("", "counterterm: lim_T (<S_T>_x - sigma_eps T) = -eps h1(x) + O(eps^2)",
                  ("epsilon", "T", "state", "excess", "minus_eps_h1"), rows)], contracts


RUNNERS = {
    "limit-exchange": run_limit_exchange,
    "mclennan-vs-exact": run_mclennan_vs_exact,
    "fluctuation-symmetry": run_fluctuation_symmetry,
    "dent-norm": run_dent_norm,
    "green-kubo": run_green_kubo,
    "los-identity": run_los_identity,
    "local-equilibrium": run_local_equilibrium,
    "rlc-check": run_rlc_check,
    "transient-excess": run_transient_excess,
}


def run_experiment(cfg: ExperimentConfig, workers=None, backend=None):
    built = build_model(cfg.model)
    tables, contracts = RUNNERS[cfg.experiment](cfg, built, workers, backend)
    return ExperimentResult(cfg.name, tables, contracts)

