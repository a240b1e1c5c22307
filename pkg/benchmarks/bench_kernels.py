"""Time the compiled sampling kernels against the NumPy fallback.

Usage::

    python benchmarks/bench_kernels.py [--n 20000] [--repeat 3]

Two levels are timed: the bare kernels on one block of paths, and the
public samplers end to end (block splitting, event bookkeeping).  Both
backends consume the random stream identically, so each pair of runs also
checks that the outputs agree exactly.
"""

import argparse
import time

import numpy as np

from nesslab import _backend
from nesslab.diffusion import _coefficient_tables, _field_tables, sde_ensemble, stationary_density
from nesslab.markov import build_rates
from nesslab.models import random_jump_model
from nesslab.paths import _neighbor_tables, sample_paths
from nesslab.presets import build_model


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


RATES = build_rates(random_jump_model(8, seed=1, epsilon=0.5))
DIFFUSION = build_model("diffusion:n_cells=64").obj


def ssa_kernel(n, backend):
    tables = _neighbor_tables(RATES)
    kern = _backend.kernels(backend)
    x0 = np.zeros(n, dtype=np.int64)
    return lambda: kern.ssa_block(*tables, x0, 5.0, _backend.block_rng(1, 0, 0))


def em_kernel(n, backend):
    drift, noise = _coefficient_tables(DIFFUSION)
    strat = _field_tables(DIFFUSION, (DIFFUSION.F1,))
    none = _field_tables(DIFFUSION, ())
    kern = _backend.kernels(backend)
    x0 = np.full(n, 0.3)
    return lambda: kern.em_block(x0, 1e-3, 500, DIFFUSION.length, drift, noise, strat, none,
                                 none, _backend.block_rng(1, 0, 0))


def jump_sampler(n, backend):
    return lambda: sample_paths(RATES, 0, 5.0, n, seed=1, workers=1, backend=backend)


def sde_sampler(n, backend):
    start = stationary_density(DIFFUSION)
    return lambda: sde_ensemble(DIFFUSION, start, 1e-3, 0.5, n, seed=1,
                                strat_fields=(DIFFUSION.F1,), workers=1, backend=backend)


def same(a, b):
    if isinstance(a, tuple):
        return all(np.array_equal(u, v) for u, v in zip(a, b))
    return all(np.array_equal(getattr(a, f), getattr(b, f))
               for f in ("x0", "times", "to", "x_final", "strat") if hasattr(a, f))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20_000, help="paths per run")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if "compiled" not in _backend.available_backends():
        print("compiled extension not built; only the fallback is available")
        return 1
    print(f"{args.n} paths, best of {args.repeat}")
    print(f"{'case':<16}{'python [s]':>12}{'compiled [s]':>14}{'speedup':>10}  identical")
    for name, case in (
        ("ssa_block", ssa_kernel),
        ("em_block", em_kernel),
        ("sample_paths", jump_sampler),
        ("sde_ensemble", sde_sampler),
    ):
        tp, a = best_of(case(args.n, "python"), args.repeat)
        tc, b = best_of(case(args.n, "compiled"), args.repeat)
        print(f"{name:<16}{tp:>12.3f}{tc:>14.3f}{tp / tc:>9.1f}x  {same(a, b)}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
