"""Kernel selection and seed-partitioned parallel execution.

The compiled extension is preferred; set ``NESSLAB_BACKEND=python`` to force
the NumPy fallback.  Work of ``n`` samples is cut into fixed-size blocks, each
with its own Philox substream keyed by ``(seed, stream, block)``, so merged
results do not depend on the number of worker threads.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BLOCK_SIZE = 4096

_BACKENDS = {"python": _fallback}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled


def available_backends():
    return sorted(_BACKENDS)


def default_backend_name():
    name = os.environ.get("NESSLAB_BACKEND", "").strip().lower()
    if name:
        if name not in _BACKENDS:
            raise ValueError(f"backend {name!r} not available; have {available_backends()}")
        return name
    return "compiled" if _compiled is not None else "python"


def kernels(name=None):
    return _BACKENDS[name or default_backend_name()]


def default_workers():
    env = os.environ.get("NESSLAB_WORKERS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def block_rng(seed, stream, block):
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(block)))
    return np.random.Generator(np.random.Philox(ss))


def block_sizes(n, block_size=BLOCK_SIZE):
    full, rest = divmod(int(n), block_size)
    return [block_size] * full + ([rest] if rest else [])


def run_blocks(fn, n, seed, stream=0, workers=None, block_size=BLOCK_SIZE):
    """Evaluate ``fn(rng, size, offset)`` per block; results in block order."""
    sizes = block_sizes(n, block_size)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int) if sizes else []
    jobs = [(block_rng(seed, stream, b), s, int(o)) for b, (s, o) in enumerate(zip(sizes, offsets))]
    workers = workers or default_workers()
    if workers == 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))
