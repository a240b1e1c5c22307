"""Pure-NumPy sampling kernels.

These mirror ``_kernels.pyx`` draw for draw: both consume the generator in
the same order (all holding times of a round, then all jump uniforms; one
normal per path per Euler step), so the two backends agree bit for bit.
"""

import numpy as np


def ssa_block(nbr_ptr, nbr_idx, nbr_cum, escape, x0, T, rng):
    """Sample ``len(x0)`` jump paths on ``[0, T]``, round-synchronously.

    Returns ``(ev_path, ev_time, ev_to)`` listing every jump in round-major
    order (within a round, by increasing path index).
    """
    state = np.array(x0, dtype=np.int64)
    t = np.zeros(state.size)
    if T > 0:
        active = np.flatnonzero(escape[state] > 0)
    else:
        active = np.empty(0, dtype=np.int64)
    paths, times, tos = [], [], []
    while active.size:
        e = rng.standard_exponential(active.size)
        tn = t[active] + e / escape[state[active]]
        keep = tn <= T
        active = active[keep]
        tn = tn[keep]
        if not active.size:
            break
        u = rng.random(active.size)
        xs = state[active]
        lo = nbr_ptr[xs]
        hi = nbr_ptr[xs + 1]
        target = u * nbr_cum[hi - 1]
        pick = np.empty(active.size, dtype=np.int64)
        for x in np.unique(xs):
            sel = xs == x
            a, b = nbr_ptr[x], nbr_ptr[x + 1]
            j = np.searchsorted(nbr_cum[a:b], target[sel], side="right")
            pick[sel] = a + np.minimum(j, b - a - 1)
        new = nbr_idx[pick]
        paths.append(active)
        times.append(tn)
        tos.append(new)
        state[active] = new
        t[active] = tn
        active = active[escape[new] > 0]
        del lo, hi
    if not paths:
        return (np.empty(0, dtype=np.int64), np.empty(0), np.empty(0, dtype=np.int64))
    return np.concatenate(paths), np.concatenate(times), np.concatenate(tos)


def _interp(tab, y, scale):
    s = y * scale
    fl = np.floor(s)
    f = s - fl
    m = tab.size
    i0 = fl.astype(np.int64) % m
    i1 = (i0 + 1) % m
    return tab[i0] * (1.0 - f) + tab[i1] * f


def _wrap(y, length):
    return y - length * np.floor(y / length)


def em_block(x0, dt, n_steps, length, drift, noise, strat, timef, ito, rng, record=False):
    """Euler-Maruyama on the torus ``[0, length)`` for ``len(x0)`` paths.

    Coefficient tables are sampled on a uniform periodic grid and linearly
    interpolated.  Accumulates, per path, Stratonovich (midpoint) integrals
    of the ``strat`` fields, left-point time integrals of ``timef`` and
    Ito integrals of ``ito`` against the Brownian increments.

    Returns ``(x_final, displacement, strat_int, time_int, ito_int)`` and the
    ``(n_steps + 1, m)`` position history when ``record`` is true.
    """
    x = np.array(x0, dtype=float)
    m = x.size
    disp = np.zeros(m)
    scale = drift.size / length
    sdt = np.sqrt(dt)
    s_int = np.zeros((m, strat.shape[0]))
    t_int = np.zeros((m, timef.shape[0]))
    i_int = np.zeros((m, ito.shape[0]))
    hist = None
    if record:
        hist = np.empty((n_steps + 1, m))
        hist[0] = x
    for step in range(n_steps):
        z = rng.standard_normal(m)
        a = _interp(drift, x, scale)
        s = _interp(noise, x, scale)
        dw = sdt * z
        dx = a * dt + s * dw
        for k in range(timef.shape[0]):
            t_int[:, k] += _interp(timef[k], x, scale) * dt
        for k in range(ito.shape[0]):
            i_int[:, k] += _interp(ito[k], x, scale) * dw
        if strat.shape[0]:
            mid = _wrap(x + 0.5 * dx, length)
            for k in range(strat.shape[0]):
                s_int[:, k] += _interp(strat[k], mid, scale) * dx
        x = _wrap(x + dx, length)
        disp += dx
        if record:
            hist[step + 1] = x
    out = (x, disp, s_int, t_int, i_int)
    return out + (hist,) if record else out
