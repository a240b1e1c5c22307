# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled sampling kernels; see ``_fallback.py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport floor, sqrt
from libc.stdint cimport int64_t
from libc.stdlib cimport free, malloc, realloc
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (
    random_standard_exponential_fill,
    random_standard_normal_fill,
    random_standard_uniform_fill,
)

cnp.import_array()


cdef bitgen_t* _bitgen(object rng) except NULL:
    capsule = rng.bit_generator.capsule
    if not PyCapsule_IsValid(capsule, "BitGenerator"):
        raise ValueError("invalid bit generator capsule")
    return <bitgen_t*> PyCapsule_GetPointer(capsule, "BitGenerator")


def ssa_block(const int64_t[::1] nbr_ptr, const int64_t[::1] nbr_idx,
              const double[::1] nbr_cum, const double[::1] escape,
              x0, double T, rng):
    cdef Py_ssize_t m = len(x0)
    cdef int64_t[::1] state = np.array(x0, dtype=np.int64)
    cdef double[::1] t = np.zeros(m)
    cdef int64_t[::1] active = np.empty(max(m, 1), dtype=np.int64)
    cdef double[::1] ebuf = np.empty(max(m, 1))
    cdef double[::1] tbuf = np.empty(max(m, 1))
    cdef double[::1] ubuf = np.empty(max(m, 1))
    cdef Py_ssize_t cap = 4 * m + 16, n_ev = 0, n_act = 0, i, k, p
    cdef int64_t x, y, j, lo, hi
    cdef double tnew, target
    cdef bint oom = False
    cdef int64_t* ev_path = <int64_t*> malloc(cap * sizeof(int64_t))
    cdef double* ev_time = <double*> malloc(cap * sizeof(double))
    cdef int64_t* ev_to = <int64_t*> malloc(cap * sizeof(int64_t))
    cdef void* tmp
    cdef bitgen_t* bg = _bitgen(rng)
    if ev_path == NULL or ev_time == NULL or ev_to == NULL:
        free(ev_path); free(ev_time); free(ev_to)
        raise MemoryError()

    with rng.bit_generator.lock, nogil:
        if T > 0:
            for p in range(m):
                if escape[state[p]] > 0:
                    active[n_act] = p
                    n_act += 1
        while n_act > 0:
            random_standard_exponential_fill(bg, n_act, &ebuf[0])
            k = 0
            for i in range(n_act):
                p = active[i]
                tnew = t[p] + ebuf[i] / escape[state[p]]
                if tnew <= T:
                    active[k] = p
                    tbuf[k] = tnew
                    k += 1
            n_act = k
            if n_act == 0:
                break
            random_standard_uniform_fill(bg, n_act, &ubuf[0])
            if n_ev + n_act > cap:
                cap = 2 * (n_ev + n_act)
                tmp = realloc(ev_path, cap * sizeof(int64_t))
                if tmp == NULL:
                    oom = True
                    break
                ev_path = <int64_t*> tmp
                tmp = realloc(ev_time, cap * sizeof(double))
                if tmp == NULL:
                    oom = True
                    break
                ev_time = <double*> tmp
                tmp = realloc(ev_to, cap * sizeof(int64_t))
                if tmp == NULL:
                    oom = True
                    break
                ev_to = <int64_t*> tmp
            k = 0
            for i in range(n_act):
                p = active[i]
                x = state[p]
                lo = nbr_ptr[x]
                hi = nbr_ptr[x + 1]
                target = ubuf[i] * nbr_cum[hi - 1]
                j = lo
                while j < hi - 1 and nbr_cum[j] <= target:
                    j += 1
                y = nbr_idx[j]
                ev_path[n_ev] = p
                ev_time[n_ev] = tbuf[i]
                ev_to[n_ev] = y
                n_ev += 1
                state[p] = y
                t[p] = tbuf[i]
                if escape[y] > 0:
                    active[k] = p
                    k += 1
            n_act = k

    if oom:
        free(ev_path); free(ev_time); free(ev_to)
        raise MemoryError()
    out_path = np.empty(n_ev, dtype=np.int64)
    out_time = np.empty(n_ev)
    out_to = np.empty(n_ev, dtype=np.int64)
    cdef int64_t[::1] op = out_path
    cdef double[::1] ot = out_time
    cdef int64_t[::1] oto = out_to
    for i in range(n_ev):
        op[i] = ev_path[i]
        ot[i] = ev_time[i]
        oto[i] = ev_to[i]
    free(ev_path); free(ev_time); free(ev_to)
    return out_path, out_time, out_to


cdef inline double _interp(const double* tab, Py_ssize_t m, double y,
                           double scale) noexcept nogil:
    # raw pointer and a branch instead of two integer divisions: this is the hot loop
    cdef double s = y * scale
    cdef double fl = floor(s)
    cdef double f = s - fl
    cdef Py_ssize_t i0 = <Py_ssize_t> fl
    if i0 < 0 or i0 >= m:
        i0 = i0 % m
        if i0 < 0:
            i0 += m
    cdef Py_ssize_t i1 = i0 + 1
    if i1 == m:
        i1 = 0
    return tab[i0] * (1.0 - f) + tab[i1] * f


def em_block(x0, double dt, Py_ssize_t n_steps, double length,
             const double[::1] drift, const double[::1] noise,
             const double[:, ::1] strat, const double[:, ::1] timef,
             const double[:, ::1] ito, rng):
    cdef Py_ssize_t m = len(x0)
    cdef double[::1] x = np.array(x0, dtype=float)
    cdef double[::1] disp = np.zeros(m)
    cdef double[::1] z = np.empty(max(m, 1))
    cdef Py_ssize_t ks = strat.shape[0], kt = timef.shape[0], ki = ito.shape[0]
    s_arr = np.zeros((m, ks))
    t_arr = np.zeros((m, kt))
    i_arr = np.zeros((m, ki))
    cdef double[:, ::1] s_int = s_arr
    cdef double[:, ::1] t_int = t_arr
    cdef double[:, ::1] i_int = i_arr
    cdef double scale = drift.shape[0] / length
    cdef double sdt = sqrt(dt)
    cdef double a, s, dw, dx, xp, mid
    cdef Py_ssize_t step, p, k
    cdef bitgen_t* bg = _bitgen(rng)
    cdef Py_ssize_t nt = drift.shape[0]
    if noise.shape[0] != nt or any(t.shape[0] and t.shape[1] != nt for t in (strat, timef, ito)):
        raise ValueError("all coefficient tables must share one grid")
    cdef const double* pdrift = &drift[0]
    cdef const double* pnoise = &noise[0]

    with rng.bit_generator.lock, nogil:
        for step in range(n_steps):
            random_standard_normal_fill(bg, m, &z[0])
            for p in range(m):
                xp = x[p]
                a = _interp(pdrift, nt, xp, scale)
                s = _interp(pnoise, nt, xp, scale)
                dw = sdt * z[p]
                dx = a * dt + s * dw
                for k in range(kt):
                    t_int[p, k] += _interp(&timef[k, 0], nt, xp, scale) * dt
                for k in range(ki):
                    i_int[p, k] += _interp(&ito[k, 0], nt, xp, scale) * dw
                if ks:
                    mid = xp + 0.5 * dx
                    mid = mid - length * floor(mid / length)
                    for k in range(ks):
                        s_int[p, k] += _interp(&strat[k, 0], nt, mid, scale) * dx
                xp = xp + dx
                x[p] = xp - length * floor(xp / length)
                disp[p] += dx
    return np.asarray(x), np.asarray(disp), s_arr, t_arr, i_arr
