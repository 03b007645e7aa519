# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; same contracts as _kernels_py."""

import numpy as np
from libc.math cimport exp, sqrt

cdef double SQRT_PI = 1.7724538509055159


def real_error_table(alphas, cutoffs, double coeff, long n_particles, double volume):
    cdef double[::1] a = np.ascontiguousarray(alphas, dtype=np.float64)
    cdef double[::1] rc = np.ascontiguousarray(cutoffs, dtype=np.float64)
    cdef Py_ssize_t n_a = a.shape[0], n_c = rc.shape[0], i, j
    out = np.empty((n_c, n_a), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double ra2, poly, a5, nv = <double>n_particles * volume
    for i in range(n_c):
        for j in range(n_a):
            ra2 = (rc[i] * a[j]) * (rc[i] * a[j])
            poly = 6.0 / (ra2 * ra2 * ra2) + 6.0 / (ra2 * ra2) + 3.0 / ra2 + 1.0
            a5 = a[j] * a[j] * a[j] * a[j] * a[j]
            o[i, j] = coeff * SQRT_PI * a5 / sqrt(nv * rc[i]) * poly * exp(-ra2)
    return out


def widest_feasible_runs(real_err, recip_err, double threshold):
    cdef double[:, ::1] r = np.ascontiguousarray(real_err, dtype=np.float64)
    cdef double[:, ::1] k = np.ascontiguousarray(recip_err, dtype=np.float64)
    cdef Py_ssize_t n_c = r.shape[0], n_a = r.shape[1], n_k = k.shape[0]
    lo_arr = np.full((n_c, n_k), -1, dtype=np.int64)
    hi_arr = np.full((n_c, n_k), -1, dtype=np.int64)
    cdef long long[:, ::1] lo = lo_arr
    cdef long long[:, ::1] hi = hi_arr
    cdef Py_ssize_t c, q, i, start, best_lo, best_hi
    cdef bint ok
    for c in range(n_c):
        for q in range(n_k):
            best_lo = -1
            best_hi = -1
            start = -1
            for i in range(n_a + 1):
                ok = i < n_a and sqrt(r[c, i] * r[c, i] + k[q, i] * k[q, i]) <= threshold
                if ok:
                    if start < 0:
                        start = i
                elif start >= 0:
                    if best_lo < 0 or (i - 1 - start) > (best_hi - best_lo):
                        best_lo = start
                        best_hi = i - 1
                    start = -1
            lo[c, q] = best_lo
            hi[c, q] = best_hi
    return lo_arr, hi_arr


def pareto_mask(keys):
    cdef long long[:, ::1] kv = np.ascontiguousarray(keys, dtype=np.int64)
    cdef Py_ssize_t n = kv.shape[0], d = kv.shape[1], i, f, m
    mask_arr = np.zeros(n, dtype=bool)
    cdef unsigned char[::1] mask = mask_arr.view(np.uint8)
    front_arr = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] front = front_arr
    cdef Py_ssize_t n_front = 0
    cdef bint le, lt, dominated
    for i in range(n):
        dominated = False
        for f in range(n_front):
            le = True
            lt = False
            for m in range(d):
                if kv[front[f], m] > kv[i, m]:
                    le = False
                    break
                if kv[front[f], m] < kv[i, m]:
                    lt = True
            if le and lt:
                dominated = True
                break
        if not dominated:
            front[n_front] = i
            n_front += 1
            mask[i] = 1
    return mask_arr
