"""Pure-Python/numpy kernels. Reference semantics for the compiled twin in _kernels.pyx."""

from __future__ import annotations

import numpy as np

SQRT_PI = 1.7724538509055159


def real_error_table(alphas, cutoffs, coeff: float, n_particles: int, volume: float) -> np.ndarray:
    """Real-space force-error bound on the cutoff x alpha lattice, shape (len(cutoffs), len(alphas))."""
    a = np.asarray(alphas, dtype=np.float64)[None, :]
    rc = np.asarray(cutoffs, dtype=np.float64)[:, None]
    ra = rc * a
    ra2 = ra * ra
    poly = 6.0 / (ra2 * ra2 * ra2) + 6.0 / (ra2 * ra2) + 3.0 / ra2 + 1.0
    a5 = a * a * a * a * a
    nv = float(n_particles) * volume
    # same operation order as the compiled loop; libm and numpy exp may still differ by an ulp
    return coeff * SQRT_PI * a5 / np.sqrt(nv * rc) * poly * np.exp(-ra2)


def widest_feasible_runs(real_err, recip_err, threshold: float):
    """Widest run of alpha indices with sqrt(real^2 + recip^2) <= threshold.

    ``real_err`` has shape (C, A), ``recip_err`` shape (K, A). Returns int64
    arrays ``lo, hi`` of shape (C, K); -1 marks cells with no feasible alpha.
    Ties between equally wide runs go to the lower alpha.
    """
    real_err = np.ascontiguousarray(real_err, dtype=np.float64)
    recip_err = np.ascontiguousarray(recip_err, dtype=np.float64)
    n_c, n_a = real_err.shape
    n_k = recip_err.shape[0]
    lo = np.full((n_c, n_k), -1, dtype=np.int64)
    hi = np.full((n_c, n_k), -1, dtype=np.int64)
    r2 = real_err * real_err
    k2 = recip_err * recip_err
    for c in range(n_c):
        ok = np.sqrt(r2[c][None, :] + k2) <= threshold  # (K, A)
        for k in np.flatnonzero(ok.any(axis=1)):
            row = ok[k]
            best_lo = best_hi = -1
            start = -1
            for i in range(n_a + 1):
                if i < n_a and row[i]:
                    if start < 0:
                        start = i
                elif start >= 0:
                    if best_lo < 0 or (i - 1 - start) > (best_hi - best_lo):
                        best_lo, best_hi = start, i - 1
                    start = -1
            lo[c, k] = best_lo
            hi[c, k] = best_hi
    return lo, hi


def pareto_mask(keys) -> np.ndarray:
    """Non-dominated mask for integer keys of shape (n, d), pre-sorted lexicographically.

    Row ``j`` dominates row ``i`` when ``keys[j] <= keys[i]`` componentwise with
    at least one strict inequality. A dominator always sorts before its victim,
    and transitivity means checking against accepted rows is enough.
    """
    keys = np.asarray(keys, dtype=np.int64)
    n = keys.shape[0]
    mask = np.zeros(n, dtype=bool)
    front = np.empty_like(keys)
    n_front = 0
    for i in range(n):
        if n_front:
            f = front[:n_front]
            le = (f <= keys[i]).all(axis=1)
            lt = (f < keys[i]).any(axis=1)
            if (le & lt).any():
                continue
        front[n_front] = keys[i]
        n_front += 1
        mask[i] = True
    return mask
