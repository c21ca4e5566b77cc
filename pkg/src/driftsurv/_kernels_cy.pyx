# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the sequential hot loops (PAVA, per-loan scans)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport NAN, isnan

cnp.import_array()


def pava(y, w):
    """Weighted pool-adjacent-violators for points already sorted by score."""
    cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n = yv.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] fitted = out
    cdef double[::1] vals = np.empty(n, dtype=np.float64)
    cdef double[::1] wts = np.empty(n, dtype=np.float64)
    cdef cnp.int64_t[::1] sizes = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t top = -1, i, b, pos, j
    cdef double tw
    for i in range(n):
        top += 1
        vals[top] = yv[i]
        wts[top] = wv[i]
        sizes[top] = 1
        while top > 0 and vals[top - 1] > vals[top]:
            tw = wts[top - 1] + wts[top]
            vals[top - 1] = (wts[top - 1] * vals[top - 1] + wts[top] * vals[top]) / tw
            wts[top - 1] = tw
            sizes[top - 1] += sizes[top]
            top -= 1
    pos = 0
    for b in range(top + 1):
        for j in range(sizes[b]):
            fitted[pos + j] = vals[b]
        pos += sizes[b]
    return out


def segment_cummin(values, starts, stops):
    """Running minimum within each [start, stop) segment, skipping NaNs."""
    out = np.array(values, dtype=np.float64, copy=True)
    cdef double[::1] v = out
    cdef cnp.int64_t[::1] s = np.ascontiguousarray(starts, dtype=np.int64)
    cdef cnp.int64_t[::1] e = np.ascontiguousarray(stops, dtype=np.int64)
    cdef Py_ssize_t k, i
    cdef double cur
    cdef bint seen
    for k in range(s.shape[0]):
        cur = 0.0
        seen = False
        for i in range(s[k], e[k]):
            if isnan(v[i]):
                continue
            if not seen or v[i] < cur:
                cur = v[i]
                seen = True
            else:
                v[i] = cur
    return out


def segment_linfit(x, y, starts, stops, double lam):
    """Ridge line fit ``y ~ b0 + b1*x`` within each [start, stop) segment."""
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef cnp.int64_t[::1] s = np.ascontiguousarray(starts, dtype=np.int64)
    cdef cnp.int64_t[::1] e = np.ascontiguousarray(stops, dtype=np.int64)
    cdef Py_ssize_t m = s.shape[0]
    b0_arr = np.empty(m, dtype=np.float64)
    b1_arr = np.empty(m, dtype=np.float64)
    n_arr = np.empty(m, dtype=np.int64)
    cdef double[::1] b0 = b0_arr
    cdef double[::1] b1 = b1_arr
    cdef cnp.int64_t[::1] nn = n_arr
    cdef Py_ssize_t k, i
    cdef double sx, sy, sxx, sxy, n, xbar, ybar, cxx, cxy, slope
    for k in range(m):
        sx = sy = sxx = sxy = 0.0
        n = 0.0
        for i in range(s[k], e[k]):
            if isnan(yv[i]):
                continue
            n += 1.0
            sx += xv[i]
            sy += yv[i]
            sxx += xv[i] * xv[i]
            sxy += xv[i] * yv[i]
        nn[k] = <cnp.int64_t> n
        if n == 0.0:
            b0[k] = NAN
            b1[k] = NAN
            continue
        xbar = sx / n
        ybar = sy / n
        cxx = sxx - n * xbar * xbar
        cxy = sxy - n * xbar * ybar
        slope = cxy / (cxx + lam)
        b0[k] = ybar - slope * xbar
        b1[k] = slope
    return b0_arr, b1_arr, n_arr
