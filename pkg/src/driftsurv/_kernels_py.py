"""Pure-NumPy implementations of the sequential hot kernels.

Mirrors the compiled module ``driftsurv._kernels_cy``; selected by
``driftsurv.kernels`` when the extension is unavailable or when
DRIFTSURV_PURE_PYTHON is set.
"""

from __future__ import annotations

import numpy as np


def pava(y, w):
    """Weighted pool-adjacent-violators for points already sorted by score.

    Returns the non-decreasing least-squares fit, one value per input point.
    Violating neighbours are merged into blocks whose value is the weighted
    mean of their members.
    """
    y = np.ascontiguousarray(y, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    n = y.shape[0]
    vals = np.empty(n)
    wts = np.empty(n)
    sizes = np.empty(n, dtype=np.int64)
    top = -1
    for i in range(n):
        top += 1
        vals[top] = y[i]
        wts[top] = w[i]
        sizes[top] = 1
        while top > 0 and vals[top - 1] > vals[top]:
            tw = wts[top - 1] + wts[top]
            vals[top - 1] = (wts[top - 1] * vals[top - 1] + wts[top] * vals[top]) / tw
            wts[top - 1] = tw
            sizes[top - 1] += sizes[top]
            top -= 1
    fitted = np.empty(n)
    pos = 0
    for b in range(top + 1):
        fitted[pos:pos + sizes[b]] = vals[b]
        pos += sizes[b]
    return fitted


def segment_cummin(values, starts, stops):
    """Running minimum within each [start, stop) segment, skipping NaNs.

    NaN entries stay NaN and do not reset the running minimum.
    """
    out = np.array(values, dtype=np.float64, copy=True)
    for s, e in zip(starts, stops):
        seg = out[s:e]
        run = np.fmin.accumulate(seg)
        run[np.isnan(seg)] = np.nan
        out[s:e] = run
    return out


def segment_linfit(x, y, starts, stops, lam):
    """Ridge line fit ``y ~ b0 + b1*x`` within each [start, stop) segment.

    NaN y entries are skipped. The ridge penalty ``lam`` applies to the
    slope only. Segments with no valid point yield (nan, nan, 0); a single
    valid point yields (y, 0, 1).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    starts = np.asarray(starts, dtype=np.int64)
    stops = np.asarray(stops, dtype=np.int64)
    valid = np.isfinite(y)
    wv = valid.astype(np.float64)
    xv = np.where(valid, x, 0.0)
    yv = np.where(valid, y, 0.0)

    def prefix(a):
        p = np.empty(a.shape[0] + 1)
        p[0] = 0.0
        np.cumsum(a, out=p[1:])
        return p

    pn, px, py = prefix(wv), prefix(xv), prefix(yv)
    pxx, pxy = prefix(xv * xv), prefix(xv * yv)
    n = pn[stops] - pn[starts]
    sx = px[stops] - px[starts]
    sy = py[stops] - py[starts]
    sxx = pxx[stops] - pxx[starts]
    sxy = pxy[stops] - pxy[starts]
    with np.errstate(divide="ignore", invalid="ignore"):
        xbar = sx / n
        ybar = sy / n
        cxx = sxx - n * xbar * xbar
        cxy = sxy - n * xbar * ybar
        b1 = cxy / (cxx + lam)
        b0 = ybar - b1 * xbar
    empty = n == 0
    b0[empty] = np.nan
    b1[empty] = np.nan
    return b0, b1, n.astype(np.int64)
