"""Hot loops over replications and groups.

Each kernel has a numba version and a plain numpy version with the same
signature.  The numba path is used when numba imports and the environment
variable ``MLMOMENTS_DISABLE_NUMBA`` is unset (or "0"); set it to "1" to force
the numpy path.
"""

from __future__ import annotations

import os

import numpy as np

_disabled = os.environ.get("MLMOMENTS_DISABLE_NUMBA", "0") not in ("", "0")

try:
    if _disabled:
        raise ImportError
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

USING_NUMBA = HAVE_NUMBA and not _disabled


def _numpy_grouped_central_sums(x, offsets, weights):
    R = x.shape[0]
    G = len(offsets) - 1
    means = np.empty((R, G))
    p2 = np.empty((R, G))
    p3 = np.empty((R, G))
    p4 = np.empty((R, G))
    for g in range(G):
        a, b = offsets[g], offsets[g + 1]
        seg = x[:, a:b]
        w = weights[a:b]
        m = (seg * w).sum(axis=1) / w.sum()
        r = seg - m[:, None]
        r2 = r * r
        means[:, g] = m
        p2[:, g] = r2.sum(axis=1)
        p3[:, g] = (r2 * r).sum(axis=1)
        p4[:, g] = (r2 * r2).sum(axis=1)
    return means, p2, p3, p4


def _numpy_ordered_pair_sum(d2):
    # 2 * sum_i d_i * (sum_{k<i} d_k): nonnegative terms only, no cancellation
    before = np.zeros_like(d2)
    np.cumsum(d2[:, :-1], axis=1, out=before[:, 1:])
    return 2.0 * (d2 * before).sum(axis=1)


if HAVE_NUMBA:

    @njit(cache=True, inline="always")
    def _neumaier(s, c, v):
        t = s + v
        if abs(s) >= abs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        return t, c

    @njit(cache=True)
    def _numba_grouped_central_sums(x, offsets, weights):
        R = x.shape[0]
        G = offsets.shape[0] - 1
        means = np.empty((R, G))
        p2 = np.empty((R, G))
        p3 = np.empty((R, G))
        p4 = np.empty((R, G))
        for r in range(R):
            for g in range(G):
                a = offsets[g]
                b = offsets[g + 1]
                s = 0.0
                c = 0.0
                ws = 0.0
                for l in range(a, b):
                    s, c = _neumaier(s, c, weights[l] * x[r, l])
                    ws += weights[l]
                m = (s + c) / ws
                s2 = 0.0
                c2 = 0.0
                s3 = 0.0
                c3 = 0.0
                s4 = 0.0
                c4 = 0.0
                for l in range(a, b):
                    d = x[r, l] - m
                    dd = d * d
                    s2, c2 = _neumaier(s2, c2, dd)
                    s3, c3 = _neumaier(s3, c3, dd * d)
                    s4, c4 = _neumaier(s4, c4, dd * dd)
                means[r, g] = m
                p2[r, g] = s2 + c2
                p3[r, g] = s3 + c3
                p4[r, g] = s4 + c4
        return means, p2, p3, p4

    @njit(cache=True)
    def _numba_ordered_pair_sum(d2):
        R, n = d2.shape
        out = np.empty(R)
        for r in range(R):
            s = 0.0
            c = 0.0
            p = 0.0
            pc = 0.0
            for i in range(n):
                s, c = _neumaier(s, c, d2[r, i] * (p + pc))
                p, pc = _neumaier(p, pc, d2[r, i])
            out[r] = 2.0 * (s + c)
        return out

else:  # pragma: no cover - exercised only without numba installed
    _numba_grouped_central_sums = None
    _numba_ordered_pair_sum = None


def _prep(x, offsets, weights):
    x = np.ascontiguousarray(np.atleast_2d(np.asarray(x, dtype=np.float64)))
    offsets = np.ascontiguousarray(np.asarray(offsets, dtype=np.int64))
    if weights is None:
        weights = np.ones(x.shape[1])
    weights = np.ascontiguousarray(np.asarray(weights, dtype=np.float64))
    return x, offsets, weights


def grouped_central_sums(x, offsets, weights=None, *, use_numba=None):
    """Per-row, per-segment weighted mean and residual power sums.

    ``x`` has shape (R, L); segment ``g`` spans columns ``offsets[g]:offsets[g+1]``.
    The mean is weighted by ``weights`` (default 1); the power sums of
    residuals ``x - mean`` for orders 2, 3, 4 are unweighted.  Returns four
    (R, G) arrays.
    """
    x, offsets, weights = _prep(x, offsets, weights)
    if USING_NUMBA if use_numba is None else use_numba:
        return _numba_grouped_central_sums(x, offsets, weights)
    return _numpy_grouped_central_sums(x, offsets, weights)


def ordered_pair_sum(d2, *, use_numba=None):
    """Sum over ordered pairs i != i' of d2[:, i] * d2[:, i'], per row."""
    d2 = np.ascontiguousarray(np.atleast_2d(np.asarray(d2, dtype=np.float64)))
    if USING_NUMBA if use_numba is None else use_numba:
        return _numba_ordered_pair_sum(d2)
    return _numpy_ordered_pair_sum(d2)


def offsets_from_sizes(sizes):
    return np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
