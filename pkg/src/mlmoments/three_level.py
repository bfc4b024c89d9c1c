"""Unbiased second and third moments for the unbalanced three-level model
y_ijk = u_i + v_ij + w_ijk.

Estimation runs w -> v -> u; each level subtracts the contamination of the
levels below it using their (scheme-matched) estimates.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction as F
from functools import lru_cache

import numpy as np

from . import _accel
from .design import (
    NestedDesignSummary,
    ThreeLevelDataset,
    nested_design_summary,
    validate_three_level,
)
from .errors import UnsupportedOrder
from .kernel import centered_power_sums, exact_sum
from .two_level import SCHEMES, _conv, _negatives, between_sums


@dataclass(frozen=True)
class ThreeLevelStats:
    """Sufficient statistics of a three-level dataset.

    ``s2w``/``s3w``: totals of within-subgroup residual power sums.
    ``vsums[scheme]``: (sum_ij d**2, sum_ij d**3) with d = subgroup mean minus
    the scheme's group average.  ``gmeans[scheme]``: the n group averages.
    """

    sizes: tuple
    s2w: object
    s3w: object
    vsums: dict
    gmeans: dict
    exact: bool = False


def _exact_stats(data: ThreeLevelDataset) -> ThreeLevelStats:
    s2w = s3w = F(0)
    vsums = {s: [F(0), F(0)] for s in SCHEMES}
    gmeans = {s: [] for s in SCHEMES}
    for g in data.groups:
        sub = [centered_power_sums([F(y) for y in s]) for s in g]
        s2w += sum(c.s2 for c in sub)
        s3w += sum(c.s3 for c in sub)
        means = [c.mean for c in sub]
        sizes = [len(s) for s in g]
        centres = {
            "grp": sum(means) / len(means),
            "obs": sum(k * m for k, m in zip(sizes, means)) / sum(sizes),
        }
        for s, c in centres.items():
            vsums[s][0] += sum((m - c) ** 2 for m in means)
            vsums[s][1] += sum((m - c) ** 3 for m in means)
            gmeans[s].append(c)
    return ThreeLevelStats(
        data.sizes, s2w, s3w,
        {s: tuple(v) for s, v in vsums.items()},
        {s: tuple(v) for s, v in gmeans.items()},
        exact=True,
    )


def stats_from_array(y, K) -> ThreeLevelStats:
    """Float statistics for rows of ``y`` (shape (R, N), observations in
    group/subgroup order).  Fields carry a leading replication axis."""
    flat = [k for row in K for k in row]
    sub_means, p2, p3, _ = _accel.grouped_central_sums(y, _accel.offsets_from_sizes(flat))
    goff = _accel.offsets_from_sizes([len(row) for row in K])
    vsums, gmeans = {}, {}
    for s, weights in (("grp", None), ("obs", flat)):
        gm, a2, a3, _ = _accel.grouped_central_sums(sub_means, goff, weights)
        vsums[s] = (a2.sum(axis=1), a3.sum(axis=1))
        gmeans[s] = gm
    return ThreeLevelStats(K, p2.sum(axis=1), p3.sum(axis=1), vsums, gmeans)


def three_level_stats(data: ThreeLevelDataset) -> ThreeLevelStats:
    if not isinstance(data, ThreeLevelDataset):
        data = ThreeLevelDataset(data)
    if data.exact:
        return _exact_stats(data)
    y = np.fromiter((x for g in data.groups for s in g for x in s), dtype=np.float64)
    st = stats_from_array(y[None, :], data.sizes)
    return ThreeLevelStats(
        st.sizes,
        float(st.s2w[0]),
        float(st.s3w[0]),
        {s: tuple(float(a[0]) for a in v) for s, v in st.vsums.items()},
        {s: tuple(float(m) for m in v[0]) for s, v in st.gmeans.items()},
    )


def _as_stats(data) -> ThreeLevelStats:
    return data if isinstance(data, ThreeLevelStats) else three_level_stats(data)


@lru_cache(maxsize=256)
def _constants(K: tuple) -> dict:
    d = nested_design_summary(K)
    n, N = d.n, d.N
    Ki = d.K_i
    c = {
        "w2_den": sum(F(k - 1) for row in K for k in row),
        "w3_den": sum(F((k - 1) * (k - 2), k) for row in K for k in row),
        # group-level averaging
        "grp_v2_den": sum(F(g.n - 1) for g in d.groups),
        "grp_v2_w": sum(F(g.n - 1, g.n) * g.inv1 for g in d.groups),
        "grp_v3_den": sum(F((g.n - 1) * (g.n - 2), g.n) for g in d.groups),
        "grp_v3_w": sum(F((g.n - 1) * (g.n - 2), g.n**2) * g.inv2 for g in d.groups),
        "grp_u2_stat": F(1, n - 1),
        "grp_u2_v": sum(F(1, g.n) for g in d.groups) / n,
        "grp_u2_w": sum(g.inv1 / g.n**2 for g in d.groups) / n,
        "grp_u3_stat": F(n, (n - 1) * (n - 2)),
        "grp_u3_v": sum(F(1, g.n**2) for g in d.groups) / n,
        "grp_u3_w": sum(g.inv2 / g.n**3 for g in d.groups) / n,
        # observation-level averaging
        "obs_v2_den": sum(
            1 - F(2 * k, g.N) + F(g.pow[2], g.N**2) for g in d.groups for k in g.J
        ),
        "obs_v2_w": sum(F(1, k) - F(1, g.N) for g in d.groups for k in g.J),
        "obs_v3_den": sum(
            1 - F(3 * k, g.N) + F(3 * k * k, g.N**2) - F(g.pow[3], g.N**3)
            for g in d.groups
            for k in g.J
        ),
        "obs_v3_w": sum(
            F((g.N - k) * (g.N - 2 * k), g.N**2 * k * k) for g in d.groups for k in g.J
        ),
        "obs_u2_den": sum(1 - F(2 * k, N) + F(d.outer.pow[2], N * N) for k in Ki),
        "obs_u2_v": sum(
            (1 - F(k, N)) ** 2 * F(sq, k * k) + F(d.sq - sq, N * N)
            for k, sq in zip(Ki, d.sq_by_group)
        ),
        "obs_u2_w": sum(F(1, k) - F(1, N) for k in Ki),
        "obs_u3_den": sum(
            1 - F(3 * k, N) + F(3 * k * k, N * N) - F(d.outer.pow[3], N**3) for k in Ki
        ),
        # out-of-group cube sums as (global - own group)
        "obs_u3_v": sum(
            (1 - F(k, N)) ** 3 * F(cu, k**3) - F(d.cube - cu, N**3)
            for k, cu in zip(Ki, d.cube_by_group)
        ),
        "obs_u3_w": sum(F((N - k) * (N - 2 * k), N * N * k * k) for k in Ki),
    }
    return c


def _check_scheme(scheme):
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}, got {scheme!r}")


def estimate_w(data, summary: NestedDesignSummary | None = None):
    """(mu2w, mu3w) from within-subgroup residuals."""
    st = _as_stats(data)
    conv = _conv(st.exact)
    c = _constants(tuple(summary.K if summary else st.sizes))
    return st.s2w / conv(c["w2_den"]), st.s3w / conv(c["w3_den"])


def estimate_v_3l(data, summary, scheme, w):
    """(mu2v, mu3v) under the given averaging scheme, correcting with (mu2w, mu3w)."""
    _check_scheme(scheme)
    st = _as_stats(data)
    conv = _conv(st.exact)
    c = _constants(tuple(summary.K if summary else st.sizes))
    a2, a3 = st.vsums[scheme]
    mu2w, mu3w = w
    mu2v = (a2 - mu2w * conv(c[f"{scheme}_v2_w"])) / conv(c[f"{scheme}_v2_den"])
    mu3v = (a3 - mu3w * conv(c[f"{scheme}_v3_w"])) / conv(c[f"{scheme}_v3_den"])
    return mu2v, mu3v


def estimate_u_3l(data, summary, scheme, v, w):
    """(mu2u, mu3u) under the given scheme; ``v`` must come from the same scheme."""
    _check_scheme(scheme)
    st = _as_stats(data)
    conv = _conv(st.exact)
    K = tuple(summary.K if summary else st.sizes)
    c = _constants(K)
    weights = None if scheme == "grp" else [sum(row) for row in K]
    b2, b3, _, _ = between_sums(st.gmeans[scheme], weights, pairs=False)
    (mu2v, mu3v), (mu2w, mu3w) = v, w
    p = scheme
    if scheme == "grp":
        mu2u = b2 * conv(c["grp_u2_stat"]) - mu2v * conv(c["grp_u2_v"]) - mu2w * conv(c["grp_u2_w"])
        mu3u = b3 * conv(c["grp_u3_stat"]) - mu3v * conv(c["grp_u3_v"]) - mu3w * conv(c["grp_u3_w"])
    else:
        mu2u = (b2 - mu2v * conv(c[f"{p}_u2_v"]) - mu2w * conv(c[f"{p}_u2_w"])) / conv(c[f"{p}_u2_den"])
        mu3u = (b3 - mu3v * conv(c[f"{p}_u3_v"]) - mu3w * conv(c[f"{p}_u3_w"])) / conv(c[f"{p}_u3_den"])
    return mu2u, mu3u


@dataclass(frozen=True)
class SchemeEstimates3L:
    mu2v: object
    mu3v: object
    mu2u: object
    mu3u: object


@dataclass(frozen=True)
class ThreeLevelEstimates:
    summary: NestedDesignSummary
    mu2w: object
    mu3w: object
    schemes: dict
    negative: tuple[str, ...] = ()


def estimate_three_level(data, *, schemes=SCHEMES, orders=(2, 3)) -> ThreeLevelEstimates:
    """Validate and run w -> v -> u for each requested scheme."""
    bad = [k for k in orders if k not in (2, 3)]
    if bad:
        raise UnsupportedOrder(f"three-level estimators support orders 2 and 3, not {bad}")
    data = data if isinstance(data, ThreeLevelDataset) else ThreeLevelDataset(data)
    summary = validate_three_level(data)
    st = three_level_stats(data)
    w = estimate_w(st, summary)
    out = {}
    neg = list(_negatives(mu2w=w[0]))
    for s in schemes:
        v = estimate_v_3l(st, summary, s, w)
        u = estimate_u_3l(st, summary, s, v, w)
        out[s] = SchemeEstimates3L(v[0], v[1], u[0], u[1])
        neg += [f"{k}_{s}" for k in _negatives(mu2v=v[0], mu2u=u[0])]
    return ThreeLevelEstimates(summary, w[0], w[1], out, tuple(neg))


def evaluate(stats: ThreeLevelStats, levels=("w", "v", "u")) -> dict:
    """Flat ``{id: value}`` of three-level estimates.

    Ids: mu2w, mu3w, then mu2v_<s>, mu3v_<s>, mu2u_<s>, mu3u_<s>.  ``levels``
    limits the work to the inner levels (u needs v needs w).
    """
    summary = nested_design_summary(stats.sizes)
    w = estimate_w(stats, summary)
    out = {"mu2w": w[0], "mu3w": w[1]}
    for s in SCHEMES:
        if "v" in levels or "u" in levels:
            v = estimate_v_3l(stats, summary, s, w)
            out[f"mu2v_{s}"], out[f"mu3v_{s}"] = v
            if "u" in levels:
                out[f"mu2u_{s}"], out[f"mu3u_{s}"] = estimate_u_3l(stats, summary, s, v, w)
    return out
