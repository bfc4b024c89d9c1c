"""Unbiased moment estimators for the unbalanced two-level model y_ij = u_i + v_ij.

The formula code is number-agnostic: it runs on floats for estimation, on
``Fraction`` for the exact oracle and on numpy arrays (one entry per
replication) for Monte Carlo.  Design constants are computed once per size
profile in exact rationals and converted at the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction as F
from functools import lru_cache

import numpy as np

from . import _accel
from .design import DesignSummary, TwoLevelDataset, design_summary, validate_two_level
from .errors import MissingWithinFourth, SingularSystem, UnsupportedKind
from .kernel import centered_power_sums, exact_sum

SCHEMES = ("grp", "obs")
SINGULAR_RTOL = 1e-9


@dataclass(frozen=True)
class TwoLevelStats:
    """Sufficient statistics of a two-level dataset.

    ``means`` are the group means; ``s2``..``s4`` are totals over groups of
    within-group residual power sums and ``pairs`` the total over groups of
    sum_{j<j'} r_j**2 r_j'**2.  In Monte Carlo mode every field but ``sizes``
    carries a leading replication axis.
    """

    sizes: tuple[int, ...]
    means: object
    s2: object
    s3: object
    s4: object
    pairs: object
    exact: bool = False


def two_level_stats(data: TwoLevelDataset) -> TwoLevelStats:
    if not isinstance(data, TwoLevelDataset):
        data = TwoLevelDataset(data)
    if data.exact:
        per = [centered_power_sums([F(y) for y in g]) for g in data.groups]
        return TwoLevelStats(
            sizes=data.sizes,
            means=tuple(c.mean for c in per),
            s2=sum(c.s2 for c in per),
            s3=sum(c.s3 for c in per),
            s4=sum(c.s4 for c in per),
            pairs=sum(c.pairs for c in per),
            exact=True,
        )
    x = np.fromiter((y for g in data.groups for y in g), dtype=np.float64)
    means, p2, p3, p4 = _accel.grouped_central_sums(
        x[None, :], _accel.offsets_from_sizes(data.sizes)
    )
    means, p2, p3, p4 = means[0], p2[0], p3[0], p4[0]
    return TwoLevelStats(
        sizes=data.sizes,
        means=tuple(float(m) for m in means),
        s2=float(p2.sum()),
        s3=float(p3.sum()),
        s4=float(p4.sum()),
        pairs=float(((p2 * p2 - p4) / 2).sum()),
    )


def _as_stats(data) -> TwoLevelStats:
    if isinstance(data, TwoLevelStats):
        return data
    return two_level_stats(data)


def _conv(exact):
    return F if exact else float


def between_sums(means, weights=None, *, pairs=True):
    """Centered power sums of group-level averages.

    Returns (sum d**2, sum d**3, sum d**4, sum over ordered pairs i != i' of
    d_i**2 d_i'**2) where d = means - weighted grand mean.  The pair sum is
    None when ``pairs`` is false.
    """
    if isinstance(means, np.ndarray):
        R, n = means.shape
        means_, p2, p3, p4 = _accel.grouped_central_sums(means, [0, n], weights)
        if not pairs:
            return p2[:, 0], p3[:, 0], p4[:, 0], None
        d2 = (means - means_[:, :1]) ** 2
        return p2[:, 0], p3[:, 0], p4[:, 0], _accel.ordered_pair_sum(d2)
    n = len(means)
    w = [1] * n if weights is None else list(weights)
    centre = exact_sum(wi * m for wi, m in zip(w, means)) / sum(w)
    d = [m - centre for m in means]
    d2 = [x * x for x in d]
    pair_sum = None
    if pairs:
        pair_sum = exact_sum(d2[i] * d2[k] for i in range(n) for k in range(n) if i != k)
    return (
        exact_sum(d2),
        exact_sum(x * y for x, y in zip(d2, d)),
        exact_sum(x * x for x in d2),
        pair_sum,
    )


# ---------------------------------------------------------------------------
# design constants


@lru_cache(maxsize=256)
def _order23_constants(J: tuple[int, ...]) -> dict:
    s = design_summary(J)
    n, N, S2, S3 = s.n, s.N, s.pow[2], s.pow[3]
    c = {
        "v2_den": sum(F(j - 1) for j in J),
        "v3_den": sum(F((j - 1) * (j - 2), j) for j in J),
    }
    if n < 3:
        # within-group estimates only; the between formulas need n >= 3
        return c
    c.update({
        "grp2_stat": F(1, n - 1),
        "grp2_v": s.inv1 / n,
        "grp3_stat": F(n, (n - 1) * (n - 2)),
        "grp3_v": s.inv2 / n,
        "obs2_den": sum(1 - F(2 * j, N) + F(S2, N * N) for j in J),
        "obs2_v": sum(F(1, j) - F(1, N) for j in J),
        "obs3_den": sum(1 - F(3 * j, N) + F(3 * j * j, N * N) - F(S3, N**3) for j in J),
        "obs3_v": sum(F((N - j) * (N - 2 * j), N * N * j * j) for j in J),
    })
    return c


@lru_cache(maxsize=256)
def fourth_coefficients(kind: str, J: tuple[int, ...]):
    """Exact (a11, a12, a21, a22, t4, t22) for a fourth-moment system.

    ``t4`` and ``t22`` are coefficient triples on (mu2u*mu2v, mu4v, mu2v**2);
    they are zero for the within-group system.
    """
    n = len(J)
    if kind == "v":
        a11 = sum(F((j - 1) * (j * j - 3 * j + 3), j * j) for j in J)
        q = sum(F((j - 1) * (2 * j - 3), j * j) for j in J)
        a22 = sum(F((j - 1) * (j**3 - 2 * j * j - 3 * j + 9), j * j) for j in J) / 2
        zero = (F(0), F(0), F(0))
        return a11, 3 * q, q / 2, a22, zero, zero

    s = design_summary(J)
    if kind == "grp":
        s1, s2, s3 = s.inv1, s.inv2, s.inv3
        c4 = F((n - 1) * (n * n - 3 * n + 3), n**3)
        c22 = F((n - 1) * (2 * n - 3), n**3)
        a11 = c4 * n
        a12 = 3 * c22 * n
        a21 = c22 * n
        a22 = F((n - 1) * (n**3 - 2 * n * n - 3 * n + 9), n * n)
        t4 = (
            6 * F((n - 1) ** 2, n * n) * s1,
            c4 * s3,
            3 * (F((n - 2) ** 2, n * n) * s2 + F(2 * n - 3, n**3) * s1 * s1 - c4 * s3),
        )
        t22 = (
            2 * F((n - 1) * ((n - 1) ** 2 + 2), n * n) * s1,
            c22 * s3,
            F(n**3 - 2 * n * n - 3 * n + 9, n**3) * s1 * s1
            + F((n - 2) * (6 - n), n * n) * s2
            - 3 * c22 * s3,
        )
        return a11, a12, a21, a22, t4, t22

    if kind == "obs":
        N, S2, S4 = s.N, s.pow[2], s.pow[4]
        b = [F(j, N) for j in J]
        sq = F(S2, N * N)
        A = [1 - 2 * bi + sq for bi in b]
        Q = [(1 - bi) ** 4 + F(S4 - j**4, N**4) for bi, j in zip(b, J)]
        B = [F(1, j) - F(1, N) for j in J]
        D = [j * Bi**4 + F(N - j, N**4) for j, Bi in zip(J, B)]
        sumA, sumB = sum(A), sum(B)
        # ordered-pair sums over i != i', reduced to single sums
        pair_AA = sumA * sumA - sum(a * a for a in A)
        pair_AB = sumA * sumB - sum(a * bb for a, bb in zip(A, B))
        pair_BB = sumB * sumB - sum(bb * bb for bb in B)
        sum_b, sum_b2 = sum(b), sum(bi * bi for bi in b)
        pair_C = n * (n - 1) * sq - 2 * (n - 1) * sum_b
        pair_C2 = (
            n * (n - 1) * sq * sq
            + 2 * (n - 1) * sum_b2
            - 4 * (n - 1) * sq * sum_b
            + 2 * (sum_b * sum_b - sum_b2)
        )
        a11 = sum(Q)
        a12 = 3 * sum(a * a - q for a, q in zip(A, Q))
        a21 = 2 * (n - 1) * sum(bi * bi * (1 - bi) ** 2 for bi in b) + F(
            (n - 1) * (n - 2) * S4, N**4
        )
        a22 = pair_AA + 2 * pair_C2 - 3 * a21
        G = (
            2 * (n - 1) * sum(F((N - j) ** 2, j) for j in J)
            + n * (n - 1) * N
            - 2 * (n - 1) * N
        ) / F(N**4)
        t4 = (6 * sum(a * bb for a, bb in zip(A, B)), sum(D), 3 * sum(bb * bb - d for bb, d in zip(B, D)))
        t22 = (2 * pair_AB - F(4, N) * pair_C, G, pair_BB + F(2 * n * (n - 1), N * N) - 3 * G)
        return a11, a12, a21, a22, t4, t22

    raise UnsupportedKind(f"unknown system kind {kind!r}; expected 'v', 'grp' or 'obs'")


# ---------------------------------------------------------------------------
# fourth-moment systems


@dataclass(frozen=True)
class Nuisance:
    """Plug-in values for the between-group adjustment terms."""

    mu2u_mu2v: object
    mu2v_sq: object
    mu4v: object


@dataclass(frozen=True)
class FourthMomentSystem:
    """A 2x2 system  [a11 a12; a21 a22] (mu4, mu2**2) = (rhs1, rhs2).

    ``rhs1``/``rhs2`` are the fourth-power and cross statistics minus the
    adjustment terms ``t4``/``t22``.
    """

    kind: str
    a11: object
    a12: object
    a21: object
    a22: object
    t4: object
    t22: object
    rhs1: object = None
    rhs2: object = None

    @property
    def det(self):
        return self.a11 * self.a22 - self.a12 * self.a21

    @property
    def singular(self) -> bool:
        det = self.det
        if isinstance(det, F):
            return det == 0
        scale = max(abs(self.a11 * self.a22), abs(self.a12 * self.a21))
        return abs(det) <= SINGULAR_RTOL * scale

    def with_statistics(self, stat4, stat22) -> FourthMomentSystem:
        return replace(self, rhs1=stat4 - self.t4, rhs2=stat22 - self.t22)

    def solve(self):
        """Return (mu4, mu2**2); raises SingularSystem."""
        if self.singular:
            raise SingularSystem(self.kind, self.det)
        det = self.det
        mu4 = (self.a22 * self.rhs1 - self.a12 * self.rhs2) / det
        mu2_sq = (self.a11 * self.rhs2 - self.a21 * self.rhs1) / det
        return mu4, mu2_sq


def build_fourth_system(kind, summary: DesignSummary, nuisance: Nuisance | None = None, *, exact=False):
    """Coefficient matrix and adjustment terms for kind 'v', 'grp' or 'obs'."""
    a11, a12, a21, a22, c4, c22 = fourth_coefficients(kind, tuple(summary.J))
    conv = _conv(exact)
    if kind == "v":
        t4 = t22 = conv(0)
    else:
        if nuisance is None:
            raise ValueError(f"system '{kind}' needs nuisance plug-ins")
        nu = (nuisance.mu2u_mu2v, nuisance.mu4v, nuisance.mu2v_sq)
        t4 = sum(conv(c) * x for c, x in zip(c4, nu))
        t22 = sum(conv(c) * x for c, x in zip(c22, nu))
    return FourthMomentSystem(kind, conv(a11), conv(a12), conv(a21), conv(a22), t4, t22)


# ---------------------------------------------------------------------------
# estimators


def _negatives(**values) -> tuple[str, ...]:
    return tuple(
        k for k, v in values.items() if v is not None and np.ndim(v) == 0 and v < 0
    )


@dataclass(frozen=True)
class WithinEstimates2L:
    mu2v: object
    mu3v: object
    mu4v: object = None
    mu2v_sq: object = None
    det_v: object = None
    system: FourthMomentSystem | None = field(default=None, repr=False)
    error: str | None = None
    negative: tuple[str, ...] = ()


@dataclass(frozen=True)
class BetweenEstimates2L:
    scheme: str
    mu2u: object
    mu3u: object
    mu4u: object = None
    mu2u_sq: object = None
    det_u: object = None
    system: FourthMomentSystem | None = field(default=None, repr=False)
    error: str | None = None
    negative: tuple[str, ...] = ()

    def require_fourth(self):
        if self.error == "SingularSystem":
            raise SingularSystem(self.scheme, self.det_u)
        if self.error == "MissingWithinFourth":
            raise MissingWithinFourth("within-group fourth-moment solve failed")
        return self.mu4u, self.mu2u_sq


def estimate_within(data, summary: DesignSummary | None = None, *, fourth=True) -> WithinEstimates2L:
    """Within-group estimates of mu2v, mu3v and (if solvable) mu4v, mu2v**2."""
    st = _as_stats(data)
    summary = summary or design_summary(st.sizes)
    conv = _conv(st.exact)
    c = _order23_constants(tuple(summary.J))
    mu2v = st.s2 / conv(c["v2_den"])
    mu3v = st.s3 / conv(c["v3_den"])
    if not fourth:
        return WithinEstimates2L(mu2v, mu3v, negative=_negatives(mu2v=mu2v))
    system = build_fourth_system("v", summary, exact=st.exact).with_statistics(st.s4, st.pairs)
    try:
        mu4v, mu2v_sq = system.solve()
    except SingularSystem:
        return WithinEstimates2L(
            mu2v, mu3v, det_v=system.det, system=system, error="SingularSystem",
            negative=_negatives(mu2v=mu2v),
        )
    return WithinEstimates2L(
        mu2v, mu3v, mu4v, mu2v_sq, system.det, system,
        negative=_negatives(mu2v=mu2v, mu4v=mu4v, mu2v_sq=mu2v_sq),
    )


def _estimate_between(scheme, data, summary, within, fourth, nuisance):
    st = _as_stats(data)
    summary = summary or design_summary(st.sizes)
    conv = _conv(st.exact)
    c = _order23_constants(tuple(summary.J))
    weights = None if scheme == "grp" else summary.J
    b2, b3, b4, pairs = between_sums(st.means, weights)
    if scheme == "grp":
        mu2u = b2 * conv(c["grp2_stat"]) - within.mu2v * conv(c["grp2_v"])
        mu3u = b3 * conv(c["grp3_stat"]) - within.mu3v * conv(c["grp3_v"])
    else:
        mu2u = (b2 - within.mu2v * conv(c["obs2_v"])) / conv(c["obs2_den"])
        mu3u = (b3 - within.mu3v * conv(c["obs3_v"])) / conv(c["obs3_den"])

    def result(**kw):
        neg = _negatives(mu2u=mu2u, mu4u=kw.get("mu4u"), mu2u_sq=kw.get("mu2u_sq"))
        return BetweenEstimates2L(scheme, mu2u, mu3u, negative=neg, **kw)

    if not fourth:
        return result()
    if nuisance is None:
        if within.mu4v is None:
            return result(error="MissingWithinFourth")
        nuisance = Nuisance(mu2u * within.mu2v, within.mu2v_sq, within.mu4v)
    system = build_fourth_system(scheme, summary, nuisance, exact=st.exact)
    system = system.with_statistics(b4, pairs)
    try:
        mu4u, mu2u_sq = system.solve()
    except SingularSystem:
        return result(det_u=system.det, system=system, error="SingularSystem")
    return result(mu4u=mu4u, mu2u_sq=mu2u_sq, det_u=system.det, system=system)


def estimate_between_grp(data, summary=None, within=None, *, fourth=True, nuisance=None):
    """Between-group estimates under group-level averaging.

    ``nuisance`` overrides the plug-ins of the fourth-moment adjustment terms
    (e.g. with true values when auditing the system itself).
    """
    within = within or estimate_within(data, summary, fourth=fourth and nuisance is None)
    return _estimate_between("grp", data, summary, within, fourth, nuisance)


def estimate_between_obs(data, summary=None, within=None, *, fourth=True, nuisance=None):
    """Between-group estimates under observation-level averaging."""
    within = within or estimate_within(data, summary, fourth=fourth and nuisance is None)
    return _estimate_between("obs", data, summary, within, fourth, nuisance)


@dataclass(frozen=True)
class TwoLevelEstimates:
    summary: DesignSummary
    within: WithinEstimates2L
    between: dict


def estimate_two_level(data, *, schemes=SCHEMES, fourth=True) -> TwoLevelEstimates:
    """Validate, then run the within and requested between estimators."""
    if isinstance(data, TwoLevelStats):
        summary = design_summary(data.sizes)
    else:
        data = data if isinstance(data, TwoLevelDataset) else TwoLevelDataset(data)
        summary = validate_two_level(data)
    st = _as_stats(data)
    within = estimate_within(st, summary, fourth=fourth)
    between = {s: _estimate_between(s, st, summary, within, fourth, None) for s in schemes}
    return TwoLevelEstimates(summary, within, between)


def evaluate(stats: TwoLevelStats, nuisance_by_scheme=None, ids=None) -> dict:
    """Two-level estimates as a flat mapping ``{id: value}``.

    Ids: mu2v, mu3v, mu4v, mu2v_sq and mu2u_<s>, mu3u_<s>, mu4u_<s>,
    mu2u_sq_<s> for s in (grp, obs).  Unsolvable fourth-order values are None.
    ``ids`` restricts the work to what those ids need.
    """
    summary = design_summary(stats.sizes)
    want = None if ids is None else set(ids)
    fourth = want is None or any(k.startswith(("mu4", "mu2v_sq", "mu2u_sq")) for k in want)
    schemes = [s for s in SCHEMES if want is None or any(k.endswith("_" + s) for k in want)]
    w = estimate_within(stats, summary, fourth=fourth)
    out = {"mu2v": w.mu2v, "mu3v": w.mu3v, "mu4v": w.mu4v, "mu2v_sq": w.mu2v_sq}
    for s in schemes:
        nu = None if nuisance_by_scheme is None else nuisance_by_scheme[s]
        b = _estimate_between(s, stats, summary, w, fourth, nu)
        out.update({f"mu2u_{s}": b.mu2u, f"mu3u_{s}": b.mu3u, f"mu4u_{s}": b.mu4u, f"mu2u_sq_{s}": b.mu2u_sq})
    return out
