"""Exact-expectation enumeration and Monte Carlo bias checks.

Enumeration sums probability x statistic over every joint outcome of
finite-support latent draws, in rational arithmetic.  Outcomes that produce
identical sufficient statistics are merged before the joint product (the
estimators only see those statistics), so desk-scale designs stay cheap
without giving up exactness.

Monte Carlo runs in blocks of ``BLOCK`` replications; block ``b`` draws from
``SeedSequence([seed, b])``, so for a given block size every replication
depends only on (seed, its index) and results do not depend on run order.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction as F
from itertools import product
from typing import Mapping, Sequence

import numpy as np

from . import three_level, two_level
from .design import (
    ThreeLevelDataset,
    TwoLevelDataset,
    design_summary,
    validate_three_level,
    validate_two_level,
)
from .errors import EnumerationTooLarge, InvalidDistribution, MissingWithinFourth, SingularSystem
from .kernel import centered_power_sums, true_moments

BUDGET = 20_000_000
BLOCK = 16384


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finite zero-mean law given as (value, probability) atoms, held exactly."""

    atoms: tuple

    def __post_init__(self):
        atoms = tuple((F(x), F(p)) for x, p in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        if not atoms:
            raise InvalidDistribution("distribution needs at least one atom")
        if any(p <= 0 for _, p in atoms):
            raise InvalidDistribution("probabilities must be positive")
        if sum(p for _, p in atoms) != 1:
            raise InvalidDistribution(
                f"probabilities sum to {sum(p for _, p in atoms)}, not 1"
            )
        mean = sum(x * p for x, p in atoms)
        if mean != 0:
            raise InvalidDistribution(f"mean is {mean}, must be exactly 0")
        if len(atoms) == 1 and atoms[0][0] != 0:
            raise InvalidDistribution("a single atom must sit at 0")

    @classmethod
    def parse(cls, text: str) -> DiscreteDistribution:
        """Parse ``"v1:p1,v2:p2,..."``; decimals are converted exactly."""
        atoms = []
        for part in text.split(","):
            try:
                x, p = part.split(":")
                atoms.append((F(x.strip()), F(p.strip())))
            except ValueError as exc:
                raise InvalidDistribution(f"bad atom {part!r} in {text!r}") from exc
        return cls(tuple(atoms))

    @classmethod
    def point(cls) -> DiscreteDistribution:
        return cls(((0, 1),))

    @property
    def moments(self):
        return true_moments(self)

    def __str__(self):
        return ",".join(f"{x}:{p}" for x, p in self.atoms)


def _check_budget(count, budget):
    if count > budget:
        raise EnumerationTooLarge(count, budget)


def _is_three_level(design) -> bool:
    return isinstance(design[0], (tuple, list))


def _as_list(statistic):
    if isinstance(statistic, str):
        return [statistic], True
    return list(statistic), False


# ---------------------------------------------------------------------------
# true values


def true_values(design, dists: Mapping[str, DiscreteDistribution]) -> dict:
    """True target of every estimator id for the given latent laws."""
    out = {"const": F(1)}
    m = {lvl: d.moments for lvl, d in dists.items()}
    if _is_three_level(design):
        out.update(mu2w=m["w"].mu2, mu3w=m["w"].mu3)
        for s in two_level.SCHEMES:
            out.update({f"mu2v_{s}": m["v"].mu2, f"mu3v_{s}": m["v"].mu3,
                        f"mu2u_{s}": m["u"].mu2, f"mu3u_{s}": m["u"].mu3})
        return out
    out.update(mu2v=m["v"].mu2, mu3v=m["v"].mu3, mu4v=m["v"].mu4, mu2v_sq=m["v"].mu2 ** 2)
    for s in two_level.SCHEMES:
        out.update({f"mu2u_{s}": m["u"].mu2, f"mu3u_{s}": m["u"].mu3,
                    f"mu4u_{s}": m["u"].mu4, f"mu2u_sq_{s}": m["u"].mu2 ** 2})
    return out


def true_nuisance(dists) -> two_level.Nuisance:
    mu, mv = dists["u"].moments, dists["v"].moments
    return two_level.Nuisance(mu.mu2 * mv.mu2, mv.mu2 ** 2, mv.mu4)


def _pick(values: dict, ids, design):
    out = {}
    for sid in ids:
        if sid == "const":
            out[sid] = F(1)
            continue
        if sid not in values:
            raise KeyError(f"unknown statistic {sid!r}")
        if values[sid] is None:
            kind = "v" if sid in ("mu4v", "mu2v_sq") else sid.rsplit("_", 1)[1]
            if kind != "v" and values.get("mu4v") is None:
                raise MissingWithinFourth(f"{sid} needs the within-group fourth-moment solve")
            system = two_level.build_fourth_system(
                kind, design_summary(tuple(design)), two_level.Nuisance(0, 0, 0), exact=True
            )
            raise SingularSystem(kind, system.det)
        out[sid] = values[sid]
    return out


# ---------------------------------------------------------------------------
# two-level enumeration


def _two_level_group_laws(J, du, dv, counter):
    """Per group: merged law of (u + mean_v, s2, s3, s4, pairs)."""
    cache = {}
    laws = []
    for j in J:
        if j not in cache:
            law = defaultdict(F)
            for combo in product(dv.atoms, repeat=j):
                counter[0] += 1
                p = math.prod(q for _, q in combo)
                c = centered_power_sums([x for x, _ in combo])
                law[(c.mean, c.s2, c.s3, c.s4, c.pairs)] += p
            cache[j] = law
        full = defaultdict(F)
        for (mean, s2, s3, s4, pr), p in cache[j].items():
            for u, pu in du.atoms:
                full[(u + mean, s2, s3, s4, pr)] += p * pu
        laws.append(list(full.items()))
    return laws


def _float_stats(st):
    if isinstance(st, two_level.TwoLevelStats):
        return two_level.TwoLevelStats(
            st.sizes, tuple(float(m) for m in st.means), float(st.s2), float(st.s3),
            float(st.s4), float(st.pairs),
        )
    return three_level.ThreeLevelStats(
        st.sizes, float(st.s2w), float(st.s3w),
        {s: tuple(float(x) for x in v) for s, v in st.vsums.items()},
        None if st.gmeans is None else {s: tuple(float(x) for x in v) for s, v in st.gmeans.items()},
    )


def _enumerate_two_level(J, dists, ids, nuisance, method, budget, exact=True):
    du, dv = dists["u"], dists["v"]
    nu = None
    if nuisance == "true":
        tn = true_nuisance(dists)
        if not exact:
            tn = two_level.Nuisance(*(float(x) for x in tn.__dict__.values()))
        nu = {s: tn for s in two_level.SCHEMES}
    totals = defaultdict(F) if exact else defaultdict(float)
    mass = F(0) if exact else 0.0
    if method == "full":
        n, N = len(J), sum(J)
        _check_budget(len(du.atoms) ** n * len(dv.atoms) ** N, budget)
        for us in product(du.atoms, repeat=n):
            for vs in product(dv.atoms, repeat=N):
                p = math.prod(q for _, q in us) * math.prod(q for _, q in vs)
                groups, pos = [], 0
                for i, j in enumerate(J):
                    groups.append([us[i][0] + x for x, _ in vs[pos:pos + j]])
                    pos += j
                st = two_level.two_level_stats(TwoLevelDataset(groups))
                if not exact:
                    st, p = _float_stats(st), float(p)
                vals = _pick(two_level.evaluate(st, nu, ids), ids, J)
                for k, v in vals.items():
                    totals[k] += p * v
                mass += p
    else:
        counter = [0]
        raw = sum(len(dv.atoms) ** j for j in set(J))
        _check_budget(raw, budget)
        laws = _two_level_group_laws(J, du, dv, counter)
        _check_budget(raw + math.prod(len(law) for law in laws), budget)
        for combo in product(*laws):
            p = math.prod(q for _, q in combo)
            keys = [k for k, _ in combo]
            st = two_level.TwoLevelStats(
                sizes=tuple(J),
                means=tuple(k[0] for k in keys),
                s2=sum(k[1] for k in keys),
                s3=sum(k[2] for k in keys),
                s4=sum(k[3] for k in keys),
                pairs=sum(k[4] for k in keys),
                exact=True,
            )
            if not exact:
                st, p = _float_stats(st), float(p)
            vals = _pick(two_level.evaluate(st, nu, ids), ids, J)
            for k, v in vals.items():
                totals[k] += p * v
            mass += p
    assert abs(mass - 1) <= (0 if exact else 1e-12), f"enumerated probability mass is {mass}"
    return dict(totals)


# ---------------------------------------------------------------------------
# three-level enumeration


def _subgroup_law(K, dw, counter):
    law = defaultdict(F)
    for combo in product(dw.atoms, repeat=K):
        counter[0] += 1
        p = math.prod(q for _, q in combo)
        c = centered_power_sums([x for x, _ in combo])
        law[(c.mean, c.s2, c.s3)] += p
    return list(law.items())


def _group_law(Ks, dv, dw, counter, budget, cache):
    """Merged law of one group's (mean_grp, mean_obs, A2g, A3g, A2o, A3o, s2w, s3w)."""
    subs = []
    for k in Ks:
        if k not in cache:
            cache[k] = _subgroup_law(k, dw, counter)
        subs.append([((v + m, s2, s3), pv * p) for (m, s2, s3), p in cache[k] for v, pv in dv.atoms])
    _check_budget(counter[0] + math.prod(len(s) for s in subs), budget)
    Ki = sum(Ks)
    law = defaultdict(F)
    for combo in product(*subs):
        counter[0] += 1
        p = math.prod(q for _, q in combo)
        means = [c[0][0] for c in combo]
        cg = sum(means) / len(means)
        co = sum(k * m for k, m in zip(Ks, means)) / Ki
        key = (
            cg, co,
            sum((m - cg) ** 2 for m in means), sum((m - cg) ** 3 for m in means),
            sum((m - co) ** 2 for m in means), sum((m - co) ** 3 for m in means),
            sum(c[0][1] for c in combo), sum(c[0][2] for c in combo),
        )
        law[key] += p
    return list(law.items())


def _stats3(K, keys, gmeans):
    return three_level.ThreeLevelStats(
        sizes=K,
        s2w=sum(k[6] for k in keys),
        s3w=sum(k[7] for k in keys),
        vsums={"grp": (sum(k[2] for k in keys), sum(k[3] for k in keys)),
               "obs": (sum(k[4] for k in keys), sum(k[5] for k in keys))},
        gmeans=gmeans,
        exact=True,
    )


def _enumerate_three_level(K, dists, ids, method, budget, exact=True):
    du, dv, dw = dists["u"], dists["v"], dists["w"]
    K = tuple(tuple(r) for r in K)
    need_u = any(s.startswith(("mu2u", "mu3u")) for s in ids)
    totals = defaultdict(F) if exact else defaultdict(float)

    if method == "full":
        n = len(K)
        m = sum(len(r) for r in K)
        N = sum(sum(r) for r in K)
        _check_budget(len(du.atoms) ** n * len(dv.atoms) ** m * len(dw.atoms) ** N, budget)
        mass = F(0) if exact else 0.0
        for us in product(du.atoms, repeat=n):
            for vs in product(dv.atoms, repeat=m):
                for ws in product(dw.atoms, repeat=N):
                    p = math.prod(q for _, q in us + vs + ws)
                    groups, vi, wi = [], 0, 0
                    for i, row in enumerate(K):
                        g = []
                        for k in row:
                            g.append([us[i][0] + vs[vi][0] + x for x, _ in ws[wi:wi + k]])
                            vi += 1
                            wi += k
                        groups.append(g)
                    st = three_level.three_level_stats(ThreeLevelDataset(groups))
                    if not exact:
                        st, p = _float_stats(st), float(p)
                    for key, v in _pick(three_level.evaluate(st), ids, K).items():
                        totals[key] += p * v
                    mass += p
        assert abs(mass - 1) <= (0 if exact else 1e-12), f"enumerated probability mass is {mass}"
        return dict(totals)

    counter = [0]
    cache = {}
    laws = [_group_law(row, dv, dw, counter, budget, cache) for row in K]
    for law in laws:
        assert sum(p for _, p in law) == 1

    if not need_u:
        # w- and v-level estimators are affine in sums of per-group
        # statistics, so their expectation is the estimator evaluated at
        # the summed per-group expectations.
        expected = [tuple(sum(p * k[idx] for k, p in law) for idx in range(8)) for law in laws]
        st = _stats3(K, expected, gmeans=None)
        if not exact:
            st = _float_stats(st)
        return _pick(three_level.evaluate(st, levels=("w", "v")), ids, K)

    shifted = []
    for law in laws:
        full = defaultdict(F)
        for key, p in law:
            for u, pu in du.atoms:
                full[(key[0] + u, key[1] + u) + key[2:]] += p * pu
        shifted.append(list(full.items()))
    _check_budget(counter[0] + math.prod(len(s) for s in shifted), budget)
    mass = F(0) if exact else 0.0
    for combo in product(*shifted):
        p = math.prod(q for _, q in combo)
        keys = [c[0] for c in combo]
        gm = {"grp": tuple(k[0] for k in keys), "obs": tuple(k[1] for k in keys)}
        st = _stats3(K, keys, gm)
        if not exact:
            st, p = _float_stats(st), float(p)
        for key, v in _pick(three_level.evaluate(st), ids, K).items():
            totals[key] += p * v
        mass += p
    assert abs(mass - 1) <= (0 if exact else 1e-12), f"enumerated probability mass is {mass}"
    return dict(totals)


def enumerate_expectations(design, dists, statistics, *, nuisance="plugin",
                           method="structured", exact=True, budget=BUDGET) -> dict:
    """Exact expectations ``{id: Fraction}`` for several statistics at once.

    ``design`` is a tuple of group sizes (two-level) or a tuple of tuples of
    subgroup sizes (three-level).  ``dists`` maps level names ('u', 'v' and,
    for three levels, 'w') to :class:`DiscreteDistribution`.
    ``nuisance='true'`` builds the two-level fourth-moment adjustment terms
    from the true latent moments instead of plug-in estimates.
    ``method='full'`` enumerates raw latent draws without merging.
    ``exact=False`` evaluates the estimators in float arithmetic on the same
    outcomes (the probability weights are rounded to float too).
    """
    ids, _ = _as_list(statistics)
    if _is_three_level(design):
        validate_three_level([[[0] * k for k in row] for row in design])
        return _enumerate_three_level(design, dists, ids, method, budget, exact)
    validate_two_level([[0] * j for j in design])
    return _enumerate_two_level(tuple(design), dists, ids, nuisance, method, budget, exact)


def enumerate_expectation(design, dists, statistic, **kw):
    """Exact expectation of one estimator id (see :func:`enumerate_expectations`)."""
    return enumerate_expectations(design, dists, [statistic], **kw)[statistic]


def enumerate_weighted_power(weights: Sequence, dist: DiscreteDistribution, k: int,
                             *, method="convolve", budget=BUDGET):
    """E[(sum_l w_l x_l)**k] over i.i.d. draws from ``dist`` by enumeration.

    ``convolve`` folds one draw at a time into the exact law of the partial
    sum; ``full`` walks every joint outcome.
    """
    weights = [F(w) for w in weights]
    if method == "full":
        _check_budget(len(dist.atoms) ** len(weights), budget)
        total = mass = F(0)
        for combo in product(dist.atoms, repeat=len(weights)):
            p = math.prod(q for _, q in combo)
            total += p * sum(w * x for w, (x, _) in zip(weights, combo)) ** k
            mass += p
        assert mass == 1
        return total
    law = {F(0): F(1)}
    for w in weights:
        nxt = defaultdict(F)
        for s, p in law.items():
            for x, q in dist.atoms:
                nxt[s + w * x] += p * q
        law = nxt
    assert sum(law.values()) == 1
    return sum(p * s**k for s, p in law.items())


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class SimulationPlan:
    design: tuple
    dists: Mapping[str, DiscreteDistribution]
    reps: int
    seed: int = 0

    def __post_init__(self):
        if _is_three_level(self.design):
            K = tuple(tuple(int(k) for k in r) for r in self.design)
            validate_three_level([[[0] * k for k in row] for row in K])
            need = ("u", "v", "w")
        else:
            K = tuple(int(j) for j in self.design)
            validate_two_level([[0] * j for j in K])
            need = ("u", "v")
        object.__setattr__(self, "design", K)
        missing = [lvl for lvl in need if lvl not in self.dists]
        if missing:
            raise InvalidDistribution(f"missing distributions for levels {missing}")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def levels(self) -> int:
        return 3 if _is_three_level(self.design) else 2


@dataclass(frozen=True)
class BiasReport:
    estimator: str
    true_value: float
    mean: float | None
    se: float | None
    z: float | None
    reps: int
    failures: int = 0
    degenerate: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _draw(dist, u):
    values = np.array([float(x) for x, _ in dist.atoms])
    cum = np.cumsum([float(p) for _, p in dist.atoms])
    idx = np.minimum(np.searchsorted(cum, u, side="right"), len(values) - 1)
    return values[idx]


def _layout(design):
    if _is_three_level(design):
        flat = [k for row in design for k in row]
        sub_of_obs = np.repeat(np.arange(len(flat)), flat)
        grp_of_sub = np.repeat(np.arange(len(design)), [len(r) for r in design])
        return len(design), len(flat), sum(flat), grp_of_sub[sub_of_obs], sub_of_obs
    return len(design), 0, sum(design), np.repeat(np.arange(len(design)), design), None


def _sample_block(design, dists, rng, rows):
    """(rows, N) observations; u, v (, w) columns are drawn in that order."""
    n, m, N, grp_of_obs, sub_of_obs = _layout(design)
    U = rng.random((rows, n + m + N))
    u = _draw(dists["u"], U[:, :n])
    if sub_of_obs is None:
        return u[:, grp_of_obs] + _draw(dists["v"], U[:, n:])
    v = _draw(dists["v"], U[:, n:n + m])
    w = _draw(dists["w"], U[:, n + m:])
    return u[:, grp_of_obs] + v[:, sub_of_obs] + w


def sample_dataset(design, dists, rng: np.random.Generator):
    """One dataset drawn from the additive model."""
    y = _sample_block(design, dists, rng, 1)[0]
    if _is_three_level(design):
        groups, pos = [], 0
        for row in design:
            g = []
            for k in row:
                g.append(tuple(float(x) for x in y[pos:pos + k]))
                pos += k
            groups.append(g)
        return ThreeLevelDataset(groups)
    groups, pos = [], 0
    for j in design:
        groups.append(tuple(float(x) for x in y[pos:pos + j]))
        pos += j
    return TwoLevelDataset(groups)


def _block_values(design, y):
    if _is_three_level(design):
        return three_level.evaluate(three_level.stats_from_array(y, design))
    from . import _accel

    means, p2, p3, p4 = _accel.grouped_central_sums(y, _accel.offsets_from_sizes(design))
    st = two_level.TwoLevelStats(
        sizes=tuple(design), means=means, s2=p2.sum(axis=1), s3=p3.sum(axis=1),
        s4=p4.sum(axis=1), pairs=((p2 * p2 - p4) / 2).sum(axis=1),
    )
    return two_level.evaluate(st)


def default_statistics(design) -> list[str]:
    return [k for k in true_values(design, _dummy_dists(design)) if k != "const"]


def _dummy_dists(design):
    d = DiscreteDistribution.point()
    return {"u": d, "v": d, "w": d}


def run_monte_carlo(plan: SimulationPlan, statistics=None, *, block=BLOCK) -> list[BiasReport]:
    """Monte Carlo mean, standard error and z-score per estimator id.

    Replications where an estimator is unavailable (singular fourth-moment
    system) or non-finite are counted in ``failures`` and excluded.
    """
    ids = default_statistics(plan.design) if statistics is None else list(statistics)
    truth = true_values(plan.design, plan.dists)
    acc = {s: [0, 0.0, 0.0, 0] for s in ids}  # count, mean, M2, failures
    nblocks = -(-plan.reps // block)
    for b in range(nblocks):
        rows = min(block, plan.reps - b * block)
        rng = np.random.default_rng(np.random.SeedSequence([plan.seed, b]))
        y = _sample_block(plan.design, plan.dists, rng, rows)
        values = _block_values(plan.design, y)
        for s in ids:
            a = acc[s]
            x = values.get(s)
            if x is None:
                a[3] += rows
                continue
            x = np.broadcast_to(np.asarray(x, dtype=np.float64), (rows,))
            ok = np.isfinite(x)
            a[3] += int(rows - ok.sum())
            x = x[ok]
            if x.size == 0:
                continue
            nb, mb = x.size, float(x.mean())
            m2b = float(((x - mb) ** 2).sum())
            n0 = a[0]
            tot = n0 + nb
            delta = mb - a[1]
            a[1] += delta * nb / tot
            a[2] += m2b + delta * delta * n0 * nb / tot
            a[0] = tot
    reports = []
    for s in ids:
        count, mean, m2, fails = acc[s]
        true = float(truth[s])
        if count == 0:
            reports.append(BiasReport(s, true, None, None, None, plan.reps, fails, True))
            continue
        if count < 2:
            reports.append(BiasReport(s, true, mean, None, None, plan.reps, fails, True))
            continue
        se = math.sqrt(m2 / (count - 1) / count)
        z = (mean - true) / se if se > 0 else None
        reports.append(BiasReport(s, true, mean, se, z, plan.reps, fails, se == 0))
    return reports
