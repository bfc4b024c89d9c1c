"""Datasets, validation and the exact design constants the estimators consume."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from numbers import Rational
from typing import Sequence

from .errors import (
    GroupTooSmall,
    NonFiniteValue,
    SubgroupCountTooSmall,
    SubgroupTooSmall,
    TooFewGroups,
)


def _is_exact(x) -> bool:
    return isinstance(x, Rational) and not isinstance(x, bool)


@dataclass(frozen=True)
class TwoLevelDataset:
    """Observations ``y[i][j]`` grouped by level-two unit ``i``.

    Values given as ``int``/``Fraction`` keep the whole pipeline in exact
    rational arithmetic; anything else is treated as float.
    """

    groups: tuple

    def __init__(self, groups: Sequence[Sequence]):
        object.__setattr__(self, "groups", tuple(tuple(g) for g in groups))

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(g) for g in self.groups)

    @property
    def exact(self) -> bool:
        return all(_is_exact(x) for g in self.groups for x in g)


@dataclass(frozen=True)
class ThreeLevelDataset:
    """Observations ``y[i][j][k]``: groups of subgroups of observations."""

    groups: tuple

    def __init__(self, groups: Sequence[Sequence[Sequence]]):
        object.__setattr__(
            self, "groups", tuple(tuple(tuple(s) for s in g) for g in groups)
        )

    @property
    def sizes(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(len(s) for s in g) for g in self.groups)

    @property
    def exact(self) -> bool:
        return all(_is_exact(x) for g in self.groups for s in g for x in s)


@dataclass(frozen=True)
class DesignSummary:
    """Power sums of a size profile ``J``.

    ``inv[k]`` is sum of 1/J_i**k (exact Fraction) and ``pow[k]`` is sum of
    J_i**k (int), both for k = 1..4; index 0 is unused padding.
    """

    n: int
    J: tuple[int, ...]
    N: int
    inv: tuple
    pow: tuple

    @property
    def inv1(self) -> Fraction:
        return self.inv[1]

    @property
    def inv2(self) -> Fraction:
        return self.inv[2]

    @property
    def inv3(self) -> Fraction:
        return self.inv[3]

    @property
    def balanced(self) -> bool:
        return len(set(self.J)) == 1


@lru_cache(maxsize=512)
def design_summary(sizes: tuple[int, ...]) -> DesignSummary:
    """Summary of a size profile; no assumption checks (see ``validate_*``)."""
    sizes = tuple(int(j) for j in sizes)
    inv = (None,) + tuple(sum(Fraction(1, j**k) for j in sizes) for k in range(1, 5))
    pw = (None,) + tuple(sum(j**k for j in sizes) for k in range(1, 5))
    return DesignSummary(n=len(sizes), J=sizes, N=sum(sizes), inv=inv, pow=pw)


@dataclass(frozen=True)
class NestedDesignSummary:
    """Design constants of a three-level size profile ``K[i][j]``.

    ``groups[i]`` summarises the subgroup sizes of group ``i`` (its ``N`` is
    K_i) and ``outer`` summarises the group totals K_i.  ``sq``/``cube`` hold
    the global sums of K_ij**2 and K_ij**3, with per-group versions in
    ``sq_by_group``/``cube_by_group``.
    """

    K: tuple[tuple[int, ...], ...]
    groups: tuple[DesignSummary, ...]
    outer: DesignSummary
    sq: int
    cube: int
    sq_by_group: tuple[int, ...]
    cube_by_group: tuple[int, ...]

    @property
    def n(self) -> int:
        return self.outer.n

    @property
    def J(self) -> tuple[int, ...]:
        return tuple(g.n for g in self.groups)

    @property
    def K_i(self) -> tuple[int, ...]:
        return self.outer.J

    @property
    def N(self) -> int:
        return self.outer.N

    @property
    def balanced(self) -> bool:
        return len({k for row in self.K for k in row}) == 1 and len(set(self.J)) == 1


@lru_cache(maxsize=512)
def nested_design_summary(K: tuple[tuple[int, ...], ...]) -> NestedDesignSummary:
    K = tuple(tuple(int(k) for k in row) for row in K)
    groups = tuple(design_summary(row) for row in K)
    outer = design_summary(tuple(g.N for g in groups))
    sq_by_group = tuple(g.pow[2] for g in groups)
    cube_by_group = tuple(g.pow[3] for g in groups)
    return NestedDesignSummary(
        K=K,
        groups=groups,
        outer=outer,
        sq=sum(sq_by_group),
        cube=sum(cube_by_group),
        sq_by_group=sq_by_group,
        cube_by_group=cube_by_group,
    )


def _check_finite(value, position):
    if _is_exact(value):
        return
    try:
        ok = math.isfinite(value)
    except TypeError:
        ok = False
    if not ok:
        raise NonFiniteValue(position, value)


def validate_two_level(raw) -> DesignSummary:
    """Check n >= 3, every J_i >= 3 and finite values; return the design summary."""
    data = raw if isinstance(raw, TwoLevelDataset) else TwoLevelDataset(raw)
    if len(data.groups) < 3:
        raise TooFewGroups(len(data.groups))
    for i, g in enumerate(data.groups):
        if len(g) < 3:
            raise GroupTooSmall(i, len(g))
    for i, g in enumerate(data.groups):
        for j, y in enumerate(g):
            _check_finite(y, (i, j))
    return design_summary(data.sizes)


def validate_three_level(raw) -> NestedDesignSummary:
    """Check n >= 3, J_i >= 3, K_ij >= 3 and finite values; return the nested summary."""
    data = raw if isinstance(raw, ThreeLevelDataset) else ThreeLevelDataset(raw)
    if len(data.groups) < 3:
        raise TooFewGroups(len(data.groups))
    for i, g in enumerate(data.groups):
        if len(g) < 3:
            raise SubgroupCountTooSmall(i, len(g))
    for i, g in enumerate(data.groups):
        for j, s in enumerate(g):
            if len(s) < 3:
                raise SubgroupTooSmall(i, j, len(s))
    for i, g in enumerate(data.groups):
        for j, s in enumerate(g):
            for k, y in enumerate(s):
                _check_finite(y, (i, j, k))
    return nested_design_summary(data.sizes)
