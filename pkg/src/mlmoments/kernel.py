"""Expected powers of weighted sums and centered power sums.

Everything here is written against plain arithmetic so it runs unchanged on
``float`` and on ``fractions.Fraction``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Sequence

from .errors import UnsupportedOrder


@dataclass(frozen=True)
class WeightedSumSpec:
    """Weights of S = sum(w_l * x_l) over i.i.d. zero-mean draws with moments mu2..mu4."""

    weights: tuple
    mu2: object = 0
    mu3: object = 0
    mu4: object = 0

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(self.weights))
        if not self.weights:
            raise ValueError("weights must be non-empty")
        for w in self.weights:
            if not isinstance(w, Rational) and not math.isfinite(w):
                raise ValueError(f"non-finite weight {w!r}")


@dataclass(frozen=True)
class TrueMoments:
    mu2: object
    mu3: object
    mu4: object

    def __post_init__(self):
        if self.mu2 < 0:
            raise ValueError(f"mu2 must be non-negative, got {self.mu2}")
        if self.mu4 < self.mu2 * self.mu2:
            raise ValueError(f"mu4={self.mu4} violates mu4 >= mu2**2")


def expected_power(spec: WeightedSumSpec, k: int):
    """E[S**k] for k in {2, 3, 4}."""
    w = spec.weights
    if k == 2:
        return spec.mu2 * sum(x * x for x in w)
    if k == 3:
        return spec.mu3 * sum(x**3 for x in w)
    if k == 4:
        p2 = sum(x * x for x in w)
        p4 = sum(x**4 for x in w)
        return spec.mu4 * p4 + 3 * spec.mu2 * spec.mu2 * (p2 * p2 - p4)
    raise UnsupportedOrder(f"order {k} not in (2, 3, 4)")


def true_moments(dist) -> TrueMoments:
    """Exact central moments of a zero-mean finite distribution (atoms of (value, prob))."""
    m = [sum(Fraction(p) * Fraction(x) ** k for x, p in dist.atoms) for k in (2, 3, 4)]
    return TrueMoments(*m)


def exact_sum(values):
    """Sum that stays exact for rationals and is correctly rounded for floats."""
    values = list(values)
    if all(isinstance(v, Rational) for v in values):
        return sum(values, Fraction(0))
    return math.fsum(values)


@dataclass(frozen=True)
class CenteredSums:
    mean: object
    s2: object
    s3: object
    s4: object
    pairs: object  # sum over j < j' of r_j**2 * r_j'**2


def centered_power_sums(values: Sequence) -> CenteredSums:
    """Two-pass residual power sums around the sample mean.

    Float input is accumulated with ``math.fsum``; rational input stays exact.
    """
    if len(values) == 0:
        raise ValueError("values must be non-empty")
    mean = exact_sum(values) / len(values)
    r = [x - mean for x in values]
    s2 = exact_sum(x * x for x in r)
    s3 = exact_sum(x**3 for x in r)
    s4 = exact_sum(x**4 for x in r)
    return CenteredSums(mean, s2, s3, s4, (s2 * s2 - s4) / 2)
