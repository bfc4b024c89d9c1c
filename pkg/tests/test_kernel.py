from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlmoments.errors import UnsupportedOrder
from mlmoments.kernel import (
    TrueMoments,
    WeightedSumSpec,
    centered_power_sums,
    expected_power,
    true_moments,
)
from mlmoments.oracle import DiscreteDistribution, enumerate_weighted_power


def test_fourth_power_pair():
    assert expected_power(WeightedSumSpec((1, 1), mu2=1, mu4=3), 4) == 12


def test_singleton_third_power():
    c = F(-5, 2)
    assert expected_power(WeightedSumSpec((c,), mu2=1, mu3=F(7), mu4=9), 3) == 7 * c**3


def test_equal_weights_second_power():
    assert expected_power(WeightedSumSpec((F(1, 3),) * 3, mu2=2), 2) == F(2, 3)


def test_order_out_of_range():
    with pytest.raises(UnsupportedOrder):
        expected_power(WeightedSumSpec((1,), 1, 0, 1), 5)


def test_empty_weights_rejected():
    with pytest.raises(ValueError):
        WeightedSumSpec(())


@pytest.mark.parametrize(
    "atoms, expected",
    [
        (((1, F(1, 2)), (-1, F(1, 2))), (1, 0, 1)),
        (((2, F(1, 3)), (-1, F(2, 3))), (2, 2, 6)),
        (((0, 1),), (0, 0, 0)),
    ],
)
def test_true_moments(atoms, expected):
    m = true_moments(DiscreteDistribution(atoms))
    assert (m.mu2, m.mu3, m.mu4) == expected


def test_true_moments_invariants():
    with pytest.raises(ValueError):
        TrueMoments(-1, 0, 1)
    with pytest.raises(ValueError):
        TrueMoments(2, 0, 3)


def test_centered_sums_003():
    c = centered_power_sums([F(0), F(0), F(3)])
    assert (c.mean, c.s2, c.s3, c.s4, c.pairs) == (1, 6, 6, 18, 9)


def test_centered_sums_constant():
    c = centered_power_sums([F(7, 3)] * 4)
    assert (c.s2, c.s3, c.s4, c.pairs) == (0, 0, 0, 0)


def test_centered_sums_symmetric():
    c = centered_power_sums([-1.0, 1.0])
    assert (c.mean, c.s2, c.s3, c.s4, c.pairs) == (0, 2, 0, 2, 1)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.fractions(min_value=-20, max_value=20, max_denominator=6), min_size=1, max_size=8))
def test_pair_sum_matches_brute_force(values):
    c = centered_power_sums(values)
    r = [x - c.mean for x in values]
    brute = sum(r[a] ** 2 * r[b] ** 2 for a in range(len(r)) for b in range(a + 1, len(r)))
    assert c.pairs == brute
    assert c.s2 == sum(x * x for x in r)


weights = st.lists(st.fractions(min_value=-5, max_value=5, max_denominator=4), min_size=1, max_size=6)
laws = st.sampled_from(
    [
        DiscreteDistribution(((2, F(1, 3)), (-1, F(2, 3)))),
        DiscreteDistribution(((1, F(1, 2)), (-1, F(1, 2)))),
        DiscreteDistribution(((-3, F(1, 10)), (0, F(3, 5)), (1, F(3, 10)))),
    ]
)


@settings(max_examples=40, deadline=None)
@given(weights, laws, st.sampled_from([2, 3, 4]))
def test_expected_power_matches_enumeration(w, law, k):
    m = law.moments
    assert expected_power(WeightedSumSpec(w, m.mu2, m.mu3, m.mu4), k) == enumerate_weighted_power(w, law, k)


def test_enumeration_methods_agree():
    law = DiscreteDistribution(((-3, F(1, 10)), (0, F(3, 5)), (1, F(3, 10))))
    w = [F(1), F(-2, 3), F(5, 2), F(1, 7)]
    for k in (2, 3, 4):
        assert enumerate_weighted_power(w, law, k) == enumerate_weighted_power(w, law, k, method="full")


def test_float_spec_matches_exact():
    spec_f = WeightedSumSpec((0.5, -1.25, 2.0), 2.0, 2.0, 6.0)
    spec_q = WeightedSumSpec((F(1, 2), F(-5, 4), F(2)), 2, 2, 6)
    for k in (2, 3, 4):
        assert expected_power(spec_f, k) == pytest.approx(float(expected_power(spec_q, k)), rel=1e-14)


@given(st.integers(1, 40), st.fractions(min_value=0, max_value=10, max_denominator=7))
def test_equal_weights_variance(m, mu2):
    assert expected_power(WeightedSumSpec((F(1, m),) * m, mu2=mu2), 2) == mu2 / m


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.fractions(min_value=-20, max_value=20, max_denominator=5), min_size=2, max_size=7),
    st.fractions(min_value=-9, max_value=9, max_denominator=4),
    st.fractions(min_value=-3, max_value=3, max_denominator=4),
)
def test_centered_sums_shift_and_scale(values, c, s):
    base = centered_power_sums(values)
    shifted = centered_power_sums([x + c for x in values])
    scaled = centered_power_sums([x * s for x in values])
    assert (shifted.s2, shifted.s3, shifted.s4, shifted.pairs) == (base.s2, base.s3, base.s4, base.pairs)
    assert (scaled.s2, scaled.s3, scaled.s4, scaled.pairs) == (
        base.s2 * s**2, base.s3 * s**3, base.s4 * s**4, base.pairs * s**4
    )
