from fractions import Fraction as F

import pytest

from mlmoments.errors import EnumerationTooLarge, InvalidDistribution, MissingWithinFourth, SingularSystem
from mlmoments.oracle import (
    DiscreteDistribution,
    enumerate_expectation,
    enumerate_expectations,
    true_values,
)

PM1 = DiscreteDistribution(((1, F(1, 2)), (-1, F(1, 2))))
SKEW = DiscreteDistribution(((2, F(1, 3)), (-1, F(2, 3))))
POINT = DiscreteDistribution.point()


@pytest.mark.parametrize(
    "atoms",
    [
        ((1, F(1, 2)), (-1, F(1, 3))),
        ((1, F(1, 2)), (-2, F(1, 2))),
        ((1, F(3, 2)), (-1, F(-1, 2))),
        ((3, 1),),
        (),
    ],
)
def test_invalid_distributions(atoms):
    with pytest.raises(InvalidDistribution):
        DiscreteDistribution(atoms)


def test_parse_decimals_exactly():
    d = DiscreteDistribution.parse("1:0.5,-1:0.5")
    assert d.atoms == ((1, F(1, 2)), (-1, F(1, 2)))
    assert str(DiscreteDistribution.parse("0.3:0.4, -0.2:0.6")) == "3/10:2/5,-1/5:3/5"
    with pytest.raises(InvalidDistribution):
        DiscreteDistribution.parse("1:0.5,-2:0.5")
    with pytest.raises(InvalidDistribution):
        DiscreteDistribution.parse("1-0.5")
    with pytest.raises(InvalidDistribution):
        DiscreteDistribution.parse("0.1:0.3,-0.1:0.7")  # mean -0.04


def test_mu2v_exact():
    assert enumerate_expectation((3, 3, 3), {"u": SKEW, "v": SKEW}, "mu2v") == 2


def test_constant_statistic():
    assert enumerate_expectation((3, 4, 3), {"u": SKEW, "v": PM1}, "const") == 1
    assert enumerate_expectation(((3, 3, 3),) * 3, {"u": SKEW, "v": PM1, "w": PM1}, "const") == 1


def test_u_point_mass():
    got = enumerate_expectations((3, 3, 4), {"u": POINT, "v": SKEW}, ["mu2u_grp", "mu2u_obs", "mu3u_obs"])
    assert got == {"mu2u_grp": 0, "mu2u_obs": 0, "mu3u_obs": 0}


def test_structured_matches_full():
    dists = {"u": PM1, "v": SKEW}
    ids = ["mu2v", "mu3v", "mu2u_grp", "mu3u_obs"]
    assert enumerate_expectations((3, 3, 3), dists, ids) == enumerate_expectations(
        (3, 3, 3), dists, ids, method="full"
    )


def test_float_mode_close():
    dists = {"u": PM1, "v": SKEW}
    ids = ["mu2v", "mu3v", "mu2u_obs"]
    exact = enumerate_expectations((3, 4, 3), dists, ids)
    approx = enumerate_expectations((3, 4, 3), dists, ids, exact=False)
    for k in ids:
        assert isinstance(approx[k], float)
        assert approx[k] == pytest.approx(float(exact[k]), rel=1e-12)


def test_budget():
    with pytest.raises(EnumerationTooLarge):
        enumerate_expectations((5, 5, 5), {"u": PM1, "v": SKEW}, ["mu2v"], method="full", budget=1000)


def test_singular_u_system_reported():
    with pytest.raises(SingularSystem) as e:
        enumerate_expectation((4, 4, 4), {"u": SKEW, "v": PM1}, "mu4u_grp", nuisance="true")
    assert e.value.det == 0


def test_missing_within_fourth_reported():
    with pytest.raises(MissingWithinFourth):
        enumerate_expectation((3, 3, 3, 3), {"u": PM1, "v": PM1}, "mu4u_obs")


def test_unknown_statistic():
    with pytest.raises(KeyError):
        enumerate_expectation((3, 3, 3), {"u": PM1, "v": PM1}, "mu9v")


def test_true_values():
    t = true_values((3, 3, 3), {"u": SKEW, "v": PM1})
    assert (t["mu2u_grp"], t["mu3u_obs"], t["mu4u_grp"], t["mu2u_sq_obs"]) == (2, 2, 6, 4)
    assert (t["mu2v"], t["mu3v"], t["mu4v"], t["mu2v_sq"]) == (1, 0, 1, 1)


def test_three_level_w_v_exact():
    K = ((3, 3, 3),) * 3
    got = enumerate_expectations(K, {"u": PM1, "v": PM1, "w": SKEW}, ["mu2w", "mu3w", "mu2v_obs", "mu3v_grp"])
    assert got == {"mu2w": 2, "mu3w": 2, "mu2v_obs": 1, "mu3v_grp": 0}


def test_three_level_unbalanced_w_v_exact():
    K = ((3, 4, 3), (3, 3, 3), (3, 3, 5))
    dists = {"u": PM1, "v": SKEW, "w": SKEW}
    got = enumerate_expectations(K, dists, ["mu2v_grp", "mu3v_grp", "mu2v_obs", "mu3v_obs"])
    assert got == {"mu2v_grp": 2, "mu3v_grp": 2, "mu2v_obs": 2, "mu3v_obs": 2}


def test_three_level_u_exact_with_point_w():
    K = ((3, 3, 3),) * 3
    dists = {"u": SKEW, "v": SKEW, "w": POINT}
    ids = ["mu2u_grp", "mu3u_grp", "mu2u_obs", "mu3u_obs"]
    assert enumerate_expectations(K, dists, ids) == dict.fromkeys(ids, 2)


def test_three_level_u_exact_unbalanced():
    K = ((3, 4, 3), (3, 3, 3), (4, 3, 3))
    dists = {"u": SKEW, "v": PM1, "w": POINT}
    ids = ["mu2u_grp", "mu3u_grp", "mu2u_obs", "mu3u_obs"]
    assert enumerate_expectations(K, dists, ids) == {"mu2u_grp": 2, "mu3u_grp": 2, "mu2u_obs": 2, "mu3u_obs": 2}


def test_degenerate_nesting():
    K = ((3, 3, 3),) * 3
    got = enumerate_expectations(K, {"u": SKEW, "v": POINT, "w": PM1}, ["mu2v_grp", "mu2v_obs"])
    assert got == {"mu2v_grp": 0, "mu2v_obs": 0}


def test_v_fourth_exact_unbalanced():
    got = enumerate_expectations((4, 5, 4), {"u": POINT, "v": SKEW}, ["mu4v", "mu2v_sq"])
    assert got == {"mu4v": 6, "mu2v_sq": 4}


def test_normal_consistency():
    # three-point law with mu4 = 3 mu2^2
    law = DiscreteDistribution(((-1, F(1, 6)), (0, F(2, 3)), (1, F(1, 6))))
    m = law.moments
    assert (m.mu2, m.mu4) == (F(1, 3), F(1, 3)) and m.mu4 == 3 * m.mu2**2
    got = enumerate_expectations((4, 4, 5), {"u": POINT, "v": law}, ["mu4v", "mu2v_sq"])
    assert got["mu4v"] - 3 * got["mu2v_sq"] == 0


def test_mc_agrees_with_exact_plug_in_expectation():
    # the plug-in mu4u is slightly biased; Monte Carlo must track the exact expectation, not the target
    from mlmoments.oracle import SimulationPlan, run_monte_carlo

    dists = {"u": SKEW, "v": PM1}
    ids = ["mu4u_grp", "mu2u_sq_obs"]
    exact = enumerate_expectations((4, 4, 4, 4), dists, ids)
    assert exact == {"mu4u_grp": 6 + F(1, 16), "mu2u_sq_obs": 4 + F(1, 48)}
    for r in run_monte_carlo(SimulationPlan((4, 4, 4, 4), dists, 100_000, 21), ids):
        assert abs((r.mean - float(exact[r.estimator])) / r.se) <= 5
