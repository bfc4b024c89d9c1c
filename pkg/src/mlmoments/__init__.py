"""Finite-sample unbiased moment estimators for unbalanced multilevel designs.

Two-level model y_ij = u_i + v_ij: second, third and fourth central moments of
u and v.  Three-level model y_ijk = u_i + v_ij + w_ijk: second and third.
Between-group estimators come in two averaging schemes, ``grp`` (each group
mean weighted equally) and ``obs`` (weighted by group size).

The same code runs on floats and on ``fractions.Fraction`` data; with
rational input every estimate is exact.
"""

__version__ = "0.1.0"

from .design import (  # noqa: E402
    DesignSummary,
    NestedDesignSummary,
    ThreeLevelDataset,
    TwoLevelDataset,
    design_summary,
    nested_design_summary,
    validate_three_level,
    validate_two_level,
)
from .errors import *  # noqa: E402,F401,F403
from .kernel import WeightedSumSpec, expected_power, true_moments  # noqa: E402
from .oracle import (  # noqa: E402
    BiasReport,
    DiscreteDistribution,
    SimulationPlan,
    enumerate_expectation,
    enumerate_expectations,
    enumerate_weighted_power,
    run_monte_carlo,
)
from .three_level import estimate_three_level  # noqa: E402
from .two_level import (  # noqa: E402
    build_fourth_system,
    estimate_between_grp,
    estimate_between_obs,
    estimate_two_level,
    estimate_within,
    fourth_coefficients,
)
