from fractions import Fraction

import numpy as np
import pytest

from topobc.bounds import (
    Optimality,
    PolicyId,
    achievable_gdof,
    outer_bound,
    outer_bound_fixed,
    outer_bound_general,
    policy_distribution,
    recognize_policy,
)
from topobc.state_model import (
    ALL_CSIT,
    ALL_STATES,
    TOPO_1A,
    TOPO_A1,
    InvalidDistribution,
    StateDistribution,
)

TENTHS = [Fraction(k, 10) for k in range(11)]


# ======================
# FIXED TOPOLOGY
# ======================

def test_fixed_perfect_csit():
    report = outer_bound_fixed({"PP": 1}, Fraction(1, 2))
    assert report.d1 == report.d2 == Fraction(3, 2)
    assert report.d_min == Fraction(3, 2)


def test_fixed_pn_np():
    report = outer_bound_fixed({"PN": Fraction(1, 2), "NP": Fraction(1, 2)}, Fraction(1, 2))
    assert report.d1 == Fraction(4, 3)
    assert report.d2 == Fraction(5, 4)
    assert report.d_min == Fraction(5, 4)


def test_fixed_delayed_at_full_alpha():
    report = outer_bound_fixed({"DD": 1}, 1)
    assert report.d1 == Fraction(4, 3)
    assert report.d2 == 2
    assert report.d_min == Fraction(4, 3)


def test_fixed_rejects_bad_marginals():
    with pytest.raises(InvalidDistribution):
        outer_bound_fixed({"PP": Fraction(1, 2)}, Fraction(1, 2))
    with pytest.raises(ValueError):
        outer_bound_fixed({"PP": 1}, Fraction(3, 2))


# ======================
# GENERAL TOPOLOGY
# ======================

def test_general_alternating_delayed():
    d = StateDistribution.from_labels({("DD", "SW"): "1/2", ("DD", "WS"): "1/2"}, "0.6")
    report = outer_bound_general(d)
    assert report.d3 == Fraction(6, 5)
    assert report.d4 == Fraction(8, 5)
    assert report.d_min == Fraction(6, 5)


def test_general_pn_np_over_both_topologies():
    d = StateDistribution.from_labels(
        {("PN", "SW"): "1/4", ("NP", "SW"): "1/4", ("PN", "WS"): "1/4", ("NP", "WS"): "1/4"}, "1/2"
    )
    report = outer_bound_general(d)
    assert report.d4 == Fraction(5, 4)
    assert report.d_min == Fraction(5, 4)


def test_general_non_diverse_delayed():
    d = StateDistribution.from_labels({("DD", "SS"): "1/2", ("DD", "WW"): "1/2"}, "1/2")
    report = outer_bound_general(d)
    assert report.d3 == 1
    assert report.d_min == 1


@pytest.mark.parametrize("alpha", TENTHS)
def test_bounds_match_known_optimal_values_exactly(alpha):
    def d_min(policy):
        return outer_bound(policy_distribution(policy, alpha)).d_min

    assert d_min(PolicyId.TSM1_ND_PN) == 1 + alpha / 2
    assert d_min(PolicyId.TSM2_PD_NN) == 1 + alpha / 2
    assert d_min(PolicyId.TSM5_PN_NP) == 1 + alpha / 2
    assert d_min(PolicyId.TSM4_DD_ALT) == 1 + alpha / 3
    assert d_min(PolicyId.ZF_PERFECT) == 1 + alpha
    assert d_min(PolicyId.DD_NON_DIVERSE) == 2 * (1 + alpha) / 3
    assert d_min(PolicyId.PN_NP_NON_DIVERSE) == 3 * (1 + alpha) / 4


def test_bounds_stay_exact_rationals():
    report = outer_bound(policy_distribution(PolicyId.TSM4_DD_ALT, Fraction(1, 3)))
    assert isinstance(report.d_min, Fraction)
    assert report.d_min == Fraction(10, 9)


def test_general_reduces_to_fixed_on_single_topology():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        topo = TOPO_1A if rng.random() < 0.5 else TOPO_A1
        fractions = rng.dirichlet(np.ones(len(ALL_CSIT)))
        alpha = Fraction(int(rng.integers(0, 101)), 100)
        d = StateDistribution({(c, topo): float(f) for c, f in zip(ALL_CSIT, fractions)}, alpha)

        fixed = outer_bound_fixed({c: float(f) for c, f in zip(ALL_CSIT, fractions)}, alpha)
        general = outer_bound_general(d)
        assert abs(float(fixed.d1) - float(general.d3)) <= 1e-12
        assert abs(float(fixed.d2) - float(general.d4)) <= 1e-12


def test_general_bounds_nonnegative_on_random_distributions():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        fractions = rng.dirichlet(np.full(len(ALL_STATES), 0.3))
        alpha = Fraction(int(rng.integers(0, 101)), 100)
        d = StateDistribution({k: float(f) for k, f in zip(ALL_STATES, fractions)}, alpha)

        report = outer_bound_general(d)
        assert report.d3 >= 0
        assert report.d4 >= 0
        assert report.d_min <= 2 + 1e-12


def test_outer_bound_single_topology_agrees_with_general_form():
    d = policy_distribution(PolicyId.TSM3_DD_FIXED_LB, Fraction(3, 5))
    assert outer_bound(d).d_min == outer_bound_general(d).d_min == Fraction(6, 5)
    assert outer_bound(d).d1 is not None
    assert outer_bound_general(d).d1 is None


# ======================
# ACHIEVABILITY
# ======================

def test_achievable_examples():
    assert achievable_gdof(PolicyId.MAT_FIXED, Fraction(1, 2)).value == 1
    assert achievable_gdof(PolicyId.TSM3_DD_FIXED_LB, Fraction(1, 2)).value == Fraction(11, 10)
    assert achievable_gdof(PolicyId.TSM4_DD_ALT, 1).value == Fraction(4, 3)
    assert achievable_gdof(PolicyId.SINGLE_USER, Fraction(1, 2)).value == 1


def test_optimality_flags():
    assert achievable_gdof(PolicyId.TSM3_DD_FIXED_LB, 0.5).optimality == Optimality.LOWER_BOUND
    assert achievable_gdof(PolicyId.TSM4_DD_ALT, 0.5).optimality == Optimality.OPTIMAL
    assert achievable_gdof(PolicyId.MAT_FIXED, 0.5).optimality == Optimality.SUB_OPTIMAL


def test_achievable_never_exceeds_outer_bound():
    for k in range(101):
        alpha = Fraction(k, 100)
        for policy in PolicyId:
            achieved = achievable_gdof(policy, alpha).value
            bound = outer_bound(policy_distribution(policy, alpha)).d_min
            assert achieved <= bound, (policy, alpha)


def test_bounds_and_achievability_are_monotone_in_alpha():
    grid = [Fraction(k, 100) for k in range(101)]
    for policy in PolicyId:
        achieved = [achievable_gdof(policy, a).value for a in grid]
        bounds = [outer_bound(policy_distribution(policy, a)).d_min for a in grid]
        assert all(x <= y for x, y in zip(achieved, achieved[1:])), policy
        assert all(x <= y for x, y in zip(bounds, bounds[1:])), policy


def test_fixed_delayed_gap():
    for k in range(101):
        alpha = Fraction(k, 100)
        bound = outer_bound(policy_distribution(PolicyId.TSM3_DD_FIXED_LB, alpha)).d_min
        gap = bound - achievable_gdof(PolicyId.TSM3_DD_FIXED_LB, alpha).value
        assert gap == alpha / 3 - alpha * alpha / (2 + alpha)
        if 0 < alpha < 1:
            assert gap > 0


# ======================
# POLICY RECOGNITION
# ======================

def test_recognize_design_distributions():
    alpha = Fraction(1, 2)
    for policy in (PolicyId.ZF_PERFECT, PolicyId.TSM1_ND_PN, PolicyId.TSM2_PD_NN, PolicyId.TSM4_DD_ALT):
        assert recognize_policy(policy_distribution(policy, alpha)) == policy


def test_recognize_fixed_delayed_prefers_lower_bound_scheme():
    d = StateDistribution.from_labels({("DD", "SW"): 1}, "0.6")
    assert recognize_policy(d) == PolicyId.TSM3_DD_FIXED_LB


def test_recognize_mirrored_design():
    d = policy_distribution(PolicyId.TSM1_ND_PN, Fraction(1, 2)).mirrored()
    assert recognize_policy(d) == PolicyId.TSM1_ND_PN


def test_recognize_pn_np_families():
    uneven = StateDistribution.from_labels({("PN", "SW"): "1/2", ("NP", "SW"): "1/2"}, "1/2")
    even = StateDistribution.from_labels(
        {("PN", "SS"): "1/4", ("NP", "SS"): "1/4", ("PN", "WW"): "1/4", ("NP", "WW"): "1/4"}, "1/2"
    )
    assert recognize_policy(uneven) == PolicyId.TSM5_PN_NP
    assert recognize_policy(even) == PolicyId.PN_NP_NON_DIVERSE


def test_recognize_unknown_distribution():
    d = StateDistribution.from_labels({("DN", "SW"): "1/3", ("PP", "WS"): "2/3"}, "1/2")
    assert recognize_policy(d) is None
