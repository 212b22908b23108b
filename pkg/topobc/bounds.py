import logging
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Dict, Mapping, Optional, Union

from topobc.state_model import (
    ALL_CSIT,
    SUM_TOLERANCE,
    TOPO_11,
    TOPO_1A,
    TOPO_A1,
    TOPO_AA,
    Csit,
    CsitState,
    InvalidDistribution,
    Number,
    StateDistribution,
    TopologyState,
    ValidationReport,
    Violation,
    as_fraction,
    marginals,
    require_valid,
)

logger = logging.getLogger(__name__)

_PP = CsitState(Csit.PERFECT, Csit.PERFECT)
_DD = CsitState(Csit.DELAYED, Csit.DELAYED)
_NN = CsitState(Csit.NONE, Csit.NONE)
_PN = CsitState(Csit.PERFECT, Csit.NONE)
_NP = CsitState(Csit.NONE, Csit.PERFECT)
_PD = CsitState(Csit.PERFECT, Csit.DELAYED)
_ND = CsitState(Csit.NONE, Csit.DELAYED)


class Optimality(str, Enum):
    OPTIMAL = "optimal"
    LOWER_BOUND = "lower-bound"
    SUB_OPTIMAL = "sub-optimal"
    BASELINE = "baseline"


class PolicyId(str, Enum):
    ZF_PERFECT = "ZfPerfect"
    TSM1_ND_PN = "Tsm1NdPn"
    TSM2_PD_NN = "Tsm2PdNn"
    TSM3_DD_FIXED_LB = "Tsm3DdFixedLB"
    TSM4_DD_ALT = "Tsm4DdAlt"
    TSM5_PN_NP = "Tsm5PnNp"
    MAT_FIXED = "MatFixed"
    DD_NON_DIVERSE = "DdNonDiverse"
    PN_NP_NON_DIVERSE = "PnNpNonDiverse"
    SINGLE_USER = "SingleUser"


@dataclass(frozen=True)
class BoundReport:
    d1: Optional[Number] = None
    d2: Optional[Number] = None
    d3: Optional[Number] = None
    d4: Optional[Number] = None

    @property
    def d_min(self) -> Number:
        values = [d for d in (self.d1, self.d2, self.d3, self.d4) if d is not None]
        return min(values)

    def as_dict(self) -> Dict[str, Optional[float]]:
        return {
            "d1": _as_float(self.d1),
            "d2": _as_float(self.d2),
            "d3": _as_float(self.d3),
            "d4": _as_float(self.d4),
            "d_min": float(self.d_min),
        }


@dataclass(frozen=True)
class Achievability:
    policy: PolicyId
    value: Number
    optimality: Optimality


def _as_float(x: Optional[Number]) -> Optional[float]:
    return None if x is None else float(x)


def _exact(x: Number) -> Number:
    """Fraction for rationals (ints, Fractions); floats stay floats."""
    if isinstance(x, float):
        return x
    return as_fraction(x)


def _check_alpha(alpha: Number) -> Number:
    alpha = _exact(alpha)
    if not 0 <= alpha <= 1:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha


# ======================
# LEMMA 1: FIXED TOPOLOGY
# ======================

def outer_bound_fixed(csit_marginals: Mapping[Union[CsitState, str], Number], alpha: Number) -> BoundReport:
    """Sum-GDoF bounds d1, d2 for alternating CSIT over a fixed (1, alpha) topology."""
    alpha = _check_alpha(alpha)

    lam: Dict[CsitState, Number] = {c: 0 for c in ALL_CSIT}
    for key, value in csit_marginals.items():
        c = CsitState.parse(key) if isinstance(key, str) else key
        lam[c] = lam[c] + _exact(value)

    violations = [
        Violation("nonnegative", float(v), c.label) for c, v in lam.items() if v < 0
    ]
    total = sum(lam.values())
    if abs(float(total) - 1.0) > SUM_TOLERANCE:
        violations.append(Violation("sum", float(total), "CSIT marginals must sum to 1"))
    if violations:
        raise InvalidDistribution(ValidationReport(tuple(violations)))

    def at(label: str) -> Number:
        return lam[CsitState.parse(label)]

    d1 = (
        (1 + alpha) * at("PP")
        + (3 + 2 * alpha) / 3 * (at("PD") + at("DP") + at("PN") + at("NP"))
        + (3 + alpha) / 3 * (at("DD") + at("DN") + at("ND") + at("NN"))
    )
    d2 = (
        (1 + alpha) * (at("PP") + at("PD") + at("DP") + at("DD"))
        + (2 + alpha) / 2 * (at("PN") + at("NP") + at("DN") + at("ND"))
        + at("NN")
    )
    return BoundReport(d1=d1, d2=d2)


# ======================
# LEMMA 2: GENERAL TOPOLOGY
# ======================

def _coefficients(topo: TopologyState, alpha: Number):
    """
    Per-topology weights (d3: PP, P<->D/P<->N, rest) and (d4: PP/P<->D/DD, P<->N/D<->N, NN).
    """
    if topo in (TOPO_1A, TOPO_A1):
        return (
            (1 + alpha, (3 + 2 * alpha) / 3, (3 + alpha) / 3),
            (1 + alpha, (2 + alpha) / 2, 1),
        )
    if topo == TOPO_11:
        return (
            (2, Fraction(5, 3), Fraction(4, 3)),
            (2, Fraction(3, 2), 1),
        )
    return (
        (2 * alpha, 5 * alpha / 3, 4 * alpha / 3),
        (2 * alpha, 3 * alpha / 2, alpha),
    )


def outer_bound_general(dist: StateDistribution) -> BoundReport:
    """Sum-GDoF bounds d3, d4 for alternating CSIT and alternating topology."""
    require_valid(dist)
    m = marginals(dist)
    alpha = _exact(dist.alpha)

    d3 = 0
    d4 = 0
    for topo in (TOPO_1A, TOPO_A1, TOPO_11, TOPO_AA):
        (c_pp, c_perfect_mixed, c_rest), (c_high, c_mid, c_nn) = _coefficients(topo, alpha)

        pp = _exact(dist.fraction(_PP, topo))
        dd = _exact(dist.fraction(_DD, topo))
        nn = _exact(dist.fraction(_NN, topo))
        p_d = _exact(m.aggregate("P<->D", topo))
        p_n = _exact(m.aggregate("P<->N", topo))
        d_n = _exact(m.aggregate("D<->N", topo))

        d3 = d3 + c_pp * pp + c_perfect_mixed * (p_d + p_n) + c_rest * (dd + d_n + nn)
        d4 = d4 + c_high * (pp + p_d + dd) + c_mid * (p_n + d_n) + c_nn * nn

    return BoundReport(d3=d3, d4=d4)


def fixed_topology(dist: StateDistribution) -> Optional[TopologyState]:
    """The single uneven topology carrying all mass, if there is one."""
    topos = {t for (_, t) in dist.support()}
    if len(topos) == 1:
        (topo,) = topos
        if topo.is_uneven:
            return topo
    return None


def outer_bound(dist: StateDistribution) -> BoundReport:
    """Lemma 1 and Lemma 2 together when the topology is fixed, Lemma 2 alone otherwise."""
    general = outer_bound_general(dist)
    if fixed_topology(dist) is None:
        return general
    fixed = outer_bound_fixed(marginals(dist).csit, dist.alpha)
    return BoundReport(d1=fixed.d1, d2=fixed.d2, d3=general.d3, d4=general.d4)


# ======================
# ACHIEVABILITY TABLE
# ======================

def achievable_gdof(policy: PolicyId, alpha: Number) -> Achievability:
    alpha = _check_alpha(alpha)
    policy = PolicyId(policy)

    table = {
        PolicyId.ZF_PERFECT: (1 + alpha, Optimality.OPTIMAL),
        PolicyId.TSM1_ND_PN: (1 + alpha / 2, Optimality.OPTIMAL),
        PolicyId.TSM2_PD_NN: (1 + alpha / 2, Optimality.OPTIMAL),
        PolicyId.TSM5_PN_NP: (1 + alpha / 2, Optimality.OPTIMAL),
        PolicyId.TSM3_DD_FIXED_LB: (1 + alpha * alpha / (2 + alpha), Optimality.LOWER_BOUND),
        PolicyId.TSM4_DD_ALT: (1 + alpha / 3, Optimality.OPTIMAL),
        PolicyId.MAT_FIXED: (2 * (1 + alpha) / 3, Optimality.SUB_OPTIMAL),
        PolicyId.DD_NON_DIVERSE: (2 * (1 + alpha) / 3, Optimality.OPTIMAL),
        PolicyId.PN_NP_NON_DIVERSE: (3 * (1 + alpha) / 4, Optimality.OPTIMAL),
        PolicyId.SINGLE_USER: (1, Optimality.BASELINE),
    }
    value, optimality = table[policy]
    return Achievability(policy, _exact(value), optimality)


def policy_distribution(policy: PolicyId, alpha: Number) -> StateDistribution:
    """State statistics each policy is designed for."""
    alpha = as_fraction(alpha)
    half = Fraction(1, 2)
    quarter = Fraction(1, 4)
    designs = {
        PolicyId.ZF_PERFECT: {(_PP, TOPO_1A): 1},
        PolicyId.TSM1_ND_PN: {(_ND, TOPO_1A): half, (_PN, TOPO_1A): half},
        PolicyId.TSM2_PD_NN: {(_PD, TOPO_1A): half, (_NN, TOPO_1A): half},
        PolicyId.TSM3_DD_FIXED_LB: {(_DD, TOPO_1A): 1},
        PolicyId.TSM4_DD_ALT: {(_DD, TOPO_1A): half, (_DD, TOPO_A1): half},
        PolicyId.TSM5_PN_NP: {
            (_PN, TOPO_1A): quarter,
            (_NP, TOPO_1A): quarter,
            (_PN, TOPO_A1): quarter,
            (_NP, TOPO_A1): quarter,
        },
        PolicyId.MAT_FIXED: {(_DD, TOPO_1A): 1},
        PolicyId.DD_NON_DIVERSE: {(_DD, TOPO_11): half, (_DD, TOPO_AA): half},
        PolicyId.PN_NP_NON_DIVERSE: {
            (_PN, TOPO_11): quarter,
            (_NP, TOPO_11): quarter,
            (_PN, TOPO_AA): quarter,
            (_NP, TOPO_AA): quarter,
        },
        PolicyId.SINGLE_USER: {(_DD, TOPO_1A): 1},
    }
    entries = {k: Fraction(v) for k, v in designs[PolicyId(policy)].items()}
    return StateDistribution(entries, alpha)


def _pn_np_family(dist: StateDistribution, topologies) -> bool:
    support = dist.support()
    if not support:
        return False
    if any(c not in (_PN, _NP) or t not in topologies for c, t in support):
        return False
    pn = sum(float(v) for (c, _), v in dist.entries.items() if c == _PN)
    return abs(pn - 0.5) <= SUM_TOLERANCE


def recognize_policy(dist: StateDistribution) -> Optional[PolicyId]:
    """
    Best known policy designed for dist, or None.
    Matches each design distribution (or its user-mirrored image) and the
    P,N/N,P families; for a fixed DD topology the lower-bound scheme wins over MAT.
    """
    require_valid(dist)

    if _pn_np_family(dist, (TOPO_1A, TOPO_A1)):
        return PolicyId.TSM5_PN_NP
    if _pn_np_family(dist, (TOPO_11, TOPO_AA)):
        m = marginals(dist)
        if abs(float(m.topology[TOPO_11]) - 0.5) <= SUM_TOLERANCE:
            return PolicyId.PN_NP_NON_DIVERSE

    for policy in (
        PolicyId.ZF_PERFECT,
        PolicyId.TSM1_ND_PN,
        PolicyId.TSM2_PD_NN,
        PolicyId.TSM3_DD_FIXED_LB,
        PolicyId.TSM4_DD_ALT,
        PolicyId.DD_NON_DIVERSE,
    ):
        design = policy_distribution(policy, dist.alpha)
        if dist.same_as(design) or dist.same_as(design.mirrored()):
            return policy
    return None
