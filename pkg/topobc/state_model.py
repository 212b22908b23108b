import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from numbers import Rational
from typing import Dict, Iterator, List, Mapping, Optional, Tuple, Union

logger = logging.getLogger(__name__)

# ======================
# STATE MODEL CONFIG
# ======================

SUM_TOLERANCE = 1e-12
MAX_ALPHA_DENOMINATOR = 1000

Number = Union[Fraction, float, int]


class InvalidDistribution(ValueError):
    """Raised when a state distribution violates nonnegativity or unit-sum."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__(report.summary())


class HorizonTooShort(ValueError):
    pass


# ======================
# STATE TYPES
# ======================

class Csit(Enum):
    PERFECT = "P"
    DELAYED = "D"
    NONE = "N"

    @property
    def rank(self) -> int:
        return _CSIT_ORDER.index(self)


class Link(Enum):
    STRONG = "S"
    WEAK = "W"

    @property
    def rank(self) -> int:
        return _LINK_ORDER.index(self)


_CSIT_ORDER = [Csit.PERFECT, Csit.DELAYED, Csit.NONE]
_LINK_ORDER = [Link.STRONG, Link.WEAK]


@dataclass(frozen=True)
class CsitState:
    i1: Csit
    i2: Csit

    @classmethod
    def parse(cls, label: str) -> "CsitState":
        label = label.strip().upper()
        if len(label) != 2:
            raise ValueError(f"CSIT label must have two letters (P/D/N): {label!r}")
        return cls(Csit(label[0]), Csit(label[1]))

    @property
    def label(self) -> str:
        return self.i1.value + self.i2.value

    @property
    def mirrored(self) -> "CsitState":
        return CsitState(self.i2, self.i1)

    def sort_key(self) -> Tuple[int, int]:
        return (self.i1.rank, self.i2.rank)

    def __str__(self) -> str:
        return self.label


@dataclass(frozen=True)
class TopologyState:
    a1: Link
    a2: Link

    @classmethod
    def parse(cls, label: str) -> "TopologyState":
        label = label.strip().upper()
        if len(label) != 2:
            raise ValueError(f"topology label must have two letters (S/W): {label!r}")
        return cls(Link(label[0]), Link(label[1]))

    @property
    def label(self) -> str:
        return self.a1.value + self.a2.value

    @property
    def pretty(self) -> str:
        names = {Link.STRONG: "1", Link.WEAK: "α"}
        return f"({names[self.a1]},{names[self.a2]})"

    @property
    def mirrored(self) -> "TopologyState":
        return TopologyState(self.a2, self.a1)

    @property
    def is_uneven(self) -> bool:
        return self.a1 != self.a2

    def exponents(self, alpha: Number) -> Tuple[Number, Number]:
        """Link SNR exponents (A1, A2); Strong maps to 1, Weak to alpha."""
        if not 0 <= alpha <= 1:
            raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
        value = {Link.STRONG: 1, Link.WEAK: alpha}
        return value[self.a1], value[self.a2]

    def sort_key(self) -> Tuple[int, int]:
        return (self.a1.rank, self.a2.rank)

    def __str__(self) -> str:
        return self.pretty


TOPO_1A = TopologyState(Link.STRONG, Link.WEAK)
TOPO_A1 = TopologyState(Link.WEAK, Link.STRONG)
TOPO_11 = TopologyState(Link.STRONG, Link.STRONG)
TOPO_AA = TopologyState(Link.WEAK, Link.WEAK)

ALL_CSIT = [CsitState(a, b) for a in _CSIT_ORDER for b in _CSIT_ORDER]
ALL_TOPOLOGIES = [TopologyState(a, b) for a in _LINK_ORDER for b in _LINK_ORDER]

StateKey = Tuple[CsitState, TopologyState]


def state_sort_key(key: StateKey) -> Tuple[int, int, int, int]:
    csit, topo = key
    return csit.sort_key() + topo.sort_key()


ALL_STATES: List[StateKey] = sorted(
    [(c, t) for c in ALL_CSIT for t in ALL_TOPOLOGIES], key=state_sort_key
)


def state_label(key: StateKey) -> str:
    csit, topo = key
    return f"{csit.label}{topo.pretty}"


# ======================
# NUMBER PARSING
# ======================

def as_fraction(value) -> Fraction:
    """
    Exact rational view of a config number.
    Floats are read through their shortest decimal repr, so 0.1 becomes 1/10.
    """
    if isinstance(value, bool):
        raise ValueError(f"not a number: {value!r}")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, Rational):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as e:
            raise ValueError(f"cannot read {value!r} as a fraction") from e
    raise ValueError(f"not a number: {value!r}")


def parse_alpha(value, max_denominator: int = MAX_ALPHA_DENOMINATOR) -> Fraction:
    """Read alpha as an exact rational with denominator <= max_denominator."""
    exact = as_fraction(value)
    alpha = exact.limit_denominator(max_denominator)
    if alpha != exact:
        logger.warning(
            f"alpha={value!r} is not exact with denominator <= {max_denominator}; using {alpha}"
        )
    if not 0 <= alpha <= 1:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha


# ======================
# DISTRIBUTION
# ======================

@dataclass(frozen=True, eq=False)
class StateDistribution:
    entries: Mapping[StateKey, Number]
    alpha: Fraction = field(default=Fraction(1, 2))

    @classmethod
    def from_labels(cls, entries: Mapping[Tuple[str, str], Number], alpha) -> "StateDistribution":
        """Build from {("PN", "SW"): 0.5, ...}; duplicate keys are summed."""
        merged: Dict[StateKey, Number] = {}
        for (csit, topo), fraction in entries.items():
            key = (CsitState.parse(csit), TopologyState.parse(topo))
            merged[key] = merged.get(key, 0) + as_fraction(fraction)
        return cls(merged, as_fraction(alpha))

    def fraction(self, csit: CsitState, topo: TopologyState) -> Number:
        return self.entries.get((csit, topo), 0)

    def support(self) -> List[StateKey]:
        return sorted([k for k, v in self.entries.items() if v != 0], key=state_sort_key)

    def total(self) -> Number:
        return sum(self.entries.values(), Fraction(0))

    def mirrored(self) -> "StateDistribution":
        """Same statistics with the two users interchanged."""
        return StateDistribution(
            {(c.mirrored, t.mirrored): v for (c, t), v in self.entries.items()},
            self.alpha,
        )

    def same_as(self, other: "StateDistribution", tol: float = SUM_TOLERANCE) -> bool:
        keys = set(self.entries) | set(other.entries)
        if abs(float(self.alpha) - float(other.alpha)) > tol:
            return False
        return all(
            abs(float(self.entries.get(k, 0)) - float(other.entries.get(k, 0))) <= tol
            for k in keys
        )

    def describe(self) -> str:
        parts = [f"{state_label(k)}={self.entries[k]}" for k in self.support()]
        return f"alpha={self.alpha} | " + ", ".join(parts)


@dataclass(frozen=True)
class Violation:
    constraint: str
    value: float
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    violations: Tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        if self.ok:
            return "ok"
        return "; ".join(
            f"{v.constraint}={v.value:g}" + (f" ({v.detail})" if v.detail else "")
            for v in self.violations
        )


def validate_distribution(dist: StateDistribution) -> ValidationReport:
    violations = []

    alpha = dist.alpha
    if not 0 <= alpha <= 1:
        violations.append(Violation("alpha-range", float(alpha)))

    for key, value in dist.entries.items():
        if value < 0:
            violations.append(Violation("nonnegative", float(value), state_label(key)))

    total = dist.total()
    if abs(float(total) - 1.0) > SUM_TOLERANCE:
        violations.append(Violation("sum", float(total), "fractions must sum to 1"))

    return ValidationReport(tuple(violations))


def require_valid(dist: StateDistribution) -> None:
    report = validate_distribution(dist)
    if not report.ok:
        raise InvalidDistribution(report)


# ======================
# MARGINALS
# ======================

AGGREGATES = {
    "P<->N": (CsitState(Csit.PERFECT, Csit.NONE), CsitState(Csit.NONE, Csit.PERFECT)),
    "D<->N": (CsitState(Csit.DELAYED, Csit.NONE), CsitState(Csit.NONE, Csit.DELAYED)),
    "P<->D": (CsitState(Csit.PERFECT, Csit.DELAYED), CsitState(Csit.DELAYED, Csit.PERFECT)),
}


@dataclass(frozen=True)
class Marginals:
    csit: Dict[CsitState, Number]
    topology: Dict[TopologyState, Number]
    aggregates: Dict[Tuple[str, TopologyState], Number]

    def csit_fraction(self, label: str) -> Number:
        return self.csit[CsitState.parse(label)]

    def aggregate(self, kind: str, topo: TopologyState) -> Number:
        return self.aggregates[(kind, topo)]


def marginals(dist: StateDistribution) -> Marginals:
    require_valid(dist)

    csit = {c: Fraction(0) for c in ALL_CSIT}
    topology = {t: Fraction(0) for t in ALL_TOPOLOGIES}
    for (c, t), value in dist.entries.items():
        csit[c] = csit[c] + value
        topology[t] = topology[t] + value

    aggregates = {}
    for kind, (first, second) in AGGREGATES.items():
        for t in ALL_TOPOLOGIES:
            aggregates[(kind, t)] = dist.fraction(first, t) + dist.fraction(second, t)

    return Marginals(csit, topology, aggregates)


# ======================
# SCHEDULES
# ======================

@dataclass(frozen=True)
class Schedule:
    states: Tuple[StateKey, ...]

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self) -> Iterator[StateKey]:
        return iter(self.states)

    def __getitem__(self, i: int) -> StateKey:
        return self.states[i]

    def labels(self) -> List[str]:
        return [state_label(s) for s in self.states]

    def empirical_fractions(self) -> Dict[StateKey, Fraction]:
        n = len(self.states)
        return {k: Fraction(c, n) for k, c in Counter(self.states).items()}

    def max_deviation(self, dist: StateDistribution) -> float:
        empirical = self.empirical_fractions()
        keys = set(empirical) | set(dist.support())
        return max(
            abs(float(empirical.get(k, 0)) - float(dist.entries.get(k, 0))) for k in keys
        )


def apportion(dist: StateDistribution, n: int) -> Dict[StateKey, int]:
    """Largest-remainder apportionment of n uses; ties go to the lexicographically first state."""
    support = dist.support()
    quotas = {k: as_fraction(dist.entries[k]) * n for k in support}
    counts = {k: int(q) for k, q in quotas.items()}  # quotas are nonnegative, int() floors

    remaining = n - sum(counts.values())
    order = sorted(support, key=lambda k: (-(quotas[k] - counts[k]), state_sort_key(k)))
    for k in order[:remaining]:
        counts[k] += 1
    return counts


def periodic_schedule(dist: StateDistribution, n: int) -> Schedule:
    """
    Deterministic horizon-n schedule realizing the fractions of dist.

    Counts come from largest-remainder apportionment. Uses of each state are
    then placed at evenly spaced ideal positions (2j+1)n/(2c); the merged
    order is a round robin over states, ties resolved in state order.
    """
    require_valid(dist)
    if n <= 0:
        raise ValueError(f"horizon must be positive, got {n}")

    support = dist.support()
    if n < len(support):
        raise HorizonTooShort(
            f"horizon n={n} cannot represent {len(support)} nonzero states"
        )

    counts = apportion(dist, n)
    slots = []
    for k, c in counts.items():
        for j in range(c):
            slots.append((Fraction(2 * j + 1, 2 * c) * n, state_sort_key(k), k))
    slots.sort(key=lambda s: (s[0], s[1]))

    schedule = Schedule(tuple(s[2] for s in slots))
    logger.debug(f"Schedule n={n}: {schedule.labels()}")
    return schedule


def uniform_distribution(alpha: Fraction, topologies: Optional[List[TopologyState]] = None) -> StateDistribution:
    """Uniform over all CSIT pairs and the given topologies (all four by default)."""
    topologies = topologies or ALL_TOPOLOGIES
    share = Fraction(1, len(ALL_CSIT) * len(topologies))
    return StateDistribution({(c, t): share for c in ALL_CSIT for t in topologies}, alpha)
