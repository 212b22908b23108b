import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from topobc.channel import (
    N_TX,
    ChannelRealization,
    SnrPoint,
    antenna,
    check_power,
    complex_normal,
    matched_beam,
    null_beam,
    sample_realization,
)
from topobc.layered import (
    EffectiveObservation,
    Layer,
    Role,
    SchemeError,
    SymbolSpec,
    evaluate_layered_rate,
    residual_interference_power,
    settle_layers,
)
from topobc.quantizer import (
    budget_bits,
    dequantize,
    pack_common_symbols,
    quantization_noise_power,
    quantize,
    unpack_common_symbols,
    xor_bits,
)
from topobc.state_model import (
    MAX_ALPHA_DENOMINATOR,
    SUM_TOLERANCE,
    TOPO_1A,
    TOPO_A1,
    Csit,
    CsitState,
    InvalidDistribution,
    Number,
    StateDistribution,
    TopologyState,
    ValidationReport,
    Violation,
    as_fraction,
    periodic_schedule,
    require_valid,
)

logger = logging.getLogger(__name__)

# ======================
# SCHEME CONFIG
# ======================

DEFAULT_HORIZON = 8
MAX_UNPAIRED = 2
MIN_SIDE_NOISE = 1e-12  # floor for a measured quantization error of exactly 0

_PN = CsitState(Csit.PERFECT, Csit.NONE)
_NP = CsitState(Csit.NONE, Csit.PERFECT)


class NonIntegerPhases(SchemeError):
    pass


class UnpairableSchedule(SchemeError):
    pass


class NearSingularDraw(SchemeError):
    pass


class Fidelity(str, Enum):
    ANALYTIC = "analytic"
    BIT_LEVEL = "bitlevel"


class Scheme4Variant(str, Enum):
    WSW = "wsw"  # third use (1, alpha), private symbol for user 1
    WSS = "wss"  # third use (alpha, 1), private symbol for user 2


class Scheme5Subcase(str, Enum):
    S1A_S1A = "S1a-S1a"
    SA1_SA1 = "Sa1-Sa1"
    S1A_SA1 = "S1a-Sa1"
    SA1_S1A = "Sa1-S1a"


@dataclass(frozen=True)
class SchemeOutcome:
    scheme: str
    rate_user1: float
    rate_user2: float
    block_length: int
    diagnostics: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for rate in (self.rate_user1, self.rate_user2):
            if not (math.isfinite(rate) and rate >= 0):
                raise SchemeError(f"{self.scheme}: invalid rate {rate}")
        if self.block_length <= 0:
            raise SchemeError(f"{self.scheme}: block length must be positive")

    @property
    def rate_sum(self) -> float:
        return self.rate_user1 + self.rate_user2

    def mirrored(self) -> "SchemeOutcome":
        """Same outcome with the two users interchanged."""
        diagnostics = {}
        for key, value in self.diagnostics.items():
            if "_u1" in key:
                key = key.replace("_u1", "_u2")
            elif "_u2" in key:
                key = key.replace("_u2", "_u1")
            diagnostics[key] = value
        return SchemeOutcome(self.scheme, self.rate_user2, self.rate_user1, self.block_length, diagnostics)


# ======================
# BLOCK MODEL
# ======================

@dataclass(frozen=True, eq=False)
class Use:
    t: int
    x: np.ndarray  # N_TX x K precoder over unit-power symbols
    ch: ChannelRealization
    topo: TopologyState


class Block:
    """
    Linear model of one scheme block.

    Every channel use transmits x_t = X_t s, where s holds the block's
    unit-power symbols and symbol amplitudes sqrt(rho^exponent) are folded
    into X_t. Each X_t is scaled to unit average power.
    """

    def __init__(self, specs: Sequence[SymbolSpec], snr: SnrPoint, alpha: float):
        names = [s.name for s in specs]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate symbol names in {names}")
        self.specs: Dict[str, SymbolSpec] = {s.name: s for s in specs}
        self.symbols: Tuple[str, ...] = tuple(names)
        self.snr = snr
        self.alpha = alpha
        self.uses: List[Use] = []
        self._index = {name: k for k, name in enumerate(names)}

    @property
    def length(self) -> int:
        return len(self.uses)

    def names(self, role: Role) -> Tuple[str, ...]:
        return tuple(n for n in self.symbols if self.specs[n].role == role)

    def signal(self, beams: Mapping[str, np.ndarray]) -> np.ndarray:
        x = np.zeros((N_TX, len(self.symbols)), dtype=complex)
        for name, beam in beams.items():
            amplitude = self.snr.amplitude(self.specs[name].power_exponent)
            x[:, self._index[name]] += amplitude * np.asarray(beam, dtype=complex)
        return x

    def on_antenna(self, row: np.ndarray, k: int = 0) -> np.ndarray:
        """Send a linear combination of symbols from antenna k only."""
        x = np.zeros((N_TX, len(self.symbols)), dtype=complex)
        x[k] = row
        return x

    def restrict(self, x: np.ndarray, names: Iterable[str]) -> np.ndarray:
        keep = np.zeros(len(self.symbols), dtype=bool)
        for name in names:
            keep[self._index[name]] = True
        return x * keep

    def transmit(self, x: np.ndarray, ch: ChannelRealization, topo: TopologyState) -> Use:
        total = float(np.sum(np.abs(x) ** 2))
        if not total > 0:
            raise SchemeError("nothing to transmit")
        x = x / math.sqrt(total)
        check_power(x)
        use = Use(len(self.uses) + 1, x, ch, topo)
        self.uses.append(use)
        return use

    def row(self, use: Use, user: int) -> np.ndarray:
        """Noiseless received coefficients of one user at one use."""
        a1, a2 = use.topo.exponents(self.alpha)
        if user == 1:
            return self.snr.amplitude(a1) * (use.ch.h @ use.x)
        return self.snr.amplitude(a2) * (use.ch.g @ use.x)

    def received(self, use: Use, user: int, s: np.ndarray, noiseless: bool = False) -> complex:
        value = complex(self.row(use, user) @ s)
        if noiseless:
            return value
        return value + (use.ch.u if user == 1 else use.ch.v)

    def observations(self, user: int) -> List[EffectiveObservation]:
        prefix = "y" if user == 1 else "z"
        return [
            EffectiveObservation(self.symbols, self.row(use, user), 1.0, label=f"{prefix}{use.t}")
            for use in self.uses
        ]

    def virtual(self, coefficients: np.ndarray, noise_power: float, label: str) -> EffectiveObservation:
        """Side-information row available once the common layer is decoded."""
        return EffectiveObservation(
            self.symbols, coefficients, max(noise_power, MIN_SIDE_NOISE), frozenset({"C"}), label
        )


def _layers(*layers: Layer) -> List[Layer]:
    return [layer for layer in layers if layer.symbols]


def decode_block(
    block: Block,
    orders: Mapping[int, Sequence[Layer]],
    extra: Optional[Mapping[int, Sequence[EffectiveObservation]]] = None,
) -> Tuple[float, float, Dict[str, float], Dict[str, float]]:
    """Per-user layered decoding followed by common-layer settlement."""
    extra = extra or {}
    per_user: Dict[int, Dict[str, float]] = {}
    layers: Dict[str, Layer] = {}
    diagnostics: Dict[str, float] = {}

    for user, order in orders.items():
        obs = block.observations(user) + list(extra.get(user, ()))
        result = evaluate_layered_rate(obs, order, block_length=block.length)
        per_user[user] = result.per_layer
        for name, mi in result.per_layer.items():
            diagnostics[f"mi_u{user}_{name}"] = mi
        for layer in order:
            layers.setdefault(layer.name, layer)

    r1, r2, settled = settle_layers(per_user, list(layers.values()), block.length)
    return r1, r2, diagnostics, settled


def scheme_alpha(alpha: Number) -> float:
    value = float(alpha)
    if not 0 <= value <= 1:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return value


def orient(outcome: SchemeOutcome, strong_user: int) -> SchemeOutcome:
    if strong_user == 1:
        return outcome
    if strong_user == 2:
        return outcome.mirrored()
    raise ValueError(f"strong_user must be 1 or 2, got {strong_user}")


def _residual(block: Block, user: int, interferers: Sequence[str]) -> float:
    if not interferers:
        return 0.0
    return residual_interference_power(block.observations(user), interferers)


# ======================
# SCHEME 1: (N,D) THEN (P,N)
# ======================

def scheme1_nd_pn(alpha: Number, snr: SnrPoint, rng: np.random.Generator, strong_user: int = 1) -> SchemeOutcome:
    """
    t1 sends [a1 a2]; user 2 overhears g1^T[a1 a2] and reports g1 late.
    t2 resends that overheard combination on antenna 1 and zero-forces b1
    at user 1 with the current h2.
    """
    a = scheme_alpha(alpha)
    block = Block(
        [
            SymbolSpec("a1", Role.USER1, prelog=1.0),
            SymbolSpec("a2", Role.USER1, prelog=1.0),
            SymbolSpec("b1", Role.USER2, prelog=a),
        ],
        snr,
        a,
    )
    ch1 = sample_realization(rng)
    ch2 = sample_realization(rng)

    use1 = block.transmit(block.signal({"a1": antenna(0), "a2": antenna(1)}), ch1, TOPO_1A)
    x2 = block.on_antenna(ch1.g @ use1.x) + block.signal({"b1": null_beam(ch2.h)})
    block.transmit(x2, ch2, TOPO_1A)

    r1, r2, diagnostics, _ = decode_block(
        block,
        {1: [Layer("A", ("a1", "a2"), Role.USER1)], 2: [Layer("B", ("b1",), Role.USER2)]},
    )
    diagnostics["residual_u2"] = _residual(block, 2, block.names(Role.USER1))
    return orient(SchemeOutcome("tsm1", r1, r2, block.length, diagnostics), strong_user)


# ======================
# SCHEME 2: (P,D) THEN (N,N)
# ======================

def scheme2_pd_nn(alpha: Number, snr: SnrPoint, rng: np.random.Generator, strong_user: int = 1) -> SchemeOutcome:
    """t1 sends [a1 a2] + h1-null b1; t2 resends the a-part user 2 overheard at t1."""
    a = scheme_alpha(alpha)
    block = Block(
        [
            SymbolSpec("a1", Role.USER1, prelog=1.0),
            SymbolSpec("a2", Role.USER1, prelog=1.0),
            SymbolSpec("b1", Role.USER2, prelog=a),
        ],
        snr,
        a,
    )
    ch1 = sample_realization(rng)
    ch2 = sample_realization(rng)

    x1 = block.signal({"a1": antenna(0), "a2": antenna(1), "b1": null_beam(ch1.h)})
    use1 = block.transmit(x1, ch1, TOPO_1A)
    overheard = ch1.g @ block.restrict(use1.x, block.names(Role.USER1))
    block.transmit(block.on_antenna(overheard), ch2, TOPO_1A)

    r1, r2, diagnostics, _ = decode_block(
        block,
        {1: [Layer("A", ("a1", "a2"), Role.USER1)], 2: [Layer("B", ("b1",), Role.USER2)]},
    )
    diagnostics["residual_u2"] = _residual(block, 2, block.names(Role.USER1))
    return orient(SchemeOutcome("tsm2", r1, r2, block.length, diagnostics), strong_user)


# ======================
# SIDE INFORMATION
# ======================

@dataclass(frozen=True)
class SideInfo:
    """Quantization noise of forwarded side information plus bit-level checks."""

    bits: int
    noise_powers: Tuple[float, ...]
    saturated: int = 0
    mismatches_u1: int = 0
    mismatches_u2: int = 0

    def as_diagnostics(self) -> Dict[str, float]:
        finite = [p for p in self.noise_powers if p is not None]
        return {
            "side_bits": float(self.bits),
            "quant_error_power": float(np.mean(finite)) if finite else float("nan"),
            "saturated": float(self.saturated),
            "side_mismatch_u1": float(self.mismatches_u1),
            "side_mismatch_u2": float(self.mismatches_u2),
        }


def _nominal_power(rows: Sequence[np.ndarray]) -> float:
    """Mean received power of the rows for unit-power symbols."""
    return float(np.mean([np.sum(np.abs(r) ** 2) for r in rows]))


def _check_draws(block: Block) -> None:
    for use in block.uses:
        if use.ch.near_singular():
            raise NearSingularDraw(f"use {use.t}: near-singular channel gain")


def _common_round_trip(bits: np.ndarray, n_symbols: int) -> np.ndarray:
    """Ideal bits -> common symbols -> bits mapping."""
    return unpack_common_symbols(pack_common_symbols(bits, n_symbols), len(bits))


# ======================
# SCHEME 3: FIXED TOPOLOGY, DELAYED CSIT
# ======================

def phase_lengths(alpha: Number, scale: int = 1, t1: Optional[int] = None) -> Tuple[int, int, int]:
    """
    Phase durations with T2 = alpha*T1 and T1 = T3.
    alpha = p/q gives (q*m, p*m, q*m); an explicit t1 must make alpha*t1 whole.
    """
    alpha = as_fraction(alpha)
    if not 0 <= alpha <= 1:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if alpha.denominator > MAX_ALPHA_DENOMINATOR:
        raise NonIntegerPhases(f"alpha={alpha} has no small rational form")

    if t1 is None:
        if scale < 1:
            raise ValueError(f"scale must be >= 1, got {scale}")
        return alpha.denominator * scale, alpha.numerator * scale, alpha.denominator * scale

    if t1 < 1:
        raise ValueError(f"T1 must be >= 1, got {t1}")
    t2 = alpha * t1
    if t2.denominator != 1:
        raise NonIntegerPhases(f"alpha*T1 = {t2} is not an integer")
    return t1, int(t2), t1


def scheme3_dd_fixed(
    alpha: Number,
    snr: SnrPoint,
    rng: np.random.Generator,
    scale: int = 1,
    t1: Optional[int] = None,
    fidelity: Fidelity = Fidelity.ANALYTIC,
    noiseless: bool = False,
    strong_user: int = 1,
) -> SchemeOutcome:
    """
    Three-phase scheme for delayed CSIT on a fixed (1, alpha) topology.

    Phase 1 carries user 1's symbols, phase 2 user 2's. The transmitter then
    rebuilds what each user overheard, quantizes both with matching bit
    budgets and XORs them. Phase 3 broadcasts the XOR as common symbols c
    with a private a3 underneath at power rho^-alpha. Each user strips its
    own overheard part from the XOR and gains one extra observation per
    use of the other phase.
    """
    T1, T2, T3 = phase_lengths(alpha, scale, t1)
    a = scheme_alpha(alpha)
    side = a > 0

    specs: List[SymbolSpec] = []
    for t in range(1, T1 + 1):
        specs += [SymbolSpec(f"a{t}_1", Role.USER1, prelog=1.0), SymbolSpec(f"a{t}_2", Role.USER1, prelog=a)]
    for t in range(1, T2 + 1):
        specs += [SymbolSpec(f"b{t}_1", Role.USER2, prelog=1.0), SymbolSpec(f"b{t}_2", Role.USER2, prelog=a)]
    for k in range(1, T3 + 1):
        if side:
            specs.append(SymbolSpec(f"c{k}", Role.COMMON, prelog=a))
        specs.append(SymbolSpec(f"a{k}_3", Role.USER1, power_exponent=-a, prelog=1.0 - a))

    block = Block(specs, snr, a)
    phase1 = [
        block.transmit(block.signal({f"a{t}_1": antenna(0), f"a{t}_2": antenna(1)}), sample_realization(rng), TOPO_1A)
        for t in range(1, T1 + 1)
    ]
    phase2 = [
        block.transmit(block.signal({f"b{t}_1": antenna(0), f"b{t}_2": antenna(1)}), sample_realization(rng), TOPO_1A)
        for t in range(1, T2 + 1)
    ]
    for k in range(1, T3 + 1):
        beams = {f"a{k}_3": antenna(0)}
        if side:
            beams[f"c{k}"] = antenna(0)
        block.transmit(block.signal(beams), sample_realization(rng), TOPO_1A)

    extra: Dict[int, List[EffectiveObservation]] = {1: [], 2: []}
    info = SideInfo(bits=0, noise_powers=())
    if side:
        z_rows = [block.row(use, 2) for use in phase1]  # user 2 overheard user 1's symbols
        y_rows = [block.row(use, 1) for use in phase2]  # and user 1 overheard user 2's
        bits = budget_bits(T2 * snr.log2_rho, T1)

        if fidelity == Fidelity.BIT_LEVEL:
            _check_draws(block)
            info = _xor_side_info(block, rng, phase1, phase2, z_rows, y_rows, bits, T3, noiseless)
        else:
            info = SideInfo(
                bits=bits,
                noise_powers=(
                    quantization_noise_power(bits, T1, _nominal_power(z_rows)),
                    quantization_noise_power(bits, T2, _nominal_power(y_rows)),
                ),
            )
        d_z, d_y = info.noise_powers
        extra[1] = [block.virtual(r, d_z, f"lz{t}") for t, r in enumerate(z_rows, start=1)]
        extra[2] = [block.virtual(r, d_y, f"ly{t}") for t, r in enumerate(y_rows, start=1)]

    common = Layer("C", block.names(Role.COMMON), Role.COMMON)
    orders = {
        1: _layers(common, Layer("A", block.names(Role.USER1), Role.USER1)),
        2: _layers(common, Layer("B", block.names(Role.USER2), Role.USER2)),
    }
    r1, r2, diagnostics, settled = decode_block(block, orders, extra)
    diagnostics.update(info.as_diagnostics())
    if side:
        diagnostics["common_margin"] = settled["C"] - info.bits
    diagnostics.update({"t1": float(T1), "t2": float(T2), "t3": float(T3)})
    return orient(SchemeOutcome("tsm3", r1, r2, block.length, diagnostics), strong_user)


def _xor_side_info(
    block: Block,
    rng: np.random.Generator,
    phase1: Sequence[Use],
    phase2: Sequence[Use],
    z_rows: Sequence[np.ndarray],
    y_rows: Sequence[np.ndarray],
    bits: int,
    n_common: int,
    noiseless: bool,
) -> SideInfo:
    """
    Bit-level quantize-XOR-forward for one block.

    Each user re-quantizes its own observations of the other phase, XORs
    them with the decoded common bits and counts disagreements with the
    transmitter's bits for the counterpart. Noiseless observations give 0.
    """
    s = complex_normal(rng, len(block.symbols))
    p_z, p_y = _nominal_power(z_rows), _nominal_power(y_rows)

    l_z = np.array([r @ s for r in z_rows])
    l_y = np.array([r @ s for r in y_rows])
    w_z = quantize(l_z, bits, p_z)
    w_y = quantize(l_y, bits, p_y)
    common_bits = _common_round_trip(xor_bits(w_z.bits, w_y.bits), n_common)

    own_y = quantize([block.received(u, 1, s, noiseless) for u in phase2], bits, p_y)
    own_z = quantize([block.received(u, 2, s, noiseless) for u in phase1], bits, p_z)
    recovered_z = xor_bits(common_bits, own_y.bits)  # at user 1
    recovered_y = xor_bits(common_bits, own_z.bits)  # at user 2

    return SideInfo(
        bits=bits,
        noise_powers=(w_z.error_power(l_z), w_y.error_power(l_y)),
        saturated=int(np.sum(w_z.saturated) + np.sum(w_y.saturated)),
        mismatches_u1=int(np.sum(recovered_z != w_z.bits)),
        mismatches_u2=int(np.sum(recovered_y != w_y.bits)),
    )


# ======================
# SCHEME 4: ALTERNATING TOPOLOGY, DELAYED CSIT
# ======================

def scheme4_dd_alternating(
    alpha: Number,
    snr: SnrPoint,
    rng: np.random.Generator,
    variant: Scheme4Variant = Scheme4Variant.WSW,
    fidelity: Fidelity = Fidelity.ANALYTIC,
    noiseless: bool = False,
) -> SchemeOutcome:
    """
    t1 (1,alpha) sends user 1's symbols, t2 (alpha,1) user 2's. Both weak
    observations sum to iota, which is quantized to about alpha*log(rho)
    bits and sent at t3 as common symbol c over a private symbol for the
    user that is strong at t3.
    """
    variant = Scheme4Variant(variant)
    a = scheme_alpha(alpha)
    side = a > 0
    third_topo = TOPO_1A if variant == Scheme4Variant.WSW else TOPO_A1
    private = SymbolSpec("a3", Role.USER1, -a, 1.0 - a) if variant == Scheme4Variant.WSW else SymbolSpec("b3", Role.USER2, -a, 1.0 - a)

    specs = [
        SymbolSpec("a1", Role.USER1, prelog=1.0),
        SymbolSpec("a2", Role.USER1, prelog=a),
        SymbolSpec("b1", Role.USER2, prelog=1.0),
        SymbolSpec("b2", Role.USER2, prelog=a),
    ]
    if side:
        specs.append(SymbolSpec("c", Role.COMMON, prelog=a))
    specs.append(private)

    block = Block(specs, snr, a)
    use1 = block.transmit(block.signal({"a1": antenna(0), "a2": antenna(1)}), sample_realization(rng), TOPO_1A)
    use2 = block.transmit(block.signal({"b1": antenna(0), "b2": antenna(1)}), sample_realization(rng), TOPO_A1)
    beams = {private.name: antenna(0)}
    if side:
        beams["c"] = antenna(0)
    block.transmit(block.signal(beams), sample_realization(rng), third_topo)

    extra: Dict[int, List[EffectiveObservation]] = {}
    info = SideInfo(bits=0, noise_powers=())
    if side:
        iota = block.row(use1, 2) + block.row(use2, 1)
        nominal = float(np.sum(np.abs(iota) ** 2))
        bits = budget_bits(a * snr.log2_rho, 1)

        if fidelity == Fidelity.BIT_LEVEL:
            _check_draws(block)
            info = _sum_side_info(block, rng, use1, use2, bits, nominal, noiseless)
        else:
            info = SideInfo(bits, (quantization_noise_power(bits, 1, nominal),))

        row = block.virtual(iota, info.noise_powers[0], "iota")
        extra = {1: [row], 2: [row]}

    common = Layer("C", block.names(Role.COMMON), Role.COMMON)
    orders = {
        1: _layers(common, Layer("A", block.names(Role.USER1), Role.USER1)),
        2: _layers(common, Layer("B", block.names(Role.USER2), Role.USER2)),
    }
    r1, r2, diagnostics, settled = decode_block(block, orders, extra)
    diagnostics.update(info.as_diagnostics())
    if side:
        diagnostics["common_margin"] = settled["C"] - info.bits
    return SchemeOutcome(f"tsm4-{variant.value}", r1, r2, block.length, diagnostics)


def _sum_side_info(
    block: Block,
    rng: np.random.Generator,
    use1: Use,
    use2: Use,
    bits: int,
    nominal: float,
    noiseless: bool,
) -> SideInfo:
    """
    Bit-level iota for one block.

    The transmitter quantizes iota = z1 + y2 (noiseless), the common symbol
    carries the bits, and each user subtracts its own received sample:
    user 1 forms iota - y2 to estimate z1, user 2 forms iota - z1 to
    estimate y2. A real dimension counts as a mismatch when the estimate
    misses the true counterpart by more than half a quantizer step.
    """
    s = complex_normal(rng, len(block.symbols))
    l_z = complex(block.row(use1, 2) @ s)  # user 2 overheard a at t1
    l_y = complex(block.row(use2, 1) @ s)  # user 1 overheard b at t2
    value = l_z + l_y

    q = quantize([value], bits, nominal)
    iota = complex(dequantize(_common_round_trip(q.bits, 1), q.levels)[0])
    est_z = iota - block.received(use2, 1, s, noiseless)
    est_y = iota - block.received(use1, 2, s, noiseless)

    half_steps = q.levels.steps() / 2
    return SideInfo(
        bits=bits,
        noise_powers=(q.error_power([value]),),
        saturated=int(np.sum(q.saturated)),
        mismatches_u1=_dims_off_grid(est_z, l_z, half_steps),
        mismatches_u2=_dims_off_grid(est_y, l_y, half_steps),
    )


def _dims_off_grid(estimate: complex, truth: complex, half_steps: np.ndarray) -> int:
    error = estimate - truth
    slack = 1e-9 * (1.0 + abs(truth))
    return int(np.sum(np.array([abs(error.real), abs(error.imag)]) > half_steps + slack))


# ======================
# SCHEME 5: (P,N) / (N,P) PAIRS
# ======================

def _slot_channels(rng: np.random.Generator, reverse: bool) -> Tuple[ChannelRealization, ChannelRealization]:
    """(PN-slot, NP-slot) channels; reverse puts the NP slot first in time."""
    first = sample_realization(rng)
    second = sample_realization(rng)
    return (second, first) if reverse else (first, second)


def _transmit_slots(block: Block, reverse: bool, pn, np_) -> None:
    """pn and np_ are (signal, channel, topology) triples."""
    for x, ch, topo in ((np_, pn) if reverse else (pn, np_)):
        block.transmit(x, ch, topo)


def _same_topology_kernel(a: float, snr: SnrPoint, rng: np.random.Generator, reverse: bool) -> SchemeOutcome:
    """(P,N,1,alpha) and (N,P,1,alpha): a1 reaches user 1 twice, user 2 cancels it."""
    block = Block(
        [
            SymbolSpec("a1", Role.USER1, prelog=1.0),
            SymbolSpec("a2", Role.USER1, prelog=1.0),
            SymbolSpec("b1", Role.USER2, prelog=a),
        ],
        snr,
        a,
    )
    ch_pn, ch_np = _slot_channels(rng, reverse)
    pn = block.signal({"a1": matched_beam(ch_pn.h), "b1": null_beam(ch_pn.h)})
    np_ = block.signal({"a1": matched_beam(ch_np.g), "a2": null_beam(ch_np.g)})
    _transmit_slots(block, reverse, (pn, ch_pn, TOPO_1A), (np_, ch_np, TOPO_1A))

    r1, r2, diagnostics, _ = decode_block(
        block,
        {1: [Layer("A", ("a1", "a2"), Role.USER1)], 2: [Layer("B", ("b1",), Role.USER2)]},
    )
    diagnostics["residual_u2"] = _residual(block, 2, ("a1", "a2"))
    return SchemeOutcome(Scheme5Subcase.S1A_S1A.value, r1, r2, block.length, diagnostics)


def _cross_strong_kernel(a: float, snr: SnrPoint, rng: np.random.Generator, reverse: bool) -> SchemeOutcome:
    """
    (P,N,1,alpha) and (N,P,alpha,1): each slot superposes a layer at
    rho^-alpha for the user that is strong there. Both users decode a1
    first, then their own layers.
    """
    block = Block(
        [
            SymbolSpec("a1", Role.USER1, prelog=a),
            SymbolSpec("a2", Role.USER1, power_exponent=-a, prelog=1.0 - a),
            SymbolSpec("a3", Role.USER1, prelog=a),
            SymbolSpec("b1", Role.USER2, prelog=a),
            SymbolSpec("b2", Role.USER2, power_exponent=-a, prelog=1.0 - a),
        ],
        snr,
        a,
    )
    ch_pn, ch_np = _slot_channels(rng, reverse)
    pn = block.signal({"a1": matched_beam(ch_pn.h), "a2": matched_beam(ch_pn.h), "b1": null_beam(ch_pn.h)})
    np_ = block.signal({"a1": matched_beam(ch_np.g), "a3": null_beam(ch_np.g), "b2": matched_beam(ch_np.g)})
    _transmit_slots(block, reverse, (pn, ch_pn, TOPO_1A), (np_, ch_np, TOPO_A1))

    shared = Layer("A1", ("a1",), Role.USER1)
    r1, r2, diagnostics, _ = decode_block(
        block,
        {
            1: [shared, Layer("A", ("a2", "a3"), Role.USER1)],
            2: [shared, Layer("B", ("b1", "b2"), Role.USER2)],
        },
    )
    diagnostics["residual_u2"] = _residual(block, 2, ("a2", "a3"))
    return SchemeOutcome(Scheme5Subcase.S1A_SA1.value, r1, r2, block.length, diagnostics)


def _cross_weak_kernel(a: float, snr: SnrPoint, rng: np.random.Generator, reverse: bool) -> SchemeOutcome:
    """
    (P,N,alpha,1) and (N,P,1,alpha): current CSIT sits with the weak user.
    a1 (prelog alpha) is matched to the reporting user in both slots; user 2
    decodes it from its weak slot and cancels it before b1.
    """
    block = Block(
        [
            SymbolSpec("a1", Role.USER1, prelog=a),
            SymbolSpec("a2", Role.USER1, prelog=1.0),
            SymbolSpec("b1", Role.USER2, prelog=1.0),
        ],
        snr,
        a,
    )
    ch_pn, ch_np = _slot_channels(rng, reverse)
    pn = block.signal({"a1": matched_beam(ch_pn.h), "b1": null_beam(ch_pn.h)})
    np_ = block.signal({"a1": matched_beam(ch_np.g), "a2": null_beam(ch_np.g)})
    _transmit_slots(block, reverse, (pn, ch_pn, TOPO_A1), (np_, ch_np, TOPO_1A))

    shared = Layer("A1", ("a1",), Role.USER1)
    r1, r2, diagnostics, _ = decode_block(
        block,
        {
            1: [shared, Layer("A", ("a2",), Role.USER1)],
            2: [shared, Layer("B", ("b1",), Role.USER2)],
        },
    )
    diagnostics["residual_u2"] = _residual(block, 2, ("a2",))
    return SchemeOutcome(Scheme5Subcase.SA1_S1A.value, r1, r2, block.length, diagnostics)


def scheme5_pn_np(
    alpha: Number,
    snr: SnrPoint,
    rng: np.random.Generator,
    subcase: Scheme5Subcase = Scheme5Subcase.S1A_S1A,
    reverse: bool = False,
) -> SchemeOutcome:
    """
    Two-use scheme for one (P,N) and one (N,P) use. The subcase names the
    topologies of the (P,N) and (N,P) uses; reverse sends the (N,P) use first.
    """
    subcase = Scheme5Subcase(subcase)
    a = scheme_alpha(alpha)

    if subcase == Scheme5Subcase.S1A_S1A:
        return _same_topology_kernel(a, snr, rng, reverse)
    if subcase == Scheme5Subcase.SA1_SA1:
        # users interchanged: the (P,N) slot becomes the mirrored (N,P) slot
        outcome = _same_topology_kernel(a, snr, rng, not reverse).mirrored()
        return SchemeOutcome(subcase.value, outcome.rate_user1, outcome.rate_user2, outcome.block_length, outcome.diagnostics)
    if subcase == Scheme5Subcase.S1A_SA1:
        return _cross_strong_kernel(a, snr, rng, reverse)
    return _cross_weak_kernel(a, snr, rng, reverse)


_SUBCASES = {
    (TOPO_1A, TOPO_1A): Scheme5Subcase.S1A_S1A,
    (TOPO_A1, TOPO_A1): Scheme5Subcase.SA1_SA1,
    (TOPO_1A, TOPO_A1): Scheme5Subcase.S1A_SA1,
    (TOPO_A1, TOPO_1A): Scheme5Subcase.SA1_S1A,
}


@dataclass(frozen=True)
class PairedUses:
    pn_topo: TopologyState
    np_topo: TopologyState
    reverse: bool

    @property
    def subcase(self) -> Scheme5Subcase:
        return _SUBCASES[(self.pn_topo, self.np_topo)]


def require_pn_np_family(dist: StateDistribution) -> None:
    """All mass on (P,N)/(N,P) over uneven topologies, half of it on (P,N)."""
    require_valid(dist)
    violations = [
        Violation("pn-np-support", float(v), f"{c.label}{t.pretty}")
        for (c, t), v in dist.entries.items()
        if v != 0 and (c not in (_PN, _NP) or t not in (TOPO_1A, TOPO_A1))
    ]
    pn = sum(float(v) for (c, _), v in dist.entries.items() if c == _PN)
    if abs(pn - 0.5) > SUM_TOLERANCE:
        violations.append(Violation("pn-half", pn, "(P,N) uses must make up half of the schedule"))
    if violations:
        raise InvalidDistribution(ValidationReport(tuple(violations)))


def pair_uses(schedule: Iterable) -> Tuple[List[PairedUses], List[Tuple[CsitState, TopologyState]]]:
    """
    Greedy pairing in time order: each (P,N) use waits for the next (N,P)
    use and vice versa. Returns the pairs and the uses left unmatched.
    """
    pending_pn: deque = deque()
    pending_np: deque = deque()
    pairs: List[PairedUses] = []

    for csit, topo in schedule:
        if csit == _PN:
            if pending_np:
                pairs.append(PairedUses(topo, pending_np.popleft(), reverse=True))
            else:
                pending_pn.append(topo)
        elif csit == _NP:
            if pending_pn:
                pairs.append(PairedUses(pending_pn.popleft(), topo, reverse=False))
            else:
                pending_np.append(topo)
        else:
            raise InvalidDistribution(
                ValidationReport((Violation("pn-np-support", 1.0, csit.label),))
            )

    leftover = [(_PN, t) for t in pending_pn] + [(_NP, t) for t in pending_np]
    return pairs, leftover


def scheme5_concatenate(
    dist: StateDistribution,
    snr: SnrPoint,
    rng: np.random.Generator,
    horizon: int = DEFAULT_HORIZON,
) -> SchemeOutcome:
    """Run the two-use kernels over a periodic schedule for dist and pool the bits."""
    require_pn_np_family(dist)
    schedule = periodic_schedule(dist, horizon)
    pairs, leftover = pair_uses(schedule)
    if len(leftover) > MAX_UNPAIRED or not pairs:
        raise UnpairableSchedule(
            f"horizon {horizon} leaves {len(leftover)} unmatched uses: {schedule.labels()}"
        )
    if leftover:
        logger.debug(f"{len(leftover)} unmatched uses excluded from the rate")

    bits1, bits2 = [], []
    for pair in pairs:
        outcome = scheme5_pn_np(dist.alpha, snr, rng, pair.subcase, reverse=pair.reverse)
        bits1.append(outcome.rate_user1 * outcome.block_length)
        bits2.append(outcome.rate_user2 * outcome.block_length)

    length = 2 * len(pairs)
    diagnostics = {"pairs": float(len(pairs)), "unpaired": float(len(leftover))}
    return SchemeOutcome("tsm5", math.fsum(bits1) / length, math.fsum(bits2) / length, length, diagnostics)


def subcase_distribution(subcase: Scheme5Subcase, alpha: Number) -> StateDistribution:
    """Half (P,N) and half (N,P) with the subcase's topologies."""
    subcase = Scheme5Subcase(subcase)
    pn_topo, np_topo = next(k for k, v in _SUBCASES.items() if v == subcase)
    half = Fraction(1, 2)
    entries = {(_PN, pn_topo): half}
    entries[(_NP, np_topo)] = entries.get((_NP, np_topo), 0) + half
    return StateDistribution(entries, as_fraction(alpha))


# ======================
# MAT BASELINE
# ======================

def scheme_mat_baseline(alpha: Number, snr: SnrPoint, rng: np.random.Generator, strong_user: int = 1) -> SchemeOutcome:
    """
    Three-slot delayed-CSIT scheme run on (1, alpha) without topology
    awareness: user 2's two symbols are limited to prelog alpha each.
    """
    a = scheme_alpha(alpha)
    block = Block(
        [
            SymbolSpec("a1", Role.USER1, prelog=1.0),
            SymbolSpec("a2", Role.USER1, prelog=1.0),
            SymbolSpec("b1", Role.USER2, prelog=a),
            SymbolSpec("b2", Role.USER2, prelog=a),
        ],
        snr,
        a,
    )
    use1 = block.transmit(block.signal({"a1": antenna(0), "a2": antenna(1)}), sample_realization(rng), TOPO_1A)
    use2 = block.transmit(block.signal({"b1": antenna(0), "b2": antenna(1)}), sample_realization(rng), TOPO_1A)
    overheard = use1.ch.g @ use1.x + use2.ch.h @ use2.x  # L_z + L_y
    block.transmit(block.on_antenna(overheard), sample_realization(rng), TOPO_1A)

    r1, r2, diagnostics, _ = decode_block(
        block,
        {1: [Layer("A", ("a1", "a2"), Role.USER1)], 2: [Layer("B", ("b1", "b2"), Role.USER2)]},
    )
    return orient(SchemeOutcome("mat", r1, r2, block.length, diagnostics), strong_user)
