import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

_LN2 = math.log(2.0)


class SchemeError(RuntimeError):
    """Base class for failures inside one scheme evaluation."""


class SingularSystem(SchemeError):
    pass


# ======================
# SYMBOLS & LAYERS
# ======================

class Role(Enum):
    USER1 = "a"
    USER2 = "b"
    COMMON = "c"


@dataclass(frozen=True)
class SymbolSpec:
    name: str
    role: Role
    power_exponent: float = 0.0
    prelog: float = 1.0

    def __post_init__(self):
        if self.power_exponent > 0:
            raise ValueError(f"{self.name}: power exponent must be <= 0")
        if not 0 <= self.prelog <= 1:
            raise ValueError(f"{self.name}: prelog must lie in [0, 1]")


@dataclass(frozen=True)
class Layer:
    """Symbols decoded jointly in one successive-decoding step."""

    name: str
    symbols: Tuple[str, ...]
    owner: Role


@dataclass(frozen=True, eq=False)
class EffectiveObservation:
    """
    One scalar observation row: coefficients over the block's unit-power
    symbols (amplitudes folded in) plus independent Gaussian noise.
    Rows listing `requires` become usable only after those layers decode.
    """

    symbols: Tuple[str, ...]
    coefficients: np.ndarray
    noise_power: float = 1.0
    requires: FrozenSet[str] = field(default_factory=frozenset)
    label: str = ""

    def __post_init__(self):
        coeffs = np.asarray(self.coefficients, dtype=complex)
        if coeffs.shape != (len(self.symbols),):
            raise ValueError(f"{self.label}: {coeffs.shape} coefficients for {len(self.symbols)} symbols")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError(f"{self.label}: non-finite coefficients")
        if not (self.noise_power > 0 and math.isfinite(self.noise_power)):
            raise ValueError(f"{self.label}: noise power must be positive, got {self.noise_power}")
        object.__setattr__(self, "coefficients", coeffs)


@dataclass(frozen=True)
class LayeredRate:
    per_layer: Dict[str, float]
    rate: float
    block_length: int


# ======================
# LOG-DET HELPERS
# ======================

def _log2det(matrix: np.ndarray) -> float:
    sign, logdet = np.linalg.slogdet(matrix)
    if np.real(sign) <= 0 or not np.isfinite(logdet):
        raise SingularSystem("observation covariance is not positive definite")
    return float(logdet) / _LN2


def _stack(observations: Sequence[EffectiveObservation]) -> Tuple[np.ndarray, np.ndarray]:
    G = np.vstack([o.coefficients for o in observations])
    N = np.diag([o.noise_power for o in observations]).astype(complex)
    return G, N


def _column_index(symbols: Tuple[str, ...]) -> Dict[str, int]:
    return {name: k for k, name in enumerate(symbols)}


def evaluate_layered_rate(
    observations: Sequence[EffectiveObservation],
    decode_order: Sequence[Layer],
    target_layers: Optional[Iterable[str]] = None,
    block_length: int = 1,
) -> LayeredRate:
    """
    Successive decoding over stacked observations.

    For each layer in decode_order the mutual information is
    log2 det(N + J + S) - log2 det(N + J), with S the layer's received
    covariance and J everything not yet decoded (including symbols that are
    never decoded, which stay as interference). Decoded layers are removed.
    Returns per-layer MI (bits per block) and the target-layer sum per use.
    """
    if block_length <= 0:
        raise ValueError("block_length must be positive")
    if not observations:
        raise ValueError("no observations")

    symbols = observations[0].symbols
    if any(o.symbols != symbols for o in observations):
        raise ValueError("observations must share one symbol list")
    index = _column_index(symbols)

    for layer in decode_order:
        unknown = [s for s in layer.symbols if s not in index]
        if unknown:
            raise ValueError(f"layer {layer.name} names unknown symbols {unknown}")

    remaining = set(symbols)
    decoded: set = set()
    per_layer: Dict[str, float] = {}

    for layer in decode_order:
        rows = [o for o in observations if o.requires <= decoded]
        if not rows:
            per_layer[layer.name] = 0.0
        else:
            G, N = _stack(rows)
            own = [index[s] for s in layer.symbols]
            rest = [index[s] for s in symbols if s in remaining and s not in layer.symbols]

            G_rest = G[:, rest]
            G_own = G[:, own]
            base = N + G_rest @ G_rest.conj().T
            full = base + G_own @ G_own.conj().T
            per_layer[layer.name] = max(0.0, _log2det(full) - _log2det(base))

        remaining -= set(layer.symbols)
        decoded.add(layer.name)

    targets = set(per_layer) if target_layers is None else set(target_layers)
    total = math.fsum(v for k, v in per_layer.items() if k in targets)
    return LayeredRate(per_layer, total / block_length, block_length)


def settle_layers(
    per_user: Mapping[int, Mapping[str, float]],
    layers: Sequence[Layer],
    block_length: int,
) -> Tuple[float, float, Dict[str, float]]:
    """
    Rates per user from per-user layer MIs.

    A layer decoded by several users is sent at the smallest of their MIs.
    Each user is credited with the layers it owns; common layers carry
    side information only.
    """
    settled: Dict[str, float] = {}
    for layer in layers:
        mis = [mi[layer.name] for mi in per_user.values() if layer.name in mi]
        if not mis:
            raise ValueError(f"layer {layer.name} is decoded by no user")
        settled[layer.name] = min(mis)

    def credit(role: Role) -> float:
        return math.fsum(settled[l.name] for l in layers if l.owner == role) / block_length

    return credit(Role.USER1), credit(Role.USER2), settled


def residual_interference_power(
    observations: Sequence[EffectiveObservation],
    interferers: Sequence[str],
) -> float:
    """
    Interference power left after the best unit-norm linear combination of
    the rows; zero when the interferers occupy fewer dimensions than rows.
    """
    symbols = observations[0].symbols
    index = _column_index(symbols)
    G, _ = _stack(observations)
    G_i = G[:, [index[s] for s in interferers]]
    eig = np.linalg.eigvalsh(G_i @ G_i.conj().T)
    return float(max(eig[0], 0.0))

