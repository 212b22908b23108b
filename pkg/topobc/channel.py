import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from topobc.state_model import Number, TopologyState

logger = logging.getLogger(__name__)

# ======================
# CHANNEL CONFIG
# ======================

POWER_TOLERANCE = 1e-9
NEAR_SINGULAR_GAIN = 1e-6
N_TX = 2

# Per use: h (2), g (2), u, v
_DRAWS_PER_USE = 6


class ZeroVector(ValueError):
    pass


class PowerConstraintViolated(RuntimeError):
    pass


# ======================
# TYPES
# ======================

@dataclass(frozen=True)
class SnrPoint:
    rho: float

    def __post_init__(self):
        if not self.rho >= 1:
            raise ValueError(f"SNR scale rho must be >= 1, got {self.rho}")

    @classmethod
    def from_db(cls, snr_db: float) -> "SnrPoint":
        return cls(10.0 ** (snr_db / 10.0))

    @property
    def log2_rho(self) -> float:
        return math.log2(self.rho)

    @property
    def db(self) -> float:
        return 10.0 * math.log10(self.rho)

    def power(self, exponent: Number) -> float:
        """rho ** exponent."""
        return self.rho ** float(exponent)

    def amplitude(self, exponent: Number) -> float:
        """sqrt(rho ** exponent)."""
        return self.rho ** (float(exponent) / 2.0)


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    h: np.ndarray
    g: np.ndarray
    u: complex
    v: complex

    def near_singular(self, threshold: float = NEAR_SINGULAR_GAIN) -> bool:
        """True when a first-antenna gain used for normalization is tiny."""
        return abs(self.h[0]) ** 2 < threshold or abs(self.g[0]) ** 2 < threshold


# ======================
# RANDOM STREAMS
# ======================

def trial_stream(seed: int, snr_index: int, trial: int) -> np.random.Generator:
    """
    Counter-based stream for one trial.

    Philox is keyed by the seed; the trial and SNR indices sit in the upper
    counter words, so each (seed, snr_index, trial) owns a disjoint block and
    never depends on how trials are split across workers.
    """
    if seed < 0 or snr_index < 0 or trial < 0:
        raise ValueError("seed, snr_index and trial must be nonnegative")
    bitgen = np.random.Philox(key=seed, counter=[0, 0, trial, snr_index])
    return np.random.Generator(bitgen)


def complex_normal(rng: np.random.Generator, size: int) -> np.ndarray:
    """
    CN(0, 1) samples by Box-Muller in polar form.
    |z|^2 = -ln(U1) is Exp(1); real and imaginary parts are N(0, 1/2).
    """
    u1 = 1.0 - rng.random(size)  # (0, 1]
    u2 = rng.random(size)
    radius = np.sqrt(-np.log(u1))
    return radius * np.exp(2j * np.pi * u2)


def sample_realization(rng: np.random.Generator) -> ChannelRealization:
    draws = complex_normal(rng, _DRAWS_PER_USE)
    return ChannelRealization(
        h=draws[0:2].copy(),
        g=draws[2:4].copy(),
        u=complex(draws[4]),
        v=complex(draws[5]),
    )


# ======================
# RECEIVE MODEL
# ======================

def check_power(x: np.ndarray) -> float:
    """
    Average power constraint E|x|^2 <= 1.
    For a precoder X over unit-power i.i.d. symbols this is ||X||_F^2;
    single symbol draws may exceed it.
    """
    power = float(np.sum(np.abs(x) ** 2))
    if power > 1.0 + POWER_TOLERANCE:
        raise PowerConstraintViolated(f"transmit power {power:.12f} exceeds 1")
    return power


def receive(
    x: np.ndarray,
    ch: ChannelRealization,
    topo: TopologyState,
    snr: SnrPoint,
    alpha: Number,
) -> Tuple[complex, complex]:
    """y = rho^(A1/2) h^T x + u ,  z = rho^(A2/2) g^T x + v."""
    a1, a2 = topo.exponents(alpha)
    x = np.asarray(x, dtype=complex)
    y = snr.amplitude(a1) * complex(ch.h @ x) + ch.u
    z = snr.amplitude(a2) * complex(ch.g @ x) + ch.v
    return y, z


# ======================
# BEAM HELPERS
# ======================

def _norm(e: np.ndarray) -> float:
    norm = float(np.linalg.norm(e))
    if not norm > 0:
        raise ZeroVector("cannot build a beam from a zero vector")
    return norm


def orthogonal_complement(e) -> np.ndarray:
    """Unit vector (-conj(e2), conj(e1)) / |e|, orthogonal to e under <a, b> = a^H b."""
    e = np.asarray(e, dtype=complex)
    norm = _norm(e)
    return np.array([-np.conj(e[1]), np.conj(e[0])]) / norm


def null_beam(e) -> np.ndarray:
    """Unit beam b with e^T b = 0, i.e. invisible to a receiver with channel e."""
    return orthogonal_complement(np.conj(np.asarray(e, dtype=complex)))


def matched_beam(e) -> np.ndarray:
    """Unit beam conj(e)/|e|, so e^T b = |e|."""
    e = np.asarray(e, dtype=complex)
    return np.conj(e) / _norm(e)


def antenna(k: int) -> np.ndarray:
    beam = np.zeros(N_TX, dtype=complex)
    beam[k] = 1.0
    return beam
