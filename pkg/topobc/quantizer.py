import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

# ======================
# QUANTIZER CONFIG
# ======================

RANGE_FACTOR = 4.0  # half-range = RANGE_FACTOR * sqrt(nominal power)
EXTRA_BITS_PER_DIM = 3  # constant bits over the ceil(alpha log2 rho) leading term


class BudgetTooSmall(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class QuantizerGrid:
    """
    Uniform grid per real dimension (re/im interleaved, value by value).
    Reconstruction points are -R + k*step, k = 0..2^b - 1, so 0 is a
    reconstruction point and the covered range is [-R - step/2, R - step/2].
    """

    half_range: float
    bits_per_dim: Tuple[int, ...]

    @property
    def n_values(self) -> int:
        return len(self.bits_per_dim) // 2

    @property
    def total_bits(self) -> int:
        return sum(self.bits_per_dim)

    def steps(self) -> np.ndarray:
        levels = np.power(2.0, np.asarray(self.bits_per_dim, dtype=float))
        return 2.0 * self.half_range / levels

    def noise_power(self) -> float:
        """Uniform-error model: mean over values of sum over (re, im) of step^2/12."""
        if self.n_values == 0:
            return 0.0
        return float(np.sum(self.steps() ** 2 / 12.0)) / self.n_values


@dataclass(frozen=True, eq=False)
class QuantizedSideInfo:
    bits: np.ndarray
    levels: QuantizerGrid
    reconstruction: np.ndarray
    saturated: np.ndarray

    def error_power(self, values) -> float:
        """Mean |value - reconstruction|^2 per complex value."""
        values = np.atleast_1d(np.asarray(values, dtype=complex))
        return float(np.mean(np.abs(values - self.reconstruction) ** 2))

    @property
    def any_saturated(self) -> bool:
        return bool(np.any(self.saturated))


def split_bits(total_bits: int, n_dims: int) -> Tuple[int, ...]:
    """Even split; the remainder goes to the earliest dimensions."""
    base, extra = divmod(total_bits, n_dims)
    return tuple(base + 1 if d < extra else base for d in range(n_dims))


def _grid(n_values: int, total_bits: int, nominal_power: float) -> QuantizerGrid:
    n_dims = 2 * n_values
    if n_values == 0 or total_bits < n_dims:
        raise BudgetTooSmall(
            f"{total_bits} bits cannot cover {n_values} complex values (need >= {n_dims})"
        )
    if not nominal_power > 0:
        raise ValueError(f"nominal power must be positive, got {nominal_power}")
    return QuantizerGrid(RANGE_FACTOR * math.sqrt(nominal_power), split_bits(total_bits, n_dims))


def _real_view(values: np.ndarray) -> np.ndarray:
    real = np.empty(2 * len(values))
    real[0::2] = values.real
    real[1::2] = values.imag
    return real


def quantize(values, total_bits: int, nominal_power: float = 1.0) -> QuantizedSideInfo:
    values = np.atleast_1d(np.asarray(values, dtype=complex))
    grid = _grid(len(values), total_bits, nominal_power)
    steps = grid.steps()
    R = grid.half_range

    real = _real_view(values)
    recon = np.empty_like(real)
    saturated = np.zeros(len(real), dtype=bool)
    bits = []

    for d, (x, b, step) in enumerate(zip(real, grid.bits_per_dim, steps)):
        top = (1 << b) - 1
        k = int(np.rint((x + R) / step))
        if k < 0 or k > top:
            saturated[d] = True
            k = min(max(k, 0), top)
        recon[d] = -R + k * step
        bits.extend((k >> (b - 1 - i)) & 1 for i in range(b))

    reconstruction = recon[0::2] + 1j * recon[1::2]
    return QuantizedSideInfo(
        bits=np.asarray(bits, dtype=np.uint8),
        levels=grid,
        reconstruction=reconstruction,
        saturated=saturated,
    )


def dequantize(bits, grid: QuantizerGrid) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8)
    if len(bits) != grid.total_bits:
        raise LengthMismatch(f"{len(bits)} bits for a {grid.total_bits}-bit grid")

    steps = grid.steps()
    recon = np.empty(len(grid.bits_per_dim))
    pos = 0
    for d, (b, step) in enumerate(zip(grid.bits_per_dim, steps)):
        k = 0
        for bit in bits[pos:pos + b]:
            k = (k << 1) | int(bit)
        pos += b
        recon[d] = -grid.half_range + k * step
    return recon[0::2] + 1j * recon[1::2]


def xor_bits(w1, w2) -> np.ndarray:
    w1 = np.asarray(w1, dtype=np.uint8)
    w2 = np.asarray(w2, dtype=np.uint8)
    if w1.shape != w2.shape:
        raise LengthMismatch(f"cannot XOR {len(w1)} bits with {len(w2)} bits")
    return np.bitwise_xor(w1, w2)


def budget_bits(leading_bits: float, n_values: int) -> int:
    """
    Bit budget ceil(leading term) plus EXTRA_BITS_PER_DIM for every real
    dimension, which keeps the quantization noise below the receiver noise.
    A zero leading term (alpha = 0) forwards nothing.
    """
    if leading_bits <= 0 or n_values == 0:
        return 0
    return math.ceil(leading_bits - 1e-9) + 2 * n_values * EXTRA_BITS_PER_DIM


def quantization_noise_power(total_bits: int, n_values: int, nominal_power: float) -> float:
    """Per-value quantization noise used by analytic-rate mode."""
    return _grid(n_values, total_bits, nominal_power).noise_power()


def pack_common_symbols(bits, n_symbols: int) -> Sequence[int]:
    """
    Ideal bits-to-symbol map: split the bit vector into n_symbols nearly equal
    chunks and read each chunk as an integer index.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    sizes = split_bits(len(bits), n_symbols)
    out, pos = [], 0
    for size in sizes:
        k = 0
        for bit in bits[pos:pos + size]:
            k = (k << 1) | int(bit)
        out.append(k)
        pos += size
    return out


def unpack_common_symbols(indices: Sequence[int], total_bits: int) -> np.ndarray:
    sizes = split_bits(total_bits, len(indices))
    bits = []
    for k, size in zip(indices, sizes):
        bits.extend((k >> (size - 1 - i)) & 1 for i in range(size))
    return np.asarray(bits, dtype=np.uint8)
