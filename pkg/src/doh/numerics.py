"""Counter-addressable random streams and fixed-order dense products.

The stream is SplitMix64: output i of stream s is a pure function of (s, i),
so any entry of a derived random matrix can be regenerated in isolation.
Dense products fix their summation order (ascending column index) so that
two runs, two platforms, or two backends produce bit-identical floats.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


@dataclass(frozen=True)
class RngStream:
    """A random-access stream identified by a 64-bit seed."""

    seed: int

    def __post_init__(self):
        if not 0 <= self.seed <= MASK64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")


def stream_u64(stream: RngStream, index: int) -> int:
    """SplitMix64 output at `index`; pure in (seed, index)."""
    z = (stream.seed + (index + 1) * _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return (z ^ (z >> 31)) & MASK64


def uniform_from_u64(word: int, bound: float) -> float:
    """Map one 64-bit word to [-bound, bound): top 53 bits, half-open."""
    if bound <= 0:
        raise ValueError("bound must be positive")
    u = (word >> 11) * 2.0 ** -53
    return bound * (2.0 * u - 1.0)


def stream_uniform(stream: RngStream, index: int, bound: float) -> float:
    """Uniform draw on [-bound, bound) from the top 53 bits of stream_u64."""
    return uniform_from_u64(stream_u64(stream, index), bound)


def stream_u64_array(stream: RngStream, start: int, count: int) -> np.ndarray:
    return kernels.u64_fill(stream.seed, start, count)


def stream_uniform_array(stream: RngStream, start: int, count: int, bound: float) -> np.ndarray:
    if bound <= 0:
        raise ValueError("bound must be positive")
    return kernels.uniform_fill(stream.seed, start, count, bound)


def substream(stream: RngStream, index: int) -> RngStream:
    """Derive an independent child stream (seed = output at `index`)."""
    return RngStream(stream_u64(stream, index))


def _as_matrix(m) -> np.ndarray:
    m = np.ascontiguousarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("matrix must be two-dimensional")
    return m


def _as_vector(v, length: int, what: str) -> np.ndarray:
    v = np.ascontiguousarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != length:
        raise ValueError(f"{what} must be a vector of length {length}")
    return v


def matvec(m, v) -> np.ndarray:
    """m @ v, summed in ascending column order for bit-reproducibility."""
    m = _as_matrix(m)
    v = _as_vector(v, m.shape[1], "v")
    return kernels.ordered_matvec(m, v)


def matvec_transposed(m, u) -> np.ndarray:
    """m.T @ u, each column summed in ascending row order."""
    m = _as_matrix(m)
    u = _as_vector(u, m.shape[0], "u")
    return kernels.ordered_matvec_t(m, u)
