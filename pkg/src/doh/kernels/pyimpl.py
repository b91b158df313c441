"""NumPy fallback for the hot kernels.

Every reduction here runs in ascending-index order via ``np.add.accumulate``
(a strict sequential scan), so results are bit-identical to the compiled
backend, which uses plain C loops compiled without FMA contraction.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = 2.0 ** -53

# elements per block when streaming entries that are never materialized whole
_BLOCK = 1 << 19


def u64_fill(seed: int, start: int, count: int) -> np.ndarray:
    """SplitMix64 outputs at positions start..start+count-1 of stream `seed`."""
    idx = np.arange(start, start + count, dtype=np.uint64)
    z = np.uint64(seed) + (idx + np.uint64(1)) * _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def uniform_fill(seed: int, start: int, count: int, bound: float) -> np.ndarray:
    """Uniform draws on [-bound, bound) from the top 53 bits of each u64."""
    u = (u64_fill(seed, start, count) >> np.uint64(11)).astype(np.float64) * _U53
    return bound * (2.0 * u - 1.0)


def ordered_matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """m @ v with each row summed sequentially in ascending column order."""
    rows, cols = m.shape
    out = np.empty(rows, dtype=np.float64)
    step = max(1, _BLOCK // max(cols, 1))
    for r0 in range(0, rows, step):
        prod = m[r0:r0 + step] * v
        np.add.accumulate(prod, axis=1, out=prod)
        out[r0:r0 + step] = prod[:, -1]
    return out


def ordered_matvec_t(m: np.ndarray, u: np.ndarray) -> np.ndarray:
    """m.T @ u with each column summed sequentially in ascending row order."""
    rows, cols = m.shape
    acc = np.zeros(cols, dtype=np.float64)
    step = max(1, _BLOCK // max(cols, 1))
    for r0 in range(0, rows, step):
        prod = m[r0:r0 + step] * u[r0:r0 + step, None]
        # prepend the running total so the scan continues the same fold
        block = np.concatenate([acc[None, :], prod], axis=0)
        np.add.accumulate(block, axis=0, out=block)
        acc = block[-1].copy()
    return acc


def project_stream(seed: int, z: np.ndarray, n_out: int, bound: float) -> np.ndarray:
    """Row i of the implicit (n_out, len(z)) uniform matrix dotted with z.

    Entry (i, j) of the matrix is uniform_fill position i*len(z)+j; nothing
    larger than a block is ever materialized.
    """
    n = z.shape[0]
    out = np.empty(n_out, dtype=np.float64)
    step = max(1, _BLOCK // max(n, 1))
    for r0 in range(0, n_out, step):
        r1 = min(r0 + step, n_out)
        flat = uniform_fill(seed, r0 * n, (r1 - r0) * n, bound)
        prod = flat.reshape(r1 - r0, n) * z
        np.add.accumulate(prod, axis=1, out=prod)
        out[r0:r1] = prod[:, -1]
    return out


def project_stream_t(seed: int, u: np.ndarray, n_latent: int, bound: float) -> np.ndarray:
    """Transpose counterpart of project_stream: implicit matrix transposed times u."""
    n_out = u.shape[0]
    acc = np.zeros(n_latent, dtype=np.float64)
    step = max(1, _BLOCK // max(n_latent, 1))
    for r0 in range(0, n_out, step):
        r1 = min(r0 + step, n_out)
        flat = uniform_fill(seed, r0 * n_latent, (r1 - r0) * n_latent, bound)
        prod = flat.reshape(r1 - r0, n_latent) * u[r0:r1, None]
        block = np.concatenate([acc[None, :], prod], axis=0)
        np.add.accumulate(block, axis=0, out=block)
        acc = block[-1].copy()
    return acc
