# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: SplitMix64 fills, fixed-order dense products, and
streamed projections against a never-materialized random matrix.

All reductions run in ascending index order with separate multiply and add
(the extension is built with -ffp-contract=off), keeping every output
bit-identical to the NumPy backend in pyimpl.py.
"""

from libc.stdint cimport uint64_t

import numpy as np


cdef inline uint64_t _mix(uint64_t state) noexcept nogil:
    cdef uint64_t z = state
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef inline uint64_t _u64_at(uint64_t seed, uint64_t index) noexcept nogil:
    return _mix(seed + (index + 1) * <uint64_t>0x9E3779B97F4A7C15)


cdef inline double _uniform_at(uint64_t seed, uint64_t index, double bound) noexcept nogil:
    cdef double u = <double>(_u64_at(seed, index) >> 11) * (1.0 / 9007199254740992.0)
    return bound * (2.0 * u - 1.0)


def u64_fill(seed, start, count):
    out = np.empty(count, dtype=np.uint64)
    cdef uint64_t[::1] o = out
    cdef uint64_t s = seed
    cdef uint64_t base = start
    cdef Py_ssize_t i, n = count
    with nogil:
        for i in range(n):
            o[i] = _u64_at(s, base + <uint64_t>i)
    return out


def uniform_fill(seed, start, count, double bound):
    out = np.empty(count, dtype=np.float64)
    cdef double[::1] o = out
    cdef uint64_t s = seed
    cdef uint64_t base = start
    cdef Py_ssize_t i, n = count
    with nogil:
        for i in range(n):
            o[i] = _uniform_at(s, base + <uint64_t>i, bound)
    return out


def ordered_matvec(double[:, ::1] m, double[::1] v):
    cdef Py_ssize_t rows = m.shape[0], cols = m.shape[1], i, j
    if v.shape[0] != cols:
        raise ValueError("matvec dimension mismatch")
    out = np.empty(rows, dtype=np.float64)
    cdef double[::1] o = out
    cdef double acc
    with nogil:
        for i in range(rows):
            acc = 0.0
            for j in range(cols):
                acc = acc + m[i, j] * v[j]
            o[i] = acc
    return out


def ordered_matvec_t(double[:, ::1] m, double[::1] u):
    cdef Py_ssize_t rows = m.shape[0], cols = m.shape[1], i, j
    if u.shape[0] != rows:
        raise ValueError("matvec dimension mismatch")
    out = np.zeros(cols, dtype=np.float64)
    cdef double[::1] o = out
    cdef double ui
    with nogil:
        for i in range(rows):
            ui = u[i]
            for j in range(cols):
                o[j] = o[j] + m[i, j] * ui
    return out


def project_stream(seed, double[::1] z, n_out, double bound):
    cdef Py_ssize_t n = z.shape[0], rows = n_out, i, j
    out = np.empty(rows, dtype=np.float64)
    cdef double[::1] o = out
    cdef uint64_t s = seed, base
    cdef double acc
    with nogil:
        for i in range(rows):
            base = <uint64_t>i * <uint64_t>n
            acc = 0.0
            for j in range(n):
                acc = acc + _uniform_at(s, base + <uint64_t>j, bound) * z[j]
            o[i] = acc
    return out


def project_stream_t(seed, double[::1] u, n_latent, double bound):
    cdef Py_ssize_t n = n_latent, rows = u.shape[0], i, j
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef uint64_t s = seed, base
    cdef double ui
    with nogil:
        for i in range(rows):
            ui = u[i]
            base = <uint64_t>i * <uint64_t>n
            for j in range(n):
                o[j] = o[j] + _uniform_at(s, base + <uint64_t>j, bound) * ui
    return out
