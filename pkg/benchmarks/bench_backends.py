"""Compare the compiled kernels against the NumPy fallback.

Run:  python benchmarks/bench_backends.py [--rows 14600] [--latent 4240]

Covers the operations that dominate training and decoding: counter-based
stream fills, fixed-order dense products (materialized decoder), and the
streamed projection that regenerates matrix entries on the fly. BLAS dgemv
is shown as a reference point; it is not order-stable and is only used
where bit-reproducibility is not required.
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from doh.kernels import pyimpl  # noqa: E402

try:
    from doh.kernels import _native
except ImportError:
    _native = None


def timeit(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def report(name, py_s, nat_s, checksum_equal):
    ratio = "" if nat_s is None else f"  speedup x{py_s / nat_s:.1f}"
    nat = "      (not built)" if nat_s is None else f"  native {nat_s * 1e3:9.1f} ms"
    eq = "" if checksum_equal is None else ("  bit-equal" if checksum_equal else "  MISMATCH")
    print(f"{name:<26} python {py_s * 1e3:9.1f} ms{nat}{ratio}{eq}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--rows", type=int, default=14600,
                    help="flattened weight count (matrix rows)")
    ap.add_argument("--latent", type=int, default=4240, help="latent dimension")
    ap.add_argument("--fill", type=int, default=10_000_000, help="stream fill length")
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    z = rng.standard_normal(args.latent)
    g = rng.standard_normal(args.rows)

    print(f"matrix {args.rows} x {args.latent} "
          f"({args.rows * args.latent * 8 / 1e6:.0f} MB f64), fill {args.fill:,}")

    py = timeit(lambda: pyimpl.u64_fill(7, 0, args.fill))
    nat = None if _native is None else timeit(lambda: _native.u64_fill(7, 0, args.fill))
    eq = None if _native is None else bool(
        np.array_equal(pyimpl.u64_fill(7, 0, 100000), _native.u64_fill(7, 0, 100000)))
    report("u64_fill", py, nat, eq)

    py = timeit(lambda: pyimpl.uniform_fill(7, 0, args.fill, 0.5))
    nat = None if _native is None else timeit(lambda: _native.uniform_fill(7, 0, args.fill, 0.5))
    eq = None if _native is None else bool(np.array_equal(
        pyimpl.uniform_fill(7, 0, 100000, 0.5), _native.uniform_fill(7, 0, 100000, 0.5)))
    report("uniform_fill", py, nat, eq)

    m = pyimpl.uniform_fill(3, 0, args.rows * args.latent, 0.25).reshape(args.rows, args.latent)

    py = timeit(lambda: pyimpl.ordered_matvec(m, z))
    nat = None if _native is None else timeit(lambda: _native.ordered_matvec(m, z))
    eq = None if _native is None else bool(
        np.array_equal(pyimpl.ordered_matvec(m, z), _native.ordered_matvec(m, z)))
    report("ordered_matvec", py, nat, eq)

    py = timeit(lambda: pyimpl.ordered_matvec_t(m, g))
    nat = None if _native is None else timeit(lambda: _native.ordered_matvec_t(m, g))
    eq = None if _native is None else bool(
        np.array_equal(pyimpl.ordered_matvec_t(m, g), _native.ordered_matvec_t(m, g)))
    report("ordered_matvec_t", py, nat, eq)

    py = timeit(lambda: pyimpl.project_stream(3, z, args.rows, 0.25))
    nat = None if _native is None else timeit(lambda: _native.project_stream(3, z, args.rows, 0.25))
    eq = None if _native is None else bool(np.array_equal(
        pyimpl.project_stream(3, z, args.rows, 0.25),
        _native.project_stream(3, z, args.rows, 0.25)))
    report("project_stream", py, nat, eq)

    py = timeit(lambda: pyimpl.project_stream_t(3, g, args.latent, 0.25))
    nat = None if _native is None else timeit(
        lambda: _native.project_stream_t(3, g, args.latent, 0.25))
    eq = None if _native is None else bool(np.array_equal(
        pyimpl.project_stream_t(3, g, args.latent, 0.25),
        _native.project_stream_t(3, g, args.latent, 0.25)))
    report("project_stream_t", py, nat, eq)

    blas = timeit(lambda: m @ z)
    print(f"{'(reference: BLAS dgemv)':<26} {'':7}{blas * 1e3:9.1f} ms   unordered")


if __name__ == "__main__":
    main()
