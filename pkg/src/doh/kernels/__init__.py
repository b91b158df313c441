"""Kernel backend selection.

The compiled extension is preferred when importable; the NumPy fallback is
bit-compatible with it. ``DOH_BACKEND=python`` forces the fallback and
``DOH_BACKEND=native`` makes a missing extension a hard error.
"""

from __future__ import annotations

import os

from . import pyimpl

_choice = os.environ.get("DOH_BACKEND", "auto").lower()
if _choice not in {"auto", "native", "python"}:
    raise ValueError(f"DOH_BACKEND must be auto, native or python, got {_choice!r}")

_native_mod = None
if _choice != "python":
    try:
        from . import _native as _native_mod
    except ImportError:
        if _choice == "native":
            raise
        _native_mod = None

_impl = _native_mod if _native_mod is not None else pyimpl
BACKEND = "native" if _native_mod is not None else "python"

u64_fill = _impl.u64_fill
uniform_fill = _impl.uniform_fill
ordered_matvec = _impl.ordered_matvec
ordered_matvec_t = _impl.ordered_matvec_t
project_stream = _impl.project_stream
project_stream_t = _impl.project_stream_t

__all__ = [
    "BACKEND",
    "u64_fill",
    "uniform_fill",
    "ordered_matvec",
    "ordered_matvec_t",
    "project_stream",
    "project_stream_t",
    "pyimpl",
]
