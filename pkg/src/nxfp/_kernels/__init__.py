"""Kernel backend selection.

The hot inner loops (nearest-level encode, per-block error sums, bit packing,
the reference GEMM) exist twice: a numba-jitted version and a pure-numpy
version with identical numerics.  The active backend is chosen once at import
from the ``NXFP_BACKEND`` environment variable ("numba" or "numpy"); numba is
the default when importable.  ``use()`` swaps backends at runtime, which the
benchmark and the backend-parity tests rely on.
"""

from __future__ import annotations

import os
from types import ModuleType

_ENV_VAR = "NXFP_BACKEND"
_current: ModuleType | None = None


def _load(name: str) -> ModuleType:
    if name == "numpy":
        from . import _numpy
        return _numpy
    if name == "numba":
        from . import _numba
        return _numba
    raise ValueError(f"unknown kernel backend {name!r} (expected numba or numpy)")


def _default() -> ModuleType:
    choice = os.environ.get(_ENV_VAR, "").strip().lower()
    if choice:
        return _load(choice)
    try:
        return _load("numba")
    except ImportError:
        return _load("numpy")


def get() -> ModuleType:
    """Active kernel module."""
    global _current
    if _current is None:
        _current = _default()
    return _current


def use(name: str) -> None:
    """Force a backend (mainly for tests and benchmarks)."""
    global _current
    _current = _load(name)


def backend_name() -> str:
    return get().NAME
