"""Kernel backend selection.

Hot loops are written once as scalar Python and compiled with ``numba.njit``
when numba is importable. Setting ``PWIT_LAB_BACKEND=numpy`` (or running
without numba) keeps the undecorated Python functions and switches the
kernels that have a vectorized twin (Jacobi sweeps, table inversion) to
their numpy implementation.
"""
import os
import warnings

import numpy as np

_requested = os.environ.get("PWIT_LAB_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"PWIT_LAB_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _requested == "numba"
BACKEND = "numba" if USE_NUMBA else "numpy"

if _requested == "numba" and not HAVE_NUMBA:  # pragma: no cover
    warnings.warn("numba not importable, falling back to the numpy backend")


def njit(fn):
    """Compile ``fn`` with numba when the numba backend is active.

    The plain function stays reachable as ``fn.py_func`` either way, so tests
    can exercise both paths in one process.
    """
    if USE_NUMBA:
        return numba.njit(cache=True)(fn)
    fn.py_func = fn
    return fn


class quiet_uint64:
    """Silence numpy scalar overflow warnings; uint64 wraparound is intended."""

    def __enter__(self):
        self._state = np.seterr(over="ignore")
        return self

    def __exit__(self, *exc):
        np.seterr(**self._state)
        return False
