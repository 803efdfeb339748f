"""Kernel backend selection.

The compiled extension is used when it imports; setting the environment
variable ``QGL_PURE_PYTHON=1`` forces the numpy fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
if os.environ.get("QGL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
else:
    _impl = _kernels_py

import numpy as np


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def sturm_count(diag, off, x: float) -> int:
    """Number of eigenvalues of a symmetric tridiagonal matrix below ``x``."""
    return int(_impl.sturm_count(_f64(diag), _f64(off), float(x)))


def sturm_counts(diag, off, xs) -> np.ndarray:
    return np.asarray(_impl.sturm_counts(_f64(diag), _f64(off), _f64(xs)), dtype=np.int64)


def chain_counts(lengths, alpha: float, energies):
    """``(n_dirichlet, n_above)`` for a chain with the given edge lengths."""
    nd, na = _impl.chain_counts(_f64(lengths), float(alpha), _f64(np.atleast_1d(energies)))
    return np.asarray(nd, dtype=np.int64), np.asarray(na, dtype=np.int64)


def chain_counting_function(lengths, alpha: float, energies) -> np.ndarray:
    """Number of chain Hamiltonian eigenvalues strictly below each energy."""
    nd, na = chain_counts(lengths, alpha, energies)
    return nd + na
