"""Pure numpy versions of the Sturm-count kernels.

Loops run over matrix rows and are vectorized over the shifts or energies,
so the cost per call is one numpy expression per vertex.
"""
from __future__ import annotations

import numpy as np

_TINY = 1e-300
_SERIES = 1e-4


def _sturm_below(diag, off, xs):
    xs = np.asarray(xs, dtype=float)
    q = diag[0] - xs
    q = np.where(q == 0.0, -_TINY, q)
    neg = (q < 0).astype(np.int64)
    for i in range(1, len(diag)):
        q = diag[i] - xs - off[i - 1] ** 2 / q
        q = np.where(q == 0.0, -_TINY, q)
        neg += q < 0
    return neg


def sturm_count(diag, off, x) -> int:
    """Number of eigenvalues below ``x`` of the tridiagonal matrix (diag, off)."""
    diag = np.asarray(diag, dtype=float)
    if len(diag) == 0:
        return 0
    return int(_sturm_below(diag, np.asarray(off, dtype=float), np.array([x]))[0])


def sturm_counts(diag, off, xs) -> np.ndarray:
    """Vector of ``sturm_count`` over the shifts ``xs``."""
    diag = np.asarray(diag, dtype=float)
    xs = np.asarray(xs, dtype=float)
    if len(diag) == 0:
        return np.zeros(len(xs), dtype=np.int64)
    return _sturm_below(diag, np.asarray(off, dtype=float), xs)


def _coefficients(l, s, positive):
    x = l * s
    if positive:
        safe = np.where(x < _SERIES, 1.0, x)
        sc = np.where(x < _SERIES, l * (1.0 - x * x / 6.0), np.sin(safe) / np.where(s == 0, 1.0, s))
        return 1.0 / sc, np.cos(x) / sc
    sc = np.where(x < _SERIES, l * (1.0 + x * x / 6.0), np.sinh(x) / np.where(s == 0, 1.0, s))
    return 1.0 / sc, np.cosh(x) / sc


def chain_counts(lengths, alpha: float, energies):
    """Eigenvalues of the chain Hamiltonian below each energy.

    Returns ``(n_dirichlet, n_above)`` as in the compiled kernel.
    """
    l = np.asarray(lengths, dtype=float)
    E = np.asarray(energies, dtype=float)
    ne = len(l)
    s = np.sqrt(np.abs(E))
    pos = E >= 0
    nd = np.where(E > 0, np.floor(l[:, None] * s[None, :] / np.pi).sum(axis=0), 0).astype(np.int64)

    def coeff(i):
        tp, cp = _coefficients(l[i], s, True)
        tn, cn = _coefficients(l[i], s, False)
        return np.where(pos, tp, tn), np.where(pos, cp, cn)

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        t, c = coeff(0)
        q = -c - alpha
        q = np.where(q == 0.0, -_TINY, q)
        neg = (q < 0).astype(np.int64)
        tprev, cprev = t, c
        for i in range(1, ne + 1):
            if i < ne:
                t, c = coeff(i)
            else:
                c = 0.0
            q = -cprev - c - alpha - tprev * tprev / q
            q = np.where(q == 0.0, -_TINY, q)
            neg += q < 0
            tprev, cprev = t, c
    return nd, (ne + 1) - neg
