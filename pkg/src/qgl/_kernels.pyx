# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Sturm-count kernels for tridiagonal reduced operators."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, sinh, cosh, sqrt, fabs, floor

cnp.import_array()

cdef double PI = 3.141592653589793
cdef double SERIES = 1e-4
cdef double TINY = 1e-300


cdef inline int _sturm_below(const double* diag, const double* off, Py_ssize_t nv, double x) nogil:
    cdef Py_ssize_t i
    cdef double q = diag[0] - x
    cdef int neg = 0
    if q == 0.0:
        q = -TINY
    if q < 0.0:
        neg += 1
    for i in range(1, nv):
        q = diag[i] - x - off[i - 1] * off[i - 1] / q
        if q == 0.0:
            q = -TINY
        if q < 0.0:
            neg += 1
    return neg


def sturm_count(const double[::1] diag, const double[::1] off, double x):
    """Number of eigenvalues below ``x`` of the tridiagonal matrix (diag, off)."""
    cdef Py_ssize_t nv = diag.shape[0]
    if nv == 0:
        return 0
    return _sturm_below(&diag[0], &off[0] if nv > 1 else &diag[0], nv, x)


def sturm_counts(const double[::1] diag, const double[::1] off, const double[::1] xs):
    """Vector of ``sturm_count`` over the shifts ``xs``."""
    cdef Py_ssize_t nv = diag.shape[0], k, m = xs.shape[0]
    out = np.zeros(m, dtype=np.int64)
    cdef long long[::1] o = out
    if nv == 0:
        return out
    cdef const double* offp = &off[0] if nv > 1 else &diag[0]
    with nogil:
        for k in range(m):
            o[k] = _sturm_below(&diag[0], offp, nv, xs[k])
    return out


cdef inline void _coefficients(double l, double s, int sign, double* t, double* c) nogil:
    # t = s / sin(l s), c = s cos(l s) / sin(l s); hyperbolic when sign < 0
    cdef double x = l * s, sc
    if sign > 0:
        sc = l * (1.0 - x * x / 6.0) if x < SERIES else sin(x) / s
        t[0] = 1.0 / sc
        c[0] = cos(x) / sc
    else:
        sc = l * (1.0 + x * x / 6.0) if x < SERIES else sinh(x) / s
        t[0] = 1.0 / sc
        c[0] = cosh(x) / sc


def chain_counts(const double[::1] lengths, double alpha, const double[::1] energies):
    """Eigenvalues of the chain Hamiltonian below each energy.

    Returns ``(n_dirichlet, n_above)`` where ``n_above`` counts eigenvalues
    of the reduced operator above ``alpha``; their sum is the counting
    function of the graph Hamiltonian.
    """
    cdef Py_ssize_t ne = lengths.shape[0], nv = ne + 1, m = energies.shape[0], k, i
    nd = np.zeros(m, dtype=np.int64)
    na = np.zeros(m, dtype=np.int64)
    cdef long long[::1] ndv = nd
    cdef long long[::1] nav = na
    cdef double E, s, t, c, cprev, q, tprev
    cdef int sign, neg
    cdef long long dcount
    with nogil:
        for k in range(m):
            E = energies[k]
            sign = 1 if E >= 0 else -1
            s = sqrt(fabs(E))
            dcount = 0
            if E > 0:
                for i in range(ne):
                    dcount += <long long>floor(lengths[i] * s / PI)
            ndv[k] = dcount
            # row 0
            _coefficients(lengths[0], s, sign, &t, &c)
            q = -c - alpha
            neg = 0
            if q == 0.0:
                q = -TINY
            if q < 0.0:
                neg += 1
            cprev = c
            tprev = t
            for i in range(1, nv):
                if i < ne:
                    _coefficients(lengths[i], s, sign, &t, &c)
                else:
                    c = 0.0
                q = -cprev - c - alpha - tprev * tprev / q
                if q == 0.0:
                    q = -TINY
                if q < 0.0:
                    neg += 1
                cprev = c
                tprev = t
            nav[k] = nv - neg
    return nd, na
