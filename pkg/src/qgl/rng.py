"""Counter-based uniforms keyed by lattice edges.

Philox4x64-10 is evaluated directly on a counter built from the global
coordinates of an edge, so the length of an edge depends only on
``(seed, stream, edge)`` and not on which cube it was drawn for.
"""
from __future__ import annotations

import numpy as np

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_LO32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
MAX_DIMENSION = 4


def _mulhilo(a: np.uint64, b: np.ndarray):
    """High and low 64-bit words of ``a * b``."""
    a_lo, a_hi = a & _LO32, a >> _S32
    b_lo, b_hi = b & _LO32, b >> _S32
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = (ll >> _S32) + (lh & _LO32) + (hl & _LO32)
    lo = (ll & _LO32) | ((mid & _LO32) << _S32)
    hi = hh + (lh >> _S32) + (hl >> _S32) + (mid >> _S32)
    return hi, lo


def philox4x64(counter: np.ndarray, key) -> np.ndarray:
    """Philox4x64 with 10 rounds.

    Parameters
    ----------
    counter : ndarray of uint64, shape (N, 4)
    key : pair of uint64

    Returns
    -------
    ndarray of uint64, shape (N, 4)
    """
    c = np.asarray(counter, dtype=np.uint64)
    x0, x1, x2, x3 = (c[:, i].copy() for i in range(4))
    k0, k1 = np.uint64(key[0]), np.uint64(key[1])
    with np.errstate(over="ignore"):
        for r in range(10):
            hi0, lo0 = _mulhilo(_M0, x0)
            hi1, lo1 = _mulhilo(_M1, x2)
            x0, x1, x2, x3 = hi1 ^ x1 ^ k0, lo1, hi0 ^ x3 ^ k1, lo0
            if r < 9:
                k0 = k0 + _W0
                k1 = k1 + _W1
    return np.stack([x0, x1, x2, x3], axis=1)


def _zigzag(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.int64)
    return ((v << 1) ^ (v >> 63)).astype(np.uint64)


def edge_counters(bases: np.ndarray, axes: np.ndarray) -> np.ndarray:
    """Unique Philox counters for lattice edges given by base vertex and axis."""
    bases = np.asarray(bases, dtype=np.int64)
    n, d = bases.shape
    if d > MAX_DIMENSION:
        raise ValueError(f"edge keys support d <= {MAX_DIMENSION}")
    coords = np.zeros((n, MAX_DIMENSION), dtype=np.int64)
    coords[:, :d] = bases
    if np.abs(coords).max(initial=0) >= 2 ** 30:
        raise ValueError("coordinates too large for edge keys")
    z = _zigzag(coords)
    ctr = np.zeros((n, 4), dtype=np.uint64)
    ctr[:, 0] = z[:, 0] | (z[:, 1] << _S32)
    ctr[:, 1] = z[:, 2] | (z[:, 3] << _S32)
    ctr[:, 2] = np.asarray(axes, dtype=np.uint64)
    return ctr


def uniforms(counters: np.ndarray, seed: int, stream: int = 0) -> np.ndarray:
    """Uniforms in the open interval (0, 1), one per counter row."""
    key = (np.uint64(int(seed) % 2 ** 64), np.uint64(int(stream) % 2 ** 64))
    x = philox4x64(counters, key)[:, 0]
    return ((x >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
