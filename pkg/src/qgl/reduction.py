"""Vertex reduction of the quantum-graph eigenvalue problem.

For ``E`` outside the Dirichlet spectrum of the edges, ``E`` is an
eigenvalue of the graph Hamiltonian with coupling ``alpha`` exactly when
``alpha`` is an eigenvalue of the vertex matrix ``M(l, E)``:

    (M phi)(v) = sum_{e ~ v} t_e phi(other end of e) - sum_{e ~ v} c_e phi(v)

with ``t_e = sqrt(E)/sin(l_e sqrt(E))`` and ``c_e = sqrt(E) cot(l_e sqrt(E))``
(hyperbolic functions of ``sqrt(-E)`` for ``E < 0``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix

from .errors import DirichletProximity, IntervalMeetsDelta
from .kp_bands import delta_set, sinc_phase, sinhc_phase
from .lattice import Cube

DELTA_DIR = 1e-8


@dataclass(frozen=True)
class LengthField:
    """Edge lengths indexed like ``cube.bases``."""

    values: np.ndarray
    l_min: float
    l_max: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if not (0 < self.l_min < self.l_max < np.inf):
            raise ValueError(f"need 0 < l_min < l_max, got {self.l_min}, {self.l_max}")
        if v.size and (v.min() < self.l_min or v.max() > self.l_max):
            raise ValueError("edge lengths outside [l_min, l_max]")

    def __len__(self):
        return len(self.values)

    @classmethod
    def constant(cls, cube: Cube, u: float, l_min: float | None = None, l_max: float | None = None):
        l_min = u * 0.5 if l_min is None else l_min
        l_max = u * 1.5 if l_max is None else l_max
        return cls(np.full(cube.num_edges, float(u)), l_min, l_max)

    def with_value(self, e: int, value: float) -> "LengthField":
        v = self.values.copy()
        v[e] = value
        lo, hi = min(self.l_min, value), max(self.l_max, value)
        if lo == hi:
            hi = lo * (1 + 1e-12)
        return LengthField(v, lo, hi)


def edge_coefficients(lengths, E: float):
    """Hopping ``t_e`` and diagonal weight ``c_e`` for each edge.

    Written through ``sin(x)/x`` so that ``E -> 0`` reaches the limits
    ``t_e = c_e = 1/l_e`` without cancellation.
    """
    l = np.asarray(lengths, dtype=float)
    s = np.sqrt(abs(E))
    x = l * s
    if E >= 0:
        sc = l * sinc_phase(x)
        return 1.0 / sc, np.cos(x) / sc
    sc = l * sinhc_phase(x)
    return 1.0 / sc, np.cosh(x) / sc


def dirichlet_distance(lengths, E: float) -> float:
    """Energy distance from ``E`` to the nearest ``(pi k / l_e)^2``, ``k >= 1``."""
    if E <= 0:
        return np.inf
    l = np.asarray(lengths, dtype=float)
    k = np.maximum(np.rint(l * np.sqrt(E) / np.pi), 1.0)
    best = np.inf
    for kk in (k - 1, k, k + 1):
        kk = np.maximum(kk, 1.0)
        best = min(best, float(np.min(np.abs(E - (np.pi * kk / l) ** 2))))
    return best


@dataclass(frozen=True)
class ReducedOperator:
    cube: Cube
    lengths: LengthField
    energy: float
    matrix: csr_matrix
    dirichlet_distance: float
    min_abs_sin: float

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def tridiagonal(self):
        """``(diag, off)`` of the matrix for chain cubes."""
        if not self.cube.is_chain:
            raise ValueError("cube is not a chain")
        t, c = edge_coefficients(self.lengths.values, self.energy)
        return chain_diagonal(c), t

    def to_triplets(self) -> str:
        """Coordinate text dump: a header line, then ``row col value`` lines."""
        m = self.matrix.tocoo()
        order = np.lexsort((m.col, m.row))
        lines = [f"# reduced operator E={self.energy:.17g} n_vertices={m.shape[0]} nnz={m.nnz}"
                 " columns: row col value"]
        lines += [f"{m.row[i]} {m.col[i]} {m.data[i]:.17g}" for i in order]
        return "\n".join(lines) + "\n"


def chain_diagonal(c):
    """Diagonal ``-(c_{i-1} + c_i)`` of the reduced matrix on a chain."""
    diag = np.zeros(len(c) + 1)
    diag[:-1] -= c
    diag[1:] -= c
    return diag


def _check_proximity(lengths, E, delta_dir):
    dist = dirichlet_distance(lengths, E)
    if dist < delta_dir:
        raise DirichletProximity(E, dist, delta_dir)
    return dist


def assemble_M(cube: Cube, lengths: LengthField, E: float, delta_dir: float = DELTA_DIR
               ) -> ReducedOperator:
    """Sparse symmetric reduced operator ``M_Λ(l, E)``.

    Raises
    ------
    DirichletProximity
        If ``E`` is within ``delta_dir`` of a Dirichlet eigenvalue of an edge.
    """
    l = lengths.values
    if len(l) != cube.num_edges:
        raise ValueError("length field does not match the cube")
    dist = _check_proximity(l, E, delta_dir)
    t, c = edge_coefficients(l, E)
    nv = cube.num_vertices
    diag = -np.bincount(cube.iota, weights=c, minlength=nv) - np.bincount(cube.tau, weights=c, minlength=nv)
    rows = np.concatenate([cube.iota, cube.tau, np.arange(nv)])
    cols = np.concatenate([cube.tau, cube.iota, np.arange(nv)])
    vals = np.concatenate([t, t, diag])
    mat = coo_matrix((vals, (rows, cols)), shape=(nv, nv)).tocsr()
    x = l * np.sqrt(abs(E))
    min_sin = float(np.min(np.abs(np.sin(x)))) if E > 0 else float(np.min(np.sinh(x))) if E < 0 else 0.0
    return ReducedOperator(cube, lengths, float(E), mat, dist, min_sin)


def dirichlet_spectrum(lengths: LengthField, E_max: float) -> np.ndarray:
    """All ``(pi k / l_e)^2 <= E_max`` over edges and ``k >= 1``, sorted, with multiplicity."""
    if E_max <= 0:
        raise ValueError("E_max must be positive")
    l = np.asarray(lengths.values if isinstance(lengths, LengthField) else lengths, dtype=float)
    kmax = np.floor(l * np.sqrt(E_max) / np.pi).astype(int)
    vals = [(np.pi * np.arange(1, k + 1) / le) ** 2 for le, k in zip(l, kmax) if k > 0]
    if not vals:
        return np.zeros(0)
    out = np.sort(np.concatenate(vals))
    return out[out <= E_max]


def _edge_block(l_e: float, E: float):
    """Entries ``(diag, off)`` of the 2x2 block of ``dM/dl_e``.

    ``E > 0``: ``E/sin^2 [[1, -cos], [-cos, 1]]``.
    ``E < 0``: ``|E|/sinh^2 [[1, -cosh], [-cosh, 1]]``.
    """
    s = np.sqrt(abs(E))
    x = l_e * s
    if E > 0:
        w = 1.0 / (l_e * sinc_phase(x)) ** 2
        return w, -w * np.cos(x)
    if E < 0:
        w = 1.0 / (l_e * sinhc_phase(x)) ** 2
        return w, -w * np.cosh(x)
    w = 1.0 / l_e ** 2
    return w, -w


def dM_dl(cube: Cube, lengths: LengthField, E: float, e: int, delta_dir: float = DELTA_DIR
          ) -> csr_matrix:
    """Derivative of ``M_Λ(l, E)`` in the length of edge ``e`` (rank <= 2)."""
    _check_proximity(lengths.values, E, delta_dir)
    w, off = _edge_block(float(lengths.values[e]), E)
    i, j = int(cube.iota[e]), int(cube.tau[e])
    nv = cube.num_vertices
    return coo_matrix(([w, w, off, off], ([i, j, i, j], [i, j, j, i])), shape=(nv, nv)).tocsr()


def sum_dM_dl(cube: Cube, lengths: LengthField, E: float, weights=None,
              delta_dir: float = DELTA_DIR) -> csr_matrix:
    """``sum_e weights_e dM/dl_e``; unit weights give ``D_Λ M``."""
    _check_proximity(lengths.values, E, delta_dir)
    l = lengths.values
    s = np.sqrt(abs(E))
    x = l * s
    if E > 0:
        w = 1.0 / (l * sinc_phase(x)) ** 2
        off = -w * np.cos(x)
    elif E < 0:
        w = 1.0 / (l * sinhc_phase(x)) ** 2
        off = -w * np.cosh(x)
    else:
        w = 1.0 / l ** 2
        off = -w
    if weights is not None:
        w = w * weights
        off = off * weights
    nv = cube.num_vertices
    diag = np.bincount(cube.iota, weights=w, minlength=nv) + np.bincount(cube.tau, weights=w, minlength=nv)
    rows = np.concatenate([cube.iota, cube.tau, np.arange(nv)])
    cols = np.concatenate([cube.tau, cube.iota, np.arange(nv)])
    return coo_matrix((np.concatenate([off, off, diag]), (rows, cols)), shape=(nv, nv)).tocsr()


@dataclass(frozen=True)
class GapBounds:
    interval: tuple
    c1: float
    c2: float
    beta: float
    b: float


def gap_constants(I, l_min: float, l_max: float, d: int = 1, grid: int = 1025) -> GapBounds:
    """Lower bounds ``c1, c2`` and the energy-Lipschitz bound ``b`` on ``I``.

    ``c1 <= min (1 - |cos(l sqrt E)|)`` and ``c2 <= min E / sin^2(l sqrt E)``
    over ``E in I``, ``l in [l_min, l_max]``.  Both minima are taken on a
    ``grid x grid`` mesh and lowered by the largest change the function can
    make within half a mesh cell, so they remain valid lower bounds.
    ``b`` bounds ``||dM/dE||`` by the row-sum norm: ``2d`` times the sum of
    the maximal derivatives of the off-diagonal and diagonal edge terms.
    """
    a, bb = float(I[0]), float(I[1])
    if not (0 < a < bb):
        raise ValueError("interval must satisfy 0 < a < b")
    if delta_set(l_min, l_max, bb).meets(a, bb):
        raise IntervalMeetsDelta(f"[{a}, {bb}] meets the forbidden set for l in [{l_min}, {l_max}]")
    Es = np.linspace(a, bb, grid)
    ls = np.linspace(l_min, l_max, grid)
    EE, LL = np.meshgrid(Es, ls, indexing="ij")
    s = np.sqrt(EE)
    x = LL * s
    f1 = 1.0 - np.abs(np.cos(x))
    f2 = EE / np.sin(x) ** 2
    # half-cell moves in the phase and in E
    dx = 0.5 * (np.diff(np.sqrt(Es)).max() * l_max + (ls[1] - ls[0]) * np.sqrt(bb))
    dE = 0.5 * (Es[1] - Es[0])
    c1 = f1.min() - dx  # |d/dx (1 - |cos x|)| <= 1
    sin_min = np.abs(np.sin(x)).min() - dx
    if sin_min <= 0:
        raise IntervalMeetsDelta("interval too close to the forbidden set for the mesh")
    # d/dx (E / sin^2 x) = -2 E cos / sin^3 ; d/dE = 1/sin^2
    slope_x = 2 * bb / sin_min ** 3
    slope_E = 1.0 / sin_min ** 2
    c2 = f2.min() - slope_x * dx - slope_E * dE
    if c1 <= 0 or c2 <= 0:
        raise IntervalMeetsDelta("mesh too coarse to certify positive constants")

    # dt/dE and dc/dE for t = s/sin(ls), c = s cot(ls)
    sn, cs = np.sin(x), np.cos(x)
    dt = (sn - x * cs) / (2 * s * sn ** 2)
    dc = (cs * sn - x) / (2 * s * sn ** 2)
    b = 2 * d * (np.abs(dt).max() + np.abs(dc).max())
    return GapBounds((a, bb), float(c1), float(c2), float(c1 * c2), float(b))


@dataclass(frozen=True)
class NegativeGapCheck:
    gamma: float
    margin: float
    factorization_residual: float


def negative_gap_check(cube: Cube, lengths: LengthField, E: float, E_minus: float, E_plus: float
                       ) -> NegativeGapCheck:
    """Check ``F_Λ M = M + K_Λ`` and ``K_Λ >= gamma`` at a negative energy.

    ``F_Λ = -(1/s) sum_e tanh(l_e s) d/dl_e`` with ``s = sqrt(-E)``.  Direct
    differentiation gives ``F_Λ M - M = s sum_e tanh(l_e s) I^e``, which is
    the ``K_Λ`` used here; its smallest eigenvalue is at least
    ``gamma = sqrt(E_-) tanh(l_min sqrt(E_-))`` on every cube since each
    vertex has degree >= 1.
    """
    if not (0 < E_minus < E_plus) or not (-E_plus <= E <= -E_minus):
        raise ValueError("need 0 < E_minus < E_plus and -E_plus <= E <= -E_minus")
    s = np.sqrt(-E)
    l = lengths.values
    th = np.tanh(l * s)
    nv = cube.num_vertices
    kdiag = s * (np.bincount(cube.iota, weights=th, minlength=nv)
                 + np.bincount(cube.tau, weights=th, minlength=nv))
    gamma = float(np.sqrt(E_minus) * np.tanh(lengths.l_min * np.sqrt(E_minus)))
    margin = float(kdiag.min() - gamma)
    M = assemble_M(cube, lengths, E).matrix
    FM = sum_dM_dl(cube, lengths, E, weights=-th / s)
    resid = FM - M
    resid = resid - csr_matrix((kdiag, (np.arange(nv), np.arange(nv))), shape=(nv, nv))
    scale = max(1.0, abs(M).max())
    return NegativeGapCheck(gamma, margin, float(abs(resid).max()) / scale)


@dataclass
class EdgeFunctions:
    """Sampled edge functions: ``t[e]`` and ``values[e]`` have ``samples`` points."""

    t: np.ndarray
    values: np.ndarray


def reconstruct_eigenfunction(cube: Cube, lengths: LengthField, E: float, vertex_values,
                              samples_per_edge: int = 33, delta_dir: float = DELTA_DIR
                              ) -> EdgeFunctions:
    """Solutions of ``-f'' = E f`` on each edge with the given endpoint values.

    ``f_e(t) = f(ιe) S(l - t)/S(l) + f(τe) S(t)/S(l)`` with
    ``S(t) = sin(sqrt(E) t)/sqrt(E)`` (``sinh`` for ``E < 0``, ``t`` at
    ``E = 0``).
    """
    _check_proximity(lengths.values, E, delta_dir)
    f = np.asarray(vertex_values)
    if f.shape[0] != cube.num_vertices:
        raise ValueError("vertex_values has the wrong length")
    l = lengths.values[:, None]
    t = l * np.linspace(0.0, 1.0, samples_per_edge)[None, :]
    s = np.sqrt(abs(E))
    S = (lambda y: y * sinc_phase(s * y)) if E >= 0 else (lambda y: y * sinhc_phase(s * y))
    den = S(l)
    vals = (f[cube.iota][:, None] * S(l - t) + f[cube.tau][:, None] * S(t)) / den
    vals[:, 0] = f[cube.iota]
    vals[:, -1] = f[cube.tau]
    return EdgeFunctions(t, vals)
