"""Eigenvalues of finite-volume quantum graph Hamiltonians.

The solver uses the vertex reduction: with ``mu_j(E)`` the eigenvalues of
``M(E)``, the number of Hamiltonian eigenvalues below ``E`` equals the
number of edge Dirichlet values below ``E`` plus ``#{j: mu_j(E) > alpha}``.
Between Dirichlet values each ``mu_j`` increases with ``E`` (``dM/dE`` is a
Gram matrix of the edge solutions), so eigenvalues are located by
bisection on that count.  A finite-element discretization of the metric
graph serves as an independent check.
"""
from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy import sparse
from scipy.sparse.linalg import eigsh
from scipy.stats import linregress

from . import kernels
from .errors import BranchAmbiguity, DegenerateFit, QGLError
from .lattice import Cube
from .reduction import DELTA_DIR, LengthField, assemble_M, dirichlet_spectrum, edge_coefficients

TOL_E = 1e-9
TOL_EIG = 1e-6
MIN_STEP = 1e-7
POINTS_PER_EIGENVALUE = 16


@dataclass
class SpectrumResult:
    """Eigenvalues found in an energy window.

    Attributes
    ----------
    eigenvalues, multiplicities, branch_ids, residuals : ndarray
        One entry per distinct eigenvalue, sorted by energy.  ``branch_ids``
        is the index of the lowest sorted branch of ``M(E)`` that crosses
        ``alpha``; ``residuals`` is ``min_j |mu_j(E) - alpha|`` (NaN for the
        finite-element method).
    excluded_intervals : list of (float, float)
        Dirichlet guard bands removed from the window.
    excluded_counts : list of int
        Number of eigenvalues inside each guard band.
    method : str
        ``"reduction"`` or ``"fd_oracle"``.
    diagnostics : dict
        Solver statistics.
    """

    eigenvalues: np.ndarray
    multiplicities: np.ndarray
    branch_ids: np.ndarray
    residuals: np.ndarray
    excluded_intervals: list = field(default_factory=list)
    excluded_counts: list = field(default_factory=list)
    method: str = "reduction"
    window: tuple = (0.0, 0.0)
    diagnostics: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.eigenvalues)

    def expanded(self) -> np.ndarray:
        """Eigenvalues repeated according to multiplicity."""
        return np.repeat(self.eigenvalues, self.multiplicities)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["E", "multiplicity", "branch_id", "residual"])
        for E, m, b, r in zip(self.eigenvalues, self.multiplicities, self.branch_ids, self.residuals):
            w.writerow([f"{E:.17g}", int(m), int(b), f"{r:.17g}"])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "window": list(self.window),
            "eigenvalues": [float(e) for e in self.eigenvalues],
            "multiplicities": [int(m) for m in self.multiplicities],
            "branch_ids": [int(b) for b in self.branch_ids],
            "residuals": [None if np.isnan(r) else float(r) for r in self.residuals],
            "excluded_intervals": [[float(a), float(b)] for a, b in self.excluded_intervals],
            "excluded_counts": [int(c) for c in self.excluded_counts],
            "diagnostics": self.diagnostics,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def eigs_M(op, vectors: bool = False, solver: str = "evr"):
    """All eigenvalues of a reduced operator, ascending.

    ``solver`` selects the LAPACK driver (``"evr"``, ``"evd"``, ``"ev"``);
    ``"tridiagonal"`` uses the symmetric tridiagonal solver and needs a
    chain cube.
    """
    try:
        if solver == "tridiagonal":
            diag, off = op.tridiagonal()
            return sla.eigh_tridiagonal(diag, off, eigvals_only=not vectors)
        return sla.eigh(op.dense(), eigvals_only=not vectors, driver=solver)
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise QGLError(f"eigs_M: eigensolver failed to converge ({exc})") from exc


def _count_above(cube: Cube, lengths: LengthField, alpha: float, E: float, method: str) -> int:
    if method == "sturm":
        return int(kernels.chain_counts(lengths.values, alpha, np.array([E]))[1][0])
    op = assemble_M(cube, lengths, E, delta_dir=0.0)
    return int(np.count_nonzero(sla.eigvalsh(op.dense()) > alpha))


def counting_function(cube: Cube, lengths: LengthField, alpha: float, energies,
                      method: str = "auto") -> np.ndarray:
    """Number of Hamiltonian eigenvalues strictly below each energy.

    Energies must avoid the Dirichlet values of the edges.
    """
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    method = _resolve_method(cube, method)
    if method == "sturm":
        return kernels.chain_counting_function(lengths.values, alpha, energies)
    l = lengths.values
    out = np.empty(len(energies), dtype=np.int64)
    for i, E in enumerate(energies):
        nd = int(np.floor(l * np.sqrt(E) / np.pi).sum()) if E > 0 else 0
        out[i] = nd + _count_above(cube, lengths, alpha, E, "dense")
    return out


def _resolve_method(cube: Cube, method: str) -> str:
    if method == "auto":
        return "sturm" if cube.is_chain else "dense"
    if method not in ("sturm", "dense"):
        raise ValueError(f"unknown method {method!r}")
    if method == "sturm" and not cube.is_chain:
        raise ValueError("the Sturm method needs a chain cube")
    return method


def guard_bands(lengths: LengthField, window, delta_dir: float = DELTA_DIR):
    """Merged intervals ``[D - 1.5 delta_dir, D + 1.5 delta_dir]`` around Dirichlet values."""
    a, b = float(window[0]), float(window[1])
    g = 1.5 * delta_dir
    if b <= 0:
        return []
    D = dirichlet_spectrum(lengths, b + g)
    D = D[D >= a - g]
    bands: list[list[float]] = []
    for x in D:
        if bands and x - g <= bands[-1][1]:
            bands[-1][1] = max(bands[-1][1], x + g)
        else:
            bands.append([x - g, x + g])
    return [(lo, hi) for lo, hi in bands]


def spectrum_H(cube: Cube, lengths: LengthField, alpha: float, window, *, method: str = "auto",
               tol_E: float = TOL_E, tol_eig: float = TOL_EIG, delta_dir: float = DELTA_DIR,
               points_per_eigenvalue: int = POINTS_PER_EIGENVALUE, min_step: float = MIN_STEP
               ) -> SpectrumResult:
    """Eigenvalues of ``H_Λ(l, alpha)`` in ``window`` via the vertex reduction.

    Parameters
    ----------
    cube, lengths : Cube, LengthField
        Graph and edge lengths.
    alpha : float
        Vertex coupling, the same at every vertex.
    window : (float, float)
        Bounded energy window.
    method : {"auto", "sturm", "dense"}
        Branch counting backend.  ``"sturm"`` (chains only) uses the
        tridiagonal Sturm sequence, ``"dense"`` the sorted eigenvalues of
        the dense matrix.
    tol_E : float
        Width of the final bisection bracket.
    tol_eig : float
        Threshold on ``|mu_j(E) - alpha|`` used to flag residual failures.

    Returns
    -------
    SpectrumResult
        Dirichlet guard bands are excluded and reported with the number of
        eigenvalues they contain.

    Raises
    ------
    BranchAmbiguity
        If the branch count decreases across an interval shorter than
        ``min_step``.
    """
    a, b = float(window[0]), float(window[1])
    if not (np.isfinite(a) and np.isfinite(b) and a < b):
        raise ValueError("window must be a bounded interval with a < b")
    method = _resolve_method(cube, method)
    nv = cube.num_vertices
    bands = guard_bands(lengths, (a, b), delta_dir)

    panels = []
    lo = a
    for g0, g1 in bands:
        if g0 > lo:
            panels.append((lo, min(g0, b)))
        lo = max(lo, g1)
    if lo < b:
        panels.append((lo, b))

    stats = {"evaluations": 0, "bisection_steps": 0, "grid_points": 0, "refinements": 0}
    cache: dict[float, int] = {}

    def count(E):
        c = cache.get(E)
        if c is None:
            c = _count_above(cube, lengths, alpha, E, method)
            cache[E] = c
            stats["evaluations"] += 1
        return c

    found: list[tuple[float, int, int]] = []

    def bisect(lo, hi, clo, chi):
        stack = [(lo, hi, clo, chi)]
        while stack:
            lo, hi, clo, chi = stack.pop()
            if clo == chi:
                continue
            if chi < clo:
                if hi - lo < min_step:
                    raise BranchAmbiguity(
                        f"branch count decreases from {clo} to {chi} on [{lo!r}, {hi!r}]")
                stats["refinements"] += 1
            elif hi - lo <= tol_E:
                found.append((0.5 * (lo + hi), chi - clo, nv - chi))
                continue
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                found.append((mid, chi - clo, nv - chi))
                continue
            stats["bisection_steps"] += 1
            cm = count(mid)
            stack.append((mid, hi, cm, chi))
            stack.append((lo, mid, clo, cm))

    l_max = float(lengths.values.max()) if len(lengths) else 1.0
    for p, q in panels:
        weyl = cube.num_edges * l_max * (np.sqrt(max(q, 0.0)) - np.sqrt(max(p, 0.0))) / np.pi
        npts = int(max(2, points_per_eigenvalue * max(1.0, np.ceil(weyl)) + 1))
        grid = np.linspace(p, q, npts)
        stats["grid_points"] += npts
        if method == "sturm":
            counts = kernels.chain_counts(lengths.values, alpha, grid)[1]
            for E, c in zip(grid, counts):
                cache[float(E)] = int(c)
            stats["evaluations"] += npts
        else:
            counts = [count(float(E)) for E in grid]
        for i in range(npts - 1):
            bisect(float(grid[i]), float(grid[i + 1]), int(counts[i]), int(counts[i + 1]))

    found.sort()
    E = np.array([f[0] for f in found], dtype=float)
    mult = np.array([f[1] for f in found], dtype=np.int64)
    branch = np.array([f[2] for f in found], dtype=np.int64)
    resid = np.array([_residual(cube, lengths, alpha, e, method) for e in E], dtype=float)

    excluded_counts = []
    if bands:
        ends = np.array([x for band in bands for x in band])
        N = counting_function(cube, lengths, alpha, ends, method=method)
        excluded_counts = [int(N[2 * i + 1] - N[2 * i]) for i in range(len(bands))]
    stats.update({
        "method": method,
        "panels": len(panels),
        "tol_E": tol_E,
        "tol_eig": tol_eig,
        "residual_failures": int(np.count_nonzero(resid >= tol_eig)),
        "max_residual": float(resid.max()) if len(resid) else 0.0,
    })
    return SpectrumResult(E, mult, branch, resid, bands, excluded_counts, "reduction", (a, b), stats)


def _residual(cube, lengths, alpha, E, method) -> float:
    op = assemble_M(cube, lengths, E, delta_dir=0.0)
    mu = eigs_M(op, solver="tridiagonal" if method == "sturm" else "evr")
    return float(np.min(np.abs(mu - alpha))) if len(mu) else np.inf


def eigenvector_at(cube: Cube, lengths: LengthField, E: float, alpha: float) -> np.ndarray:
    """Unit eigenvector of ``M(E)`` whose eigenvalue is closest to ``alpha``."""
    op = assemble_M(cube, lengths, E)
    mu, vec = eigs_M(op, vectors=True)
    v = vec[:, int(np.argmin(np.abs(mu - alpha)))]
    return v / np.linalg.norm(v)


# ----------------------------------------------------------------------------
# finite-element oracle


def fd_matrices(cube: Cube, lengths: LengthField, alpha: float, m: int):
    """Stiffness ``K`` and lumped mass ``B`` of the P1 discretization.

    Each edge carries ``m`` cells of width ``l_e/m``; vertex values are
    shared between edges.  The coupling enters as ``alpha`` on the vertex
    diagonal.  Unknowns are ordered by vertex index then edge interiors,
    except on chains, where they follow the chain so that ``K`` is
    tridiagonal.
    """
    if m < 1:
        raise ValueError("m must be positive")
    nv, ne = cube.num_vertices, cube.num_edges
    l = lengths.values
    h = l / m
    chain = cube.is_chain
    # node index of interior point k (1..m-1) of edge e, and of vertices
    if chain:
        vnode = np.arange(nv) * m
        inner = lambda e, k: e * m + k  # noqa: E731
    else:
        vnode = np.arange(nv)
        inner = lambda e, k: nv + e * (m - 1) + (k - 1)  # noqa: E731
    N = nv + ne * (m - 1)
    rows, cols, vals = [], [], []
    mass = np.zeros(N)
    ks = np.arange(m + 1)
    for e in range(ne):
        nodes = np.empty(m + 1, dtype=np.int64)
        nodes[0] = vnode[cube.iota[e]]
        nodes[-1] = vnode[cube.tau[e]]
        if m > 1:
            nodes[1:-1] = inner(e, ks[1:-1])
        w = 1.0 / h[e]
        i, j = nodes[:-1], nodes[1:]
        rows += [i, j, i, j]
        cols += [i, j, j, i]
        vals += [np.full(m, w), np.full(m, w), np.full(m, -w), np.full(m, -w)]
        np.add.at(mass, i, 0.5 * h[e])
        np.add.at(mass, j, 0.5 * h[e])
    rows.append(vnode)
    cols.append(vnode)
    vals.append(np.full(nv, float(alpha)))
    K = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(N, N)).tocsr()
    K.sum_duplicates()
    return K, mass


def _fd_eigenvalues(cube, lengths, alpha, m, lo, hi):
    K, mass = fd_matrices(cube, lengths, alpha, m)
    s = 1.0 / np.sqrt(mass)
    A = sparse.diags(s) @ K @ sparse.diags(s)
    N = A.shape[0]
    if cube.is_chain:
        d = A.diagonal()
        off = A.diagonal(1)
        return sla.eigh_tridiagonal(d, off, eigvals_only=True, select="v", select_range=(lo, hi))
    if N <= 1500:
        vals = sla.eigh(A.toarray(), eigvals_only=True, subset_by_value=(lo, hi), driver="evr")
        return np.sort(vals)
    # spectrum slicing: per slice, shift-invert at its midpoint and grow k
    # until the returned eigenvalues reach past the slice ends
    weyl = cube.num_edges * lengths.values.max() * (np.sqrt(max(hi, 0)) - np.sqrt(max(lo, 0))) / np.pi
    expected = weyl + (cube.num_vertices if lo < 0 else 0)
    slices = max(1, int(np.ceil(expected / 40)))
    cuts = np.linspace(lo, hi, slices + 1)
    Ac = A.tocsc()
    out = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        sigma, radius = 0.5 * (a + b), 0.5 * (b - a)
        k = int(min(N - 2, max(12, 1.5 * expected / slices + 10)))
        while True:
            vals = eigsh(Ac, k=k, sigma=sigma, which="LM", return_eigenvectors=False)
            if np.max(np.abs(vals - sigma)) > radius or k >= N - 2:
                break
            k = min(N - 2, 2 * k)
        last = b == cuts[-1]
        out.append(vals[(vals >= a) & ((vals <= b) if last else (vals < b))])
    return np.sort(np.concatenate(out))


def _align(coarse, fine):
    """Index shift ``s`` pairing ``coarse[i + s]`` with ``fine[i]``.

    Zero is kept unless another shift halves the mean pairing error, so
    degenerate clusters do not pull the pairing off by one.
    """
    def err(s):
        i0 = max(0, -s)
        i1 = min(len(fine), len(coarse) - s)
        if i1 - i0 < max(1, min(len(fine), len(coarse)) - 3):
            return np.inf
        return np.mean(np.abs(coarse[i0 + s:i1 + s] - fine[i0:i1]))

    base = err(0)
    best, best_s = base, 0
    for s in (-3, -2, -1, 1, 2, 3):
        e = err(s)
        if e < best and e < 0.5 * base:
            best, best_s = e, s
    return best_s


def fd_oracle_spectrum(cube: Cube, lengths: LengthField, alpha: float, m: int, window,
                       richardson: bool = True) -> SpectrumResult:
    """Eigenvalues in ``window`` from a lumped-mass P1 discretization.

    With ``richardson=True`` the eigenvalues for ``m`` and ``2m`` cells per
    edge are combined as ``(4 lambda_2m - lambda_m)/3``, cancelling the
    ``h^2`` error term.  A warning is issued when ``E_max h^2 > 0.01``.
    """
    if m < 16:
        raise ValueError("need at least 16 points per edge")
    a, b = float(window[0]), float(window[1])
    if not a < b:
        raise ValueError("window must satisfy a < b")
    h = lengths.values.max() / m
    emax = max(abs(a), abs(b))
    if emax * h * h > 0.01:
        warnings.warn(f"window too large for resolution m={m}: E_max h^2 = {emax * h * h:.3g} > 0.01",
                      RuntimeWarning, stacklevel=2)
    pad = 0.02 * max(1.0, emax) + 0.05 * (b - a)
    lo, hi = a - pad, b + pad
    lam = _fd_eigenvalues(cube, lengths, alpha, m, lo, hi)
    diag = {"m": m, "richardson": richardson, "n_unknowns": int(cube.num_vertices + cube.num_edges * (m - 1))}
    if richardson:
        fine = _fd_eigenvalues(cube, lengths, alpha, 2 * m, lo, hi)
        s = _align(lam, fine)
        i0 = max(0, -s)
        i1 = min(len(fine), len(lam) - s)
        lam = (4.0 * fine[i0:i1] - lam[i0 + s:i1 + s]) / 3.0
        diag["alignment_shift"] = s
    lam = np.sort(lam[(lam >= a) & (lam <= b)])
    n = len(lam)
    return SpectrumResult(lam, np.ones(n, dtype=np.int64), np.arange(n, dtype=np.int64),
                          np.full(n, np.nan), [], [], "fd_oracle", (a, b), diag)


def fd_convergence(cube: Cube, lengths: LengthField, alpha: float, m: int, window,
                   reference=None) -> dict:
    """Errors at ``m``, ``2m`` and ``4m`` and their ratios.

    Without a reference the Richardson value from ``(2m, 4m)`` is used.
    """
    lams = [np.sort(_fd_eigenvalues(cube, lengths, alpha, k, *window)) for k in (m, 2 * m, 4 * m)]
    n = min(len(x) for x in lams)
    lams = [x[:n] for x in lams]
    ref = np.asarray(reference, dtype=float)[:n] if reference is not None else (4 * lams[2] - lams[1]) / 3
    err = [np.max(np.abs(x - ref)) for x in lams]
    return {"errors": err, "ratios": [err[0] / err[1], err[1] / err[2]]}


# ----------------------------------------------------------------------------
# multiplicities and localization


def kernel_dims(cube: Cube, lengths: LengthField, E: float, alpha: float, *, tol_eig: float = TOL_EIG,
                m: int = 32, fd_tol: float | None = None, reference=None):
    """``(dim ker(H - E), dim ker(M(E) - alpha))``.

    The first count is the number of Richardson-extrapolated finite-element
    eigenvalues within ``fd_tol`` (default ``1e-5 max(1, |E|)``) of ``E``;
    the second counts eigenvalues of ``M(E)`` within ``tol_eig`` of
    ``alpha``.  ``reference`` may hold finite-element eigenvalues already
    computed over a window containing ``E``, which skips the solve.
    """
    op = assemble_M(cube, lengths, E)
    mu = eigs_M(op)
    dim_M = int(np.count_nonzero(np.abs(mu - alpha) < tol_eig))
    tol = 1e-5 * max(1.0, abs(E)) if fd_tol is None else fd_tol
    if reference is None:
        width = max(50 * tol, 0.05 * max(1.0, abs(E)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            reference = fd_oracle_spectrum(cube, lengths, alpha, m, (E - width, E + width)).eigenvalues
    dim_H = int(np.count_nonzero(np.abs(np.asarray(reference) - E) < tol))
    return dim_H, dim_M


@dataclass
class LocalizationProfile:
    amplitudes: np.ndarray
    center: int
    distances: np.ndarray
    decay_rate: float
    intercept: float
    r_squared: float
    ipr: float
    distance: str = "graph"

    def to_dict(self) -> dict:
        return {
            "center": int(self.center),
            "decay_rate": float(self.decay_rate),
            "intercept": float(self.intercept),
            "r_squared": float(self.r_squared),
            "ipr": float(self.ipr),
            "distance": self.distance,
        }


def inverse_participation_ratio(f) -> float:
    a2 = np.abs(np.asarray(f)) ** 2
    return float((a2 ** 2).sum() / a2.sum() ** 2)


def localization_profile(cube: Cube, lengths: LengthField, E: float, vertex_eigenvector,
                         threshold: float = 1e-14) -> LocalizationProfile:
    """Exponential decay fit of a vertex eigenvector around its maximum.

    ``log|f(v)| ~ c - lambda dist(v, center)`` is fitted by least squares
    over vertices with ``|f(v)| >= threshold``; ``dist`` is the hop
    distance in the cube graph.

    Raises
    ------
    DegenerateFit
        If fewer than three distinct distances remain.
    """
    f = np.asarray(vertex_eigenvector)
    if f.shape != (cube.num_vertices,):
        raise ValueError("eigenvector has the wrong length")
    amp = np.abs(f)
    center = int(np.argmax(amp))
    dist = cube.graph_distance(center)
    keep = amp >= threshold
    if len(np.unique(dist[keep])) < 3:
        raise DegenerateFit("fewer than 3 usable radii for the decay fit")
    fit = linregress(dist[keep], np.log(amp[keep]))
    return LocalizationProfile(amp, center, dist, float(-fit.slope), float(fit.intercept),
                               float(fit.rvalue ** 2), inverse_participation_ratio(f))
