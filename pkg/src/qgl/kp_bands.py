"""Kronig-Penney bands, the almost-sure spectrum and the forbidden set.

The periodic point-interaction operator with spacing ``u`` and strength
``beta`` has spectrum ``{E : |D(E)| <= 1}`` where

    D(E) = cos(u sqrt(E)) + beta sin(u sqrt(E)) / (2 sqrt(E))

continued analytically to ``E <= 0``.  For the random-length lattice the
almost-sure spectrum is the union over ``u`` in the length support of the
bands with ``beta = alpha / d``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect

from .errors import BracketingError

TOL_ROOT = 1e-10
TOL_EDGE = 1e-6
_SERIES_PHASE = 1e-4
_DIRICHLET_OFFSET = 1e-9


def sinc_phase(x):
    """``sin(x) / x`` with the removable point handled by its series."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < _SERIES_PHASE
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 - x * x / 6.0, np.sin(safe) / safe)


def sinhc_phase(x):
    """``sinh(x) / x`` with the removable point handled by its series."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < _SERIES_PHASE
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 + x * x / 6.0, np.sinh(safe) / safe)


def dispersion(E, u: float, beta: float):
    """Kronig-Penney discriminant ``D(E, u, beta)``.

    Uses ``cos -> cosh`` and ``sin(k u)/k -> sinh(kappa u)/kappa`` for
    negative energies; ``D(0) = 1 + beta u / 2``.  Vectorized over ``E``.
    """
    if np.any(np.asarray(u) <= 0):
        raise ValueError(f"period must be positive, got {u!r}")
    E = np.asarray(E, dtype=float)
    k = np.sqrt(np.abs(E))
    x = k * u
    pos = E >= 0
    trig = np.cos(x) + 0.5 * beta * u * sinc_phase(x)
    hyp = np.cosh(np.where(pos, 0.0, x)) + 0.5 * beta * u * sinhc_phase(np.where(pos, 0.0, x))
    out = np.where(pos, trig, hyp)
    return float(out) if out.ndim == 0 else out


@dataclass
class BandList:
    """Sorted disjoint closed intervals.

    ``truncated`` marks bands whose right end was clipped at ``E_max``;
    such right ends are not spectral edges.
    """

    bands: np.ndarray
    truncated: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.bands = np.asarray(self.bands, dtype=float).reshape(-1, 2)
        self.truncated = np.asarray(self.truncated, dtype=bool).reshape(-1)

    def __len__(self):
        return len(self.bands)

    def contains(self, E, tol: float = 0.0):
        E = np.asarray(E, dtype=float)
        inside = np.zeros(E.shape, dtype=bool)
        for a, b in self.bands:
            inside |= (E >= a - tol) & (E <= b + tol)
        return inside

    def edges(self) -> list[tuple[float, str]]:
        """Spectral edges as ``(energy, "lower" | "upper")`` pairs."""
        out = []
        for (a, b), cut in zip(self.bands, self.truncated):
            out.append((float(a), "lower"))
            if not cut:
                out.append((float(b), "upper"))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["band_index", "left", "right"])
        for i, (a, b) in enumerate(self.bands):
            w.writerow([i, f"{a:.17g}", f"{b:.17g}"])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "bands": [[float(a), float(b)] for a, b in self.bands],
                "truncated": [bool(t) for t in self.truncated],
                "metadata": self.metadata,
            },
            indent=2,
            sort_keys=True,
        )


def _merge(intervals, truncated=None):
    """Merge overlapping closed intervals; returns (bands, truncated)."""
    if len(intervals) == 0:
        return np.zeros((0, 2)), np.zeros(0, dtype=bool)
    iv = np.asarray(intervals, dtype=float)
    tr = np.zeros(len(iv), dtype=bool) if truncated is None else np.asarray(truncated, dtype=bool)
    order = np.argsort(iv[:, 0], kind="stable")
    merged, flags = [list(iv[order[0]])], [bool(tr[order[0]])]
    for i in order[1:]:
        a, b = iv[i]
        if a <= merged[-1][1]:
            if b > merged[-1][1]:
                merged[-1][1] = b
                flags[-1] = bool(tr[i])
            elif b == merged[-1][1]:
                flags[-1] = flags[-1] or bool(tr[i])
        else:
            merged.append([a, b])
            flags.append(bool(tr[i]))
    return np.array(merged), np.array(flags)


def bands_P(u: float, beta: float, E_max: float, tol_root: float = TOL_ROOT,
            points_per_period: int = 64) -> BandList:
    """Bands of the Kronig-Penney operator below ``E_max``.

    Band edges are the roots of ``D = 1`` and ``D = -1``.  The scan runs on a
    grid uniform in ``sqrt|E|`` that contains every Dirichlet value
    ``(pi j / u)^2`` together with two nodes just beside it, so the narrow
    gap that opens next to each Dirichlet value is never stepped over.
    Each sign change is refined by bisection to ``tol_root`` in energy.
    """
    if u <= 0:
        raise ValueError(f"period must be positive, got {u!r}")
    if E_max <= 0:
        raise ValueError(f"E_max must be positive, got {E_max!r}")
    meta = {"u": float(u), "beta": float(beta), "E_max": float(E_max)}
    if beta == 0.0:
        return BandList([[0.0, E_max]], [True], meta)

    per = max(int(points_per_period), int(np.ceil(8 * abs(beta) * u)))
    k_max = np.sqrt(E_max)
    n_dir = int(np.floor(k_max * u / np.pi))
    k_dir = np.pi * np.arange(1, n_dir + 1) / u
    k_dir = k_dir[k_dir ** 2 < E_max]
    k_nodes = np.linspace(0.0, k_max, max(2, int(np.ceil(per * k_max * u / np.pi)) + 1))
    k_nodes = np.concatenate(
        [k_nodes, k_dir, k_dir * (1 - _DIRICHLET_OFFSET), k_dir * (1 + _DIRICHLET_OFFSET)]
    )
    E_nodes = [k_nodes ** 2]
    if beta < 0:
        kappa_max = max(abs(beta), 1.2 / u)
        kappa = np.linspace(0.0, kappa_max, per + 1)[1:]
        E_nodes.append(-(kappa ** 2))
    E_nodes = np.unique(np.concatenate(E_nodes))
    E_nodes = E_nodes[E_nodes <= E_max]
    D = dispersion(E_nodes, u, beta)
    E_dir = k_dir ** 2
    dir_mask = np.isin(E_nodes, E_dir)
    D[dir_mask] = np.cos(np.sqrt(E_nodes[dir_mask]) * u).round()

    roots = list(E_dir)
    for level in (1.0, -1.0):
        g = D - level
        g[dir_mask] = 0.0
        idx = np.nonzero(g[:-1] * g[1:] < 0)[0]
        for i in idx:
            a, b = E_nodes[i], E_nodes[i + 1]
            roots.append(bisect(lambda e: dispersion(e, u, beta) - level, a, b,
                                xtol=tol_root, rtol=4 * np.finfo(float).eps, maxiter=200))
    lo = E_nodes[0]
    cuts = np.unique(np.concatenate([[lo, E_max], np.asarray(roots, dtype=float)]))
    cuts = cuts[(cuts >= lo) & (cuts <= E_max)]
    mids = 0.5 * (cuts[:-1] + cuts[1:])
    inband = np.abs(dispersion(mids, u, beta)) <= 1.0
    intervals = [(cuts[i], cuts[i + 1]) for i in np.nonzero(inband)[0]]
    truncated = [b >= E_max for _, b in intervals]
    bands, trunc = _merge(intervals, truncated)
    return BandList(bands, trunc, meta)


@dataclass
class SigmaUnion:
    """Almost-sure spectrum with its edges and forbidden-set flags."""

    bands: BandList
    edges: list  # (energy, "lower"|"upper", is_outside_delta)
    u_grid_size: int
    drift: float

    def to_csv(self) -> str:
        return self.bands.to_csv()

    def edges_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["edge_index", "energy", "side", "outside_delta"])
        for i, (E, side, out) in enumerate(self.edges):
            w.writerow([i, f"{E:.17g}", side, int(out)])
        return buf.getvalue()


def _band_table(us, beta, E_max, tol_root):
    """Per-u band arrays, padded with NaN to a common band count."""
    tables = [bands_P(u, beta, E_max, tol_root) for u in us]
    nb = max(len(t) for t in tables)
    lo = np.full((len(us), nb), np.nan)
    hi = np.full((len(us), nb), np.nan)
    for i, t in enumerate(tables):
        lo[i, : len(t)] = t.bands[:, 0]
        hi[i, : len(t)] = t.bands[:, 1]
    return lo, hi


def sigma_union(alpha: float, d: int, l_min: float, l_max: float, E_max: float,
                u_points: int = 64, tol_edge: float = TOL_EDGE, tol_root: float = TOL_ROOT,
                max_refinements: int = 60) -> SigmaUnion:
    """Union over ``u in [l_min, l_max]`` of the bands with ``beta = alpha/d``.

    For each band index the union is ``[min_u lower(u), max_u upper(u)]``
    since band edges move continuously with ``u``.  The extrema are first
    located on a uniform grid of ``u_points`` lengths, then the grid is
    refined around each extremum until the extremal value moves by less
    than ``tol_edge``.
    """
    _check_lengths(l_min, l_max)
    if d < 1:
        raise ValueError("dimension must be >= 1")
    delta = delta_set(l_min, l_max, E_max)
    if alpha == 0:
        bl = BandList([[0.0, E_max]], [True], {"alpha": 0.0, "d": d, "l_min": l_min, "l_max": l_max})
        return SigmaUnion(bl, [(0.0, "lower", is_outside_delta(0.0, delta))], u_points, 0.0)

    beta = alpha / d
    us = np.linspace(l_min, l_max, u_points)
    lo, hi = _band_table(us, beta, E_max, tol_root)
    nb = lo.shape[1]
    ext_lo, ext_hi = np.empty(nb), np.empty(nb)
    drift = 0.0

    def band_edge(u, j, side):
        t = bands_P(u, beta, E_max, tol_root)
        if j >= len(t):
            return np.nan
        return t.bands[j, 0 if side == "lower" else 1]

    for j in range(nb):
        for side, table, store in (("lower", lo, ext_lo), ("upper", hi, ext_hi)):
            store[j], change = _refine_extremum(
                lambda u: band_edge(u, j, side), us, table[:, j],
                np.nanargmin if side == "lower" else np.nanargmax, tol_edge, max_refinements)
            drift = max(drift, change)

    keep = np.isfinite(ext_lo) & np.isfinite(ext_hi)
    intervals = np.stack([ext_lo[keep], np.minimum(ext_hi[keep], E_max)], axis=1)
    truncated = ext_hi[keep] >= E_max
    bands, trunc = _merge(intervals, truncated)
    bl = BandList(bands, trunc, {"alpha": alpha, "d": d, "l_min": l_min, "l_max": l_max,
                                 "E_max": E_max})
    edges = [(E, side, bool(is_outside_delta(E, delta))) for E, side in bl.edges()]
    return SigmaUnion(bl, edges, len(us), drift)


def _refine_extremum(f, us, vals, pick, tol_edge, max_refinements):
    """Grid extremum of ``f``, refined by bisecting the cells around it.

    Returns the extremal value and the change produced by the last
    refinement step.
    """
    pts = dict(zip(np.asarray(us).tolist(), np.asarray(vals).tolist()))
    best, prev, change = None, np.inf, np.inf
    for _ in range(max_refinements):
        grid = np.array(sorted(pts))
        v = np.array([pts[g] for g in grid])
        if np.all(np.isnan(v)):
            return np.nan, 0.0
        i = int(pick(v))
        if best is not None:
            change = abs(v[i] - best)
            if change < tol_edge and prev < tol_edge:
                break
            prev = change
        best = v[i]
        for u in (0.5 * (grid[max(i - 1, 0)] + grid[i]), 0.5 * (grid[i] + grid[min(i + 1, len(grid) - 1)])):
            if u not in pts:
                pts[u] = f(u)
    return best, (change if np.isfinite(change) else 0.0)


def _check_lengths(l_min, l_max):
    if not (0 < l_min < l_max < np.inf):
        raise ValueError(f"need 0 < l_min < l_max, got l_min={l_min!r}, l_max={l_max!r}")


def inf_sigma(alpha: float, d: int, l_min: float, l_max: float, tol_root: float = TOL_ROOT,
              full_output: bool = False):
    """Bottom of the almost-sure spectrum.

    ``alpha > 0``: ``k^2`` with ``k in (0, pi/l_max)`` solving
    ``cos(k l_max) + alpha sin(k l_max) / (2 k d) = 1``.
    ``alpha < 0``: ``-k^2`` with ``cosh(k l_min) + alpha sinh(k l_min)/(2 k d) = 1``.
    ``alpha = 0``: zero.

    With ``full_output`` returns ``(energy, residual)`` where the residual is
    the defining equation evaluated at the root.
    """
    _check_lengths(l_min, l_max)
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if alpha == 0:
        return (0.0, 0.0) if full_output else 0.0

    if alpha > 0:
        def g(k):
            return np.cos(k * l_max) + alpha * l_max * sinc_phase(k * l_max) / (2 * d) - 1.0
        a, b = 0.0, np.pi / l_max
        sign = 1.0
    else:
        def g(k):
            return np.cosh(k * l_min) + alpha * l_min * sinhc_phase(k * l_min) / (2 * d) - 1.0
        a, b = 0.0, 1.0
        while g(b) <= 0:
            b *= 2.0
            if b > 1e8:
                raise BracketingError(f"no negative bottom found for alpha={alpha}")
        sign = -1.0
    if g(a) * g(b) >= 0:
        raise BracketingError(f"bottom of spectrum not bracketed for alpha={alpha}")
    # bisect in k until the bracket is below tol_root in energy
    ga = g(a)
    while (b * b - a * a) > tol_root:
        m = 0.5 * (a + b)
        gm = g(m)
        if gm == 0:
            a = b = m
            break
        if (gm > 0) == (ga > 0):
            a, ga = m, gm
        else:
            b = m
    k = 0.5 * (a + b)
    E = sign * k * k
    if full_output:
        return E, float(g(k))
    return E


@dataclass
class DeltaSet:
    """Forbidden set: the point 0 and the intervals swept by Dirichlet values."""

    raw: np.ndarray
    intervals: np.ndarray
    l_min: float
    l_max: float
    E_max: float

    def contains(self, E) -> np.ndarray:
        E = np.asarray(E, dtype=float)
        inside = E == 0.0
        for a, b in self.intervals:
            inside |= (E >= a) & (E <= b)
        return inside

    def meets(self, a: float, b: float) -> bool:
        """True when the closed interval ``[a, b]`` intersects the set."""
        if a <= 0.0 <= b:
            return True
        return any(lo <= b and hi >= a for lo, hi in self.intervals)


def delta_set(l_min: float, l_max: float, E_max: float) -> DeltaSet:
    """Intervals ``[pi^2 n^2 / l_max^2, pi^2 n^2 / l_min^2]`` starting below ``E_max``."""
    _check_lengths(l_min, l_max)
    n_max = int(np.floor(np.sqrt(max(E_max, 0.0)) * l_max / np.pi))
    n = np.arange(1, n_max + 1)
    raw = np.stack([(np.pi * n / l_max) ** 2, (np.pi * n / l_min) ** 2], axis=1) if n_max else np.zeros((0, 2))
    merged, _ = _merge(raw)
    return DeltaSet(raw, merged, l_min, l_max, E_max)


def is_outside_delta(E: float, delta: DeltaSet) -> bool:
    """Closed-interval membership test; ``0`` always belongs to the set."""
    return not bool(delta.contains(E))


def alpha_of_bottom(E, d: int, l_min: float):
    """Coupling for which ``-E`` is the bottom of the spectrum (``E > 0``)."""
    s = np.sqrt(np.asarray(E, dtype=float))
    return -2.0 * d * s * np.tanh(0.5 * l_min * s)


def negative_gap_function(E, d: int, l_min: float):
    """``f(E) = tanh(l_min sqrt E)/sqrt E - 2 d sqrt E tanh(l_min sqrt E / 2)``."""
    s = np.sqrt(np.asarray(E, dtype=float))
    return np.tanh(l_min * s) / s - 2.0 * d * s * np.tanh(0.5 * l_min * s)


def negative_gap_sign_function(E, d: int, l_min: float, criterion: str = "exact"):
    """A function with the same sign as the monotonicity margin.

    ``criterion="exact"`` gives ``cosh^2(x/2) - d E cosh(x)`` with
    ``x = l_min sqrt E``, which has exactly the sign of
    :func:`negative_gap_function`.  ``criterion="stated"`` gives the
    simpler ``cosh^2(x/2) - d E``; the two disagree for moderate ``E``.
    """
    E = np.asarray(E, dtype=float)
    x = l_min * np.sqrt(E)
    if criterion == "exact":
        return np.cosh(0.5 * x) ** 2 - d * E * np.cosh(x)
    if criterion == "stated":
        return np.cosh(0.5 * x) ** 2 - d * E
    raise ValueError(f"unknown criterion {criterion!r}")


@dataclass
class AdmissibleAlpha:
    ranges: list  # list of (lo, hi) open alpha-intervals
    energy_roots: list
    criterion: str

    def contains(self, alpha: float) -> bool:
        return any(lo < alpha < hi for lo, hi in self.ranges)


def admissible_negative_alpha(d: int, l_min: float, criterion: str = "exact",
                              tol_root: float = TOL_ROOT, E_scan_max: float | None = None
                              ) -> AdmissibleAlpha:
    """Negative couplings for which the negative-energy monotonicity holds.

    Finds the positive roots of the sign function by bisection and maps the
    energy ranges where it is positive through the decreasing map
    ``E -> -2 d sqrt(E) tanh(l_min sqrt(E) / 2)``.
    """
    if d < 1 or l_min <= 0:
        raise ValueError("need d >= 1 and l_min > 0")
    if E_scan_max is None:
        # the stated function becomes positive again once cosh^2 beats E d
        E_scan_max = max(100.0, (2.0 * np.log(8.0 * d + 8.0) / l_min) ** 2 * 16)
    grid = np.geomspace(1e-10, E_scan_max, 4000)
    g = negative_gap_sign_function(grid, d, l_min, criterion)
    roots = []
    for i in np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)[0]:
        roots.append(bisect(lambda e: float(negative_gap_sign_function(e, d, l_min, criterion)),
                            grid[i], grid[i + 1], xtol=tol_root, maxiter=300))
    # energy pieces where the function is positive, then mapped to alpha
    cuts = [0.0] + roots + [np.inf]
    ranges = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        probe = 0.5 * (lo + hi) if np.isfinite(hi) else lo + 1.0 if lo == 0 else lo * 2.0
        if lo == 0.0 and np.isfinite(hi):
            probe = 0.5 * hi
        if negative_gap_sign_function(probe, d, l_min, criterion) > 0:
            a_hi = 0.0 if lo == 0.0 else float(alpha_of_bottom(lo, d, l_min))
            a_lo = -np.inf if not np.isfinite(hi) else float(alpha_of_bottom(hi, d, l_min))
            ranges.append((a_lo, a_hi))
    ranges.sort()
    return AdmissibleAlpha(ranges, roots, criterion)
