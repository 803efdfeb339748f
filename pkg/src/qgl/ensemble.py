"""Random edge lengths and Monte Carlo spectral statistics.

Every realization is a pure function of ``(seed, realization index,
parameters)``; aggregation is an ordered sum of integer counts, so reports
do not depend on the number of worker processes.
"""
from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache, partial

import numpy as np
import scipy.linalg as sla
from scipy import stats
from scipy.sparse import diags

from . import kernels
from .errors import PreconditionError
from .kp_bands import admissible_negative_alpha, delta_set, inf_sigma, is_outside_delta
from .lattice import Cube, build_cube
from .reduction import LengthField, assemble_M, chain_diagonal, edge_coefficients
from .rng import edge_counters, uniforms
from .spectra import counting_function

DISTRIBUTIONS = ("uniform", "triangular", "raised_cosine")


@lru_cache(maxsize=32)
def _cube(d: int, n: int) -> Cube:
    return build_cube(d, n)


@dataclass(frozen=True)
class LengthDistribution:
    """Edge-length law supported on ``[l_min, l_max]``.

    ``triangular`` and ``raised_cosine`` have densities that are Lipschitz on
    the whole real line; ``uniform`` is Lipschitz only on its support.
    """

    kind: str = "raised_cosine"
    l_min: float = 0.8
    l_max: float = 1.2

    def __post_init__(self):
        if self.kind not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.kind!r}; expected one of {DISTRIBUTIONS}")
        if not (0 < self.l_min < self.l_max < np.inf):
            raise ValueError(f"need 0 < l_min < l_max, got {self.l_min}, {self.l_max}")

    @property
    def frozen(self):
        w = self.l_max - self.l_min
        if self.kind == "uniform":
            return stats.uniform(loc=self.l_min, scale=w)
        if self.kind == "triangular":
            return stats.triang(c=0.5, loc=self.l_min, scale=w)
        return stats.cosine(loc=0.5 * (self.l_min + self.l_max), scale=w / (2 * np.pi))

    @property
    def lipschitz_on_reals(self) -> bool:
        return self.kind != "uniform"

    def pdf(self, x):
        return self.frozen.pdf(x)

    def ppf(self, q):
        return np.clip(self.frozen.ppf(q), self.l_min, self.l_max)

    @property
    def mean(self) -> float:
        return float(self.frozen.mean())

    @property
    def std(self) -> float:
        return float(self.frozen.std())

    def to_dict(self) -> dict:
        return {"kind": self.kind, "l_min": self.l_min, "l_max": self.l_max,
                "lipschitz_on_reals": self.lipschitz_on_reals}


def sample_lengths(dist: LengthDistribution, cube: Cube, seed: int, realization: int = 0) -> LengthField:
    """Edge lengths drawn by inverse CDF from edge-keyed counter uniforms.

    The value on a lattice edge depends only on ``(seed, realization,
    edge coordinates)``, so overlapping cubes share lengths on common edges.
    """
    u = uniforms(edge_counters(cube.bases, cube.axes), seed, realization)
    return LengthField(dist.ppf(u), dist.l_min, dist.l_max)


def wilson_interval(k: int, n: int, confidence: float = 0.95):
    if n == 0:
        return 0.0, 1.0
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def parallel_map(func, items, workers: int | None = 1):
    """Ordered map over ``items``, in worker processes when ``workers > 1``."""
    items = list(items)
    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    chunk = max(1, len(items) // (8 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items, chunksize=chunk))


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return "" if v is None else str(v)


def table_to_csv(rows: list[dict], path=None) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.writer(buf, lineterminator="\n")
        cols = list(rows[0])
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in cols])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if np.isfinite(v) else str(v)
    return v


@dataclass
class ExperimentReport:
    """Parameters, result tables and fits of one Monte Carlo experiment."""

    experiment: str
    parameters: dict
    tables: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    raw: list | None = None

    def to_dict(self) -> dict:
        return _jsonable({"experiment": self.experiment, "parameters": self.parameters,
                          "tables": self.tables, "fits": self.fits})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write(self, outdir, raw: bool = False) -> list[str]:
        """Write ``<experiment>.json`` and one CSV per table; returns file names."""
        os.makedirs(outdir, exist_ok=True)
        names = []
        for name, rows in self.tables.items():
            fname = f"{self.experiment}_{name}.csv"
            table_to_csv(rows, os.path.join(outdir, fname))
            names.append(fname)
        if raw and self.raw is not None:
            fname = f"{self.experiment}_raw.csv"
            table_to_csv(self.raw, os.path.join(outdir, fname))
            names.append(fname)
        fname = f"{self.experiment}.json"
        with open(os.path.join(outdir, fname), "w") as fh:
            fh.write(self.to_json() + "\n")
        names.append(fname)
        return names


# ----------------------------------------------------------------------------
# integrated density of states


@dataclass
class IDSCurve:
    variant: str
    grid: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n: int
    num_vertices: int
    realizations: int
    energy: float | None = None

    @property
    def lower(self):
        return np.clip(self.mean - 1.96 * self.stderr, 0.0, None)

    @property
    def upper(self):
        return self.mean + 1.96 * self.stderr

    def rows(self) -> list[dict]:
        key = "E" if self.variant == "H" else "t"
        return [{key: g, "k": m, "stderr": s, "lower": lo, "upper": hi}
                for g, m, s, lo, hi in zip(self.grid, self.mean, self.stderr, self.lower, self.upper)]


def _ids_realization(k, *, d, n, alpha, dist, seed, grid, variant, energy):
    cube = _cube(d, n)
    lengths = sample_lengths(dist, cube, seed, k)
    if variant == "H":
        return counting_function(cube, lengths, alpha, grid)
    if cube.is_chain:
        t, c = edge_coefficients(lengths.values, energy)
        return kernels.sturm_counts(chain_diagonal(c), t, grid)
    mu = sla.eigvalsh(assemble_M(cube, lengths, energy).dense())
    return np.searchsorted(mu, grid, side="left").astype(np.int64)


def ids_estimate(d: int, n: int, alpha: float, dist: LengthDistribution, realizations: int, grid,
                 *, variant: str = "H", energy: float | None = None, seed: int = 0,
                 workers: int = 1) -> IDSCurve:
    """Averaged normalized eigenvalue counting function on a cube ``Λ(n)``.

    ``variant="H"`` counts Hamiltonian eigenvalues below each energy of
    ``grid``; ``variant="M"`` counts eigenvalues of ``M(E)`` below each
    ``t`` of ``grid`` at the fixed energy ``energy``.  Counts are divided by
    the number of vertices.
    """
    if n < 2 or realizations < 1:
        raise ValueError("need n >= 2 and realizations >= 1")
    if variant not in ("H", "M"):
        raise ValueError("variant must be 'H' or 'M'")
    if variant == "M" and energy is None:
        raise ValueError("variant 'M' needs a fixed energy")
    grid = np.asarray(grid, dtype=float)
    nv = build_cube(d, n).num_vertices
    job = partial(_ids_realization, d=d, n=n, alpha=alpha, dist=dist, seed=seed, grid=grid,
                  variant=variant, energy=energy)
    counts = np.array(parallel_map(job, range(realizations), workers), dtype=np.int64)
    s1 = counts.sum(axis=0)
    s2 = (counts ** 2).sum(axis=0)
    mean = s1 / (realizations * nv)
    if realizations > 1:
        var = (s2 - s1 ** 2 / realizations) / (realizations - 1)
        se = np.sqrt(np.maximum(var, 0.0) / realizations) / nv
    else:
        se = np.zeros_like(mean)
    return IDSCurve(variant, grid, mean, se, n, nv, realizations, energy)


# ----------------------------------------------------------------------------
# Wegner experiment


def _wegner_realization(k, *, d, n_list, alpha, dist, seed, edges):
    out = []
    for n in n_list:
        cube = _cube(d, n)
        lengths = sample_lengths(dist, cube, seed, k)
        out.append(counting_function(cube, lengths, alpha, edges))
    return np.array(out, dtype=np.int64)


def wegner_case(alpha: float, I, d: int, dist: LengthDistribution) -> str:
    """Which regime ``(alpha, I)`` falls in, or ``"unverified"``.

    ``"trivial_control"``: ``I`` below zero with ``alpha > 0``;
    ``"positive"``: closure of ``I`` inside ``(0, inf)`` and disjoint from
    the forbidden set; ``"negative_edge"``: ``alpha`` admissible negative and
    ``I`` around the bottom of the almost-sure spectrum.
    """
    a, b = float(I[0]), float(I[1])
    if b < 0 and alpha > 0:
        return "trivial_control"
    if a > 0 and not delta_set(dist.l_min, dist.l_max, b).meets(a, b):
        return "positive"
    if alpha < 0:
        adm = admissible_negative_alpha(d, dist.l_min)
        if any(lo < alpha < hi for lo, hi in adm.ranges):
            E0 = inf_sigma(alpha, d, dist.l_min, dist.l_max)
            if a <= E0 <= b and b < 0:
                return "negative_edge"
    return "unverified"


def wegner_experiment(d: int, n_list, alpha: float, I, widths, dist: LengthDistribution,
                      realizations: int, seed: int, *, centers=None, workers: int = 1,
                      allow_unverified: bool = False, raw: bool = False) -> ExperimentReport:
    """Probability that the spectrum meets ``J`` for nested windows ``J``.

    For every cube radius ``n`` and width ``|J|`` (and each center, the
    midpoint of ``I`` by default) the Monte Carlo probability
    ``P{spec H ∩ J ≠ ∅}`` is estimated from the eigenvalue counting
    function at the end points of ``J``.  ``C`` is fitted by least squares
    of ``P`` against ``|Λ||J|`` through the origin; per-cell ratios
    ``P/(|Λ||J|)`` are reported with Wilson intervals.

    Raises
    ------
    PreconditionError
        If ``(alpha, I)`` is in no verified regime (unless
        ``allow_unverified``), if widths are not strictly decreasing, or if
        some ``J`` leaves ``I``.
    """
    a, b = float(I[0]), float(I[1])
    widths = [float(w) for w in widths]
    n_list = [int(n) for n in n_list]
    if realizations < 1:
        raise ValueError("realizations must be >= 1")
    if any(w2 >= w1 for w1, w2 in zip(widths, widths[1:])) or min(widths) <= 0:
        raise PreconditionError("widths must be positive and strictly decreasing")
    case = wegner_case(alpha, (a, b), d, dist)
    if case == "unverified" and not allow_unverified:
        raise PreconditionError(
            f"interval [{a}, {b}] with alpha={alpha} is in no verified regime: it must avoid the "
            "forbidden set on (0, inf), or sit at the spectral bottom for admissible alpha < 0")
    centers = [0.5 * (a + b)] if centers is None else [float(c) for c in centers]
    cells = [(c, w) for c in centers for w in widths]
    for c, w in cells:
        if c - w / 2 < a or c + w / 2 > b:
            raise PreconditionError(f"J = [{c - w / 2}, {c + w / 2}] is not inside I")
    edges = np.array([x for c, w in cells for x in (c - w / 2, c + w / 2)])
    job = partial(_wegner_realization, d=d, n_list=n_list, alpha=alpha, dist=dist, seed=seed,
                  edges=edges)
    per = parallel_map(job, range(realizations), workers)

    rows = []
    raw_rows = [] if raw else None
    hits = np.zeros((len(n_list), len(cells)), dtype=np.int64)
    for k, counts in enumerate(per):
        inside = counts[:, 1::2] - counts[:, 0::2]
        hits += inside > 0
        if raw:
            for i, n in enumerate(n_list):
                for j, (c, w) in enumerate(cells):
                    raw_rows.append({"realization": k, "n": n, "center": c, "width": w,
                                     "count": int(inside[i, j])})
    for i, n in enumerate(n_list):
        size = build_cube(d, n).num_edges
        for j, (c, w) in enumerate(cells):
            h = int(hits[i, j])
            p = h / realizations
            lo, hi = wilson_interval(h, realizations)
            x = size * w
            rows.append({"n": n, "num_edges": size, "center": c, "width": w, "hits": h,
                         "realizations": realizations, "P": p, "P_low": lo, "P_high": hi,
                         "C_cell": p / x, "C_low": lo / x, "C_high": hi / x})
    x = np.array([r["num_edges"] * r["width"] for r in rows])
    P = np.array([r["P"] for r in rows])
    C = float((x * P).sum() / (x * x).sum())
    Cc = P / x
    pos = Cc[Cc > 0]
    fits = {
        "C": C,
        "residuals": (P - C * x).tolist(),
        "C_cell_max": float(Cc.max()),
        "C_cell_min": float(Cc.min()),
        "C_cell_ratio": float(pos.max() / pos.min()) if len(pos) else None,
        "monotone_in_width": _nested_monotone(rows, n_list, centers),
        "case": case,
    }
    params = {"d": d, "n_list": n_list, "alpha": alpha, "I": [a, b], "widths": widths,
              "centers": centers, "distribution": dist.to_dict(), "realizations": realizations,
              "seed": seed, "case": case}
    return ExperimentReport("wegner", params, {"cells": rows}, fits, raw_rows)


def _nested_monotone(rows, n_list, centers) -> bool:
    """Whether ``P`` strictly decreases as ``|J|`` shrinks, per ``n`` and center."""
    ok = True
    for n in n_list:
        for c in centers:
            ps = [r["P"] for r in rows if r["n"] == n and r["center"] == c]
            ok &= all(p2 < p1 for p1, p2 in zip(ps, ps[1:]))
    return bool(ok)


# ----------------------------------------------------------------------------
# Lifshitz experiment

EPS_GRID = np.geomspace(1e-3, 1.0, 97)


def _lifshitz_realization(k, *, d, n_list, alpha, dist, seed, energies):
    out = []
    for n in n_list:
        cube = _cube(d, n)
        lengths = sample_lengths(dist, cube, seed, k)
        out.append(counting_function(cube, lengths, alpha, energies[n]))
    return out


def lifshitz_experiment(d: int, n_list, alpha: float, E0: float | None, beta_exponent: float,
                        dist: LengthDistribution, realizations: int, seed: int, *,
                        eps_grid=None, min_count: int = 10, k_max: float = 0.03,
                        negative_control: bool = False, workers: int = 1,
                        raw: bool = False) -> ExperimentReport:
    """Eigenvalue probability near a lower spectral edge and the edge IDS.

    (i) ``P_n = P{spec H_Λ(n) meets [E0 - r_n, E0 + r_n]}`` with
    ``r_n = n^(beta_exponent - 1)``, and the exponent ``xi`` fitted from
    ``log P_n = c - xi log n`` over the positive ``P_n``.

    (ii) The local IDS ``k(E0 + eps) - k(E0)`` on the largest cube and the
    slope of ``log|log(k(E0+eps) - k(E0))|`` against ``log eps``, fitted
    over grid points with at least ``min_count`` eigenvalues in total and
    ``k <= k_max``.

    ``E0`` defaults to the bottom of the almost-sure spectrum.  An edge in
    the forbidden set is refused unless ``negative_control`` is set, which
    is meant for ``alpha = 0, E0 = 0`` where the constant function is an
    eigenfunction.
    """
    n_list = [int(n) for n in n_list]
    if E0 is None:
        E0 = inf_sigma(alpha, d, dist.l_min, dist.l_max)
    E0 = float(E0)
    dset = delta_set(dist.l_min, dist.l_max, max(E0, 0.0) + 1.0)
    if not is_outside_delta(E0, dset) and not negative_control:
        raise PreconditionError(f"spectral edge E0={E0} lies in the forbidden set")
    if negative_control and not (alpha == 0 and E0 == 0):
        raise PreconditionError("the negative control is alpha = 0, E0 = 0")
    eps = EPS_GRID if eps_grid is None else np.asarray(eps_grid, dtype=float)
    radii = {n: float(n) ** (beta_exponent - 1.0) for n in n_list}
    n_big = max(n_list)
    energies = {n: np.array([E0 - radii[n], E0 + radii[n]]) for n in n_list}
    energies[n_big] = np.concatenate([energies[n_big], [E0], E0 + eps])
    job = partial(_lifshitz_realization, d=d, n_list=n_list, alpha=alpha, dist=dist, seed=seed,
                  energies=energies)
    per = parallel_map(job, range(realizations), workers)

    hits = np.zeros(len(n_list), dtype=np.int64)
    acc = np.zeros(len(eps), dtype=np.int64)
    raw_rows = [] if raw else None
    for k, res in enumerate(per):
        for i, n in enumerate(n_list):
            N = res[i]
            hits[i] += (N[1] - N[0]) > 0
            if raw:
                raw_rows.append({"realization": k, "n": n, "count": int(N[1] - N[0])})
        Nb = res[n_list.index(n_big)]
        acc += Nb[3:] - Nb[2]

    prob_rows = []
    for i, n in enumerate(n_list):
        lo, hi = wilson_interval(int(hits[i]), realizations)
        prob_rows.append({"n": n, "radius": radii[n], "hits": int(hits[i]), "realizations": realizations,
                          "P": hits[i] / realizations, "P_low": lo, "P_high": hi})
    P = hits / realizations
    nv = build_cube(d, n_big).num_vertices
    kk = acc / (realizations * nv)
    ids_rows = [{"eps": e, "count": int(c), "k": q} for e, c, q in zip(eps, acc, kk)]

    fits: dict = {"E0": E0, "n_ids": n_big}
    pos = P > 0
    if pos.sum() >= 2:
        f = stats.linregress(np.log(np.array(n_list, dtype=float)[pos]), np.log(P[pos]))
        fits["xi"] = float(-f.slope)
    else:
        fits["xi"] = None
    fits["P_non_increasing"] = bool(np.all(np.diff(P) <= 0))
    fits["P_decreasing_trend"] = bool(np.all(np.diff(P) <= 0) and P[-1] < P[0])
    use = (acc >= min_count) & (kk <= k_max) & (kk > 0)
    if use.sum() >= 3:
        f = stats.linregress(np.log(eps[use]), np.log(np.abs(np.log(kk[use]))))
        fits.update({"ids_slope": float(f.slope), "ids_slope_stderr": float(f.stderr),
                     "ids_points": int(use.sum())})
    else:
        fits.update({"ids_slope": None, "ids_slope_stderr": None, "ids_points": int(use.sum())})
    params = {"d": d, "n_list": n_list, "alpha": alpha, "E0": E0, "beta_exponent": beta_exponent,
              "distribution": dist.to_dict(), "realizations": realizations, "seed": seed,
              "min_count": min_count, "k_max": k_max, "negative_control": negative_control}
    return ExperimentReport("lifshitz", params, {"probabilities": prob_rows, "ids": ids_rows},
                            fits, raw_rows)


# ----------------------------------------------------------------------------
# local energy estimate


def beta_cut(t, a: float):
    """``-|t|`` where ``|t| >= a`` and ``-a`` elsewhere."""
    t = np.asarray(t, dtype=float)
    return np.where(np.abs(t) >= a, -np.abs(t), -a)


def hopping_sup(E: float, l_min: float, l_max: float, grid: int = 4097) -> float:
    """``sup |sqrt(E)/sin(l sqrt(E))|`` over ``l`` in ``[l_min, l_max]``."""
    t, _ = edge_coefficients(np.linspace(l_min, l_max, grid), E)
    return float(np.abs(t).max())


def local_energy_matrices(cube: Cube, lengths: LengthField, E: float, a: float):
    """``(M, W, H0)`` for the local energy estimate.

    ``W`` is diagonal with ``W(v) = sum_{e ~ v} (beta_cut(t_e) - c_e)`` and
    ``H0`` is the graph Laplacian of the cube's edges.
    """
    M = assemble_M(cube, lengths, E).matrix
    t, c = edge_coefficients(lengths.values, E)
    w = beta_cut(t, a) - c
    nv = cube.num_vertices
    W = np.bincount(cube.iota, weights=w, minlength=nv) + np.bincount(cube.tau, weights=w, minlength=nv)
    deg = cube.degrees.astype(float)
    H0 = diags(deg) - cube.adjacency
    return M, W, H0.tocsr()


def local_energy_margins(M, W, H0, a: float, phis: np.ndarray) -> np.ndarray:
    """``<phi, M phi> - <phi, W phi> - a <|phi|, H0 |phi|>`` per column."""
    ab = np.abs(phis)
    return (np.einsum("ij,ij->j", phis, M @ phis) - np.einsum("i,ij->j", W, phis * phis)
            - a * np.einsum("ij,ij->j", ab, H0 @ ab))


def local_energy_check(d: int, n: int, E: float, dist: LengthDistribution, a: float, trials: int,
                       seed: int, realizations: int = 1) -> dict:
    """Minimum margin of the local energy estimate over random and coordinate vectors.

    Raises
    ------
    ValueError
        If ``a`` is not in ``(0, b)`` with ``b`` the largest hopping over the
        length support.
    """
    b = hopping_sup(E, dist.l_min, dist.l_max)
    if not 0 < a < b:
        raise ValueError(f"threshold a={a} must lie in (0, b) with b={b:.6g}")
    cube = build_cube(d, n)
    nv = cube.num_vertices
    rng = np.random.Generator(np.random.Philox(key=[seed % 2 ** 64, 0xC0FFEE]))
    mins_random, mins_coord = [], []
    for k in range(realizations):
        lengths = sample_lengths(dist, cube, seed, k)
        M, W, H0 = local_energy_matrices(cube, lengths, E, a)
        phis = rng.standard_normal((nv, trials))
        phis /= np.linalg.norm(phis, axis=0)
        mins_random.append(float(local_energy_margins(M, W, H0, a, phis).min()))
        coord = M.diagonal() - W - a * H0.diagonal()
        mins_coord.append(float(coord.min()))
    return {"b": b, "a": a, "min_margin": min(min(mins_random), min(mins_coord)),
            "min_random": min(mins_random), "min_coordinate": min(mins_coord),
            "realizations": realizations, "trials": trials}
