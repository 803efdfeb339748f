"""Acceptance suite: oracle agreement, operator bounds and Monte Carlo trends.

Each test records one PASS/FAIL line, printed in the terminal summary.
"""
import time
import warnings

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from qgl.cli import main
from qgl.ensemble import (LengthDistribution, lifshitz_experiment, local_energy_check,
                          sample_lengths, wegner_experiment)
from qgl.kp_bands import bands_P, delta_set, inf_sigma, sigma_union
from qgl.lattice import build_cube
from qgl.reduction import (LengthField, assemble_M, dM_dl, gap_constants, negative_gap_check,
                           sum_dM_dl)
from qgl.spectra import fd_oracle_spectrum, kernel_dims, spectrum_H

DIST = LengthDistribution("uniform", 0.8, 1.2)
ALPHAS = (-1.0, 0.5, 2.0)
SIZES = [(1, 4), (1, 8), (1, 16), (1, 32), (1, 12), (2, 1), (2, 2), (2, 3), (2, 4), (1, 24)]
# below the first forbidden interval [(pi/1.2)^2, (pi/0.8)^2]
WINDOW = (-6.0, 6.5)


def _report(name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def _instances():
    for k in range(50):
        d, n = SIZES[k % len(SIZES)]
        cube = build_cube(d, n)
        yield d, n, ALPHAS[k % 3], cube, sample_lengths(DIST, cube, 2024, k)


@pytest.fixture(scope="module")
def oracle_runs():
    assert delta_set(DIST.l_min, DIST.l_max, 20.0).intervals[0][0] > WINDOW[1]
    t0 = time.perf_counter()
    runs = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for d, n, alpha, cube, lengths in _instances():
            res = spectrum_H(cube, lengths, alpha, WINDOW)
            fd = fd_oracle_spectrum(cube, lengths, alpha, 32, WINDOW)
            runs.append((d, n, alpha, cube, lengths, res, fd))
    return runs, time.perf_counter() - t0


def test_reduction_matches_fd_oracle(oracle_runs):
    runs, elapsed = oracle_runs
    worst, failures = 0.0, []
    for d, n, alpha, cube, lengths, res, fd in runs:
        ours, ref = res.expanded(), fd.eigenvalues
        assert res.excluded_intervals == []
        scale = np.maximum(1.0, np.abs(ref))
        if len(ours) != len(ref):
            failures.append((d, n, alpha, len(ours), len(ref)))
            continue
        err = float(np.max(np.abs(ours - ref) / scale, initial=0.0))
        worst = max(worst, err)
        if err > 1e-3:
            failures.append((d, n, alpha, err))
    ok = not failures and elapsed < 300
    _report("reduction vs finite-element oracle", ok,
            f"50 instances, max rel err {worst:.2e} (tol 1e-3), {elapsed:.0f} s (limit 300 s)")
    assert not failures, failures
    assert elapsed < 300


def test_multiplicity_identity(oracle_runs):
    runs, _ = oracle_runs
    checked, mismatches = 0, []
    for d, n, alpha, cube, lengths, res, fd in runs:
        for E, mult in zip(res.eigenvalues, res.multiplicities):
            dim_H, dim_M = kernel_dims(cube, lengths, E, alpha, reference=fd.eigenvalues)
            checked += 1
            if not dim_H == dim_M == mult:
                mismatches.append((d, n, alpha, E, dim_H, dim_M, mult))
    _report("dim ker(H-E) = dim ker(M(E)-alpha)", not mismatches,
            f"{checked} eigenvalues, {len(mismatches)} mismatches")
    assert not mismatches, mismatches[:5]


def test_kronig_penney_consistency():
    t0 = time.perf_counter()
    bad = []
    for u in (0.8, 1.0, 1.2):
        for alpha in ALPHAS:
            bl = bands_P(u, alpha, 45.0)
            for n in (16, 32, 64):
                cube = build_cube(1, n)
                lengths = LengthField(np.full(cube.num_edges, u), 0.5, 1.5)
                res = spectrum_H(cube, lengths, alpha, (-6.0, 40.0))
                outside = ~bl.contains(res.eigenvalues, tol=10.0 / n)
                if outside.any():
                    bad.append((u, alpha, n, res.eigenvalues[outside]))
    drifts = []
    for alpha in ALPHAS:
        coarse = sigma_union(alpha, 1, 0.8, 1.2, 40.0, u_points=64)
        fine = sigma_union(alpha, 1, 0.8, 1.2, 40.0, u_points=128)
        drifts.append(coarse.drift)
        drifts.append(float(np.max(np.abs(coarse.bands.bands - fine.bands.bands))))
    elapsed = time.perf_counter() - t0
    ok = not bad and max(drifts) < 1e-6 and elapsed < 60
    _report("Kronig-Penney band consistency", ok,
            f"{len(bad)} out-of-band eigenvalue sets (tol 10/n), edge drift {max(drifts):.1e} "
            f"(tol 1e-6), {elapsed:.0f} s (limit 60 s)")
    assert not bad
    assert max(drifts) < 1e-6
    assert elapsed < 60


def test_operator_inequalities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    I = (1.0, 2.0)
    gaps = {d: gap_constants(I, DIST.l_min, DIST.l_max, d=d) for d in (1, 2)}
    worst_gap, worst_fd, worst_neg, worst_fact = np.inf, 0.0, np.inf, 0.0
    for k in range(100):
        d = 1 + k % 2
        n = int(rng.integers(1, 17 if d == 1 else 4))
        cube = build_cube(d, n)
        lengths = sample_lengths(DIST, cube, 99, k)
        E = float(rng.uniform(*I))
        lam = np.linalg.eigvalsh(sum_dM_dl(cube, lengths, E).toarray()).min()
        worst_gap = min(worst_gap, lam - gaps[d].beta)
        e = int(rng.integers(cube.num_edges))
        h = 1e-6
        plus = assemble_M(cube, lengths.with_value(e, lengths.values[e] + h), E).matrix
        minus = assemble_M(cube, lengths.with_value(e, lengths.values[e] - h), E).matrix
        diff = abs((plus - minus) / (2 * h) - dM_dl(cube, lengths, E, e)).max()
        worst_fd = max(worst_fd, diff)
        neg = negative_gap_check(cube, lengths, float(-rng.uniform(0.5, 2.0)), 0.5, 2.0)
        worst_neg = min(worst_neg, neg.margin)
        worst_fact = max(worst_fact, neg.factorization_residual)
    elapsed = time.perf_counter() - t0
    ok = worst_gap >= 0 and worst_fd < 1e-5 and worst_neg >= -1e-10 and worst_fact < 1e-12 \
        and elapsed < 120
    _report("derivative bounds", ok,
            f"min(lambda_min - beta) {worst_gap:.3g}, dM/dl fd err {worst_fd:.1e}, "
            f"K - gamma {worst_neg:.3g}, factorization residual {worst_fact:.1e}, {elapsed:.0f} s")
    assert worst_gap >= 0
    assert worst_fd < 1e-5
    assert worst_neg >= -1e-10
    assert worst_fact < 1e-12
    assert elapsed < 120


def test_local_energy_estimate():
    t0 = time.perf_counter()
    results = {(d, n): local_energy_check(d, n, 1.5, LengthDistribution(), 0.5, 10_000, seed=11,
                                          realizations=10)
               for d, n in ((1, 64), (2, 6))}
    elapsed = time.perf_counter() - t0
    low = min(r["min_margin"] for r in results.values())
    ok = low >= -1e-10 and elapsed < 120
    _report("local energy estimate", ok,
            f"min margin {low:.4g} over 1e4 random + coordinate vectors x 10 realizations, "
            f"{elapsed:.0f} s")
    assert low >= -1e-10
    assert elapsed < 120


def test_wegner_trend():
    t0 = time.perf_counter()
    rep = wegner_experiment(1, [32, 64, 128], 1.0, (1.0, 2.0), [0.04, 0.02, 0.01],
                            LengthDistribution(), 2000, seed=1)
    elapsed = time.perf_counter() - t0
    f = rep.fits
    ok = f["case"] == "positive" and f["C_cell_ratio"] is not None and f["C_cell_ratio"] < 3 \
        and f["monotone_in_width"]
    _report("Wegner scaling", ok,
            f"C_cell max/min {f['C_cell_ratio']:.3g} (< 3), strictly decreasing in |J|: "
            f"{f['monotone_in_width']}, {elapsed:.0f} s")
    assert f["case"] == "positive"
    assert f["C_cell_ratio"] < 3
    assert f["monotone_in_width"]


def test_lifshitz_trend():
    t0 = time.perf_counter()
    E0 = inf_sigma(1.0, 1, 0.8, 1.2)
    rep = lifshitz_experiment(1, [64, 128, 256], 1.0, E0, 0.5, LengthDistribution(), 2000, seed=1)
    control = lifshitz_experiment(1, [64, 128, 256], 0.0, 0.0, 0.5, LengthDistribution(), 200,
                                  seed=1, negative_control=True)
    elapsed = time.perf_counter() - t0
    f = rep.fits
    P = [float(r["P"]) for r in rep.tables["probabilities"]]
    Pc = [float(r["P"]) for r in control.tables["probabilities"]]
    slope_ok = f["ids_slope"] is not None and f["ids_slope"] <= -0.5 + 0.15
    ok = slope_ok and f["P_decreasing_trend"] and all(p == 1 for p in Pc)
    slope = "none" if f["ids_slope"] is None else f"{f['ids_slope']:.3g}"
    _report("Lifshitz tail", ok,
            f"double-log slope {slope} (<= -0.35), P(n) = {P}, control P = {Pc}, {elapsed:.0f} s")
    assert slope_ok
    assert f["P_decreasing_trend"]
    assert all(p == 1 for p in Pc)


DETERMINISM_RUNS = [
    ["spectrum", "--n", "8", "--seed", "3"],
    ["ids", "--n", "16", "--realizations", "8", "--grid-points", "21"],
    ["wegner", "--n-list", "8,16", "--realizations", "40"],
    ["lifshitz", "--n-list", "16,32", "--realizations", "40", "--raw"],
]


def test_determinism_across_threads(tmp_path):
    mismatched = []
    for args in DETERMINISM_RUNS:
        outputs = []
        for threads in ("1", "2", "3"):
            out = tmp_path / f"{args[0]}_{threads}"
            assert main([*args, "--threads", threads, "--out", str(out)]) == 0
            outputs.append({p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))})
        if not outputs[0] or any(o != outputs[0] for o in outputs[1:]):
            mismatched.append(args[0])
    _report("determinism across thread counts", not mismatched,
            f"{len(DETERMINISM_RUNS)} commands x 3 thread counts, mismatched: {mismatched or 'none'}")
    assert not mismatched
