import json
import warnings

import numpy as np
import pytest

from conftest import random_instance, single_edge
from qgl.errors import DegenerateFit, DirichletProximity
from qgl.kp_bands import bands_P, dispersion, inf_sigma
from qgl.ensemble import LengthDistribution, sample_lengths
from qgl.lattice import build_cube
from qgl.reduction import LengthField, assemble_M
from qgl.spectra import (counting_function, eigenvector_at, eigs_M, fd_convergence,
                         fd_oracle_spectrum, inverse_participation_ratio, kernel_dims,
                         localization_profile, spectrum_H)


def test_eigs_M_single_edge():
    g, L = single_edge(1.0)
    mu = eigs_M(assemble_M(g, L, np.pi ** 2 / 4))
    assert np.allclose(mu, [-np.pi / 2, np.pi / 2])


def test_eigs_M_trace_and_dual_solver():
    cube, L = random_instance(2, 2, seed=1)
    assert cube.num_vertices >= 40
    op = assemble_M(cube, L, 1.3)
    mu = eigs_M(op)
    norm = np.abs(op.dense()).sum(axis=1).max()
    assert abs(mu.sum() - op.matrix.diagonal().sum()) < 1e-10 * norm
    assert np.max(np.abs(mu - eigs_M(op, solver="ev"))) < 1e-9
    chain, Lc = random_instance(1, 24, seed=2)
    opc = assemble_M(chain, Lc, 2.1)
    assert np.max(np.abs(eigs_M(opc) - eigs_M(opc, solver="tridiagonal"))) < 1e-9


@pytest.mark.parametrize("n", [3, 10])
def test_neumann_path(n):
    cube = build_cube(1, n)
    K = cube.num_edges
    L = LengthField.constant(cube, 1.0)
    res = spectrum_H(cube, L, 0.0, (-0.5, 9.0))
    expected = np.array([(np.pi * k / K) ** 2 for k in range(K) if (np.pi * k / K) ** 2 <= 9.0])
    assert len(res) == len(expected)
    assert np.max(np.abs(res.eigenvalues - expected)) < 1e-8
    assert res.diagnostics["residual_failures"] == 0


def test_constant_lengths_in_bands():
    for alpha in (-1.0, 0.5, 2.0):
        cube = build_cube(1, 20)
        L = LengthField.constant(cube, 1.0)
        res = spectrum_H(cube, L, alpha, (-3.0, 40.0))
        bands = bands_P(1.0, alpha, 40.0)
        assert np.all(bands.contains(res.eigenvalues, tol=10 / 20))
        # dispersion in [-1, 1] up to the same finite-volume tolerance
        inside = np.abs(dispersion(res.eigenvalues, 1.0, alpha)) <= 1 + 1e-9
        assert inside.mean() > 0.8


def test_guard_bands_reported():
    cube = build_cube(1, 3)
    L = LengthField.constant(cube, 1.0)
    res = spectrum_H(cube, L, 0.5, (5.0, 12.0))
    assert len(res.excluded_intervals) == 1
    a, b = res.excluded_intervals[0]
    assert a < np.pi ** 2 < b and b - a < 4e-8
    fd = fd_oracle_spectrum(cube, L, 0.5, 48, (5.0, 12.0))
    near = int(np.sum(np.abs(fd.eigenvalues - np.pi ** 2) < 1e-3))
    assert res.excluded_counts[0] == near
    assert len(res) + near == len(fd)
    assert fd.excluded_intervals == []


def test_matches_oracle_random():
    for d, n, alpha in [(1, 12, -1.0), (1, 8, 2.0), (2, 1, 0.5)]:
        cube, L = random_instance(d, n, seed=n)
        win = (-2.0, 6.0)
        res = spectrum_H(cube, L, alpha, win)
        fd = fd_oracle_spectrum(cube, L, alpha, 32, win)
        assert len(res) == len(fd)
        assert np.all(np.abs(res.eigenvalues - fd.eigenvalues) <= 1e-3 * np.maximum(1, np.abs(fd.eigenvalues)))


def test_dense_and_sturm_agree():
    cube, L = random_instance(1, 10, seed=3)
    a = spectrum_H(cube, L, 0.7, (0.0, 12.0), method="sturm")
    b = spectrum_H(cube, L, 0.7, (0.0, 12.0), method="dense")
    assert np.allclose(a.eigenvalues, b.eigenvalues, atol=2e-9)
    assert np.array_equal(a.multiplicities, b.multiplicities)


def test_no_negative_eigenvalues_for_positive_alpha():
    cube, L = random_instance(2, 2, seed=8)
    res = spectrum_H(cube, L, 1.5, (-5.0, 1.0))
    assert np.all(res.eigenvalues >= 0)


def test_shift_invariance():
    cube, L = random_instance(2, 1, seed=4)
    shifted = cube.shifted((5, -3))
    a = spectrum_H(cube, L, 0.5, (0.1, 5.0))
    b = spectrum_H(shifted, L, 0.5, (0.1, 5.0))
    assert np.allclose(a.eigenvalues, b.eigenvalues, atol=1e-9)


def test_multiplicity_on_symmetric_cube():
    cube = build_cube(2, 1)
    L = LengthField.constant(cube, 1.0)
    res = spectrum_H(cube, L, 1.0, (0.05, 6.0))
    assert res.multiplicities.max() >= 2
    fd = fd_oracle_spectrum(cube, L, 1.0, 32, (0.05, 6.0))
    assert len(fd) == res.multiplicities.sum()
    for E, m in zip(res.eigenvalues, res.multiplicities):
        dh, dm = kernel_dims(cube, L, E, 1.0)
        assert dh == dm == m


def test_counting_function_consistency():
    cube, L = random_instance(2, 1, seed=6)
    res = spectrum_H(cube, L, 0.3, (-1.0, 6.0))
    N = counting_function(cube, L, 0.3, [-1.0, 6.0])
    assert N[1] - N[0] == res.multiplicities.sum() + sum(res.excluded_counts)


def test_fd_convergence_order():
    g, L = single_edge(1.0)
    conv = fd_convergence(g, L, 0.0, 16, (-0.5, 45.0), reference=[(np.pi * k) ** 2 for k in range(3)])
    assert 3.5 < conv["ratios"][0] < 4.5 and 3.5 < conv["ratios"][1] < 4.5
    res = fd_oracle_spectrum(g, L, 0.0, 64, (-0.5, 45.0))
    assert np.allclose(res.eigenvalues, [0.0, np.pi ** 2, 4 * np.pi ** 2], atol=1e-5)


def test_fd_warns_when_under_resolved():
    g, L = single_edge(1.0)
    with pytest.warns(RuntimeWarning):
        fd_oracle_spectrum(g, L, 0.0, 16, (0.0, 100.0))
    with pytest.raises(ValueError):
        fd_oracle_spectrum(g, L, 0.0, 8, (0.0, 1.0))


def test_kernel_dims_gap_and_eigenvalue():
    cube, L = random_instance(1, 6, seed=5)
    res = spectrum_H(cube, L, 1.0, (0.1, 6.0))
    gap = 0.5 * (res.eigenvalues[0] + res.eigenvalues[1])
    assert kernel_dims(cube, L, gap, 1.0) == (0, 0)
    dh, dm = kernel_dims(cube, L, res.eigenvalues[0], 1.0)
    assert dm >= 1 and dh == dm
    with pytest.raises(DirichletProximity):
        kernel_dims(cube, LengthField.constant(cube, 1.0), np.pi ** 2, 1.0)


def test_serialization():
    cube, L = random_instance(1, 4, seed=1)
    res = spectrum_H(cube, L, 1.0, (0.0, 12.0))
    lines = res.to_csv().splitlines()
    assert lines[0] == "E,multiplicity,branch_id,residual"
    assert len(lines) == len(res) + 1
    data = json.loads(res.to_json())
    assert data["method"] == "reduction" and "diagnostics" in data


def test_ipr_limits():
    cube = build_cube(2, 1)
    L = LengthField.constant(cube, 1.0)
    delta = np.zeros(cube.num_vertices)
    delta[0] = 1.0
    assert inverse_participation_ratio(delta) == 1.0
    uniform = np.ones(cube.num_vertices) / np.sqrt(cube.num_vertices)
    assert inverse_participation_ratio(uniform) == pytest.approx(1 / cube.num_vertices)
    with pytest.raises(DegenerateFit):
        localization_profile(cube, L, 1.0, delta)


def test_localization_strong_disorder():
    dist = LengthDistribution("uniform", 0.5, 1.5)
    cube = build_cube(1, 64)
    E0 = inf_sigma(2.0, 1, 0.5, 1.5)
    rates, r2 = [], []
    for k in range(20):
        L = sample_lengths(dist, cube, 11, k)
        res = spectrum_H(cube, L, 2.0, (max(E0 - 0.5, 0.0), E0 + 3.0))
        E = res.eigenvalues[0]
        prof = localization_profile(cube, L, E, eigenvector_at(cube, L, E, 2.0))
        assert 1 / cube.num_vertices <= prof.ipr <= 1
        rates.append(prof.decay_rate)
        r2.append(prof.r_squared)
    assert np.median(rates) > 0
    assert np.median(r2) > 0.8
