import numpy as np
import pytest
from scipy.optimize import brentq

from qgl.kp_bands import (admissible_negative_alpha, alpha_of_bottom, bands_P, delta_set, dispersion,
                          inf_sigma, is_outside_delta, negative_gap_function,
                          negative_gap_sign_function, sigma_union)


def test_dispersion_values():
    assert dispersion(np.pi ** 2, 1.0, 0.0) == pytest.approx(-1.0, abs=1e-15)
    assert dispersion(0.0, 1.7, 3.0) == pytest.approx(1 + 3.0 * 1.7 / 2)
    assert dispersion(np.pi ** 2 / 4, 1.0, 2.0) == pytest.approx(2 / np.pi, abs=1e-15)
    with pytest.raises(ValueError):
        dispersion(1.0, 0.0, 1.0)


def test_dispersion_continuous_at_zero():
    # both branches follow the same Taylor polynomial across E = 0
    u, beta = 1.3, 0.7
    E = np.linspace(-1e-5, 1e-5, 41)
    taylor = 1 + beta * u / 2 - E * (u ** 2 / 2 + beta * u ** 3 / 12)
    assert np.max(np.abs(dispersion(E, u, beta) - taylor)) < 1e-10


def test_free_bands():
    bl = bands_P(1.0, 0.0, 50.0)
    assert np.allclose(bl.bands, [[0.0, 50.0]])


def _dense_edges(u, beta, E_max, points):
    E = np.linspace(-5, E_max, points)
    D = dispersion(E, u, beta)
    roots = []
    for s in (1.0, -1.0):
        f = D - s
        for i in np.nonzero(np.sign(f[:-1]) * np.sign(f[1:]) < 0)[0]:
            roots.append(brentq(lambda e: dispersion(e, u, beta) - s, E[i], E[i + 1], xtol=1e-13))
    return np.sort(roots)


def test_bands_against_dense_scan():
    bl = bands_P(1.0, 2.0, 50.0)
    ours = np.sort([e for e, _ in bl.edges()])
    ref = _dense_edges(1.0, 2.0, 50.0, 200000)
    # the dense scan misses the tangential touches at (pi n)^2
    for r in ref:
        assert np.min(np.abs(ours - r)) < 1e-8
    for n in (1, 2):
        assert np.min(np.abs(ours - (np.pi * n) ** 2)) < 1e-9


def test_band_edges_are_roots():
    for u, beta in [(1.0, 2.0), (0.9, -1.5), (1.2, 0.4)]:
        bl = bands_P(u, beta, 60.0)
        for E, _ in bl.edges():
            D = dispersion(E, u, beta)
            h = 1e-6
            slope = abs(dispersion(E + h, u, beta) - dispersion(E - h, u, beta)) / (2 * h)
            assert min(abs(D - 1), abs(D + 1)) < 1e-10 * max(slope, 1.0) + 1e-12


def test_sigma_union_free_and_monotone():
    s0 = sigma_union(0.0, 1, 0.8, 1.2, 40.0)
    assert np.allclose(s0.bands.bands, [[0.0, 40.0]])
    big = sigma_union(1.5, 1, 0.8, 1.2, 40.0)
    small = sigma_union(1.5, 1, 0.9, 1.1, 40.0)
    for a, b in small.bands.bands:
        mids = np.linspace(a, b, 7)
        assert np.all(big.bands.contains(mids, tol=1e-7))


def test_sigma_union_edges_outside_delta():
    s = sigma_union(2.0, 1, 0.95, 1.05, 60.0)
    assert any(flag for _, _, flag in s.edges)


def test_sigma_union_points_are_in_some_band():
    s = sigma_union(2.0, 1, 0.8, 1.2, 30.0)
    us = np.linspace(0.8, 1.2, 401)
    for a, b in s.bands.bands:
        for E in np.linspace(a, b, 9)[1:-1]:
            assert np.any(np.abs(dispersion(E, us, 2.0)) <= 1 + 1e-9)


def test_inf_sigma():
    assert inf_sigma(0.0, 1, 0.8, 1.2) == 0.0
    alpha = -2 * np.tanh(0.5)
    E, res = inf_sigma(alpha, 1, 1.0, 1.5, full_output=True)
    assert E == pytest.approx(-1.0, abs=1e-9)
    assert abs(res) < 1e-12
    E2 = inf_sigma(2.0, 1, 0.8, 1.2)
    assert 0 < E2 < (np.pi / 1.2) ** 2
    s = sigma_union(2.0, 1, 0.8, 1.2, 20.0)
    assert abs(s.bands.bands[0, 0] - E2) < 1e-8


def test_inf_sigma_monotone_in_alpha():
    vals = [inf_sigma(a, 2, 0.8, 1.2) for a in np.linspace(-3, 3, 13)]
    assert np.all(np.diff(vals) >= 0)


def test_delta_set():
    ds = delta_set(0.8, 1.2, 20.0)
    assert ds.intervals[0] == pytest.approx([np.pi ** 2 / 1.44, np.pi ** 2 / 0.64])
    assert ds.intervals[0][0] == pytest.approx(6.8539, abs=1e-4)
    assert ds.intervals[0][1] == pytest.approx(15.4213, abs=1e-4)
    assert not is_outside_delta(0.0, ds)
    assert is_outside_delta(16.0, delta_set(0.8, 1.2, 30.0))
    assert is_outside_delta(3.0, ds)
    assert not is_outside_delta(10.0, ds)


def test_negative_gap_sign_rule():
    # the exact rule reproduces the sign of f everywhere on a grid
    E = np.geomspace(1e-3, 50, 400)
    for d, l in [(1, 1.0), (2, 0.8), (3, 1.5)]:
        f = negative_gap_function(E, d, l)
        g = negative_gap_sign_function(E, d, l, "exact")
        assert np.all(np.sign(f) == np.sign(g))
    g = lambda e: np.cosh(np.sqrt(e) / 2) ** 2 - e  # noqa: E731
    assert g(1e-6) > 0 and g(4.0) < 0


def test_alpha_of_bottom_decreasing():
    E = np.linspace(0.01, 30, 500)
    assert np.all(np.diff(alpha_of_bottom(E, 2, 0.9)) < 0)


def test_admissible_negative_alpha():
    exact = admissible_negative_alpha(1, 1.0)
    assert len(exact.ranges) == 1 and exact.ranges[0][1] == 0.0
    stated = admissible_negative_alpha(1, 1.0, criterion="stated")
    assert len(stated.ranges) == 2
    assert stated.ranges[0][0] == -np.inf and stated.ranges[1][1] == 0.0
    lo, hi = exact.ranges[0]
    E_root = exact.energy_roots[0]
    assert lo == pytest.approx(float(alpha_of_bottom(E_root, 1, 1.0)))


def test_serialization():
    bl = bands_P(1.0, 2.0, 20.0)
    assert bl.to_csv().splitlines()[0] == "band_index,left,right"
    assert '"bands"' in bl.to_json()
