import numpy as np
import pytest

from qgl.rng import edge_counters, philox4x64, uniforms


def test_philox_matches_numpy():
    key = (12345, 7)
    gen = np.random.Philox(key=list(key))
    expect = gen.random_raw(8)
    ctr = np.zeros((2, 4), dtype=np.uint64)
    ctr[0, 0], ctr[1, 0] = 1, 2
    got = philox4x64(ctr, key).ravel()
    assert np.array_equal(got, expect)


def test_uniforms_open_interval_and_mean():
    bases = np.arange(100_000).reshape(-1, 1)
    u = uniforms(edge_counters(bases, np.zeros(len(bases))), seed=3)
    assert np.all((u > 0) & (u < 1))
    sigma = np.sqrt(1 / 12 / len(u))
    assert abs(u.mean() - 0.5) < 3 * sigma


def test_counters_unique_across_axes_and_signs():
    g = np.array([(x, y) for x in range(-4, 5) for y in range(-4, 5)])
    c0 = edge_counters(g, np.zeros(len(g)))
    c1 = edge_counters(g, np.ones(len(g)))
    allc = np.vstack([c0, c1])
    assert len(np.unique(allc, axis=0)) == len(allc)


def test_seed_and_stream_change_values():
    bases = np.arange(1000).reshape(-1, 1)
    ctr = edge_counters(bases, np.zeros(1000))
    a = uniforms(ctr, 1, 0)
    assert np.array_equal(a, uniforms(ctr, 1, 0))
    assert np.mean(a != uniforms(ctr, 2, 0)) >= 0.99
    assert np.mean(a != uniforms(ctr, 1, 1)) >= 0.99


def test_dimension_limit():
    with pytest.raises(ValueError):
        edge_counters(np.zeros((1, 5), dtype=int), [0])
