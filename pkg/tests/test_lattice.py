import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qgl.lattice import Edge, build_cube, degree, subgraph


def enumerate_edges(d, n):
    """Brute-force list of edges with an endpoint in the sup-norm ball."""
    out = []
    for base in itertools.product(range(-n - 2, n + 2), repeat=d):
        for j in range(1, d + 1):
            e = Edge(base, j)
            if max(map(abs, e.initial)) <= n or max(map(abs, e.terminal)) <= n:
                out.append(e)
    return sorted(out)


def test_d1_n0():
    c = build_cube(1, 0)
    assert c.edges == [Edge((-1,), 1), Edge((0,), 1)]
    assert [c.vertex(i) for i in range(c.num_vertices)] == [(-1,), (0,), (1,)]


@pytest.mark.parametrize("n", [0, 1, 5, 17])
def test_d1_counts(n):
    c = build_cube(1, n)
    assert c.num_edges == 2 * n + 2
    assert c.num_vertices == 2 * n + 3
    assert c.is_chain


def test_d2_n0():
    c = build_cube(2, 0)
    assert c.num_edges == 4
    assert c.num_vertices == 5


@pytest.mark.parametrize("d,n", [(1, 3), (2, 0), (2, 1), (2, 3), (3, 1)])
def test_matches_enumeration(d, n):
    c = build_cube(d, n)
    assert sorted(c.edges) == enumerate_edges(d, n)
    assert c.edges == sorted(c.edges)


def test_degrees():
    c = build_cube(2, 2)
    assert degree(c, (0, 0)) == 4
    assert degree(build_cube(1, 3), (4,)) == 1
    assert degree(build_cube(1, 3), (-4,)) == 1
    # boundary vertex next to a corner of the d=2, n=1 cube
    c1 = build_cube(2, 1)
    expected = sum(1 for e in enumerate_edges(2, 1) if (1, 2) in (e.initial, e.terminal))
    assert degree(c1, (1, 2)) == expected == 1
    assert degree(c1, (1, 1)) == 4
    with pytest.raises(KeyError):
        degree(c1, (5, 5))


def test_rejects_bad_arguments():
    with pytest.raises(ValueError):
        build_cube(0, 1)
    with pytest.raises(ValueError):
        build_cube(1, -1)
    with pytest.raises(ValueError):
        build_cube(2, 1, norm="l7")


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(0, 3))
def test_index_round_trip(d, n):
    c = build_cube(d, n)
    for v, i in c.vertex_index.items():
        assert c.vertex(i) == v
    assert sorted(c.vertex_index.values()) == list(range(c.num_vertices))
    for e, i in c.edge_index.items():
        assert c.edges[i] == e
        assert e.initial in c.vertex_index and e.terminal in c.vertex_index
    assert np.all(c.degrees >= 1)


def test_growth_and_norms():
    sizes = [build_cube(2, n).num_edges for n in (4, 8, 16)]
    assert 3.5 < sizes[2] / sizes[1] < 4.5
    assert build_cube(2, 3, norm="l1").num_edges < build_cube(2, 3).num_edges


def test_shift_and_subgraph():
    c = build_cube(2, 1)
    s = c.shifted((3, -2))
    assert np.array_equal(s.bases, c.bases + np.array([3, -2]))
    g = subgraph(2, [((0, 0), 1), ((0, 0), 2)])
    assert g.num_edges == 2 and g.num_vertices == 3
    assert list(g.graph_distance(g.vertex_index[(0, 0)])) == [0.0, 1.0, 1.0]
