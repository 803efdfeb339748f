"""Finite pieces of the Z^d lattice graph.

A cube ``Λ(n)`` is the set of lattice edges ``(m, m + h_j)`` having at least
one endpoint ``v`` with ``|v| <= n``.  Its vertex set is the set of all
endpoints, so the cube carries pendant edges sticking out of the box.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import shortest_path

NORMS = ("sup", "l1", "l2")


class Edge(NamedTuple):
    """Directed lattice edge from ``base`` to ``base + h_direction``.

    ``direction`` runs over ``1..d``.
    """

    base: tuple
    direction: int

    @property
    def initial(self) -> tuple:
        return self.base

    @property
    def terminal(self) -> tuple:
        j = self.direction - 1
        return tuple(c + (i == j) for i, c in enumerate(self.base))


@dataclass(frozen=True, eq=False)
class Cube:
    """Immutable edge/vertex set of a finite lattice cube.

    Attributes
    ----------
    d, n : int
        Dimension and radius.
    vertices : ndarray, shape (V, d)
        Vertex coordinates in lexicographic order.
    bases : ndarray, shape (E, d)
        Initial vertex of each edge.
    axes : ndarray, shape (E,)
        Zero-based axis of each edge (``direction - 1``).
    iota, tau : ndarray, shape (E,)
        Dense indices of the initial and terminal vertex of each edge.
    """

    d: int
    n: int
    norm: str
    center: tuple
    vertices: np.ndarray
    bases: np.ndarray
    axes: np.ndarray
    iota: np.ndarray
    tau: np.ndarray
    vertex_index: dict = field(repr=False)
    edge_index: dict = field(repr=False)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_edges(self) -> int:
        return len(self.bases)

    @property
    def edges(self) -> list[Edge]:
        return [Edge(tuple(int(c) for c in b), int(a) + 1) for b, a in zip(self.bases, self.axes)]

    def vertex(self, i: int) -> tuple:
        return tuple(int(c) for c in self.vertices[i])

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.bincount(np.concatenate([self.iota, self.tau]), minlength=self.num_vertices)

    @property
    def is_chain(self) -> bool:
        """True when edge ``i`` joins vertex ``i`` to vertex ``i + 1``.

        This holds for every one-dimensional cube and lets the reduced
        operator be handled as a symmetric tridiagonal matrix.
        """
        k = self.num_edges
        return (
            self.num_vertices == k + 1
            and np.array_equal(self.iota, np.arange(k))
            and np.array_equal(self.tau, np.arange(1, k + 1))
        )

    @cached_property
    def adjacency(self) -> csr_matrix:
        """Symmetric 0/1 adjacency matrix of the cube's edges."""
        nv = self.num_vertices
        rows = np.concatenate([self.iota, self.tau])
        cols = np.concatenate([self.tau, self.iota])
        a = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(nv, nv)).tocsr()
        a.sum_duplicates()
        return a

    def graph_distance(self, source: int) -> np.ndarray:
        """Hop distance from vertex ``source`` inside the cube graph."""
        dist = shortest_path(self.adjacency, unweighted=True, indices=source, directed=False)
        return np.asarray(dist, dtype=float)

    def shifted(self, offset: Sequence[int]) -> "Cube":
        """The same cube translated by a lattice vector."""
        offset = tuple(int(o) for o in offset)
        if len(offset) != self.d:
            raise ValueError("offset must have d components")
        center = tuple(c + o for c, o in zip(self.center, offset))
        return build_cube(self.d, self.n, norm=self.norm, center=center)


def _vertex_norm(coords: np.ndarray, norm: str) -> np.ndarray:
    if norm == "sup":
        return np.abs(coords).max(axis=-1)
    if norm == "l1":
        return np.abs(coords).sum(axis=-1)
    if norm == "l2":
        return np.sqrt((coords.astype(float) ** 2).sum(axis=-1))
    raise ValueError(f"unknown norm {norm!r}; expected one of {NORMS}")


def build_cube(d: int, n: int, norm: str = "sup", center: Sequence[int] | None = None) -> Cube:
    """Build ``Λ(n)`` in ``Z^d``.

    Parameters
    ----------
    d : int
        Lattice dimension, ``d >= 1``.
    n : int
        Radius, ``n >= 0``.
    norm : {"sup", "l1", "l2"}
        Norm used in the criterion ``|v - center| <= n``.
    center : sequence of int, optional
        Center of the cube; the origin by default.

    Returns
    -------
    Cube
        Edges ordered lexicographically by base then direction, vertices
        ordered lexicographically.
    """
    if int(d) != d or d < 1:
        raise ValueError(f"dimension must be an integer >= 1, got {d!r}")
    if int(n) != n or n < 0:
        raise ValueError(f"radius must be an integer >= 0, got {n!r}")
    if norm not in NORMS:
        raise ValueError(f"unknown norm {norm!r}; expected one of {NORMS}")
    d, n = int(d), int(n)
    center = np.zeros(d, dtype=np.int64) if center is None else np.asarray(center, dtype=np.int64)
    if center.shape != (d,):
        raise ValueError("center must have d components")

    # every base lies in [-n-1, n]^d relative to the center
    span = np.arange(-n - 1, n + 1, dtype=np.int64)
    grid = np.stack(np.meshgrid(*([span] * d), indexing="ij"), axis=-1).reshape(-1, d)
    inside = _vertex_norm(grid, norm) <= n
    bases, axes = [], []
    for j in range(d):
        step = np.zeros(d, dtype=np.int64)
        step[j] = 1
        keep = inside | (_vertex_norm(grid + step, norm) <= n)
        bases.append(grid[keep])
        axes.append(np.full(int(keep.sum()), j, dtype=np.int64))
    bases = np.concatenate(bases)
    axes = np.concatenate(axes)
    order = np.lexsort(tuple([axes] + [bases[:, k] for k in range(d - 1, -1, -1)]))
    bases = bases[order] + center
    axes = axes[order]

    terminals = bases.copy()
    terminals[np.arange(len(axes)), axes] += 1
    allv = np.unique(np.concatenate([bases, terminals]), axis=0)
    vertex_index = {tuple(int(c) for c in v): i for i, v in enumerate(allv)}
    iota = np.array([vertex_index[tuple(int(c) for c in v)] for v in bases], dtype=np.int64)
    tau = np.array([vertex_index[tuple(int(c) for c in v)] for v in terminals], dtype=np.int64)
    edge_index = {
        Edge(tuple(int(c) for c in b), int(a) + 1): i for i, (b, a) in enumerate(zip(bases, axes))
    }
    for arr in (allv, bases, axes, iota, tau):
        arr.setflags(write=False)
    return Cube(
        d=d,
        n=n,
        norm=norm,
        center=tuple(int(c) for c in center),
        vertices=allv,
        bases=bases,
        axes=axes,
        iota=iota,
        tau=tau,
        vertex_index=vertex_index,
        edge_index=edge_index,
    )


def degree(cube: Cube, v) -> int:
    """Number of cube edges incident to vertex ``v`` (a coordinate tuple)."""
    key = tuple(int(c) for c in v)
    try:
        i = cube.vertex_index[key]
    except KeyError:
        raise KeyError(f"vertex {key} is not in the cube") from None
    return int(cube.degrees[i])


def subgraph(d: int, edges) -> Cube:
    """Graph spanned by an arbitrary finite set of lattice edges.

    Edges are given as :class:`Edge` or ``(base, direction)`` pairs; the
    result has ``n = -1`` and the same indexing conventions as a cube.
    """
    items = sorted({Edge(tuple(int(c) for c in b), int(j)) for b, j in edges})
    if not items:
        raise ValueError("need at least one edge")
    for e in items:
        if len(e.base) != d or not 1 <= e.direction <= d:
            raise ValueError(f"edge {e} is not an edge of Z^{d}")
    bases = np.array([e.base for e in items], dtype=np.int64).reshape(-1, d)
    axes = np.array([e.direction - 1 for e in items], dtype=np.int64)
    terminals = bases.copy()
    terminals[np.arange(len(axes)), axes] += 1
    allv = np.unique(np.concatenate([bases, terminals]), axis=0)
    vertex_index = {tuple(int(c) for c in v): i for i, v in enumerate(allv)}
    iota = np.array([vertex_index[tuple(int(c) for c in v)] for v in bases], dtype=np.int64)
    tau = np.array([vertex_index[tuple(int(c) for c in v)] for v in terminals], dtype=np.int64)
    return Cube(d=d, n=-1, norm="sup", center=(0,) * d, vertices=allv, bases=bases, axes=axes,
                iota=iota, tau=tau, vertex_index=vertex_index,
                edge_index={e: i for i, e in enumerate(items)})
