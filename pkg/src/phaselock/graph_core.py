"""Weighted graphs on finite lattice truncations.

Vertices are integer indices ``0..n-1``. Lattice-built graphs also carry an
integer coordinate per vertex, ordered row-major, with coordinates centred on
the origin: an extent ``n`` axis runs over ``lo .. lo + n - 1`` where
``lo = -((n - 1) // 2)``. Odd extents are symmetric about 0; even extents are
symmetric about 1/2, which is where the rotating-wave core sits.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Mapping

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from . import kernels
from .errors import GraphError

BOUNDARY_MODES = ("free", "torus")


def _check_boundary(boundary):
    if boundary not in BOUNDARY_MODES:
        raise GraphError(f"boundary must be one of {BOUNDARY_MODES}, got {boundary!r}")


@dataclass(frozen=True)
class Lattice:
    """A finite box of Z^d (d = 1 or 2) with free or periodic boundary."""

    shape: tuple
    boundary: str = "free"

    def __post_init__(self):
        shape = tuple(int(s) for s in np.atleast_1d(self.shape))
        object.__setattr__(self, "shape", shape)
        if len(shape) not in (1, 2):
            raise GraphError("only 1D and 2D lattices are supported")
        if min(shape) < 3:
            raise GraphError(f"lattice extents must be >= 3, got {shape}")
        _check_boundary(self.boundary)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def n_vertices(self) -> int:
        return int(np.prod(self.shape))

    @property
    def lower(self) -> tuple:
        return tuple(-((n - 1) // 2) for n in self.shape)

    @cached_property
    def coords(self) -> np.ndarray:
        axes = [np.arange(lo, lo + n) for lo, n in zip(self.lower, self.shape)]
        grid = np.meshgrid(*axes, indexing="ij")
        out = np.stack([g.ravel() for g in grid], axis=1).astype(np.int64)
        out.setflags(write=False)
        return out

    def index(self, coord) -> int:
        coord = tuple(int(c) for c in np.atleast_1d(coord))
        if len(coord) != self.dim:
            raise GraphError(f"coordinate {coord} has wrong dimension for {self.shape}")
        idx = 0
        for c, lo, n in zip(coord, self.lower, self.shape):
            k = c - lo
            if self.boundary == "torus":
                k %= n
            elif not 0 <= k < n:
                raise GraphError(f"coordinate {coord} outside the lattice")
            idx = idx * n + k
        return idx

    def indices(self, coords: np.ndarray) -> np.ndarray:
        coords = np.atleast_2d(np.asarray(coords, dtype=np.int64))
        k = coords - np.asarray(self.lower)
        shape = np.asarray(self.shape)
        if self.boundary == "torus":
            k %= shape
        elif (k < 0).any() or (k >= shape).any():
            raise GraphError("coordinates outside the lattice")
        return np.ravel_multi_index(tuple(k.T), self.shape)

    @property
    def origin(self) -> int:
        return self.index((0,) * self.dim)

    def offsets(self, rule: str = "nearest", n_range: int = 1) -> list:
        """Half of the neighbour offsets (each undirected direction once)."""
        if rule == "nearest":
            n_range = 1
        elif rule != "range":
            raise GraphError(f"unknown edge rule {rule!r}")
        if n_range < 1:
            raise GraphError("range n must be >= 1")
        out = []
        for delta in itertools.product(range(-n_range, n_range + 1), repeat=self.dim):
            if 1 <= sum(abs(x) for x in delta) <= n_range and delta > (0,) * self.dim:
                out.append(delta)
        return out

    def pairs(self, rule: str = "nearest", n_range: int = 1):
        """Undirected neighbour pairs ``(u, v)``, each listed once."""
        offs = self.offsets(rule, n_range)
        if self.boundary == "torus":
            reach = max(max(abs(x) for x in d) for d in offs)
            if any(2 * reach >= n for n in self.shape):
                raise GraphError("torus extent too small for the requested range")
        us, vs = [], []
        c = self.coords
        shape = np.asarray(self.shape)
        lo = np.asarray(self.lower)
        for delta in offs:
            k = c - lo + np.asarray(delta)
            if self.boundary == "torus":
                keep = np.ones(len(c), dtype=bool)
                k %= shape
            else:
                keep = ((k >= 0) & (k < shape)).all(axis=1)
            us.append(np.flatnonzero(keep))
            vs.append(np.ravel_multi_index(tuple(k[keep].T), self.shape))
        u = np.concatenate(us)
        v = np.concatenate(vs)
        order = np.lexsort((v, u))
        return u[order], v[order]

    def neighborhoods(self, rule: str = "nearest", n_range: int = 1) -> "Neighborhoods":
        u, v = self.pairs(rule, n_range)
        return Neighborhoods.from_pairs(self.n_vertices, u, v)

    def depth(self) -> np.ndarray:
        """Lattice distance of each vertex to the outermost ring (0 on the ring).

        On a torus there is no boundary and every entry is ``-1``.
        """
        if self.boundary == "torus":
            return np.full(self.n_vertices, -1, dtype=np.int64)
        k = self.coords - np.asarray(self.lower)
        far = np.asarray(self.shape) - 1 - k
        return np.minimum(k, far).min(axis=1)

    def ring(self, depth: int = 0) -> np.ndarray:
        return np.flatnonzero(self.depth() == depth)


class Neighborhoods:
    """Symmetric influence topology N(v) in CSR form."""

    def __init__(self, indptr, indices):
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)

    @classmethod
    def from_pairs(cls, n_vertices: int, u, v) -> "Neighborhoods":
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        if (u == v).any():
            raise GraphError("a vertex cannot influence itself")
        rows = np.concatenate([u, v])
        cols = np.concatenate([v, u])
        m = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_vertices, n_vertices))
        m.sum_duplicates()
        m.sort_indices()
        return cls(m.indptr, m.indices)

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, Iterable[int]], n_vertices: int | None = None):
        if n_vertices is None:
            n_vertices = max(mapping) + 1 if mapping else 0
        sets = [set() for _ in range(n_vertices)]
        for v, nbrs in mapping.items():
            sets[v].update(int(x) for x in nbrs)
        for v, nbrs in enumerate(sets):
            if v in nbrs:
                raise GraphError(f"vertex {v} lists itself as a neighbour")
            for x in nbrs:
                if v not in sets[x]:
                    raise GraphError(f"asymmetric neighbourhoods: {x} in N({v}) but {v} not in N({x})")
        indptr = np.zeros(n_vertices + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(s) for s in sets])
        indices = np.array([x for s in sets for x in sorted(s)], dtype=np.int64)
        return cls(indptr, indices)

    @property
    def n_vertices(self) -> int:
        return len(self.indptr) - 1

    @cached_property
    def rows(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_vertices), np.diff(self.indptr))

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max()) if self.n_vertices else 0

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def is_symmetric(self) -> bool:
        m = sp.csr_matrix(
            (np.ones(len(self.indices)), self.indices, self.indptr),
            shape=(self.n_vertices, self.n_vertices),
        )
        return (m != m.T).nnz == 0


class WeightedGraph:
    """Undirected weighted graph with optional loops; immutable once built.

    Each undirected edge is stored once on input and mirrored, so
    ``w(u, v) == w(v, u)`` holds bitwise. Zero-weight pairs are dropped.
    """

    def __init__(self, n_vertices: int, u, v, w, coords=None, boundary: str = "free"):
        _check_boundary(boundary)
        u = np.asarray(u, dtype=np.int64).ravel()
        v = np.asarray(v, dtype=np.int64).ravel()
        w = np.asarray(w, dtype=np.float64).ravel()
        if not (len(u) == len(v) == len(w)):
            raise GraphError("edge arrays must have equal length")
        if len(w) and not np.isfinite(w).all():
            raise GraphError("edge weights must be finite")
        if (w < 0).any():
            bad = int(np.flatnonzero(w < 0)[0])
            raise GraphError(f"negative weight {w[bad]} on edge ({u[bad]}, {v[bad]})")
        if len(u) and (min(u.min(), v.min()) < 0 or max(u.max(), v.max()) >= n_vertices):
            raise GraphError("edge endpoint out of range")
        keep = w > 0
        u, v, w = u[keep], v[keep], w[keep]
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        key = lo * n_vertices + hi
        if len(np.unique(key)) != len(key):
            raise GraphError("duplicate edge in input")

        off = lo != hi
        rows = np.concatenate([lo[off], hi[off], lo[~off]])
        cols = np.concatenate([hi[off], lo[off], lo[~off]])
        vals = np.concatenate([w[off], w[off], w[~off]])
        adj = sp.csr_matrix((vals, (rows, cols)), shape=(n_vertices, n_vertices))
        adj.sort_indices()
        self._adj = adj
        self.n_vertices = int(n_vertices)
        self.boundary = boundary
        if coords is not None:
            coords = np.asarray(coords, dtype=np.int64)
            if len(coords) != n_vertices:
                raise GraphError("coords must have one row per vertex")
            if coords.ndim == 1:
                coords = coords[:, None]
            if len({tuple(c) for c in coords}) != n_vertices:
                raise GraphError("coordinate labels must be unique")
            coords.setflags(write=False)
        self.coords = coords
        self._dist_cache = {}

    # --- structure -----------------------------------------------------
    @property
    def adjacency(self) -> sp.csr_matrix:
        return self._adj

    @cached_property
    def measure(self) -> np.ndarray:
        m = np.asarray(self._adj.sum(axis=1)).ravel()
        m.setflags(write=False)
        return m

    @cached_property
    def loop_weights(self) -> np.ndarray:
        d = self._adj.diagonal().copy()
        d.setflags(write=False)
        return d

    @property
    def has_loops(self) -> bool:
        return bool((self.loop_weights > 0).any())

    @property
    def degree(self) -> np.ndarray:
        """Number of incident edges, a loop counting once."""
        return np.diff(self._adj.indptr)

    @property
    def max_degree(self) -> int:
        return int(self.degree.max())

    def weight(self, u: int, v: int) -> float:
        return float(self._adj[u, v])

    def edges(self):
        """``(u, v, w)`` arrays with ``u <= v``, each edge once."""
        coo = sp.triu(self._adj, format="coo")
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order].astype(np.int64), coo.col[order].astype(np.int64), coo.data[order]

    @property
    def n_edges(self) -> int:
        return len(self.edges()[0])

    def is_connected(self) -> bool:
        n_comp, _ = connected_components(self._adj, directed=False)
        return n_comp == 1

    def neighbors(self, v: int) -> np.ndarray:
        a = self._adj
        return a.indices[a.indptr[v]:a.indptr[v + 1]]

    def index_of(self, coord) -> int:
        if self.coords is None:
            raise GraphError("graph has no coordinate labels")
        coord = np.atleast_1d(np.asarray(coord, dtype=np.int64))
        hit = np.flatnonzero((self.coords == coord).all(axis=1))
        if not len(hit):
            raise GraphError(f"no vertex with coordinates {tuple(coord)}")
        return int(hit[0])

    # --- metric ----------------------------------------------------------
    def _csr_pattern(self):
        a = self._adj
        return a.indptr.astype(np.int64), a.indices.astype(np.int64)

    def distances_from(self, source: int, max_depth: int | None = None) -> np.ndarray:
        """BFS hop distances from ``source``; ``-1`` marks unreached vertices.

        Full (unlimited) maps are memoized per source.
        """
        if max_depth is None and source in self._dist_cache:
            return self._dist_cache[source]
        indptr, indices = self._csr_pattern()
        d = kernels.bfs_distances(indptr, indices, int(source), -1 if max_depth is None else int(max_depth))
        if max_depth is None:
            d.setflags(write=False)
            self._dist_cache[source] = d
        return d

    # --- operators -----------------------------------------------------
    def laplacian_matrix(self, normalized: bool = True) -> sp.csr_matrix:
        """Sparse matrix of the graph Laplacian; loops contribute nothing."""
        m = self.measure
        off = self._adj - sp.diags(self.loop_weights)
        diag = m - self.loop_weights
        L = (off - sp.diags(diag)).tocsr()
        if normalized:
            if (m <= 0).any():
                raise GraphError(f"isolated vertex {int(np.flatnonzero(m <= 0)[0])} has zero measure")
            L = (sp.diags(1.0 / m) @ L).tocsr()
        L.sort_indices()
        return L

    # --- serialization ------------------------------------------------
    def to_dict(self) -> dict:
        u, v, w = self.edges()
        verts = []
        for i in range(self.n_vertices):
            entry = {"id": i}
            if self.coords is not None:
                entry["coords"] = [int(c) for c in self.coords[i]]
            verts.append(entry)
        return {
            "vertices": verts,
            "edges": [{"u": int(a), "v": int(b), "w": float(c)} for a, b, c in zip(u, v, w)],
            "boundary": self.boundary,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "WeightedGraph":
        verts = sorted(data["vertices"], key=lambda e: e["id"])
        ids = [e["id"] for e in verts]
        if ids != list(range(len(ids))):
            raise GraphError("vertex ids must be 0..n-1")
        coords = None
        if verts and all("coords" in e for e in verts):
            coords = np.array([e["coords"] for e in verts], dtype=np.int64)
        edges = data.get("edges", [])
        u = [e["u"] for e in edges]
        v = [e["v"] for e in edges]
        w = [e["w"] for e in edges]
        return cls(len(verts), u, v, w, coords=coords, boundary=data.get("boundary", "free"))

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "WeightedGraph":
        return cls.from_dict(json.loads(text))

    def __repr__(self):
        return (f"WeightedGraph(n_vertices={self.n_vertices}, n_edges={self.n_edges}, "
                f"boundary={self.boundary!r}, loops={self.has_loops})")


WeightFn = Callable[[tuple, tuple], float]


def build_lattice_graph(
    lattice: Lattice | tuple | int,
    edge_rule: str = "nearest",
    weight_fn: WeightFn | float | None = None,
    boundary: str | None = None,
    n_range: int = 1,
    periodicity: tuple | None = None,
    require_connected: bool = True,
) -> WeightedGraph:
    """Weighted lattice graph; ``weight_fn(coord_u, coord_v)`` gives each edge weight.

    ``weight_fn`` may also be a constant (default 1). ``periodicity`` lists
    wavelengths that must divide the torus extents along each axis.
    """
    if not isinstance(lattice, Lattice):
        lattice = Lattice(lattice, boundary or "free")
    elif boundary is not None and boundary != lattice.boundary:
        lattice = Lattice(lattice.shape, boundary)
    if periodicity is not None:
        if lattice.boundary != "torus":
            raise GraphError("a periodicity constraint needs a torus")
        for n, p in zip(lattice.shape, np.atleast_1d(periodicity)):
            if n % int(p):
                raise GraphError(f"torus extent {n} is not a multiple of period {p}")
    u, v = lattice.pairs(edge_rule, n_range)
    if weight_fn is None:
        w = np.ones(len(u))
    elif callable(weight_fn):
        c = lattice.coords
        w = np.array([weight_fn(tuple(c[a]), tuple(c[b])) for a, b in zip(u, v)], dtype=np.float64)
    else:
        w = np.full(len(u), float(weight_fn))
    g = WeightedGraph(lattice.n_vertices, u, v, w, coords=lattice.coords, boundary=lattice.boundary)
    if g.n_edges == 0:
        raise GraphError("graph has no edges")
    if require_connected and not g.is_connected():
        raise GraphError("graph is disconnected")
    return g


def graph_metric(g: WeightedGraph, v: int, v2: int) -> int:
    """Hop distance between ``v`` and ``v2`` over positive-weight edges."""
    d = g.distances_from(v)[v2]
    if d < 0:
        raise GraphError(f"vertex {v2} unreachable from {v}; graph is disconnected")
    return int(d)


def ball(g: WeightedGraph, v: int, r: int) -> np.ndarray:
    if r < 0:
        raise GraphError("radius must be >= 0")
    return np.flatnonzero(g.distances_from(v, max_depth=r) >= 0)


def ball_volume(g: WeightedGraph, v: int, r: int) -> float:
    """Sum of vertex measures over the closed metric ball B(v, r)."""
    return float(g.measure[ball(g, v, r)].sum())


def apply_laplacian(g: WeightedGraph, f, normalized: bool = True) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (g.n_vertices,):
        raise GraphError(f"state vector has shape {f.shape}, graph has {g.n_vertices} vertices")
    return g.laplacian_matrix(normalized) @ f


def lp_norm(f, p=2) -> float:
    """The l^p norm; ``p`` may be any real >= 1 or ``inf`` (also ``"inf"``)."""
    if isinstance(p, str):
        if p.lower() not in ("inf", "infinity"):
            raise ValueError(f"unrecognised norm order {p!r}")
        p = np.inf
    if not p >= 1:
        raise ValueError(f"l^p norms need p >= 1, got {p}")
    a = np.abs(np.asarray(f, dtype=np.float64))
    if a.size == 0:
        return 0.0
    if np.isinf(p):
        return float(a.max())
    if p == 1:
        return float(a.sum())
    if p == 2:
        return float(np.sqrt(np.dot(a, a)))
    scale = a.max()
    if scale == 0:
        return 0.0
    return float(scale * np.sum((a / scale) ** p) ** (1.0 / p))


def q_form(x, neighborhoods: Neighborhoods | Mapping[int, Iterable[int]]) -> float:
    """Sum over v and v' in N(v) of |x_v' - x_v|^2 (ordered pairs)."""
    if not isinstance(neighborhoods, Neighborhoods):
        neighborhoods = Neighborhoods.from_mapping(neighborhoods, n_vertices=len(x))
    elif not neighborhoods.is_symmetric():
        raise GraphError("neighbourhoods must be symmetric")
    x = np.asarray(x, dtype=np.float64)
    diff = x[neighborhoods.indices] - x[neighborhoods.rows]
    return float(np.dot(diff, diff))
