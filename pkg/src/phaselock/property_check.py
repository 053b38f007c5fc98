"""Numerical audits of volume growth, the Δ condition, the Poincaré
inequality and rough isometries on finite weighted graphs.

Every probe is restricted to balls that stay clear of the truncation
boundary; a free-boundary graph otherwise reports artificially small volumes.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy import stats
from scipy.sparse.csgraph import connected_components, dijkstra

from .errors import BoundaryGuardError, GraphError
from .graph_core import WeightedGraph

VG_R2_FLOOR = 0.99
# A hop ball of radius r covers the cells whose centres lie within r, so its
# extent reaches r + 1/2; fitting against that radius removes the O(r^(d-1))
# bias of the plain log-log slope at moderate r.
RADIUS_OFFSET = 0.5


def guard_radius(g: WeightedGraph, v: int) -> int | None:
    """Largest radius whose ball around ``v`` stays inside the truncation.

    On a free lattice this is the l-infinity distance to the outer ring (graph
    distance is at least the l-infinity distance). On a torus it is just below
    half the smallest extent, so balls do not wrap. ``None`` when the graph
    carries no coordinates.
    """
    if g.coords is None:
        return None
    c = g.coords
    lo, hi = c.min(axis=0), c.max(axis=0)
    span = edge_span(g)
    if g.boundary == "torus":
        return int((hi - lo + 1).min() // 2 - 1) // span
    x = c[int(v)]
    return (int(np.minimum(x - lo, hi - x).min()) - 1) // span


def edge_span(g: WeightedGraph) -> int:
    """Longest l-infinity coordinate jump along an edge (minimum image on a torus)."""
    a = g.adjacency.tocoo()
    if a.nnz == 0 or g.coords is None:
        return 1
    d = np.abs(g.coords[a.row] - g.coords[a.col])
    if g.boundary == "torus":
        ext = g.coords.max(axis=0) - g.coords.min(axis=0) + 1
        d = np.minimum(d, ext - d)
    return max(1, int(d.max()))


def _guard(g, v, r, what):
    lim = guard_radius(g, v)
    if lim is not None and r > lim:
        raise BoundaryGuardError(f"{what}: radius {r} around vertex {v} reaches the boundary (max {lim})")


def central_vertices(g: WeightedGraph, count: int, spread: int = 2) -> list:
    """``count`` distinct vertices near the middle of a lattice graph."""
    if g.coords is None:
        return list(range(min(count, g.n_vertices)))
    c = g.coords
    mid = (c.min(axis=0) + c.max(axis=0)) // 2
    d = np.abs(c - mid).max(axis=1)
    order = np.lexsort((np.arange(len(d)), d))
    picks = order[d[order] <= spread]
    if len(picks) < count:
        picks = order
    step = max(1, len(picks) // count)
    return [int(x) for x in picks[::step][:count]]


# --- volume growth ---------------------------------------------------------

@dataclass
class VGReport:
    d: float
    c1: float
    c2: float
    r2: float
    stderr: float
    centers: list
    radii: list
    volumes: list
    power_law: bool

    def passes(self, d_min: float = 2.0, tol: float = 0.05) -> bool:
        return self.power_law and self.d >= d_min - tol

    def to_dict(self) -> dict:
        return asdict(self)


def check_vg(g: WeightedGraph, centers, radii, guard: bool = True,
             radius_offset: float = RADIUS_OFFSET) -> VGReport:
    """Fit ``Vol(v, r) ~ r^d`` and the two-sided constants ``c1 <= Vol / r^d <= c2``.

    Needs at least 6 radii and 5 centres. The fit pools every (centre, radius)
    pair against ``log(r + radius_offset)``; pass ``radius_offset=0`` for the
    bare radius. A coefficient of determination below 0.99 is flagged as not a
    power law.
    """
    radii = sorted(int(r) for r in radii)
    centers = [int(v) for v in centers]
    if len(set(radii)) < 6 or radii[0] < 1:
        raise ValueError("volume-growth fits need at least 6 distinct radii >= 1")
    if len(set(centers)) < 5:
        raise ValueError("volume-growth fits need at least 5 centres")
    rmax = radii[-1]
    vols = []
    m = g.measure
    for v in centers:
        if guard:
            _guard(g, v, rmax, "volume growth")
        dist = g.distances_from(v, max_depth=rmax)
        reach = dist >= 0
        per_shell = np.bincount(dist[reach], weights=m[reach], minlength=rmax + 1)
        cum = np.cumsum(per_shell)
        vols.append([float(cum[r]) for r in radii])
    V = np.array(vols)
    reff = np.asarray(radii, dtype=np.float64) + radius_offset
    res = stats.linregress(np.log(np.tile(reff, len(centers))), np.log(V.ravel()))
    d = float(res.slope)
    ratio = V / reff ** d
    r2 = float(res.rvalue ** 2)
    return VGReport(d, float(ratio.min()), float(ratio.max()), r2, float(res.stderr),
                    centers, radii, V.tolist(), r2 >= VG_R2_FLOOR)


# --- Delta condition -------------------------------------------------------

@dataclass
class DeltaReport:
    alpha: float
    passed: bool
    w_min: float
    w_max: float
    max_degree: int
    lower_bound: float
    witness: tuple

    def to_dict(self) -> dict:
        out = asdict(self)
        out["witness"] = [int(x) for x in self.witness]
        return out


def check_delta(g: WeightedGraph, threshold: float = 1e-12) -> DeltaReport:
    """Largest ``alpha`` with ``w(v, v') >= alpha m(v)`` for every edge, loops included.

    Also reports the degree bound ``w_min / (D w_max)`` that guarantees the
    condition on graphs with bounded degree and weights.
    """
    a = g.adjacency.tocoo()
    if a.nnz == 0:
        raise GraphError("graph has no edges")
    ratio = a.data / g.measure[a.row]
    k = int(np.argmin(ratio))
    alpha = float(ratio[k])
    D = g.max_degree
    w_min, w_max = float(a.data.min()), float(a.data.max())
    return DeltaReport(alpha, alpha > threshold, w_min, w_max, int(D), w_min / (D * w_max),
                       (int(a.row[k]), int(a.col[k])))


# --- Poincaré inequality ---------------------------------------------------

def estimate_poincare_constant(g: WeightedGraph, center: int, r: int, guard: bool = True) -> float:
    """Smallest ``C`` with the weak Poincaré inequality on ``B(center, r)``.

    ``sum_{B(r)} m |f - f_B|^2 <= C r^2 sum_{v, v' in B(2r)} w(v, v') (f(v) - f(v'))^2``
    for all ``f``, where ``f_B`` is the m-weighted mean over ``B(r)`` and the
    right-hand sum runs over ordered pairs. Both forms vanish on constants, so
    ``C`` is the top generalized eigenvalue on their complement.
    """
    if r < 1:
        raise ValueError("radius must be >= 1")
    if guard:
        _guard(g, center, 2 * r, "Poincaré ball B(2r)")
    dist = g.distances_from(int(center), max_depth=2 * r)
    big = np.flatnonzero(dist >= 0)
    inner = dist[big] <= r
    n = len(big)
    if n < 2:
        return 0.0
    A = g.adjacency[big][:, big].tolil()
    A.setdiag(0)
    A = A.tocsr()
    ncomp, _ = connected_components(A, directed=False)
    if ncomp > 1:
        raise GraphError(f"B({center}, {2 * r}) induces a disconnected subgraph")
    lap = (sp.diags(np.asarray(A.sum(axis=1)).ravel()) - A).toarray()
    dirichlet = 2.0 * r * r * lap

    m = g.measure[big] * inner
    vol = m.sum()
    var = np.diag(m) - np.outer(m, m) / vol

    basis = la.null_space(np.ones((1, n)))
    a = basis.T @ var @ basis
    b = basis.T @ dirichlet @ basis
    top = la.eigh(a, b, eigvals_only=True, subset_by_index=[n - 2, n - 2])
    return float(top[0])


# --- rough isometry --------------------------------------------------------

@dataclass
class RoughIsometryCertificate:
    """Constants, per-condition verdicts and worst witnesses for a map T."""

    a: float
    b: float
    c: float
    M: float
    distance_ok: bool
    covering_ok: bool
    measure_ok: bool
    b_min: float
    b_min_unit: float
    covering_radius: int
    c_min: float
    n_pairs: int
    distance_witness: list = field(default_factory=list)
    covering_witness: int = -1
    measure_witness: int = -1

    @property
    def passed(self) -> bool:
        constants = self.a > 1 and self.b > 0 and self.c > 1 and self.M > 0
        return constants and self.distance_ok and self.covering_ok and self.measure_ok

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


def _pair_distances(g: WeightedGraph, sources, targets_per_source, depth_hint=None):
    out = []
    for s, tgt in zip(sources, targets_per_source):
        d = g.distances_from(int(s), max_depth=depth_hint) if depth_hint is not None else g.distances_from(int(s))
        if depth_hint is not None and (d[tgt] < 0).any():
            d = g.distances_from(int(s))
        dd = d[tgt]
        if (dd < 0).any():
            raise GraphError(f"vertex unreachable from {s}; graph is disconnected")
        out.append(dd)
    return out


def check_rough_isometry(g1: WeightedGraph, g2: WeightedGraph, vertex_map=None,
                         a: float = 2.0, b: float = 8.0, c: float | None = None, M: float = 1.0,
                         n_sources: int = 40, n_targets: int = 50, near_radius: int = 6,
                         near_sources: int | None = 200, seed: int = 0) -> RoughIsometryCertificate:
    """Audit a candidate rough isometry ``T: V1 -> V2`` on sampled vertex pairs.

    Pairs are ``n_sources`` random sources times ``n_targets`` random targets,
    plus every pair within ``near_radius`` of ``near_sources`` random sources
    (all vertices when ``None``). ``c`` defaults to ``max(5 w_max / 4, 4 / w_min, 2)``
    of ``g2``. The smallest feasible ``b`` at the candidate ``a`` and at
    ``a = 1``, the covering radius and the smallest ``c`` are reported too.
    """
    n1 = g1.n_vertices
    T = np.arange(n1) if vertex_map is None else np.asarray(vertex_map, dtype=np.int64)
    if T.shape != (n1,) or (T < 0).any() or (T >= g2.n_vertices).any():
        raise GraphError("vertex map must send every vertex of the first graph into the second")
    if c is None:
        w = g2.adjacency.data
        c = max(5.0 * w.max() / 4.0, 4.0 / w.min(), 2.0)

    rng = np.random.default_rng(seed)
    src = rng.choice(n1, size=min(n_sources, n1), replace=False)
    tgts = [rng.choice(n1, size=min(n_targets, n1), replace=False) for _ in src]
    if near_sources is None:
        nsrc = np.arange(n1)
    else:
        nsrc = rng.choice(n1, size=min(near_sources, n1), replace=False)
    near_t = []
    near_d1 = []
    for s in nsrc:
        d = g1.distances_from(int(s), max_depth=near_radius)
        t = np.flatnonzero(d > 0)
        near_t.append(t)
        near_d1.append(d[t])

    d1 = _pair_distances(g1, src, tgts) + near_d1
    depth = int(math.ceil(a * near_radius + b)) + 1
    d2 = (_pair_distances(g2, T[src], [T[t] for t in tgts])
          + _pair_distances(g2, T[nsrc], [T[t] for t in near_t], depth_hint=depth))
    pairs_s = np.concatenate([np.repeat(src, [len(t) for t in tgts]),
                              np.repeat(nsrc, [len(t) for t in near_t])]).astype(np.int64)
    pairs_t = np.concatenate(list(tgts) + near_t).astype(np.int64)
    r1 = np.concatenate(d1).astype(np.float64)
    r2 = np.concatenate(d2).astype(np.float64)

    excess = np.maximum(r2 - a * r1, r1 / a - r2)
    b_min = float(max(excess.max(initial=0.0), 0.0))
    b_unit = float(np.abs(r2 - r1).max(initial=0.0))
    k = int(np.argmax(excess)) if len(excess) else 0
    dist_ok = bool(len(excess) == 0 or excess.max() <= b)
    witness = [int(pairs_s[k]), int(pairs_t[k]), float(r1[k]), float(r2[k])] if len(excess) else []

    image = np.unique(T)
    cov = dijkstra(g2.adjacency, directed=False, indices=image, unweighted=True, min_only=True)
    if not np.isfinite(cov).all():
        raise GraphError("image of the map does not reach every vertex of the second graph")
    cov_r = int(cov.max())
    m1, m2 = g1.measure, g2.measure[T]
    ratio = np.maximum(m2 / m1, m1 / m2)
    c_min = float(ratio.max())
    return RoughIsometryCertificate(
        float(a), float(b), float(c), float(M), dist_ok, cov_r <= M, c_min <= c,
        b_min, b_unit, cov_r, c_min, int(len(r1)), witness, int(np.argmax(cov)), int(np.argmax(ratio)),
    )


# --- report ----------------------------------------------------------------

@dataclass
class PropertyReport:
    vg: VGReport | None = None
    delta: DeltaReport | None = None
    poincare: dict | None = None
    rough: RoughIsometryCertificate | None = None

    def to_dict(self) -> dict:
        return {
            "vg": self.vg.to_dict() if self.vg else None,
            "delta": self.delta.to_dict() if self.delta else None,
            "poincare": self.poincare,
            "rough_isometry": self.rough.to_dict() if self.rough else None,
        }

    def to_json(self, **kwargs) -> str:
        kwargs.setdefault("indent", 2)
        return json.dumps(self.to_dict(), **kwargs)


def poincare_sup(g: WeightedGraph, centers, radii, guard: bool = True) -> dict:
    """Poincaré constants over centres and radii, with their supremum."""
    table = []
    for v in centers:
        for r in radii:
            table.append({"center": int(v), "r": int(r),
                          "C": estimate_poincare_constant(g, int(v), int(r), guard)})
    sup = max(e["C"] for e in table) if table else float("nan")
    return {"sup": sup, "finite": bool(np.isfinite(sup)), "table": table}
