"""Linearization about a phase-locked solution and its induced weighted graph.

The linear operator is ``[L x]_v = sum_{u in N(v)} H'(lag_u - lag_v) (x_u - x_v)``.
Its coefficients define a weighted graph ``G``. After rescaling time so that
every vertex has the same measure (adding loops where needed), the rescaled
operator is exactly the graph Laplacian of the augmented graph.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import GraphError, HypothesisGateError
from .graph_core import WeightedGraph
from .phase_system import PhaseLockedSolution, PhaseSystem

WEIGHT_EPSILON = 1e-12
UNIFORM_MEASURE_RTOL = 1e-12


@dataclass(eq=False)
class InducedGraphBundle:
    """Induced graph, its loop-augmented version and the time normalization.

    ``normalization`` is ``m`` when the measure is vertex-independent (no loops
    are added) and ``M + 1`` otherwise, with ``M = max_v m(v)``.
    """

    system: PhaseSystem
    solution: PhaseLockedSolution
    base: WeightedGraph
    augmented: WeightedGraph
    M: float
    normalization: float
    uniform_measure: bool
    dropped_pairs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    @property
    def loops(self) -> bool:
        return not self.uniform_measure

    @cached_property
    def unnormalized(self) -> sp.csr_matrix:
        return self.base.laplacian_matrix(normalized=False)

    @cached_property
    def generator(self) -> sp.csr_matrix:
        """The rescaled linearization ``L / normalization``."""
        L = (self.unnormalized / self.normalization).tocsr()
        L.sort_indices()
        return L

    @property
    def measure(self) -> np.ndarray:
        return self.augmented.measure

    def to_dict(self) -> dict:
        out = {"M": float(self.M), "loops": self.loops, "normalization": float(self.normalization)}
        out.update(self.augmented.to_dict())
        return out


def linearize(system: PhaseSystem, solution: PhaseLockedSolution,
              weight_epsilon: float = WEIGHT_EPSILON) -> InducedGraphBundle:
    """Build the induced graph of ``solution`` and its loop augmentation.

    Raises ``HypothesisGateError`` if some influence pair has ``H' < -eps`` or
    the weights are asymmetric: the graph would then be directed.
    """
    nb = system.neighborhoods
    lags = np.asarray(solution.lags, dtype=np.float64)
    w_dir = system.coupling.dH(lags[nb.indices] - lags[nb.rows])
    rows, cols = nb.rows, nb.indices

    neg = w_dir < -weight_epsilon
    if neg.any():
        k = int(np.flatnonzero(neg)[0])
        raise HypothesisGateError(
            "H'(lag difference) >= 0 on influence pairs",
            f"pair ({rows[k]}, {cols[k]}) has weight {w_dir[k]:.3e}; the graph would be directed",
        )
    W = sp.csr_matrix((w_dir, cols, nb.indptr), shape=(system.n_vertices,) * 2)
    asym = abs(W - W.T)
    if asym.nnz and asym.max() > weight_epsilon:
        r, c = asym.nonzero()
        raise HypothesisGateError("H' symmetric on influence pairs", f"pair ({r[0]}, {c[0]}) is asymmetric")

    upper = rows < cols
    u, v, w = rows[upper], cols[upper], w_dir[upper]
    keep = np.abs(w) >= weight_epsilon
    dropped = np.stack([u[~keep], v[~keep]], axis=1)
    coords = system.lattice.coords if system.lattice is not None else None
    boundary = system.boundary
    base = WeightedGraph(system.n_vertices, u[keep], v[keep], w[keep], coords=coords, boundary=boundary)
    m = base.measure
    if (m <= 0).any():
        raise GraphError(f"vertex {int(np.flatnonzero(m <= 0)[0])} has no positive-weight edge")
    M = float(m.max())
    uniform = bool(np.ptp(m) <= UNIFORM_MEASURE_RTOL * M)
    if uniform:
        return InducedGraphBundle(system, solution, base, base, M, float(m.mean()), True, dropped)

    loops = 1.0 + M - m
    n = system.n_vertices
    idx = np.arange(n)
    au = np.concatenate([u[keep], idx])
    av = np.concatenate([v[keep], idx])
    aw = np.concatenate([w[keep], loops])
    augmented = WeightedGraph(n, au, av, aw, coords=coords, boundary=boundary)
    return InducedGraphBundle(system, solution, base, augmented, M, M + 1.0, False, dropped)


def normalized_generator_apply(bundle: InducedGraphBundle, x) -> np.ndarray:
    """Apply ``L / normalization``; equals the graph Laplacian of the augmented graph."""
    x = np.asarray(x, dtype=np.float64)
    return bundle.generator @ x


@dataclass
class HypothesisEntry:
    name: str
    passed: bool
    value: object = None
    witnesses: list = field(default_factory=list)

    def to_dict(self) -> dict:
        val = self.value
        if isinstance(val, np.generic):
            val = val.item()
        return {"name": self.name, "passed": bool(self.passed), "value": val,
                "witnesses": [[int(a) for a in w] for w in self.witnesses]}


@dataclass
class HypothesisReport:
    bounded_degree: HypothesisEntry
    symmetric_nonnegative: HypothesisEntry
    connected: HypothesisEntry
    metric_sup: int

    @property
    def passed(self) -> bool:
        return self.bounded_degree.passed and self.symmetric_nonnegative.passed and self.connected.passed

    @property
    def max_degree(self) -> int:
        return int(self.bounded_degree.value)

    def failures(self) -> list:
        return [e for e in (self.bounded_degree, self.symmetric_nonnegative, self.connected) if not e.passed]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "bounded_degree": self.bounded_degree.to_dict(),
            "symmetric_nonnegative": self.symmetric_nonnegative.to_dict(),
            "connected": self.connected.to_dict(),
            "metric_sup": self.metric_sup,
        }


def check_hypotheses(system: PhaseSystem, solution: PhaseLockedSolution,
                     bundle: InducedGraphBundle | None = None,
                     weight_epsilon: float = WEIGHT_EPSILON, max_witnesses: int = 10) -> HypothesisReport:
    """Audit bounded degree, symmetric nonnegative weights and connectivity.

    Failures are recorded with witness pairs rather than raised. The metric
    supremum over influence pairs is 1 wherever an edge survives; only the
    dropped pairs need a BFS.
    """
    nb = system.neighborhoods
    deg = nb.degrees
    D = int(deg.max())
    low = np.flatnonzero(deg < 1)
    h1 = HypothesisEntry("bounded degree 1 <= |N(v)| <= D", bool(len(low) == 0), D,
                         [[int(v), int(v)] for v in low[:max_witnesses]])

    lags = np.asarray(solution.lags, dtype=np.float64)
    d = lags[nb.indices] - lags[nb.rows]
    fwd = system.coupling.dH(d)
    bwd = system.coupling.dH(-d)
    bad = (np.abs(fwd - bwd) >= 1e-12) | (fwd < -weight_epsilon)
    wit = [[int(a), int(b)] for a, b in zip(nb.rows[bad][:max_witnesses], nb.indices[bad][:max_witnesses])]
    h2 = HypothesisEntry("H'(lag_u - lag_v) = H'(lag_v - lag_u) >= 0", not bad.any(),
                         float(fwd.min()) if len(fwd) else None, wit)

    if bundle is None:
        if bad.any():
            return HypothesisReport(h1, h2, HypothesisEntry("G connected", False, None, []), -1)
        bundle = linearize(system, solution, weight_epsilon)
    g = bundle.base
    connected = g.is_connected()
    metric_sup = 1 if g.n_edges else -1
    unreachable = []
    if connected:
        for a, b in bundle.dropped_pairs:
            dist = g.distances_from(int(a))[b]
            metric_sup = max(metric_sup, int(dist))
    else:
        from scipy.sparse.csgraph import connected_components

        _, labels = connected_components(g.adjacency, directed=False)
        comps = np.unique(labels)
        reps = [int(np.flatnonzero(labels == c)[0]) for c in comps[:max_witnesses + 1]]
        unreachable = [[reps[0], r] for r in reps[1:]]
        metric_sup = -1
    h3 = HypothesisEntry("G connected with finite metric sup over influence pairs", connected,
                         metric_sup, unreachable)
    return HypothesisReport(h1, h2, h3, metric_sup)
