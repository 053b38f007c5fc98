"""Heat semigroup of a normalized graph Laplacian and its Monte Carlo oracle.

``P_t = exp(t L)`` is applied with ``scipy.sparse.linalg.expm_multiply``; the
independent estimate samples the continuous-time random walk that jumps at
rate 1 along ``w(v, .) / m(v)`` (loops included).
"""
from __future__ import annotations

import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import stats
from scipy.sparse.linalg import expm_multiply

from . import kernels
from .graph_core import WeightedGraph
from .linearization import InducedGraphBundle

MAX_CHUNK_RATE = 200.0
MIN_FIT_POINTS = 8


def _resolve(obj) -> tuple[sp.csr_matrix, WeightedGraph]:
    """Normalized generator and the graph carrying the walk."""
    if isinstance(obj, InducedGraphBundle):
        return obj.generator, obj.augmented
    if isinstance(obj, WeightedGraph):
        return obj.laplacian_matrix(normalized=True), obj
    raise TypeError(f"expected a WeightedGraph or InducedGraphBundle, got {type(obj).__name__}")


def _check_time(t):
    if not np.isfinite(t) or t < 0:
        raise ValueError(f"time must be finite and non-negative, got {t}")


def semigroup_apply(obj, x0, t: float) -> np.ndarray:
    """``P_t x0`` for the normalized generator of a graph or bundle."""
    _check_time(t)
    L, _ = _resolve(obj)
    x0 = np.asarray(x0, dtype=np.float64)
    if t == 0:
        return x0.copy()
    return expm_multiply(L * t, x0)


def semigroup_orbit(obj, x0, times, transpose: bool = False) -> np.ndarray:
    """``P_t x0`` for each ``t`` in increasing ``times``, stepping by differences."""
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 1 or (np.diff(times) < 0).any():
        raise ValueError("times must be a non-decreasing 1-d array")
    for t in times:
        _check_time(t)
    L, _ = _resolve(obj)
    if transpose:
        L = L.T.tocsr()
    x = np.asarray(x0, dtype=np.float64).copy()
    out = np.empty((len(times),) + x.shape)
    prev = 0.0
    for k, t in enumerate(times):
        if t > prev:
            x = expm_multiply(L * (t - prev), x)
            prev = t
        out[k] = x
    return out


@dataclass
class HeatKernelEstimate:
    """Rows ``p_t(source, .)`` at several times, exact or sampled."""

    source: int
    times: np.ndarray
    rows: np.ndarray
    measure: np.ndarray
    method: str = "exact"
    n_samples: int | None = None
    seed: int | None = None
    boundary_mass: np.ndarray | None = None

    @property
    def row_sums(self) -> np.ndarray:
        return self.rows.sum(axis=1)

    @property
    def leak(self) -> np.ndarray:
        """``1 - row sum``; zero up to round-off for a finite stochastic generator."""
        return 1.0 - self.row_sums

    @property
    def density(self) -> np.ndarray:
        """``p_t(source, v) / m(v)``."""
        return self.rows / self.measure

    def diagonal(self) -> np.ndarray:
        return self.rows[:, self.source]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,vertex,p\n")
        for t, row in zip(self.times, self.rows):
            for v in np.flatnonzero(row):
                buf.write(f"{t:.17g},{v},{row[v]:.17g}\n")
        return buf.getvalue()

    def sidecar(self) -> dict:
        out = {"method": self.method, "source": int(self.source),
               "times": [float(t) for t in self.times]}
        if self.method != "exact":
            out.update(seed=self.seed, n_samples=self.n_samples)
        if self.boundary_mass is not None:
            out["boundary_mass"] = [float(b) for b in self.boundary_mass]
        return out


def _outer_ring(g: WeightedGraph) -> np.ndarray | None:
    if g.boundary != "free" or g.coords is None:
        return None
    c = g.coords
    lo, hi = c.min(axis=0), c.max(axis=0)
    return np.flatnonzero(((c == lo) | (c == hi)).any(axis=1))


def transition_rows(obj, source: int, times) -> HeatKernelEstimate:
    """Exact rows ``p_t(source, .)`` on a non-decreasing time grid.

    For free-boundary lattices the mass sitting on the outermost ring is
    reported as a truncation diagnostic.
    """
    L, g = _resolve(obj)
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    e = np.zeros(g.n_vertices)
    e[int(source)] = 1.0
    rows = semigroup_orbit(obj, e, times, transpose=True)
    ring = _outer_ring(g)
    bm = rows[:, ring].sum(axis=1) if ring is not None else None
    return HeatKernelEstimate(int(source), times, rows, g.measure, "exact", boundary_mass=bm)


def transition_row(obj, source: int, t: float) -> np.ndarray:
    return transition_rows(obj, source, [t]).rows[0]


# --- Monte Carlo ---------------------------------------------------------

def _walk_tables(g: WeightedGraph):
    a = g.adjacency
    indptr = a.indptr.astype(np.int64)
    indices = a.indices.astype(np.int64)
    rows = np.repeat(np.arange(g.n_vertices), np.diff(indptr))
    p = a.data / g.measure[rows]
    cum = np.cumsum(p)
    start = np.concatenate([[0.0], cum])[indptr[:-1]]
    cumprob = cum - start[rows]
    return indptr, indices, np.ascontiguousarray(cumprob)


def _poisson_chunks(t: float):
    n_chunks = max(1, math.ceil(t / MAX_CHUNK_RATE))
    rate = t / n_chunks
    return np.full(n_chunks, math.exp(-rate)), rate


def sample_ctrw(obj, source: int, t: float, seed: int, walk_index: int = 0) -> int:
    """Endpoint of a single walk; identical to walk ``walk_index`` of a batch."""
    return int(sample_ctrw_many(obj, source, t, 1, seed, first_walk=walk_index)[0])


def sample_ctrw_many(obj, source: int, t: float, n_walks: int, seed: int,
                     workers: int = 1, chunk: int = 65536, first_walk: int = 0) -> np.ndarray:
    """Endpoints of ``n_walks`` independent walks started at ``source``.

    Walk ``k`` draws from its own stream seeded by ``(seed, k)``, so the result
    does not depend on ``workers`` or ``chunk``.
    """
    _check_time(t)
    if n_walks < 0:
        raise ValueError("n_walks must be non-negative")
    _, g = _resolve(obj)
    indptr, indices, cumprob = _walk_tables(g)
    weights, rate = _poisson_chunks(t)
    if t == 0:
        weights = np.ones(1)

    def run(first, count):
        seeds = kernels.walk_seeds(int(seed), int(first), int(count))
        starts = np.full(count, int(source), dtype=np.int64)
        return kernels.ctrw_endpoints(indptr, indices, cumprob, starts, seeds, weights, rate)

    spans = [(first_walk + s, min(chunk, n_walks - s)) for s in range(0, n_walks, chunk)]
    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda a: run(*a), spans))
    else:
        parts = [run(*s) for s in spans]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def empirical_distribution(obj, source: int, t: float, n_walks: int, seed: int,
                           workers: int = 1) -> HeatKernelEstimate:
    """Empirical law of the walk at time ``t``."""
    _, g = _resolve(obj)
    ends = sample_ctrw_many(obj, source, t, n_walks, seed, workers=workers)
    row = np.bincount(ends, minlength=g.n_vertices) / max(n_walks, 1)
    return HeatKernelEstimate(int(source), np.array([float(t)]), row[None, :], g.measure,
                              "uniformized", n_walks, int(seed))


def tv_distance(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def tv_bounds(p, n_samples: int, support=None, sigmas: float = 3.0) -> tuple[float, float]:
    """Two ``sigmas``-level bounds on the sampling TV error against law ``p``.

    Returns ``(sharp, coarse)``: ``sharp`` sums per-cell multinomial standard
    deviations, ``coarse`` is ``sigmas * sqrt(|S| / N)`` with ``S`` the support.
    """
    p = np.asarray(p, dtype=np.float64)
    if support is None:
        support = np.flatnonzero(p > 0)
    ps = np.clip(p[support], 0.0, 1.0)
    sharp = sigmas * 0.5 * float(np.sqrt(ps * (1.0 - ps) / n_samples).sum())
    coarse = sigmas * math.sqrt(len(support) / n_samples)
    return sharp, coarse


# --- decay fits ----------------------------------------------------------

@dataclass
class DecayFit:
    slope: float
    intercept: float
    stderr: float
    r2: float
    window: tuple
    n_points: int
    name: str = ""

    @property
    def constant(self) -> float:
        return math.exp(self.intercept)

    def to_dict(self) -> dict:
        return {"name": self.name, "slope": self.slope, "intercept": self.intercept,
                "stderr": self.stderr, "r2": self.r2, "window": list(self.window),
                "n_points": self.n_points}


def fit_decay(t, values, window=None, name: str = "", min_points: int = MIN_FIT_POINTS) -> DecayFit:
    """Least-squares slope of ``log values`` against ``log t`` inside ``window``."""
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(values, dtype=np.float64)
    lo, hi = window if window is not None else (t[t > 0].min(), t.max())
    sel = (t >= lo) & (t <= hi) & (t > 0)
    if sel.sum() < min_points:
        raise ValueError(f"fit window [{lo}, {hi}] holds {int(sel.sum())} points; need {min_points}")
    if (y[sel] <= 0).any() or not np.isfinite(y[sel]).all():
        raise ValueError("decay fits need positive finite values inside the window")
    res = stats.linregress(np.log(t[sel]), np.log(y[sel]))
    return DecayFit(float(res.slope), float(res.intercept), float(res.stderr),
                    float(res.rvalue ** 2), (float(lo), float(hi)), int(sel.sum()), name)


def default_window(radius: float, t_min: float = 5.0, divisor: float = 25.0, time_scale: float = 1.0):
    """Fit window ``[t_min, radius**2 / divisor]`` in diffusive units, rescaled by ``time_scale``."""
    t_max = radius ** 2 / divisor
    if t_max <= t_min:
        raise ValueError(f"graph radius {radius} too small for a window starting at {t_min}")
    return (t_min * time_scale, t_max * time_scale)


@dataclass
class GradientDecayFit:
    eta: float
    fit: DecayFit | None
    times: np.ndarray
    ratios: np.ndarray
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {"eta": self.eta, "degenerate": self.degenerate,
                "fit": self.fit.to_dict() if self.fit else None}


def fit_gradient_decay(obj, v1: int, v2: int, targets, times, window=None) -> GradientDecayFit:
    """Fit ``eta`` in ``|p_t(v1,v3) - p_t(v2,v3)| <= C t^(-eta/2) m(v3) p_2t(v1,v3)``.

    The ratio is maximized over ``targets`` at every time. ``v1 == v2`` is
    degenerate: the ratio vanishes identically and no exponent is reported.
    """
    times = np.asarray(times, dtype=np.float64)
    if v1 == v2:
        return GradientDecayFit(float("nan"), None, times, np.zeros(len(times)), True)
    _, g = _resolve(obj)
    targets = np.asarray(targets, dtype=np.int64)
    all_t = np.unique(np.concatenate([times, 2 * times]))
    r1 = transition_rows(obj, v1, all_t).rows
    r2 = transition_rows(obj, v2, all_t).rows
    pos = {t: k for k, t in enumerate(all_t)}
    ratios = np.empty(len(times))
    m = g.measure[targets]
    for k, t in enumerate(times):
        num = np.abs(r1[pos[t], targets] - r2[pos[t], targets])
        den = m * r1[pos[2 * t], targets]
        ok = den > 0
        ratios[k] = np.max(num[ok] / den[ok]) if ok.any() else np.nan
    fit = fit_decay(times, ratios, window, name="gradient")
    return GradientDecayFit(-2.0 * fit.slope, fit, times, ratios)


@dataclass
class OperatorNorms:
    t: float
    one_to_one: float
    one_to_two: float
    one_to_inf: float
    sources: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"t": self.t, "1->1": self.one_to_one, "1->2": self.one_to_two,
                "1->inf": self.one_to_inf, "sources": [int(s) for s in self.sources]}


def operator_norms(obj, t: float, sources) -> OperatorNorms:
    """``||P_t||_{1->p}`` as the largest column norm over the sampled ``sources``.

    The operator norm from l1 is attained on a point mass, so scanning every
    vertex gives the exact value; a subset gives a lower bound.
    """
    cols = []
    n = _resolve(obj)[1].n_vertices
    for s in sources:
        e = np.zeros(n)
        e[int(s)] = 1.0
        cols.append(semigroup_apply(obj, e, t))
    cols = np.array(cols)
    return OperatorNorms(float(t), float(np.abs(cols).sum(axis=1).max()),
                         float(np.sqrt((cols ** 2).sum(axis=1)).max()),
                         float(np.abs(cols).max()), list(sources))


def mean_squared_displacement(g: WeightedGraph, source: int, endpoints) -> float:
    """Mean squared lattice displacement, minimum image on a torus."""
    if g.coords is None:
        raise ValueError("displacement needs vertex coordinates")
    d = g.coords[np.asarray(endpoints)] - g.coords[int(source)]
    if g.boundary == "torus":
        ext = g.coords.max(axis=0) - g.coords.min(axis=0) + 1
        d = (d + ext // 2) % ext - ext // 2
    return float((d.astype(np.float64) ** 2).sum(axis=1).mean())


def sidecar_json(est: HeatKernelEstimate) -> str:
    return json.dumps(est.sidecar(), indent=2, sort_keys=True)
