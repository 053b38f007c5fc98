"""End-to-end stability experiments and numeric checks of the inequality toolkit.

A stability run builds a solution family, audits the graph hypotheses behind
the decay theorem (the *gate*), integrates the full nonlinear perturbation
system and fits the decay of ``||psi(t)||_p``. Times are those of the
original system; the rescaling by the normalization constant does not change
exponents.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import integrate
from scipy.sparse.linalg import eigsh

from . import __version__, kernels
from .errors import BoundaryGuardError, HypothesisGateError
from .graph_core import WeightedGraph, build_lattice_graph, lp_norm, q_form
from .heat_kernel import fit_decay, semigroup_orbit
from .linearization import InducedGraphBundle, check_hypotheses, linearize
from .phase_system import integrate_perturbation, nonlinear_remainder
from .property_check import (
    central_vertices,
    check_delta,
    check_rough_isometry,
    check_vg,
    guard_radius,
    poincare_sup,
)
from .solutions import build_family

INITIALIZERS = ("indicator", "gaussian", "random")
VG_TOL = 0.05
LINF_TOL = 0.15
L2_TOL = 0.10


def plain(obj):
    """Recursively convert numpy scalars, arrays and tuples to JSON-ready values."""
    if isinstance(obj, dict):
        return {k: plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# --- hypothesis gate ---------------------------------------------------------

@dataclass
class GateReport:
    passed: bool
    failed: list
    hypotheses: dict
    vg: dict | None = None
    delta: dict | None = None
    poincare: dict | None = None
    rough: dict | None = None

    def to_dict(self) -> dict:
        return plain(asdict(self))

    def refusal(self) -> HypothesisGateError:
        name = self.failed[0] if self.failed else "unknown"
        return HypothesisGateError(name, "; ".join(self.failed[1:]))


def default_radii(g: WeightedGraph, centers, r_cap: int = 40, count: int = 8) -> list:
    lim = min(guard_radius(g, v) or r_cap for v in centers)
    r_hi = min(r_cap, lim)
    r_lo = max(1, r_hi // 8)
    radii = sorted(set(int(round(r)) for r in np.linspace(r_lo, r_hi, count)))
    if len(radii) < 6:
        raise BoundaryGuardError(f"lattice too small for a volume-growth fit (max radius {r_hi})")
    return radii


def hypothesis_gate(bundle: InducedGraphBundle, d_min: float = 2.0, n_centers: int = 5,
                    pi_radii=(2, 4), rough: bool = True, seed: int = 0) -> GateReport:
    """Audit the structural and analytic hypotheses on the augmented graph.

    The decay exponents may be claimed only when the induced graph satisfies
    Hyps. on degree, symmetry and connectivity, grows like ``r^d`` with
    ``d >= d_min`` (to ``VG_TOL``), satisfies Δ and a finite Poincaré
    constant, and (2D lattices) is roughly isometric to the unit lattice.
    """
    hyp = check_hypotheses(bundle.system, bundle.solution, bundle)
    g = bundle.augmented
    failed = [e.name for e in hyp.failures()]
    centers = central_vertices(g, n_centers)
    vg = check_vg(g, centers, default_radii(g, centers))
    if not vg.passes(d_min, VG_TOL):
        failed.append(f"VG(d) with d >= {d_min:g} (fitted d = {vg.d:.3f})")
    delta = check_delta(g)
    if not delta.passed:
        failed.append("Δ condition (alpha > 0)")
    radii = [r for r in pi_radii if all(2 * r <= (guard_radius(g, v) or 2 * r) for v in centers)]
    pi = poincare_sup(g, centers, radii) if radii else {"sup": float("nan"), "finite": False, "table": []}
    if not pi["finite"]:
        failed.append("Poincaré inequality (finite constant)")
    cert = None
    lat = bundle.system.lattice
    if rough and lat is not None and lat.dim == 2:
        g1 = build_lattice_graph(lat)
        cert = check_rough_isometry(g1, g, a=2.0, b=8.0, M=1.0, seed=seed)
        if not cert.passed:
            failed.append("rough isometry to the unit lattice with (a, b) = (2, 8)")
    return GateReport(not failed, failed, hyp.to_dict(), vg.to_dict(), delta.to_dict(), pi,
                      cert.to_dict() if cert else None)


# --- stability experiment ----------------------------------------------------

@dataclass
class StabilityExperimentConfig:
    family: str = "trivial"
    extent: int = 101
    boundary: str | None = None
    N1: int = 5
    N2: int = 5
    n_range: int = 1
    eps: float = 1e-3
    initializer: str = "indicator"
    source: tuple | None = None
    remove_mean: bool = True
    t_end: float | None = None
    n_out: int = 80
    fit_window: tuple | None = None
    boundary_fraction: float = 0.01
    l1_bound: float = 3.0
    seed: int = 0
    enforce_gate: bool = True
    rtol: float = 1e-8
    atol: float = 1e-10

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.initializer not in INITIALIZERS:
            raise ValueError(f"initializer must be one of {INITIALIZERS}")
        if self.fit_window is not None:
            self.fit_window = tuple(float(x) for x in self.fit_window)
        if self.source is not None:
            self.source = tuple(int(x) for x in self.source)

    def to_dict(self) -> dict:
        return plain(asdict(self))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


@dataclass
class StabilityReport:
    config: dict
    gate: dict
    normalization: float
    loops: bool
    window: tuple
    fits: dict
    targets: dict
    l1_sup_ratio: float
    decaying: bool
    verdict: str
    checks: dict
    mean_removed: bool
    n_rhs: int
    trajectory_csv: str = field(default="", repr=False)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("trajectory_csv")
        return plain(out)

    def to_json(self, **kwargs) -> str:
        kwargs.setdefault("indent", 2)
        return json.dumps(self.to_dict(), **kwargs)


def source_vertex(system, cfg: StabilityExperimentConfig) -> int:
    """Perturbation centre: ``cfg.source`` or the family default.

    The rotating wave's core cells lose half their edges and act as a local
    defect whose transient outlasts desk-scale fit windows, so its default
    source sits on the diagonal at ``extent // 10`` from the core.
    """
    lat = system.lattice
    if cfg.source is not None:
        return lat.index(cfg.source)
    if cfg.family == "rotwave":
        k = max(1, cfg.extent // 10)
        return lat.index((k, k))
    return system.default_pin


def initial_perturbation(system, cfg: StabilityExperimentConfig) -> np.ndarray:
    """``psi0`` with l1 size ``eps`` (before mean removal)."""
    n = system.n_vertices
    lat = system.lattice
    src = source_vertex(system, cfg)
    if cfg.initializer == "indicator":
        psi = np.zeros(n)
        psi[src] = 1.0
    elif cfg.initializer == "gaussian":
        d2 = ((lat.coords - lat.coords[src]) ** 2).sum(axis=1)
        psi = np.exp(-d2 / 8.0)
    else:
        rng = np.random.default_rng(cfg.seed)
        near = np.flatnonzero(np.abs(lat.coords - lat.coords[src]).max(axis=1) <= 3)
        psi = np.zeros(n)
        psi[rng.choice(near, size=min(8, len(near)), replace=False)] = rng.uniform(0.5, 1.0, min(8, len(near)))
    psi *= cfg.eps / psi.sum()
    if cfg.remove_mean:
        psi -= psi.mean()
    return psi


def _time_scale(bundle: InducedGraphBundle) -> float:
    """Original time per unit of diffusive time: ``D / m`` in the bulk."""
    m = bundle.base.measure
    deg = bundle.system.neighborhoods.degrees
    bulk = deg == deg.max()
    return float(np.median(deg[bulk] / m[bulk]))


def run_stability_experiment(cfg: StabilityExperimentConfig) -> StabilityReport:
    """Integrate the perturbation system and fit decay rates.

    Raises ``HypothesisGateError`` when the gate fails and ``cfg.enforce_gate``
    is set; otherwise the failure is recorded and the run continues.
    """
    system, solution = build_family(cfg.family, cfg.extent, cfg.boundary, cfg.N1, cfg.N2, cfg.n_range)
    bundle = linearize(system, solution)
    gate = hypothesis_gate(bundle, seed=cfg.seed)
    if not gate.passed and cfg.enforce_gate:
        raise gate.refusal()

    psi0 = initial_perturbation(system, cfg)
    g = bundle.augmented
    src = source_vertex(system, cfg)
    scale = _time_scale(bundle)
    if cfg.fit_window is not None:
        window = cfg.fit_window
    else:
        R = guard_radius(g, src) + 1
        window = (5.0 * scale, R * R / 25.0 * scale)
    t_end = cfg.t_end if cfg.t_end is not None else window[1]
    t_eval = np.concatenate([[0.0], np.geomspace(min(0.5, window[0]), t_end, cfg.n_out)])
    traj = integrate_perturbation(system, solution, psi0, t_end, t_eval=t_eval, rtol=cfg.rtol,
                                  atol=cfg.atol, boundary_fraction=cfg.boundary_fraction)

    lo, hi = window
    if traj.boundary_flag.any():
        hi = min(hi, float(traj.t[np.argmax(traj.boundary_flag)]) - 1e-12)
    win = (lo, hi)
    fits = {}
    try:
        fits["linf"] = fit_decay(traj.t, traj.linf, win, "linf")
        fits["l2"] = fit_decay(traj.t, traj.l2, win, "l2")
        fits["sqrtQ"] = fit_decay(traj.t, np.sqrt(traj.q), win, "sqrtQ")
    except ValueError as exc:
        raise BoundaryGuardError(f"{exc}; use a larger lattice or a shorter window") from exc
    l1_ratio = float(traj.l1.max() / lp_norm(psi0, 1))
    sel = (traj.t >= lo) & (traj.t <= hi)
    decaying = bool(traj.linf[sel][-1] < traj.linf[sel][0])

    d = gate.vg["d"]
    targets = {"linf": -d / 2, "l2": -d / 4}
    checks = {
        "linf": abs(fits["linf"].slope - targets["linf"]) <= LINF_TOL,
        "l2": abs(fits["l2"].slope - targets["l2"]) <= L2_TOL,
        "l1_bounded": l1_ratio <= cfg.l1_bound,
        "decaying": decaying,
        "sum_drift": float(np.abs(traj.total - traj.total[0]).max()),
    }
    ok = checks["linf"] and checks["l2"] and checks["l1_bounded"] and decaying
    if not gate.passed:
        verdict = "not-applicable"
    else:
        verdict = "pass" if ok else "fail"
    return StabilityReport(
        cfg.to_dict(), gate.to_dict(), bundle.normalization, bundle.loops, win,
        {k: f.to_dict() for k, f in fits.items()}, targets, l1_ratio, decaying, verdict,
        checks, cfg.remove_mean, traj.n_rhs, traj.to_csv(),
    )


def manifest(cfg: StabilityExperimentConfig, files=()) -> dict:
    return {"config_hash": cfg.digest(), "seed": cfg.seed, "version": __version__,
            "backend": kernels.BACKEND, "files": sorted(files)}


# --- inequality toolkit --------------------------------------------------------

@dataclass
class RemainderReport:
    n_samples: int
    delta: float
    K1: float
    K: float
    violations: int
    max_ratio: float
    counterexample: list | None = None

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return plain(asdict(self))


def random_perturbations(n: int, n_samples: int, delta: float, rng) -> list:
    """Random vectors with ``||psi||_2 <= delta``: half dense, half on a few vertices."""
    out = []
    for k in range(n_samples):
        if k % 2:
            psi = np.zeros(n)
            idx = rng.choice(n, size=int(rng.integers(1, min(10, n) + 1)), replace=False)
            psi[idx] = rng.standard_normal(len(idx))
        else:
            psi = rng.standard_normal(n)
        psi *= delta * rng.uniform(0.0, 1.0) / max(np.linalg.norm(psi), 1e-300)
        out.append(psi)
    return out


def verify_remainder_bound(bundle: InducedGraphBundle, n_samples: int = 1000, delta: float = 0.5,
                           seed: int = 0) -> RemainderReport:
    """Check ``||G(psi)||_1 <= K1(delta) / (2 norm) * Q(psi)`` on random ``psi``.

    ``K1(delta)`` bounds ``|H''|`` within ``2 delta`` of every lag difference of
    the solution, which covers ``|psi_u - psi_v| <= sqrt(2) ||psi||_2``.
    """
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    system, solution = bundle.system, bundle.solution
    nb = system.neighborhoods
    base = system.lag_differences(solution.lags)
    K1 = system.coupling.sup_abs_d2(base, 2 * delta)
    K = K1 / (2.0 * bundle.normalization)
    rng = np.random.default_rng(seed)
    worst, bad, example = 0.0, 0, None
    for psi in random_perturbations(system.n_vertices, n_samples, delta, rng):
        lhs = lp_norm(nonlinear_remainder(system, solution, psi, bundle.normalization), 1)
        rhs = K * q_form(psi, nb)
        if rhs > 0:
            worst = max(worst, lhs / rhs)
        if lhs > rhs * (1 + 1e-12) + 1e-15:
            bad += 1
            if example is None:
                example = psi.tolist()
    return RemainderReport(n_samples, delta, float(K1), float(K), bad, float(worst), example)


@dataclass
class QBoundReport:
    n_samples: int
    D: int
    max_ratio: float
    exact_sup: float
    violations_2D: int
    violations_4D: int
    witness: list | None = None

    def to_dict(self) -> dict:
        return plain(asdict(self))


def check_q_bound(neighborhoods, n_samples: int = 1000, seed: int = 0) -> QBoundReport:
    """Compare ``Q(x) / ||x||_2^2`` with ``2D`` and ``4D`` on random Gaussian ``x``.

    ``exact_sup`` is the largest eigenvalue of the quadratic form; by the
    parallelogram law it never exceeds ``4D``. Bipartite regular graphs attain
    ``4D`` at the alternating vector, so ``2D`` is not an upper bound there.
    """
    n = neighborhoods.n_vertices
    D = neighborhoods.max_degree
    A = sp.csr_matrix((np.ones(len(neighborhoods.indices)), neighborhoods.indices, neighborhoods.indptr),
                      shape=(n, n))
    form = 2.0 * (sp.diags(np.asarray(A.sum(axis=1)).ravel()) - A)
    top = float(eigsh(form.tocsc(), k=1, which="LA", return_eigenvectors=False, tol=1e-10)[0])
    rng = np.random.default_rng(seed)
    ratios = []
    v2, v4, wit = 0, 0, None
    for _ in range(n_samples):
        x = rng.standard_normal(n)
        r = q_form(x, neighborhoods) / float(np.dot(x, x))
        ratios.append(r)
        if r > 2 * D:
            v2 += 1
            wit = wit if wit is not None else x.tolist()
        v4 += r > 4 * D
    return QBoundReport(n_samples, int(D), float(max(ratios)), top, v2, int(v4), wit)


@dataclass
class QDecayReport:
    degenerate: bool
    fit: dict | None
    half_eta: float
    nonincreasing: bool
    times: list
    ratios: list

    def to_dict(self) -> dict:
        return plain(asdict(self))


def verify_q_semigroup_decay(bundle: InducedGraphBundle, psi, times, window=None,
                             noise: float = 1e-9) -> QDecayReport:
    """Decay of ``sqrt(Q(P_t psi)) / ||P_t |psi| ||_2`` along ``times``."""
    psi = np.asarray(psi, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    nb = bundle.system.neighborhoods
    if q_form(psi, nb) <= 1e-300:
        return QDecayReport(True, None, float("nan"), True, times.tolist(), [0.0] * len(times))
    X = semigroup_orbit(bundle, psi, times)
    Y = semigroup_orbit(bundle, np.abs(psi), times)
    ratios = np.array([math.sqrt(q_form(x, nb)) / np.linalg.norm(y) for x, y in zip(X, Y)])
    fit = fit_decay(times, ratios, window, "sqrtQ ratio")
    nonincreasing = bool((np.diff(ratios) <= noise * ratios[:-1]).all())
    return QDecayReport(False, fit.to_dict(), -fit.slope, nonincreasing, times.tolist(), ratios.tolist())


@dataclass
class IntegralLemmaReport:
    gamma1: float
    gamma2: float
    exponent: float
    times: list
    integrals: list
    ratios: list
    max_ratio: float
    tail_slope: float
    bounded: bool

    def to_dict(self) -> dict:
        return plain(asdict(self))


def integral_lemma_case(gamma1: float, gamma2: float) -> None:
    """Raise ``ValueError`` unless the pair is covered by the convolution lemma."""
    if gamma1 <= 0 or gamma2 <= 0:
        raise ValueError("exponents must be positive")
    if gamma2 == 1:
        raise ValueError("gamma2 = 1 is not covered: the bound needs gamma1, gamma2 != 1 or gamma1 = 1 < gamma2")
    if gamma1 == 1 and not gamma2 > 1:
        raise ValueError("gamma1 = 1 requires gamma2 > 1")


def convolution_integral(gamma1: float, gamma2: float, t: float) -> float:
    """``int_0^t (1 + t - s)^(-gamma1) (1 + s)^(-gamma2) ds`` by adaptive quadrature."""
    if t == 0:
        return 0.0

    def f(s):
        return (1.0 + t - s) ** (-gamma1) * (1.0 + s) ** (-gamma2)

    pts = [p for p in (1.0, t / 2, t - 1.0) if 0 < p < t]
    val, _ = integrate.quad(f, 0.0, t, points=pts or None, limit=200, epsabs=0.0, epsrel=1e-10)
    return float(val)


def verify_integral_lemma(gamma1: float, gamma2: float, times=None, tail_tol: float = 0.05,
                          check_case: bool = True) -> IntegralLemmaReport:
    """Check that ``I(t) (1 + t)^min(g1 + g2 - 1, g1, g2)`` stays bounded.

    Boundedness on a finite grid is judged by the log-log slope of the ratio
    over the last decade, which must not exceed ``tail_tol``.
    """
    if check_case:
        integral_lemma_case(gamma1, gamma2)
    if times is None:
        times = np.concatenate([[0.0], np.geomspace(1e-2, 1e3, 61)])
    times = np.asarray(times, dtype=np.float64)
    expo = min(gamma1 + gamma2 - 1.0, gamma1, gamma2)
    I = np.array([convolution_integral(gamma1, gamma2, t) for t in times])
    ratio = I * (1.0 + times) ** expo
    tail = times >= times.max() / 10
    tail_slope = float(np.polyfit(np.log(times[tail]), np.log(ratio[tail]), 1)[0]) if tail.sum() >= 2 else 0.0
    bounded = bool(np.isfinite(ratio).all() and tail_slope <= tail_tol)
    return IntegralLemmaReport(gamma1, gamma2, expo, times.tolist(), I.tolist(), ratio.tolist(),
                               float(ratio.max()), tail_slope, bounded)


# --- spectrum ------------------------------------------------------------------

@dataclass
class SpectrumProbe:
    n_vertices: int
    lambda_min: float
    lambda_max: float
    gap: float
    real: bool

    def to_dict(self) -> dict:
        return plain(asdict(self))


def spectrum_probe(bundle: InducedGraphBundle, dense_limit: int = 2000) -> SpectrumProbe:
    """Extreme eigenvalues of the unnormalized linearization.

    ``gap`` is the distance from 0 to the largest nonzero eigenvalue.
    """
    L = bundle.unnormalized
    n = L.shape[0]
    if n > 10_000:
        raise ValueError("spectrum probe is limited to 10k vertices")
    sym = abs(L - L.T).max() if L.nnz else 0.0
    if n <= dense_limit:
        ev = np.linalg.eigvalsh(L.toarray())
        lo, hi, second = ev[0], ev[-1], ev[-2]
    else:
        lo = eigsh(L, k=1, which="SA", return_eigenvectors=False, tol=1e-10)[0]
        top = np.sort(eigsh(-L, k=2, sigma=-1e-3, which="LM", return_eigenvectors=False, tol=1e-12))
        hi, second = -top[0], -top[1]
    return SpectrumProbe(n, float(lo), float(hi), float(-second), bool(sym < 1e-12))
