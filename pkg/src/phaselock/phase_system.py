"""Coupled phase model, phase-lag equation and perturbation dynamics.

The model is ``dtheta_v/dt = omega_v + sum_{u in N(v)} H(theta_u - theta_v)``.
A phase-locked solution ``theta_v = Omega t + lag_v`` solves the phase-lag
equation; ``psi`` denotes a perturbation of the lags.
"""
from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import splu

from . import kernels
from .errors import ConvergenceError, GraphError
from .graph_core import Lattice, Neighborhoods, lp_norm

TWO_PI = 2.0 * np.pi


class Coupling:
    """A 2π-periodic, twice differentiable coupling function with derivatives.

    Trigonometric-polynomial couplings ``sum_k a_k cos(kx) + b_k sin(kx)`` are
    evaluated by the compiled kernel; arbitrary callables use numpy.
    """

    def __init__(self, H, dH, d2H, name="custom", cos_coef=None, sin_coef=None, d3_bound=None):
        self.H = H
        self.dH = dH
        self.d2H = d2H
        self.name = name
        self.cos_coef = None if cos_coef is None else np.asarray(cos_coef, dtype=np.float64)
        self.sin_coef = None if sin_coef is None else np.asarray(sin_coef, dtype=np.float64)
        self.d3_bound = d3_bound
        x = np.linspace(-7.0, 7.0, 257)
        if not np.allclose(H(x + TWO_PI), H(x), rtol=0.0, atol=1e-12):
            raise ValueError("coupling function is not 2π-periodic")

    @classmethod
    def sine(cls) -> "Coupling":
        return cls.fourier([0.0, 0.0], [0.0, 1.0], name="sin")

    @classmethod
    def fourier(cls, cos_coef, sin_coef, name="table") -> "Coupling":
        a = np.asarray(cos_coef, dtype=np.float64)
        b = np.asarray(sin_coef, dtype=np.float64)
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("cos and sin coefficient arrays must be 1D and of equal length")
        k = np.arange(len(a), dtype=np.float64)

        def H(x):
            x = np.asarray(x, dtype=np.float64)
            kx = np.multiply.outer(x, k)
            return np.cos(kx) @ a + np.sin(kx) @ b

        def dH(x):
            x = np.asarray(x, dtype=np.float64)
            kx = np.multiply.outer(x, k)
            return np.cos(kx) @ (k * b) - np.sin(kx) @ (k * a)

        def d2H(x):
            x = np.asarray(x, dtype=np.float64)
            kx = np.multiply.outer(x, k)
            return -(np.cos(kx) @ (k * k * a) + np.sin(kx) @ (k * k * b))

        d3 = float(np.sum(k ** 3 * (np.abs(a) + np.abs(b))))
        return cls(H, dH, d2H, name=name, cos_coef=a, sin_coef=b, d3_bound=d3)

    @property
    def is_odd(self) -> bool:
        if self.cos_coef is not None:
            return bool(np.all(self.cos_coef == 0.0))
        x = np.linspace(0.1, 3.1, 31)
        return bool(np.allclose(self.H(-x), -self.H(x), atol=1e-14))

    def coupling_sum(self, nbhd: Neighborhoods, phase: np.ndarray) -> np.ndarray:
        """``out[v] = sum_{u in N(v)} H(phase[u] - phase[v])``."""
        phase = np.ascontiguousarray(phase, dtype=np.float64)
        if self.cos_coef is not None:
            return kernels.fourier_coupling_sum(nbhd.indptr, nbhd.indices, phase, self.cos_coef, self.sin_coef)
        x = phase[nbhd.indices] - phase[nbhd.rows]
        return np.bincount(nbhd.rows, weights=self.H(x), minlength=nbhd.n_vertices)

    def sup_abs_d2(self, centers, radius: float, n_grid: int = 2049) -> float:
        """Upper bound on ``sup |H''(c + s)|`` over ``|s| <= radius``, c in ``centers``.

        Grid maximum plus a Lipschitz correction when ``|H'''|`` is bounded,
        capped by ``sum k^2 (|a_k| + |b_k|)`` for Fourier couplings.
        """
        centers = np.unique(np.round(np.mod(np.atleast_1d(centers), TWO_PI), 12))
        s = np.linspace(-radius, radius, n_grid)
        vals = np.abs(self.d2H(np.add.outer(centers, s)))
        best = float(vals.max())
        if self.d3_bound is not None and n_grid > 1:
            best += self.d3_bound * (s[1] - s[0]) / 2.0
        if self.cos_coef is not None:
            k2 = np.arange(len(self.cos_coef)) ** 2
            best = min(best, float((k2 * (np.abs(self.cos_coef) + np.abs(self.sin_coef))).sum()))
        return best

    def to_dict(self) -> dict:
        if self.name == "sin":
            return {"H": "sin"}
        if self.cos_coef is None:
            raise ValueError("only trigonometric couplings can be serialized")
        return {"H": "table", "cos": self.cos_coef.tolist(), "sin": self.sin_coef.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "Coupling":
        kind = data.get("H", "sin")
        if kind == "sin":
            return cls.sine()
        if kind == "table":
            return cls.fourier(data["cos"], data["sin"])
        raise ValueError(f"unknown coupling kind {kind!r}")

    def __repr__(self):
        return f"Coupling({self.name!r})"


@dataclass(eq=False)
class PhaseSystem:
    """Index set with symmetric neighbourhoods, coupling H and frequencies."""

    neighborhoods: Neighborhoods
    coupling: Coupling
    omega: np.ndarray
    lattice: Lattice | None = None

    def __post_init__(self):
        n = self.neighborhoods.n_vertices
        self.omega = np.broadcast_to(np.asarray(self.omega, dtype=np.float64), (n,)).copy()
        if not self.neighborhoods.is_symmetric():
            raise GraphError("influence topology must be symmetric")
        if n and self.neighborhoods.degrees.min() < 1:
            raise GraphError("every oscillator needs at least one neighbour")
        if self.lattice is not None and self.lattice.n_vertices != n:
            raise GraphError("lattice size does not match the neighbourhoods")

    @classmethod
    def on_lattice(cls, lattice: Lattice, coupling: Coupling | None = None, omega=0.0,
                   rule: str = "nearest", n_range: int = 1) -> "PhaseSystem":
        return cls(lattice.neighborhoods(rule, n_range), coupling or Coupling.sine(), omega, lattice)

    @property
    def n_vertices(self) -> int:
        return self.neighborhoods.n_vertices

    @property
    def boundary(self) -> str:
        return self.lattice.boundary if self.lattice is not None else "free"

    @property
    def max_degree(self) -> int:
        return self.neighborhoods.max_degree

    @property
    def default_pin(self) -> int:
        return self.lattice.origin if self.lattice is not None else 0

    def coupling_sum(self, phase) -> np.ndarray:
        return self.coupling.coupling_sum(self.neighborhoods, phase)

    def lag_differences(self, lags) -> np.ndarray:
        """``lags[u] - lags[v]`` per stored (v, u) pair, wrapped to (-π, π]."""
        lags = np.asarray(lags, dtype=np.float64)
        nb = self.neighborhoods
        return wrap_phase(lags[nb.indices] - lags[nb.rows])

    def jacobian(self, lags) -> sp.csr_matrix:
        """Derivative of the phase-lag residual: the unnormalized linearization."""
        nb = self.neighborhoods
        lags = np.asarray(lags, dtype=np.float64)
        wts = self.coupling.dH(lags[nb.indices] - lags[nb.rows])
        n = self.n_vertices
        off = sp.csr_matrix((wts, nb.indices, nb.indptr), shape=(n, n))
        diag = np.bincount(nb.rows, weights=wts, minlength=n)
        return (off - sp.diags(diag)).tocsr()


def wrap_phase(x):
    """Principal value in (-π, π]."""
    y = np.mod(np.asarray(x, dtype=np.float64) + np.pi, TWO_PI) - np.pi
    return np.where(y == -np.pi, np.pi, y)


@dataclass
class PhaseLockedSolution:
    lags: np.ndarray
    Omega: float
    residual: float
    iterations: int = 0
    family: str = "custom"
    info: dict = field(default_factory=dict)

    def to_dict(self, system: PhaseSystem | None = None) -> dict:
        out = {
            "family": self.family,
            "lags": self.lags.tolist(),
            "Omega": float(self.Omega),
            "residual": float(self.residual),
            "iterations": int(self.iterations),
        }
        if system is not None:
            out["omega"] = system.omega.tolist()
            out.update(system.coupling.to_dict())
            if system.lattice is not None:
                out["lattice"] = {"shape": list(system.lattice.shape), "boundary": system.lattice.boundary}
        return out

    def to_json(self, system: PhaseSystem | None = None, **kwargs) -> str:
        return json.dumps(self.to_dict(system), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "PhaseLockedSolution":
        return cls(
            lags=np.asarray(data["lags"], dtype=np.float64),
            Omega=float(data["Omega"]),
            residual=float(data.get("residual", np.nan)),
            iterations=int(data.get("iterations", 0)),
            family=data.get("family", "custom"),
        )


def phase_lag_residual(system: PhaseSystem, lags, Omega: float) -> np.ndarray:
    """``(omega_v - Omega) + sum_{u in N(v)} H(lag_u - lag_v)`` for every v."""
    lags = np.asarray(lags, dtype=np.float64)
    if lags.shape != (system.n_vertices,):
        raise GraphError("lags must be defined on every vertex")
    return (system.omega - Omega) + system.coupling_sum(lags)


@dataclass(frozen=True)
class LagParametrization:
    """Affine map ``lags = basis @ u + offset`` with a square equation subset.

    ``rows`` selects which residual components Newton drives to zero; the
    remaining ones must vanish by symmetry and are checked after convergence.
    """

    basis: sp.csr_matrix
    offset: np.ndarray
    rows: np.ndarray

    @classmethod
    def pinned(cls, n: int, pins: dict) -> "LagParametrization":
        fixed = np.array(sorted(pins), dtype=np.int64)
        free = np.setdiff1d(np.arange(n), fixed)
        basis = sp.csr_matrix((np.ones(len(free)), (free, np.arange(len(free)))), shape=(n, len(free)))
        offset = np.zeros(n)
        offset[fixed] = [pins[k] for k in fixed]
        return cls(basis, offset, free)

    def expand(self, u) -> np.ndarray:
        return self.basis @ u + self.offset

    def restrict(self, lags) -> np.ndarray:
        """Least-squares coordinates of ``lags`` (exact when ``lags`` is in range)."""
        b = self.basis
        gram = (b.T @ b).tocsc()
        return splu(gram).solve(b.T @ (np.asarray(lags) - self.offset))


def solve_phase_locked(
    system: PhaseSystem,
    initial_lags,
    Omega: float | None = None,
    pins: dict | None = None,
    parametrization: LagParametrization | None = None,
    tol: float = 1e-10,
    max_iter: int = 50,
    family: str = "custom",
) -> PhaseLockedSolution:
    """Damped Newton on the phase-lag equation.

    The uniform-shift direction is removed either by ``pins`` (vertex -> lag,
    default: the lattice origin keeps its initial value) or by an explicit
    ``parametrization``. ``Omega=None`` uses ``Omega = omega`` for uniform
    frequencies and odd H, and otherwise solves for Omega as an extra unknown.
    """
    n = system.n_vertices
    x0 = np.asarray(initial_lags, dtype=np.float64).copy()
    if x0.shape != (n,):
        raise GraphError("initial lags must be defined on every vertex")

    uniform = np.all(system.omega == system.omega[0])
    solve_omega = False
    if Omega is None:
        if uniform and system.coupling.is_odd:
            Omega = float(system.omega[0])
        else:
            solve_omega = True
            Omega = float(np.mean(system.omega))

    if parametrization is None:
        if pins is None:
            p = system.default_pin
            pins = {p: float(x0[p])}
        parametrization = LagParametrization.pinned(n, pins)
    par = parametrization
    rows = np.arange(n) if solve_omega else par.rows
    u = par.restrict(x0)
    k = par.basis.shape[1]
    if len(rows) != k + int(solve_omega):
        raise ValueError(
            f"{len(rows)} equations for {k + int(solve_omega)} unknowns; "
            "adjust pins or the parametrization"
        )

    def F(u, Om):
        return phase_lag_residual(system, par.expand(u), Om)[rows]

    def merit(r):
        return float(np.dot(r, r))

    r = F(u, Omega)
    it = 0
    while np.max(np.abs(r), initial=0.0) >= tol:
        if it >= max_iter:
            raise ConvergenceError(
                f"Newton did not converge in {max_iter} iterations (residual {np.abs(r).max():.3e})",
                residual=float(np.abs(r).max()), iterations=it,
            )
        J = (system.jacobian(par.expand(u))[rows] @ par.basis).tocsc()
        if solve_omega:
            J = sp.hstack([J, -np.ones((len(rows), 1))]).tocsc()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error")
                step = -splu(J).solve(r)
        except (RuntimeError, Warning) as exc:
            raise ConvergenceError(
                f"singular Newton Jacobian ({exc}); pin additional lags to remove the degeneracy",
                residual=float(np.abs(r).max()), iterations=it,
            ) from exc
        if not np.isfinite(step).all():
            raise ConvergenceError("singular Newton Jacobian; pin additional lags",
                                   residual=float(np.abs(r).max()), iterations=it)
        du, dOm = (step[:-1], step[-1]) if solve_omega else (step, 0.0)
        m0 = merit(r)
        alpha = 1.0
        while True:
            r_new = F(u + alpha * du, Omega + alpha * dOm)
            if merit(r_new) < (1.0 - 1e-4 * alpha) * m0 or alpha < 1.0 / 1024:
                break
            alpha *= 0.5
        u = u + alpha * du
        Omega = Omega + alpha * dOm
        r = r_new
        it += 1

    lags = par.expand(u)
    full = phase_lag_residual(system, lags, Omega)
    res = float(np.abs(full).max()) if n else 0.0
    if res >= max(tol, 1e-9):
        raise ConvergenceError(
            f"constrained Newton converged but the full residual is {res:.3e}; "
            "the constraints are incompatible with the phase-lag equation",
            residual=res, iterations=it,
        )
    return PhaseLockedSolution(np.mod(lags, TWO_PI), float(Omega), res, it, family)


def perturbation_rhs(system: PhaseSystem, solution: PhaseLockedSolution, psi) -> np.ndarray:
    """Right-hand side of the perturbation system around ``solution``."""
    psi = np.asarray(psi, dtype=np.float64)
    return (system.omega - solution.Omega) + system.coupling_sum(solution.lags + psi)


@dataclass
class PerturbationTrajectory:
    t: np.ndarray
    l1: np.ndarray
    l2: np.ndarray
    linf: np.ndarray
    boundary_mass: np.ndarray
    total: np.ndarray
    q: np.ndarray
    boundary_flag: np.ndarray
    psi0: np.ndarray
    states: np.ndarray | None = None
    snapshots: dict = field(default_factory=dict)
    n_rhs: int = 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "l1", "l2", "linf", "boundary_mass"])
        for row in zip(self.t, self.l1, self.l2, self.linf, self.boundary_mass):
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()

    def snapshots_json(self) -> str:
        return json.dumps({repr(float(t)): s.tolist() for t, s in sorted(self.snapshots.items())})


def integrate_perturbation(
    system: PhaseSystem,
    solution: PhaseLockedSolution,
    psi0,
    t_end: float,
    t_eval=None,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    boundary_fraction: float = 0.01,
    snapshot_times=(),
    keep_states: bool = False,
    first_step: float | None = None,
) -> PerturbationTrajectory:
    """Integrate the perturbation system with an adaptive embedded RK pair.

    Norms, the conserved sum, the Q-form and the boundary mass are recorded at
    each output time. Boundary mass is the l1 norm of ``psi(t) - psi0`` on the
    outermost lattice ring (free boundary only), i.e. the mass that has arrived
    there; a time is flagged when it exceeds ``boundary_fraction * ||psi0||_1``.
    """
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    psi0 = np.asarray(psi0, dtype=np.float64)
    if psi0.shape != (system.n_vertices,) or not np.isfinite(psi0).all():
        raise ValueError("psi0 must be a finite vector on every vertex")
    if t_eval is None:
        t_eval = np.linspace(0.0, t_end, 101)
    t_eval = np.unique(np.concatenate([np.asarray(t_eval, dtype=np.float64),
                                       np.asarray(list(snapshot_times), dtype=np.float64), [0.0]]))
    t_eval = t_eval[(t_eval >= 0) & (t_eval <= t_end)]

    counter = [0]

    def rhs(_t, y):
        counter[0] += 1
        return perturbation_rhs(system, solution, y)

    sol = solve_ivp(rhs, (0.0, t_end), psi0, method="RK45", t_eval=t_eval,
                    rtol=rtol, atol=atol, first_step=first_step)
    if sol.status != 0:
        raise ConvergenceError(f"integration failed at t={sol.t[-1] if len(sol.t) else 0.0}: {sol.message}")

    Y = sol.y
    nb = system.neighborhoods
    diffs = Y[nb.indices] - Y[nb.rows]
    q = np.einsum("ij,ij->j", diffs, diffs)
    if system.lattice is not None and system.boundary == "free":
        ring = system.lattice.ring(0)
        bmass = np.abs(Y[ring] - psi0[ring, None]).sum(axis=0)
    else:
        bmass = np.zeros(Y.shape[1])
    l1_0 = lp_norm(psi0, 1)
    snaps = {}
    for ts in snapshot_times:
        k = int(np.argmin(np.abs(sol.t - ts)))
        snaps[float(sol.t[k])] = Y[:, k].copy()
    return PerturbationTrajectory(
        t=sol.t,
        l1=np.abs(Y).sum(axis=0),
        l2=np.sqrt(np.einsum("ij,ij->j", Y, Y)),
        linf=np.abs(Y).max(axis=0),
        boundary_mass=bmass,
        total=Y.sum(axis=0),
        q=q,
        boundary_flag=bmass > boundary_fraction * l1_0,
        psi0=psi0,
        states=Y if keep_states else None,
        snapshots=snaps,
        n_rhs=counter[0],
    )


def nonlinear_remainder(system: PhaseSystem, solution: PhaseLockedSolution, psi,
                        normalization: float) -> np.ndarray:
    """Nonlinear part of the time-rescaled perturbation system.

    ``(F(psi) - F(0)) / normalization - L psi / normalization`` where ``F`` is
    the perturbation right-hand side and ``L`` the unnormalized linearization.
    Subtracting ``F(0)`` removes the solver residual, so the result vanishes
    at ``psi = 0`` to rounding.
    """
    psi = np.asarray(psi, dtype=np.float64)
    nb = system.neighborhoods
    base = solution.lags[nb.indices] - solution.lags[nb.rows]
    dpsi = psi[nb.indices] - psi[nb.rows]
    H = system.coupling
    per_edge = H.H(base + dpsi) - H.H(base) - H.dH(base) * dpsi
    return np.bincount(nb.rows, weights=per_edge, minlength=system.n_vertices) / normalization
