"""Phase-locked solution families on lattice truncations.

* trivial: every lag zero (needs ``H(0) = 0``);
* doubly periodic: lags advance by ``2π/N1`` and ``2π/N2`` along the two axes on a torus;
* rotating wave: a spiral around a 2x2 core cell, solved by Newton on one
  eighth of the lattice and extended by the dihedral symmetry of the square;
* chain: trivial lags on a 1D lattice with range-n coupling.
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConvergenceError, GraphError
from .graph_core import Lattice
from .phase_system import (
    Coupling,
    LagParametrization,
    PhaseLockedSolution,
    PhaseSystem,
    phase_lag_residual,
    solve_phase_locked,
    wrap_phase,
)

TWO_PI = 2.0 * np.pi
FAMILIES = ("trivial", "rotwave", "periodic", "chain")


def _solution(system, lags, Omega, family, iterations=0, info=None):
    lags = np.mod(np.asarray(lags, dtype=np.float64), TWO_PI)
    res = float(np.abs(phase_lag_residual(system, lags, Omega)).max())
    return PhaseLockedSolution(lags, float(Omega), res, iterations, family, info or {})


def _uniform_omega(system) -> float:
    if not np.all(system.omega == system.omega[0]):
        raise GraphError("this family needs identical intrinsic frequencies")
    return float(system.omega[0])


def trivial_lags(system: PhaseSystem) -> PhaseLockedSolution:
    """All lags zero; a solution exactly when ``H(0) = 0`` and ω is uniform."""
    h0 = float(system.coupling.H(np.array([0.0]))[0])
    if abs(h0) > 1e-14:
        raise GraphError(f"H(0) = {h0:.3e} != 0, so zero lags do not lock")
    return _solution(system, np.zeros(system.n_vertices), _uniform_omega(system), "trivial")


def doubly_periodic_lags(system: PhaseSystem, N1: int, N2: int) -> PhaseLockedSolution:
    """``lag(i, j) = 2π [i]_{N1} / N1 + 2π [j]_{N2} / N2`` on a 2D torus.

    Needs odd H, nearest-neighbour coupling, ``N1, N2 >= 5`` and extents
    divisible by the periods.
    """
    lat = system.lattice
    if lat is None or lat.dim != 2 or lat.boundary != "torus":
        raise GraphError("doubly periodic solutions live on a 2D torus")
    if N1 < 5 or N2 < 5:
        raise GraphError(f"periods must be >= 5 for positive weights cos(2π/N), got ({N1}, {N2})")
    if lat.shape[0] % N1 or lat.shape[1] % N2:
        raise GraphError(f"torus extents {lat.shape} are not multiples of ({N1}, {N2})")
    if not system.coupling.is_odd:
        raise GraphError("doubly periodic lags need an odd coupling function")
    c = lat.coords
    lags = TWO_PI * np.mod(c[:, 0], N1) / N1 + TWO_PI * np.mod(c[:, 1], N2) / N2
    sol = _solution(system, lags, _uniform_omega(system), "periodic", info={"N1": N1, "N2": N2})
    return sol


# --- rotating wave ------------------------------------------------------------

def _doubled(coords):
    """Coordinates doubled and shifted so the core centre sits at the origin."""
    return 2 * coords - 1


def rotating_wave_parametrization(lattice: Lattice) -> tuple[LagParametrization, np.ndarray]:
    """Dihedral-symmetric lag fields on an even square lattice.

    The fundamental sector is ``1 <= j <= i``. Its diagonal carries lag 0 and
    the strict interior ``1 <= j < i`` holds the unknowns. A clockwise quarter
    turn about the core adds π/2 to the lag and the reflection ``(i, j) -> (j, i)``
    negates it, so every vertex is ``± lag(sector cell) + k π/2``.

    Returns the parametrization and the vertex indices of the unknowns.
    """
    if lattice.dim != 2 or lattice.shape[0] != lattice.shape[1] or lattice.shape[0] % 2:
        raise GraphError("rotating waves need an even square lattice")
    if lattice.boundary != "free":
        raise GraphError("rotating waves are built on a free-boundary truncation")
    c = lattice.coords
    xy = _doubled(c)
    x, y = xy[:, 0], xy[:, 1]
    interior = np.flatnonzero((y >= 1) & (x > y))
    diagonal = np.flatnonzero((y >= 1) & (x == y))
    n = lattice.n_vertices
    col_of = {int(v): k for k, v in enumerate(interior)}

    rows, cols, vals = [], [], []
    offset = np.full(n, np.nan)
    for sector, fixed in ((interior, False), (diagonal, True)):
        for s in sector:
            px, py = int(x[s]), int(y[s])
            for e in (0, 1):
                qx, qy = (py, px) if e else (px, py)
                for k in range(4):
                    tx, ty = qx, qy
                    for _ in range(k):
                        tx, ty = ty, -tx
                    v = lattice.index(((tx + 1) // 2, (ty + 1) // 2))
                    if not np.isnan(offset[v]):
                        continue
                    offset[v] = k * np.pi / 2
                    if not fixed:
                        rows.append(v)
                        cols.append(col_of[int(s)])
                        vals.append(-1.0 if e else 1.0)
    if np.isnan(offset).any():
        raise GraphError("symmetry orbits do not cover the lattice")
    basis = sp.csr_matrix((vals, (rows, cols)), shape=(n, len(interior)))
    return LagParametrization(basis, offset, interior), interior


def rotating_wave_seed(lattice: Lattice) -> np.ndarray:
    """Polar-angle seed ``π/4 - atan2(j - 1/2, i - 1/2)``."""
    xy = _doubled(lattice.coords).astype(np.float64)
    return np.pi / 4 - np.arctan2(xy[:, 1], xy[:, 0])


@dataclass
class InvariantCheck:
    name: str
    passed: bool
    worst: float
    witness: tuple

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "worst": self.worst,
                "witness": [int(a) for a in self.witness]}


def check_rotating_wave(lattice: Lattice, lags, exclude_rings: int = 2, tol: float = 1e-10) -> list:
    """Verify the sector relations of a rotating wave away from the outer rings.

    * ``lag(i, i) = 0`` for ``i >= 1``;
    * ``lag(i, 0) = π/2 - lag(i, 1)`` for ``i >= 1``;
    * ``0 < lag(i, j) <= π/4`` for ``1 <= j < i``;
    * ``lag(i, j) <= lag(i + 1, j)`` for ``1 <= j <= i``.

    Returns one ``InvariantCheck`` per relation; ``worst`` is the largest
    violation (zero or negative when satisfied).
    """
    lags = np.asarray(lags, dtype=np.float64)
    c = lattice.coords
    keep = lattice.depth() >= exclude_rings
    i, j = c[:, 0], c[:, 1]

    def at(ii, jj):
        return lags[lattice.indices(np.stack([ii, jj], axis=1))]

    out = []

    def record(name, viol, where):
        if len(viol) == 0:
            out.append(InvariantCheck(name, True, 0.0, ()))
            return
        k = int(np.argmax(viol))
        out.append(InvariantCheck(name, bool(viol[k] <= tol), float(viol[k]), tuple(c[where[k]])))

    sel = np.flatnonzero(keep & (i == j) & (i >= 1))
    record("diagonal lag is 0", np.abs(wrap_phase(lags[sel])), sel)

    sel = np.flatnonzero(keep & (j == 0) & (i >= 1))
    sel = sel[keep[lattice.indices(np.stack([i[sel], i[sel] * 0 + 1], axis=1))]]
    record("lag(i,0) = π/2 - lag(i,1)", np.abs(wrap_phase(lags[sel] + at(i[sel], j[sel] + 1) - np.pi / 2)), sel)

    sel = np.flatnonzero(keep & (j >= 1) & (j < i))
    th = wrap_phase(lags[sel])
    record("0 < lag <= π/4 in the sector", np.maximum(-th, th - np.pi / 4), sel)

    sel = np.flatnonzero(keep & (j >= 1) & (j <= i) & (i < i.max()))
    nxt = lattice.indices(np.stack([i[sel] + 1, j[sel]], axis=1))
    ok = keep[nxt]
    sel, nxt = sel[ok], nxt[ok]
    record("lag nondecreasing in i", wrap_phase(lags[sel]) - wrap_phase(lags[nxt]), sel)
    return out


def rotating_wave_lags(system: PhaseSystem, tol: float = 1e-10, max_iter: int = 50,
                       exclude_rings: int = 2) -> PhaseLockedSolution:
    """Newton-solve the rotating wave on an even square free lattice.

    Raises ``ConvergenceError`` when Newton stalls or when a sector relation
    fails away from the outer rings.
    """
    lat = system.lattice
    if lat is None:
        raise GraphError("rotating waves need a lattice")
    if system.neighborhoods.max_degree > 4:
        raise GraphError("rotating waves are built for nearest-neighbour coupling")
    par, _ = rotating_wave_parametrization(lat)
    sol = solve_phase_locked(system, rotating_wave_seed(lat), Omega=_uniform_omega(system),
                             parametrization=par, tol=tol, max_iter=max_iter, family="rotwave")
    checks = check_rotating_wave(lat, sol.lags, exclude_rings, tol)
    sol.info["invariants"] = [ck.to_dict() for ck in checks]
    bad = [ck for ck in checks if not ck.passed]
    if bad:
        ck = bad[0]
        raise ConvergenceError(
            f"rotating-wave relation '{ck.name}' fails at {ck.witness} by {ck.worst:.3e}",
            residual=sol.residual, iterations=sol.iterations,
        )
    return sol


def core_edges(lattice: Lattice) -> list:
    """The four edges of the 2x2 core cell as vertex-index pairs."""
    cell = [(0, 0), (1, 0), (1, 1), (0, 1)]
    idx = [lattice.index(p) for p in cell]
    return [tuple(sorted((idx[k], idx[(k + 1) % 4]))) for k in range(4)]


# --- chain ---------------------------------------------------------------------

def chain_lags(system: PhaseSystem) -> PhaseLockedSolution:
    """Trivial lags on a 1D lattice system."""
    if system.lattice is None or system.lattice.dim != 1:
        raise GraphError("chain solutions need a 1D lattice")
    sol = trivial_lags(system)
    sol.family = "chain"
    return sol


# --- builders ----------------------------------------------------------------

def build_family(family: str, extent: int = 101, boundary: str | None = None,
                 N1: int = 5, N2: int = 5, n_range: int = 1,
                 coupling: Coupling | None = None, omega: float = 0.0):
    """Build ``(system, solution)`` for a named family with its natural defaults.

    Defaults: trivial on a free square, rotating wave on a free even square,
    doubly periodic on a torus, chain on a free 1D lattice.
    """
    coupling = coupling or Coupling.sine()
    if family == "trivial":
        lat = Lattice((extent, extent), boundary or "free")
        sys_ = PhaseSystem.on_lattice(lat, coupling, omega)
        return sys_, trivial_lags(sys_)
    if family == "rotwave":
        if extent % 2:
            raise GraphError(f"rotating-wave extent must be even, got {extent}")
        lat = Lattice((extent, extent), boundary or "free")
        sys_ = PhaseSystem.on_lattice(lat, coupling, omega)
        return sys_, rotating_wave_lags(sys_)
    if family == "periodic":
        lat = Lattice((extent, extent), boundary or "torus")
        sys_ = PhaseSystem.on_lattice(lat, coupling, omega)
        return sys_, doubly_periodic_lags(sys_, N1, N2)
    if family == "chain":
        lat = Lattice((extent,), boundary or "free")
        rule = "nearest" if n_range == 1 else "range"
        sys_ = PhaseSystem.on_lattice(lat, coupling, omega, rule=rule, n_range=n_range)
        return sys_, chain_lags(sys_)
    raise GraphError(f"unknown family {family!r}; choose from {FAMILIES}")


def lag_field_csv(lattice: Lattice, lags) -> str:
    """CSV with one row per vertex: coordinates then lag."""
    lags = np.asarray(lags, dtype=np.float64)
    names = ["i", "j"][: lattice.dim]
    buf = io.StringIO()
    buf.write(",".join(names + ["theta"]) + "\n")
    for c, th in zip(lattice.coords, lags):
        buf.write(",".join(str(int(a)) for a in c) + f",{th:.17g}\n")
    return buf.getvalue()
