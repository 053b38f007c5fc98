import numpy as np
import pytest

from phaselock.errors import GraphError
from phaselock.graph_core import Lattice
from phaselock.phase_system import Coupling, PhaseSystem, phase_lag_residual, wrap_phase
from phaselock.solutions import (
    build_family,
    check_rotating_wave,
    core_edges,
    doubly_periodic_lags,
    lag_field_csv,
    rotating_wave_lags,
    trivial_lags,
)


@pytest.fixture(scope="module")
def rotwave():
    return build_family("rotwave", extent=24)


def test_trivial_residual_zero():
    sys_, sol = build_family("trivial", extent=9)
    assert sol.residual == 0.0
    assert np.all(sol.lags == 0)


def test_trivial_refuses_nonzero_h0():
    sys_ = PhaseSystem.on_lattice(Lattice((5, 5)), Coupling.fourier([0.1, 0.0], [0.0, 1.0]))
    with pytest.raises(GraphError):
        trivial_lags(sys_)


@pytest.mark.parametrize("N1,N2,extent", [(5, 5, 20), (5, 7, 35), (6, 5, 30)])
def test_periodic_sums_cancel_per_direction(N1, N2, extent):
    lat = Lattice((extent, extent), "torus")
    sys_ = PhaseSystem.on_lattice(lat)
    sol = doubly_periodic_lags(sys_, N1, N2)
    assert sol.residual < 1e-12
    grid = sol.lags.reshape(extent, extent)
    horiz = np.sin(np.roll(grid, -1, 0) - grid) + np.sin(np.roll(grid, 1, 0) - grid)
    vert = np.sin(np.roll(grid, -1, 1) - grid) + np.sin(np.roll(grid, 1, 1) - grid)
    assert np.abs(horiz).max() < 1e-12 and np.abs(vert).max() < 1e-12
    d = sys_.lag_differences(sol.lags)
    assert np.cos(d).min() == pytest.approx(min(np.cos(2 * np.pi / N1), np.cos(2 * np.pi / N2)))


@pytest.mark.parametrize("N1,extent,boundary", [(4, 20, "torus"), (5, 21, "torus"), (5, 20, "free")])
def test_periodic_preconditions(N1, extent, boundary):
    sys_ = PhaseSystem.on_lattice(Lattice((extent, extent), boundary))
    with pytest.raises(GraphError):
        doubly_periodic_lags(sys_, N1, 5)


def test_rotwave_residual_and_relations(rotwave):
    sys_, sol = rotwave
    assert sol.residual < 1e-10
    assert np.abs(phase_lag_residual(sys_, sol.lags, sol.Omega)).max() < 1e-10
    checks = check_rotating_wave(sys_.lattice, sol.lags)
    assert len(checks) == 4
    assert all(ck.passed for ck in checks)


def test_rotwave_core_and_symmetry(rotwave):
    sys_, sol = rotwave
    lat = sys_.lattice
    lag = {p: sol.lags[lat.index(p)] for p in [(1, 1), (1, 0), (0, 0), (0, 1)]}
    assert wrap_phase(lag[(1, 1)]) == pytest.approx(0.0, abs=1e-12)
    assert wrap_phase(lag[(1, 0)] - np.pi / 2) == pytest.approx(0.0, abs=1e-12)
    assert wrap_phase(lag[(0, 0)] - np.pi) == pytest.approx(0.0, abs=1e-12)
    assert wrap_phase(lag[(0, 1)] + np.pi / 2) == pytest.approx(0.0, abs=1e-12)
    # reflection (i, j) -> (j, i) negates the lag
    for p in [(5, 2), (8, 3), (4, -2)]:
        a, b = sol.lags[lat.index(p)], sol.lags[lat.index(p[::-1])]
        assert wrap_phase(a + b) == pytest.approx(0.0, abs=1e-12)


def test_rotwave_core_edges_have_zero_weight(rotwave):
    sys_, sol = rotwave
    for u, v in core_edges(sys_.lattice):
        assert abs(np.cos(sol.lags[u] - sol.lags[v])) < 1e-12


def test_rotwave_interior_weights_positive(rotwave):
    sys_, sol = rotwave
    lat = sys_.lattice
    nb = sys_.neighborhoods
    w = np.cos(sol.lags[nb.indices] - sol.lags[nb.rows])
    core = {x for e in core_edges(lat) for x in e}
    deep = lat.depth() >= 2
    mask = deep[nb.rows] & deep[nb.indices] & ~(np.isin(nb.rows, list(core)) & np.isin(nb.indices, list(core)))
    assert w[mask].min() > 0.1 and w[mask].max() <= 1.0


def test_rotwave_requires_even_free_square():
    with pytest.raises(GraphError):
        build_family("rotwave", extent=11)
    sys_ = PhaseSystem.on_lattice(Lattice((10, 10), "torus"))
    with pytest.raises(GraphError):
        rotating_wave_lags(sys_)


def test_chain_builds_range_n():
    sys_, sol = build_family("chain", extent=21, n_range=2)
    assert sys_.neighborhoods.max_degree == 4
    assert sol.family == "chain"


def test_unknown_family():
    with pytest.raises(GraphError):
        build_family("spiral")


def test_lag_csv_shape():
    sys_, sol = build_family("trivial", extent=5)
    lines = lag_field_csv(sys_.lattice, sol.lags).strip().splitlines()
    assert lines[0].split(",")[:2] == ["i", "j"]
    assert len(lines) == 26
