import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm
from scipy.special import ive

from phaselock.graph_core import Lattice, WeightedGraph, build_lattice_graph
from phaselock.heat_kernel import (
    default_window,
    empirical_distribution,
    fit_decay,
    fit_gradient_decay,
    mean_squared_displacement,
    operator_norms,
    sample_ctrw,
    sample_ctrw_many,
    semigroup_apply,
    semigroup_orbit,
    sidecar_json,
    transition_row,
    transition_rows,
    tv_bounds,
    tv_distance,
)
from phaselock.linearization import linearize
from phaselock.solutions import build_family


def _torus_kernel(n, t, a, b, images=3):
    """Closed form on the n x n unit torus: images of exp(-t) I_a(t/2) I_b(t/2)."""
    ks = np.arange(-images, images + 1) * n
    ia = ive(a + ks, t / 2).sum()
    ib = ive(b + ks, t / 2).sum()
    return ia * ib


def test_torus_row_matches_bessel_closed_form():
    g = build_lattice_graph(Lattice((15, 15), "torus"))
    src = g.index_of((0, 0))
    for t in (0.7, 5.0, 30.0):
        row = transition_row(g, src, t)
        for a, b in [(0, 0), (1, 0), (3, -2), (7, 7)]:
            assert row[g.index_of((a, b))] == pytest.approx(_torus_kernel(15, t, a, b), rel=1e-9, abs=1e-15)


def test_semigroup_matches_dense_expm(rng):
    g = build_lattice_graph(Lattice((5, 6)), weight_fn=lambda a, b: 0.5 + 0.1 * abs(a[0] + b[1]))
    L = g.laplacian_matrix().toarray()
    x = rng.normal(size=30)
    for t in (0.0, 0.3, 4.0):
        assert np.allclose(semigroup_apply(g, x, t), expm(L * t) @ x, atol=1e-12)
    orbit = semigroup_orbit(g, x, [0.5, 1.0, 1.0, 3.0])
    assert np.allclose(orbit[2], expm(L) @ x, atol=1e-12)
    assert np.allclose(orbit[3], expm(3 * L) @ x, atol=1e-12)


def test_negative_time_rejected(torus11):
    with pytest.raises(ValueError):
        semigroup_apply(torus11, np.ones(121), -1.0)
    with pytest.raises(ValueError):
        semigroup_orbit(torus11, np.ones(121), [2.0, 1.0])


def test_rows_are_stochastic_and_reversible():
    g = build_lattice_graph(Lattice((7, 7)), weight_fn=lambda a, b: 1.0 + 0.5 * (a[0] > 0))
    est = transition_rows(g, 3, [0.5, 2.0, 9.0])
    assert np.allclose(est.row_sums, 1.0, atol=1e-12)
    P = np.array([transition_row(g, v, 2.0) for v in range(g.n_vertices)])
    m = g.measure
    assert np.allclose(m[:, None] * P, (m[:, None] * P).T, atol=1e-13)


def test_bundle_rows_include_loops():
    sys_, sol = build_family("trivial", extent=9)
    b = linearize(sys_, sol)
    row = transition_row(b, sys_.lattice.origin, 3.0)
    assert row.sum() == pytest.approx(1.0, abs=1e-12)
    est = transition_rows(b, sys_.lattice.origin, [1.0, 10.0])
    assert est.boundary_mass is not None and est.boundary_mass[1] > est.boundary_mass[0]


def test_ctrw_single_walk_consistent_with_batch(torus11):
    batch = sample_ctrw_many(torus11, 5, 3.0, 50, seed=9)
    assert sample_ctrw(torus11, 5, 3.0, seed=9, walk_index=17) == batch[17]


def test_ctrw_independent_of_workers_and_chunks(torus11):
    a = sample_ctrw_many(torus11, 0, 7.0, 5000, seed=1)
    b = sample_ctrw_many(torus11, 0, 7.0, 5000, seed=1, workers=3, chunk=700)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_ctrw_many(torus11, 0, 7.0, 5000, seed=2))


def test_ctrw_matches_exact_row(torus11):
    t, n = 4.0, 200_000
    exact = transition_row(torus11, 60, t)
    emp = empirical_distribution(torus11, 60, t, n, seed=3)
    sharp, coarse = tv_bounds(exact, n)
    assert sharp < coarse
    assert tv_distance(emp.rows[0], exact) <= sharp


def test_ctrw_large_time_does_not_underflow():
    g = build_lattice_graph(Lattice((5,), "torus"))
    ends = sample_ctrw_many(g, 0, 2000.0, 20000, seed=4)
    freq = np.bincount(ends, minlength=5) / 20000
    assert np.allclose(freq, 0.2, atol=0.015)


def test_msd_grows_like_t_on_z2():
    g = build_lattice_graph(Lattice((61, 61), "torus"))
    src = g.index_of((0, 0))
    ends = sample_ctrw_many(g, src, 20.0, 40000, seed=5)
    # each jump moves one lattice step, jumps arrive at unit rate
    assert mean_squared_displacement(g, src, ends) == pytest.approx(20.0, rel=0.03)


def test_tv_bound_support_argument():
    p = np.array([0.5, 0.5, 0.0])
    sharp, coarse = tv_bounds(p, 100, support=np.arange(3))
    assert sharp == pytest.approx(3 * 0.5 * 2 * 0.05)
    assert coarse == pytest.approx(3 * np.sqrt(3 / 100))


def test_fit_decay_exact_power_law():
    t = np.geomspace(1, 100, 30)
    fit = fit_decay(t, 3.0 * t ** -1.25, window=(2, 80))
    assert fit.slope == pytest.approx(-1.25, abs=1e-12)
    assert fit.constant == pytest.approx(3.0)
    assert fit.r2 == pytest.approx(1.0)
    with pytest.raises(ValueError):
        fit_decay(t, t ** -1, window=(50, 60))
    with pytest.raises(ValueError):
        fit_decay(t, -t, window=(2, 80))


def test_default_window():
    assert default_window(50) == (5.0, 100.0)
    assert default_window(50, time_scale=2.0) == (10.0, 200.0)
    with pytest.raises(ValueError):
        default_window(10)


def test_gradient_fit_degenerate_and_positive(torus11):
    g = build_lattice_graph(Lattice((41, 41), "torus"))
    v = g.index_of((0, 0))
    deg = fit_gradient_decay(g, v, v, np.arange(10), [1.0, 2.0])
    assert deg.degenerate and np.isnan(deg.eta)
    times = np.geomspace(5, 40, 10)
    fit = fit_gradient_decay(g, v, g.index_of((1, 0)), np.arange(g.n_vertices), times)
    assert 0.8 < fit.eta < 1.5


def test_operator_norms_ordering(torus11):
    on = operator_norms(torus11, 3.0, range(121))
    assert on.one_to_one == pytest.approx(1.0, abs=1e-12)
    assert on.one_to_inf <= on.one_to_two <= on.one_to_one
    assert on.one_to_two <= np.sqrt(on.one_to_one * on.one_to_inf) * (1 + 1e-12)


def test_sidecar_records_method(torus11):
    emp = empirical_distribution(torus11, 0, 1.0, 100, seed=8)
    assert '"seed": 8' in sidecar_json(emp)
    assert emp.to_csv().startswith("t,vertex,p")


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 50.0), st.integers(0, 2 ** 32))
def test_contraction_in_l1_l2_linf(t, seed):
    g = build_lattice_graph(Lattice((6, 6), "torus"))
    x = np.random.default_rng(seed).normal(size=36)
    y = semigroup_apply(g, x, t)
    for p in (1, 2, np.inf):
        assert np.linalg.norm(y, p) <= np.linalg.norm(x, p) * (1 + 1e-10)


def test_graph_without_coords_has_no_boundary_mass():
    g = WeightedGraph(3, [0, 1], [1, 2], [1.0, 1.0])
    assert transition_rows(g, 0, [1.0]).boundary_mass is None
