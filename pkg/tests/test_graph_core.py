import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phaselock.errors import GraphError
from phaselock.graph_core import (
    Lattice,
    Neighborhoods,
    WeightedGraph,
    apply_laplacian,
    ball,
    ball_volume,
    build_lattice_graph,
    graph_metric,
    lp_norm,
    q_form,
)


def _nx_graph(g):
    h = nx.Graph()
    h.add_nodes_from(range(g.n_vertices))
    u, v, w = g.edges()
    h.add_weighted_edges_from(zip(u.tolist(), v.tolist(), w.tolist()))
    return h


def test_lattice_coordinates_are_centred():
    lat = Lattice((5, 4))
    assert lat.lower == (-2, -1)
    assert lat.n_vertices == 20
    assert tuple(lat.coords[lat.origin]) == (0, 0)
    assert lat.index((2, 2)) == 19


def test_lattice_rejects_bad_input():
    with pytest.raises(GraphError):
        Lattice((2, 5))
    with pytest.raises(GraphError):
        Lattice((5, 5), boundary="mobius")
    with pytest.raises(GraphError):
        Lattice((5, 5)).index((3, 0))


def test_torus_index_wraps():
    lat = Lattice((5, 5), "torus")
    assert lat.index((3, 0)) == lat.index((-2, 0))


def test_unit_torus_is_four_regular(torus11):
    assert torus11.n_edges == 2 * 121
    assert np.all(torus11.measure == 4.0)
    assert torus11.is_connected()
    assert not torus11.has_loops


def test_free_lattice_measures(free11):
    m = free11.measure.reshape(11, 11)
    assert m[0, 0] == 2 and m[0, 5] == 3 and m[5, 5] == 4
    assert free11.n_edges == 2 * 11 * 10


def test_weights_are_mirrored_bitwise():
    g = build_lattice_graph(Lattice((7, 7)), weight_fn=lambda a, b: 0.1 + abs(a[0] * b[1]) / 7.0)
    a = g.adjacency
    assert (a != a.T).nnz == 0


def test_weighted_graph_rejects_bad_edges():
    with pytest.raises(GraphError):
        WeightedGraph(3, [0], [1], [-1.0])
    with pytest.raises(GraphError):
        WeightedGraph(3, [0, 1], [1, 0], [1.0, 1.0])
    with pytest.raises(GraphError):
        WeightedGraph(3, [0], [5], [1.0])
    with pytest.raises(GraphError):
        WeightedGraph(3, [0], [1], [np.nan])


def test_disconnected_lattice_graph_refused():
    with pytest.raises(GraphError):
        build_lattice_graph(Lattice((5, 5)), weight_fn=lambda a, b: 0.0 if a[0] == 0 or b[0] == 0 else 1.0)


def test_loops_count_in_measure_not_in_laplacian():
    g = WeightedGraph(2, [0, 0, 1], [1, 0, 1], [1.0, 2.0, 0.5])
    assert np.allclose(g.measure, [3.0, 1.5])
    L = g.laplacian_matrix().toarray()
    assert np.allclose(L, [[-1 / 3, 1 / 3], [2 / 3, -2 / 3]])
    assert np.allclose(apply_laplacian(g, [1.0, 1.0]), 0.0)


def test_json_round_trip(free11):
    back = WeightedGraph.from_json(free11.to_json())
    assert back.n_vertices == free11.n_vertices
    assert (back.adjacency != free11.adjacency).nnz == 0
    assert np.array_equal(back.coords, free11.coords)


def test_metric_matches_networkx(free11):
    h = _nx_graph(free11)
    ref = nx.single_source_shortest_path_length(h, 0)
    d = free11.distances_from(0)
    assert all(d[k] == v for k, v in ref.items())
    assert graph_metric(free11, 0, 120) == 20


def test_ball_volume_closed_form_on_z2():
    g = build_lattice_graph(Lattice((41, 41), "torus"))
    v = g.index_of((0, 0))
    for r in (1, 3, 7):
        assert len(ball(g, v, r)) == 2 * r * r + 2 * r + 1
        assert ball_volume(g, v, r) == 4 * (2 * r * r + 2 * r + 1)


def test_range_two_chain_neighbours():
    lat = Lattice((9,))
    nb = lat.neighborhoods("range", 2)
    assert list(nb.neighbors(lat.origin)) == [2, 3, 5, 6]
    assert nb.is_symmetric()


def test_neighborhoods_from_mapping_checks_symmetry():
    nb = Neighborhoods.from_mapping({0: [1], 1: [0, 2], 2: [1]})
    assert nb.is_symmetric()
    with pytest.raises(GraphError):
        q_form(np.zeros(3), Neighborhoods.from_mapping({0: [1], 1: [2], 2: []}))


@pytest.mark.parametrize("p", [1, 2, 3.5, np.inf, "inf"])
def test_lp_norm_matches_numpy(p, rng):
    x = rng.normal(size=50)
    ref = np.linalg.norm(x, np.inf if p == "inf" else p)
    assert lp_norm(x, p) == pytest.approx(ref, rel=1e-13)


def test_lp_norm_rejects_small_p():
    with pytest.raises(ValueError):
        lp_norm([1.0], 0.5)


def test_q_form_hand_value():
    nb = Neighborhoods.from_mapping({0: [1], 1: [0, 2], 2: [1]})
    assert q_form([0.0, 1.0, 3.0], nb) == 2 * (1 + 4)


def test_q_form_parallelogram_bound_attained_on_even_torus():
    lat = Lattice((10, 10), "torus")
    nb = lat.neighborhoods()
    x = np.where(lat.coords.sum(axis=1) % 2 == 0, 1.0, -1.0)
    D = nb.max_degree
    assert q_form(x, nb) == pytest.approx(4 * D * x @ x)
    assert q_form(x, nb) > 2 * D * x @ x


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=25, max_size=25))
def test_q_form_bounded_by_four_d(values):
    nb = Lattice((5, 5)).neighborhoods()
    x = np.asarray(values)
    assert q_form(x, nb) <= 4 * nb.max_degree * x @ x * (1 + 1e-12) + 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 12), st.integers(3, 12), st.sampled_from(["free", "torus"]))
def test_laplacian_kills_constants(n1, n2, boundary):
    g = build_lattice_graph(Lattice((n1, n2), boundary))
    assert np.allclose(apply_laplacian(g, np.ones(g.n_vertices)), 0.0, atol=1e-14)
