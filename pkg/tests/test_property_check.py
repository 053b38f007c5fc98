import numpy as np
import pytest

from phaselock.errors import BoundaryGuardError, GraphError
from phaselock.graph_core import Lattice, WeightedGraph, build_lattice_graph
from phaselock.property_check import (
    PropertyReport,
    central_vertices,
    check_delta,
    check_rough_isometry,
    check_vg,
    edge_span,
    estimate_poincare_constant,
    guard_radius,
    poincare_sup,
)


@pytest.fixture(scope="module")
def z2():
    return build_lattice_graph(Lattice((101, 101), "torus"))


def test_guard_radius_free_and_torus():
    g = build_lattice_graph(Lattice((21, 21)))
    assert guard_radius(g, g.index_of((0, 0))) == 9
    assert guard_radius(g, g.index_of((8, 0))) == 1
    t = build_lattice_graph(Lattice((21, 21), "torus"))
    assert guard_radius(t, 0) == 9
    chain = build_lattice_graph(Lattice((41,)), edge_rule="range", n_range=3)
    assert edge_span(chain) == 3
    assert guard_radius(chain, chain.index_of((0,))) == 19 // 3


def test_vg_on_z2_near_two(z2):
    centers = central_vertices(z2, 5)
    rep = check_vg(z2, centers, [5, 10, 15, 20, 25, 30, 35, 40])
    assert rep.d == pytest.approx(2.0, abs=0.01)
    assert rep.power_law and rep.passes()
    assert rep.c1 <= rep.c2


def test_vg_literal_radius_is_biased(z2):
    centers = central_vertices(z2, 5)
    rep = check_vg(z2, centers, [5, 10, 15, 20, 25, 30, 35, 40], radius_offset=0.0)
    assert 1.85 < rep.d < 1.95


@pytest.mark.parametrize("n", [1, 2, 3])
def test_vg_on_chains_is_one(n):
    g = build_lattice_graph(Lattice((801,)), edge_rule="nearest" if n == 1 else "range", n_range=n)
    rep = check_vg(g, central_vertices(g, 5), [5, 10, 20, 40, 60, 80, 100])
    assert rep.d == pytest.approx(1.0, abs=0.05)
    assert not rep.passes(2.0)


def test_vg_input_checks(z2):
    with pytest.raises(ValueError):
        check_vg(z2, range(5), [1, 2, 3])
    with pytest.raises(ValueError):
        check_vg(z2, [0, 1], range(1, 8))
    g = build_lattice_graph(Lattice((21, 21)))
    with pytest.raises(BoundaryGuardError):
        check_vg(g, central_vertices(g, 5), range(5, 15))


def test_delta_on_unit_z2(z2):
    rep = check_delta(z2)
    assert rep.alpha == 0.25 and rep.passed
    assert rep.lower_bound == 0.25


def test_delta_counts_loops():
    g = WeightedGraph(2, [0, 0], [1, 0], [1.0, 3.0])
    rep = check_delta(g)
    assert rep.alpha == pytest.approx(0.25)


def test_poincare_two_vertex_oracle():
    g = WeightedGraph(2, [0], [1], [1.0])
    assert estimate_poincare_constant(g, 0, 1, guard=False) == pytest.approx(0.25)


def test_poincare_bounded_on_z2(z2):
    v = z2.index_of((0, 0))
    vals = [estimate_poincare_constant(z2, v, r) for r in (1, 2, 4, 8)]
    assert vals[0] == pytest.approx(1.0, rel=1e-6)
    assert all(np.isfinite(vals)) and max(vals) <= 1.0 + 1e-9
    assert vals[-1] < vals[1]


def test_poincare_guard():
    g = build_lattice_graph(Lattice((11, 11)))
    with pytest.raises(BoundaryGuardError):
        estimate_poincare_constant(g, g.index_of((0, 0)), 3)


def test_poincare_sup_table(z2):
    out = poincare_sup(z2, [z2.index_of((0, 0))], [1, 2])
    assert out["finite"] and len(out["table"]) == 2
    assert out["sup"] == max(e["C"] for e in out["table"])


def test_identity_rough_isometry(z2):
    cert = check_rough_isometry(z2, z2)
    assert cert.passed
    assert cert.b_min == 0 and cert.c_min == 1 and cert.covering_radius == 0


def test_rough_isometry_detects_stretched_metric():
    g1 = build_lattice_graph(Lattice((31, 31), "torus"))
    # drop every other vertical edge row: distances grow but stay within a factor
    g2 = build_lattice_graph(Lattice((31, 31), "torus"),
                             weight_fn=lambda a, b: 1.0 if a[1] == b[1] or a[0] % 2 == 0 else 0.0)
    cert = check_rough_isometry(g1, g2, a=1.0, b=0.0, c=10.0)
    assert not cert.distance_ok and not cert.passed
    cert2 = check_rough_isometry(g1, g2, a=2.0, b=8.0, c=10.0)
    assert cert2.passed


def test_rough_isometry_map_validation(z2):
    with pytest.raises(GraphError):
        check_rough_isometry(z2, z2, vertex_map=np.zeros(5, dtype=int))


def test_property_report_json(z2):
    rep = PropertyReport(delta=check_delta(z2))
    assert '"alpha": 0.25' in rep.to_json()
