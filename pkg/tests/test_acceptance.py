"""Acceptance criteria, each at its stated tolerance.

Every test prints one ``criterion N: PASS|FAIL ...`` line (also repeated in
the pytest terminal summary) and then asserts the verdict.
"""
import time

import numpy as np
import pytest

from phaselock.cli import main
from phaselock.experiments import (
    StabilityExperimentConfig,
    check_q_bound,
    default_radii,
    run_stability_experiment,
    verify_integral_lemma,
    verify_remainder_bound,
)
from phaselock.graph_core import Lattice, build_lattice_graph, lp_norm
from phaselock.heat_kernel import (
    empirical_distribution,
    fit_decay,
    operator_norms,
    semigroup_orbit,
    transition_rows,
    tv_bounds,
    tv_distance,
)
from phaselock.linearization import linearize
from phaselock.property_check import central_vertices, check_vg
from phaselock.solutions import build_family, check_rotating_wave, core_edges

pytestmark = pytest.mark.slow

EXTENT = 101
HEAT_WINDOW = (5.0, 50.0)


def _record(log, number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    log.append(line)
    return ok


@pytest.fixture(scope="module")
def torus():
    g = build_lattice_graph(Lattice((EXTENT, EXTENT), "torus"))
    return g, g.index_of((0, 0))


@pytest.fixture(scope="module")
def torus_rows(torus):
    g, v = torus
    t0 = time.perf_counter()
    times = np.geomspace(*HEAT_WINDOW, 24)
    est = transition_rows(g, v, times)
    return times, est, time.perf_counter() - t0


def _stability(family, extent, **kw):
    t0 = time.perf_counter()
    rep = run_stability_experiment(StabilityExperimentConfig(family=family, extent=extent, eps=1e-3, **kw))
    return rep, time.perf_counter() - t0


def _slopes_ok(rep):
    linf = rep.fits["linf"]["slope"]
    l2 = rep.fits["l2"]["slope"]
    ok = abs(linf + 1.0) <= 0.15 and abs(l2 + 0.5) <= 0.10 and rep.l1_sup_ratio <= 3.0
    return ok, f"linf {linf:.4f}, l2 {l2:.4f}, sup l1 ratio {rep.l1_sup_ratio:.4f}"


def test_criterion_1_on_diagonal_decay(torus, torus_rows, acceptance_log):
    times, est, elapsed = torus_rows
    fit = fit_decay(times, est.diagonal(), HEAT_WINDOW)
    ok = abs(fit.slope + 1.0) <= 0.10 and elapsed <= 120
    assert _record(acceptance_log, 1, ok, f"p_t(v,v) slope {fit.slope:.4f} over [5, 50] ({elapsed:.1f} s)")


def test_criterion_2_l2_decay_and_log_convexity(torus, torus_rows, acceptance_log):
    g, v = torus
    times, est, _ = torus_rows
    fit = fit_decay(times, np.sqrt((est.rows ** 2).sum(axis=1)), HEAT_WINDOW)
    rng = np.random.default_rng(2)
    sources = [v] + rng.choice(g.n_vertices, 4, replace=False).tolist()
    worst = -np.inf
    for t in times:
        on = operator_norms(g, t, sources)
        worst = max(worst, on.one_to_two - np.sqrt(on.one_to_one * on.one_to_inf))
    ok = abs(fit.slope + 0.5) <= 0.10 and worst <= 0.0
    assert _record(acceptance_log, 2, ok,
                   f"||P_t delta||_2 slope {fit.slope:.4f}; max(1->2 - sqrt(1->1 * 1->inf)) = {worst:.3e}")


def test_criterion_3_conservation_and_contraction(torus, torus_rows, acceptance_log):
    g, _ = torus
    _, est, _ = torus_rows
    row_err = float(np.abs(est.row_sums - 1.0).max())
    rng = np.random.default_rng(3)
    X = rng.standard_normal((g.n_vertices, 100))
    times = np.geomspace(0.1, 100.0, 10)
    orbit = semigroup_orbit(g, X, times)
    worst = 0.0
    for p in (1, 2, np.inf):
        base = np.array([lp_norm(X[:, k], p) for k in range(100)])
        for Y in orbit:
            ratio = np.array([lp_norm(Y[:, k], p) for k in range(100)]) / base
            worst = max(worst, float(ratio.max()))
    ok = row_err <= 1e-10 and worst <= 1.0 + 1e-10
    assert _record(acceptance_log, 3, ok,
                   f"max |row sum - 1| = {row_err:.2e}; max ||P_t x||_p / ||x||_p = {worst:.12f}")


def test_criterion_4_monte_carlo_oracle(torus, acceptance_log):
    g, v = torus
    n, t = 1_000_000, 10.0
    exact = transition_rows(g, v, [t]).rows[0]
    emp = empirical_distribution(g, v, t, n, seed=20240401, workers=4)
    tv = tv_distance(emp.rows[0], exact)
    sharp, coarse = tv_bounds(exact, n)
    ok = tv <= sharp
    assert _record(acceptance_log, 4, ok,
                   f"TV {tv:.5f} vs 3-sigma multinomial bound {sharp:.5f} (coarse {coarse:.5f})")


def test_criterion_5_trivial_nonlinear_decay(acceptance_log):
    rep, elapsed = _stability("trivial", 101)
    ok, detail = _slopes_ok(rep)
    ok = ok and rep.verdict == "pass" and elapsed <= 600
    assert _record(acceptance_log, 5, ok, f"{detail}, window {tuple(round(x, 2) for x in rep.window)}"
                   f" ({elapsed:.1f} s)")


def _gate_ok(gate):
    vg = gate["vg"]
    rough = gate["rough"]
    checks = [
        abs(vg["d"] - 2.0) <= 0.05 and vg["power_law"],
        gate["delta"]["alpha"] > 0,
        gate["poincare"]["finite"],
        rough is not None and rough["passed"] and rough["a"] == 2.0 and rough["b"] == 8.0,
    ]
    detail = (f"VG d {vg['d']:.3f}, alpha {gate['delta']['alpha']:.3f}, "
              f"PI sup {gate['poincare']['sup']:.3f}, rough (2,8) {rough['passed'] if rough else None}")
    return all(checks) and gate["passed"], detail


def test_criterion_6_rotating_wave_and_periodic(acceptance_log):
    parts, ok_all = [], True
    for family, extent in (("rotwave", 100), ("periodic", 100)):
        rep, _ = _stability(family, extent)
        g_ok, g_detail = _gate_ok(rep.gate)
        s_ok, s_detail = _slopes_ok(rep)
        ok_all &= g_ok and s_ok and rep.verdict == "pass"
        parts.append(f"{family}: {g_detail}; {s_detail}")
    core, _ = _stability("rotwave", 100, source=(1, 1))
    print(f"info: rotating wave from the core vertex (1,1): linf slope {core.fits['linf']['slope']:.4f}, "
          f"l2 slope {core.fits['l2']['slope']:.4f}")
    assert _record(acceptance_log, 6, ok_all, " | ".join(parts))


def test_criterion_7_rotating_wave_construction(acceptance_log):
    system, sol = build_family("rotwave", 100)
    checks = check_rotating_wave(system.lattice, sol.lags, exclude_rings=2, tol=1e-10)
    bundle = linearize(system, sol)
    dropped = {tuple(sorted(p)) for p in bundle.dropped_pairs.tolist()}
    omitted = dropped == set(core_edges(system.lattice))
    ok = sol.residual < 1e-10 and all(c.passed for c in checks) and omitted
    worst = max(c.worst for c in checks)
    assert _record(acceptance_log, 7, ok,
                   f"residual {sol.residual:.2e}, worst relation violation {worst:.2e}, "
                   f"omitted edges {len(dropped)} (core match {omitted})")


def test_criterion_8_inequality_suite(acceptance_log):
    bundles = {"trivial": linearize(*build_family("trivial", 101)),
               "rotwave": linearize(*build_family("rotwave", 100))}
    rem = {k: verify_remainder_bound(b, n_samples=1000, delta=0.5, seed=8) for k, b in bundles.items()}
    rem_ok = all(r.violations == 0 for r in rem.values())
    q = check_q_bound(bundles["trivial"].system.neighborhoods, n_samples=1000, seed=8)
    q_ok = q.violations_2D == 0
    lemma = [verify_integral_lemma(g1, g2) for g1, g2 in ((0.5, 2.0), (1.0, 2.0))]
    lemma_ok = all(r.bounded for r in lemma)
    detail = (
        f"remainder violations {sum(r.violations for r in rem.values())}/2000; "
        f"Q <= 2D violations {q.violations_2D}/1000 (max ratio {q.max_ratio:.2f}, 2D = {2 * q.D}, "
        f"4D violations {q.violations_4D}, exact sup {q.exact_sup:.3f}); "
        f"integral lemma tail slopes {', '.join(f'{r.tail_slope:.3f}' for r in lemma)}"
    )
    assert _record(acceptance_log, 8, rem_ok and q_ok and lemma_ok, detail)


def test_criterion_9_chain_negative_control(tmp_path, acceptance_log):
    parts, ok_all = [], True
    for n in (1, 2):
        system, sol = build_family("chain", 301, n_range=n)
        g = linearize(system, sol).augmented
        centers = central_vertices(g, 5)
        vg = check_vg(g, centers, default_radii(g, centers))
        code = main(["decay", "--family", "chain", "--n", str(n), "--extent", "301",
                     "--out", str(tmp_path / f"n{n}")])
        ok = abs(vg.d - 1.0) <= 0.05 and code == 2
        ok_all &= ok
        parts.append(f"n={n}: VG d {vg.d:.3f}, exit code {code}")
    assert _record(acceptance_log, 9, ok_all, "; ".join(parts))
