"""Command-line front end.

Exit codes: 0 on success, 1 on configuration or input errors, 2 when a
hypothesis gate refuses to certify decay rates.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import HypothesisGateError, PhaselockError
from .experiments import (
    StabilityExperimentConfig,
    default_radii,
    manifest,
    run_stability_experiment,
    spectrum_probe,
)
from .graph_core import WeightedGraph
from .heat_kernel import (
    empirical_distribution,
    fit_decay,
    operator_norms,
    transition_rows,
    tv_bounds,
    tv_distance,
)
from .linearization import check_hypotheses, linearize
from .property_check import (
    PropertyReport,
    central_vertices,
    check_delta,
    check_rough_isometry,
    check_vg,
    poincare_sup,
)
from .solutions import FAMILIES, build_family, core_edges, lag_field_csv

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(PhaselockError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _ints(text):
    return [int(x) for x in str(text).split(",") if x.strip()]


def _floats(text):
    return [float(x) for x in str(text).split(",") if x.strip()]


def _add_common(p):
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="TOML file; command-line flags override it")
    p.add_argument("--workers", type=int, default=1)


def _add_family(p, family="trivial", extent=101, families=FAMILIES):
    p.add_argument("--family", choices=families, default=family)
    if extent is not None:
        p.add_argument("--extent", type=int, default=extent)
    p.add_argument("--boundary", choices=("free", "torus"), default=None)
    p.add_argument("--N1", type=int, default=5)
    p.add_argument("--N2", type=int, default=5)
    p.add_argument("--n", dest="n_range", type=int, default=1, help="coupling range for the chain")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="phaselock", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="build a phase-locked solution")
    _add_common(p)
    _add_family(p)

    p = sub.add_parser("linearize", help="induced graph and hypothesis audit")
    _add_common(p)
    _add_family(p)

    p = sub.add_parser("heat", help="heat-kernel rows, decay fits and Monte Carlo check")
    _add_common(p)
    _add_family(p)
    p.add_argument("--source", type=_ints, default=None, help="source coordinate, e.g. 0,0")
    p.add_argument("--t-min", dest="t_min", type=float, default=5.0)
    p.add_argument("--t-max", dest="t_max", type=float, default=50.0)
    p.add_argument("--num", type=int, default=20)
    p.add_argument("--mc", type=int, default=0, help="number of Monte Carlo walks (0: skip)")
    p.add_argument("--mc-t", dest="mc_t", type=float, default=10.0)

    p = sub.add_parser("check", help="VG, Δ, Poincaré and rough-isometry audit of a graph")
    _add_common(p)
    _add_family(p)
    p.add_argument("--graph", help="graph JSON; default: augmented induced graph of --family")
    p.add_argument("--vg", action="store_true")
    p.add_argument("--delta", action="store_true")
    p.add_argument("--pi", action="store_true")
    p.add_argument("--rough-to", dest="rough_to", help="second graph JSON for a rough-isometry check")
    p.add_argument("--radii", type=_ints, default=None)
    p.add_argument("--pi-radii", dest="pi_radii", type=_ints, default=[2, 4])
    p.add_argument("--centers", type=int, default=5)

    p = sub.add_parser("rotwave", help="rotating-wave solution and its invariants")
    _add_common(p)
    p.add_argument("--extent", type=int, default=100)

    p = sub.add_parser("periodic", help="doubly periodic solution on a torus")
    _add_common(p)
    p.add_argument("--extent", type=int, default=100)
    p.add_argument("--N1", type=int, default=5)
    p.add_argument("--N2", type=int, default=5)

    p = sub.add_parser("decay", help="nonlinear stability experiment")
    _add_common(p)
    _add_family(p)
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--init", dest="initializer", choices=("indicator", "gaussian", "random"),
                   default="indicator")
    p.add_argument("--source", type=_ints, default=None)
    p.add_argument("--keep-mean", dest="remove_mean", action="store_false")
    p.add_argument("--t-end", dest="t_end", type=float, default=None)
    p.add_argument("--window", type=_floats, default=None, help="fit window lo,hi")
    p.add_argument("--force", action="store_true", help="run even when the gate refuses")

    p = sub.add_parser("probe", help="extreme eigenvalues of the linearization")
    _add_common(p)
    _add_family(p, extent=None)
    p.add_argument("--extents", type=_ints, default=[11, 21, 41])
    return parser


def _load_config(path: str, command: str) -> dict:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    flat = {k: v for k, v in data.items() if not isinstance(v, dict)}
    flat.update(data.get(command, {}))
    return {k.replace("-", "_"): v for k, v in flat.items()}


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = _load_config(args.config, args.command)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(cfg) - known - {"config"})
        if unknown:
            raise ConfigError(f"unknown config keys for '{args.command}': {', '.join(unknown)}")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str):
    path.write_text(text, encoding="utf-8")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _family(args):
    ext = args.extent
    if args.family == "rotwave" and ext % 2:
        ext += 1
    return build_family(args.family, ext, args.boundary, args.N1, args.N2, args.n_range)


# --- commands ------------------------------------------------------------------

def cmd_solve(args) -> int:
    out = _outdir(args)
    system, sol = _family(args)
    _write(out / "solution.json", _dump(sol.to_dict(system) | {"seed": args.seed}))
    _write(out / "lags.csv", lag_field_csv(system.lattice, sol.lags))
    print(f"{args.family}: {system.n_vertices} oscillators, residual {sol.residual:.3e}, "
          f"{sol.iterations} Newton steps")
    return 0


def cmd_linearize(args) -> int:
    out = _outdir(args)
    system, sol = _family(args)
    bundle = linearize(system, sol)
    hyp = check_hypotheses(system, sol, bundle)
    _write(out / "bundle.json", _dump(bundle.to_dict()))
    _write(out / "hypotheses.json", _dump(hyp.to_dict() | {"seed": args.seed}))
    print(f"M = {bundle.M:.6g}, normalization {bundle.normalization:.6g}, loops {bundle.loops}, "
          f"D = {hyp.max_degree}, hypotheses {'pass' if hyp.passed else 'FAIL'}")
    return 0


def cmd_heat(args) -> int:
    out = _outdir(args)
    system, sol = _family(args)
    bundle = linearize(system, sol)
    lat = system.lattice
    src = lat.index(tuple(args.source)) if args.source else system.default_pin
    times = np.geomspace(args.t_min, args.t_max, args.num)
    est = transition_rows(bundle, src, times)
    diag = est.diagonal()
    l2 = np.sqrt((est.rows ** 2).sum(axis=1))
    lines = ["t,p_tt,l2,row_sum"]
    lines += [f"{t!r},{d!r},{n!r},{s!r}" for t, d, n, s in
              zip(times.tolist(), diag.tolist(), l2.tolist(), est.row_sums.tolist())]
    _write(out / "kernel.csv", "\n".join(lines) + "\n")
    fits = {"diagonal": fit_decay(times, diag, name="p_t(v,v)").to_dict(),
            "l2": fit_decay(times, l2, name="||P_t delta||_2").to_dict()}
    norms = [operator_norms(bundle, t, [src]).to_dict() for t in times[:: max(1, len(times) // 5)]]
    report = {"source": src, "seed": args.seed, "fits": fits, "norms": norms,
              "max_row_sum_error": float(np.abs(est.leak).max())}
    if args.mc:
        mc = empirical_distribution(bundle, src, args.mc_t, args.mc, args.seed, workers=args.workers)
        exact = transition_rows(bundle, src, [args.mc_t]).rows[0]
        sharp, coarse = tv_bounds(exact, args.mc, support=np.flatnonzero(exact > 1e-15))
        tv = tv_distance(mc.rows[0], exact)
        report["monte_carlo"] = {"tv": tv, "bound_3sigma": sharp, "bound_support": coarse,
                                 "passed": tv <= sharp}
        _write(out / "mc.json", _dump(mc.sidecar()))
        keep = np.flatnonzero((exact > 1e-15) | (mc.rows[0] > 0))
        rows = ["vertex,empirical,exact"] + [f"{v},{mc.rows[0][v]!r},{exact[v]!r}" for v in keep.tolist()]
        _write(out / "mc.csv", "\n".join(rows) + "\n")
    _write(out / "heat.json", _dump(report))
    print(f"p_t(v,v) slope {fits['diagonal']['slope']:.4f}, l2 slope {fits['l2']['slope']:.4f}")
    if args.mc:
        m = report["monte_carlo"]
        print(f"Monte Carlo TV {m['tv']:.4g} vs 3-sigma bound {m['bound_3sigma']:.4g}")
    return 0


def cmd_check(args) -> int:
    out = _outdir(args)
    if args.graph:
        try:
            g = WeightedGraph.from_json(Path(args.graph).read_text())
        except OSError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        system, sol = _family(args)
        g = linearize(system, sol).augmented
    if not (args.vg or args.delta or args.pi or args.rough_to):
        args.vg = args.delta = args.pi = True
    centers = central_vertices(g, args.centers)
    rep = PropertyReport()
    if args.vg:
        radii = args.radii or default_radii(g, centers)
        rep.vg = check_vg(g, centers, radii)
    if args.delta:
        rep.delta = check_delta(g)
    if args.pi:
        rep.poincare = poincare_sup(g, centers, args.pi_radii)
    if args.rough_to:
        g2 = WeightedGraph.from_json(Path(args.rough_to).read_text())
        rep.rough = check_rough_isometry(g, g2, seed=args.seed)
    _write(out / "property_report.json", _dump(rep.to_dict() | {"seed": args.seed}))
    parts = []
    if rep.vg:
        parts.append(f"VG d = {rep.vg.d:.4f} (R^2 {rep.vg.r2:.5f})")
    if rep.delta:
        parts.append(f"alpha = {rep.delta.alpha:.4g}")
    if rep.poincare:
        parts.append(f"PI sup = {rep.poincare['sup']:.4g}")
    if rep.rough:
        parts.append(f"rough isometry {'pass' if rep.rough.passed else 'FAIL'}")
    print(", ".join(parts))
    return 0


def cmd_rotwave(args) -> int:
    out = _outdir(args)
    system, sol = build_family("rotwave", args.extent)
    bundle = linearize(system, sol)
    dropped = sorted(tuple(int(x) for x in p) for p in bundle.dropped_pairs)
    core = sorted(core_edges(system.lattice))
    info = {"extent": args.extent, "residual": sol.residual, "iterations": sol.iterations,
            "invariants": sol.info["invariants"], "dropped_edges": dropped,
            "dropped_are_core": dropped == core, "seed": args.seed}
    _write(out / "rotwave.json", _dump(info))
    _write(out / "rotwave_lags.csv", lag_field_csv(system.lattice, sol.lags))
    ok = all(c["passed"] for c in sol.info["invariants"])
    print(f"rotating wave extent {args.extent}: residual {sol.residual:.3e}, relations "
          f"{'hold' if ok else 'FAIL'}, dropped edges {len(dropped)} (core: {dropped == core})")
    return 0


def cmd_periodic(args) -> int:
    out = _outdir(args)
    system, sol = build_family("periodic", args.extent, "torus", args.N1, args.N2)
    bundle = linearize(system, sol)
    info = {"extent": args.extent, "N1": args.N1, "N2": args.N2, "residual": sol.residual,
            "measure": float(bundle.base.measure[0]), "uniform_measure": bundle.uniform_measure,
            "seed": args.seed}
    _write(out / "periodic.json", _dump(info))
    _write(out / "periodic_lags.csv", lag_field_csv(system.lattice, sol.lags))
    print(f"doubly periodic ({args.N1}, {args.N2}) on {args.extent}^2 torus: residual {sol.residual:.3e}, "
          f"m(v) = {info['measure']:.6f}")
    return 0


def cmd_decay(args) -> int:
    out = _outdir(args)
    cfg = StabilityExperimentConfig(
        family=args.family, extent=args.extent, boundary=args.boundary, N1=args.N1, N2=args.N2,
        n_range=args.n_range, eps=args.eps, initializer=args.initializer,
        source=tuple(args.source) if args.source else None, remove_mean=args.remove_mean,
        t_end=args.t_end, fit_window=tuple(args.window) if args.window else None,
        seed=args.seed, enforce_gate=not args.force,
    )
    if cfg.family == "rotwave" and cfg.extent % 2:
        cfg.extent += 1
    report = run_stability_experiment(cfg)
    _write(out / "decay_report.json", report.to_json(sort_keys=True) + "\n")
    _write(out / "trajectory.csv", report.trajectory_csv)
    _write(out / "manifest.json", _dump(manifest(cfg, ["decay_report.json", "trajectory.csv"])))
    f = report.fits
    print(f"{cfg.family}: linf slope {f['linf']['slope']:.4f} (target {report.targets['linf']:.3f}), "
          f"l2 slope {f['l2']['slope']:.4f} (target {report.targets['l2']:.3f}), "
          f"sup l1 ratio {report.l1_sup_ratio:.4f}, verdict {report.verdict}")
    return 0


def cmd_probe(args) -> int:
    out = _outdir(args)
    rows = []
    for ext in args.extents:
        boundary = args.boundary or "torus"
        system, sol = build_family(args.family, ext, boundary, args.N1, args.N2, args.n_range)
        rows.append({"extent": ext} | spectrum_probe(linearize(system, sol)).to_dict())
    lines = ["extent,n_vertices,lambda_min,lambda_max,gap"]
    lines += [f"{r['extent']},{r['n_vertices']},{r['lambda_min']!r},{r['lambda_max']!r},{r['gap']!r}" for r in rows]
    _write(out / "spectrum.csv", "\n".join(lines) + "\n")
    for r in rows:
        print(f"extent {r['extent']}: spectrum [{r['lambda_min']:.4f}, {r['lambda_max']:.2e}], gap {r['gap']:.4g}")
    return 0


COMMANDS = {
    "solve": cmd_solve,
    "linearize": cmd_linearize,
    "heat": cmd_heat,
    "check": cmd_check,
    "rotwave": cmd_rotwave,
    "periodic": cmd_periodic,
    "decay": cmd_decay,
    "probe": cmd_probe,
}


def main(argv=None) -> int:
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
        return COMMANDS[args.command](args)
    except HypothesisGateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (PhaselockError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
