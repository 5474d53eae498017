"""Command-line entry point: ``isacwk <subcommand> [flags]``.

Exit codes: 0 success, 1 solver divergence or a failed check, 2 bad
arguments. ``ISACWK_LOG`` sets the log level (e.g. ``DEBUG``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import secrets
import sys
from pathlib import Path

import numpy as np

from .admm import DivergenceError, SolverConfig, db_to_linear, solve
from .experiments import ExperimentSpec, emit, run
from .io import read_matrix, write_matrix, write_table_csv
from .metrics import evaluate, papr
from .model import Scenario, WaveformFrame, make_scenario, reference_chirp
from .oracle import PARETO_COLUMNS, pareto_sweep
from .projections import InfeasibleError
from .robust import RobustConfig, robust_solve

log = logging.getLogger("isacwk")

CONSTELLATIONS = ("qpsk", "16qam", "64qam", "256qam")
FEAS_TOL = 1e-6


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _scenario_flags(p: argparse.ArgumentParser, seed_required: bool = False) -> None:
    p.add_argument("--n", type=_positive_int, default=4, help="transmit antennas N")
    p.add_argument("--k", type=_positive_int, default=2, help="users K")
    p.add_argument("--l", type=_positive_int, default=20, help="samples per frame L")
    p.add_argument("--constellation", choices=CONSTELLATIONS, default="qpsk")
    p.add_argument("--chirp", choices=("lfm", "mseq"), default="lfm")
    p.add_argument("--seed", type=int, default=None, help="scenario seed (printed when omitted)")


def _eta_flags(p: argparse.ArgumentParser, required: bool = True, multiple: bool = False) -> None:
    g = p.add_mutually_exclusive_group(required=required)
    nargs = "+" if multiple else None
    g.add_argument("--eta", type=float, nargs=nargs, help="PAPR cap, linear")
    g.add_argument("--eta-db", type=float, nargs=nargs, help="PAPR cap in dB")


def _solver_flags(p: argparse.ArgumentParser) -> None:
    _eta_flags(p)
    p.add_argument("--rho", type=float, default=0.1, help="ADMM penalty")
    p.add_argument("--epsilon", type=float, required=True, help="similarity radius")
    p.add_argument("--max-iter", type=_positive_int, default=1000)
    p.add_argument("--tol", type=float, default=1e-12, help="drift tolerance for early exit")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="isacwk", description="Low-PAPR dual-function waveform design")
    sub = ap.add_subparsers(dest="command", required=True)

    d = sub.add_parser("design", help="design one waveform")
    _scenario_flags(d)
    _solver_flags(d)
    d.add_argument("--out", type=Path, help="waveform file (.csv or .bin)")
    d.add_argument("--diagnostics", type=Path, help="per-iteration diagnostics CSV")
    d.add_argument("--format", choices=("csv", "json"), default="csv", help="summary style on stdout")

    r = sub.add_parser("robust-design", help="design under a norm-bounded channel error")
    _scenario_flags(r)
    _solver_flags(r)
    sg = r.add_mutually_exclusive_group(required=True)
    sg.add_argument("--sigma-delta", type=float, help="error norm bound, linear")
    sg.add_argument("--sigma-delta-db", type=float, help="error norm bound in dB (power ratio)")
    r.add_argument("--out", type=Path)
    r.add_argument("--diagnostics", type=Path)
    r.add_argument("--format", choices=("csv", "json"), default="csv")

    e = sub.add_parser("experiment", help="run an experiment spec file")
    e.add_argument("spec", type=Path, help="YAML or JSON spec")
    e.add_argument("--trials", type=_positive_int, help="override the spec's trial count")
    e.add_argument("--seed", type=int, help="override the spec's base seed")
    e.add_argument("--jobs", type=_positive_int, default=1)
    e.add_argument("--out", type=Path, required=True)
    e.add_argument("--format", choices=("csv", "json"), default="csv")
    e.add_argument("--plot-data", action="store_true", help="also write long-format plot tables")

    m = sub.add_parser("metrics", help="report metrics of a waveform file")
    m.add_argument("--in", dest="infile", type=Path, required=True)
    m.add_argument("--chirp", choices=("lfm", "mseq"), default="lfm")
    m.add_argument("--k", type=_positive_int, help="users; with --seed regenerates the design scenario")
    m.add_argument("--constellation", choices=CONSTELLATIONS, default="qpsk")
    m.add_argument("--seed", type=int)
    _eta_flags(m, required=False)
    m.add_argument("--epsilon", type=float, help="similarity radius to re-check")
    m.add_argument("--format", choices=("csv", "json"), default="json")

    pa = sub.add_parser("pareto", help="MUI versus similarity tradeoff fronts")
    _scenario_flags(pa)
    _eta_flags(pa, multiple=True)
    pa.add_argument("--weights", type=_positive_int, default=32, help="log-spaced weight count")
    pa.add_argument("--out", type=Path, required=True)
    pa.add_argument("--format", choices=("csv", "json"), default="csv")
    return ap


def _eta_value(args) -> float | list | None:
    if args.eta is not None:
        return args.eta
    if args.eta_db is not None:
        if isinstance(args.eta_db, list):
            return [db_to_linear(v) for v in args.eta_db]
        return db_to_linear(args.eta_db)
    return None


def _seed(args) -> int:
    if args.seed is None:
        args.seed = secrets.randbelow(2**31)
        print(f"seed: {args.seed}", file=sys.stderr)
    return args.seed


def _config(args) -> SolverConfig:
    try:
        return SolverConfig(eta=_eta_value(args), epsilon=args.epsilon, rho=args.rho,
                            max_iter=args.max_iter, primal_tol=args.tol)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _summary(diag, metrics, fmt: str) -> str:
    fields = {
        "objective_db": float(10 * np.log10(max(diag.final_objective, 1e-300))),
        "papr_db": metrics.papr_db,
        "similarity": metrics.similarity_dist,
        "iterations": diag.iterations,
        "stop": diag.stop_reason,
    }
    if fmt == "json":
        return json.dumps(fields)
    return (f"objective_db={fields['objective_db']:.3f} papr_db={fields['papr_db']:.4f} "
            f"similarity={fields['similarity']:.6f} iterations={fields['iterations']} stop={fields['stop']}")


def _cmd_design(args, robust: bool) -> int:
    cfg = _config(args)
    seed = _seed(args)
    try:
        sc = make_scenario(args.n, args.k, args.l, args.constellation, args.chirp, seed=seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if robust:
        sigma = args.sigma_delta if args.sigma_delta is not None else db_to_linear(args.sigma_delta_db)
        try:
            rc = RobustConfig(cfg, sigma)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        wf, diag, met = robust_solve(sc, rc)
    else:
        wf, diag, met = solve(sc, cfg)
    if args.out:
        write_matrix(args.out, wf.entries)
    if args.diagnostics:
        diag.write_csv(args.diagnostics)
    print(_summary(diag, met, args.format))
    return 0


def _cmd_metrics(args) -> int:
    X = read_matrix(args.infile)
    wf = WaveformFrame(X)
    N, L = X.shape
    x0 = reference_chirp(args.chirp, N, L)
    report = {
        "norm": wf.norm(),
        "papr_linear": papr(wf),
        "papr_db": float(10 * np.log10(papr(wf))),
        "similarity_dist": float(np.linalg.norm(wf.x - x0.x)),
    }
    if args.k is not None and args.seed is not None:
        sc = make_scenario(N, args.k, L, args.constellation, args.chirp, seed=args.seed)
        report.update(evaluate(sc, wf).as_dict())
    eta = _eta_value(args)
    checks = {"unit_norm": abs(report["norm"] - 1.0) <= FEAS_TOL}
    if eta is not None:
        if eta < 1:
            raise UsageError("eta must be >= 1")
        checks["papr"] = report["papr_linear"] <= eta * (1 + FEAS_TOL)
    if args.epsilon is not None:
        checks["similarity"] = report["similarity_dist"] <= args.epsilon + FEAS_TOL
    report["feasible"] = all(checks.values())
    report["checks"] = checks
    if args.format == "json":
        print(json.dumps(report, sort_keys=True))
    else:
        print(",".join(f"{k}={v}" for k, v in sorted(report.items()) if not isinstance(v, (list, dict))))
    return 0 if report["feasible"] else 1


def _cmd_experiment(args) -> int:
    try:
        spec = ExperimentSpec.load(args.spec)
        over = spec.to_mapping()
        if args.trials is not None:
            over["trials"] = args.trials
        if args.seed is not None:
            over["seed"] = args.seed
        spec = ExperimentSpec.from_mapping(over)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"{args.spec}: {exc}") from exc
    table = run(spec, jobs=args.jobs)
    emit(table, args.out, args.format, spec=spec, plot_data=args.plot_data)
    checks = table.check_results()
    for label, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'} {label}")
    print(f"{spec.kind.value}: {len(table.rows)} rows, {spec.trials} trials -> {args.out}")
    return 0 if all(ok for _, ok in checks) else 1


def _cmd_pareto(args) -> int:
    seed = _seed(args)
    etas = _eta_value(args)
    if any(e < 1 for e in etas):
        raise UsageError("eta must be >= 1")
    sc: Scenario = make_scenario(args.n, args.k, args.l, args.constellation, args.chirp, seed=seed)
    weights = np.logspace(-4, 4, args.weights)
    fronts = pareto_sweep(sc, etas, weights)
    rows = [[f.label, f.eta if f.eta is not None else float("nan"), *r] for f in fronts for r in f.rows()]
    if args.format == "csv":
        write_table_csv(args.out, ["front", "eta", *PARETO_COLUMNS], rows)
    else:
        rows = [[f.label, f.eta, *r] for f in fronts for r in f.rows()]  # unclipped eta as null
        args.out.write_text(json.dumps({"columns": ["front", "eta", *PARETO_COLUMNS], "rows": rows}, default=float))
    print(f"pareto: {len(fronts)} fronts, {len(rows)} points -> {args.out}")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("ISACWK_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "design":
            return _cmd_design(args, robust=False)
        if args.command == "robust-design":
            return _cmd_design(args, robust=True)
        if args.command == "metrics":
            return _cmd_metrics(args)
        if args.command == "experiment":
            return _cmd_experiment(args)
        return _cmd_pareto(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"isacwk: error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"isacwk: solver diverged: {exc}", file=sys.stderr)
        return 1
    except InfeasibleError as exc:
        print(f"isacwk: infeasible: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"isacwk: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
