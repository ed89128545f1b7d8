"""Command-line front-end.

Exit codes: 0 success or certified, 1 solver failure, 2 invalid input,
3 uncertified recovery or certificate.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import List, Optional

import numpy as np

from . import solver as so
from .apps import (Customer, NewsvendorSpec, RevenueSpec, argmin_row, newsvendor_cost, newsvendor_problem,
                   newsvendor_sweep, revenue_problem, revenue_sweep, rows_to_csv)
from .compile import DegreeOverflow, compile
from .model import MomentProblem, PiecewiseSosConvex, ValidationError
from .oracle import OracleInfeasible, oracle_value, refinement_study, study_csv
from .pipeline import BACKENDS, solve_moment_problem
from .sdpa import export_sdpa
from .soscert import PiecewiseNonnegCertificate, certify_piecewise_nonneg, verify_piecewise
from .support import ProjectedSpectrahedron

EXIT_OK, EXIT_SOLVER, EXIT_INPUT, EXIT_UNCERTIFIED = 0, 1, 2, 3


class InputError(Exception):
    pass


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def _load_problem(path, strict: bool) -> MomentProblem:
    try:
        problem = MomentProblem.from_json(_load_json(path))
        problem.validate("strict" if strict else "none")
    except (ValidationError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    return problem


def _print_solution(res, out, label="value"):
    print(f"status: {res.status}", file=out)
    print(f"{label}: {res.value:.10g}", file=out)
    if res.report is not None:
        print(f"measure: {res.report.measure.format()}", file=out)
        print(f"certified: {res.report.certified}", file=out)
        for why in res.report.reasons:
            print(f"  - {why}", file=out)


def _finish(res, args) -> int:
    if args.report and res.report is not None:
        payload = res.report.to_json()
        payload["status"] = res.status
        payload["value"] = res.value
        _write(args.report, json.dumps(payload, indent=1) + "\n")
    if not res.dual.optimal:
        return EXIT_SOLVER
    if res.report is None or not res.report.certified:
        return EXIT_UNCERTIFIED
    return EXIT_OK


# ----------------------------------------------------------------------
# subcommands


def cmd_solve(args, out) -> int:
    problem = _load_problem(args.problem, args.strict_validate)
    res = solve_moment_problem(problem, backend=args.solver, tol=args.tol)
    _print_solution(res, out)
    if res.primal is not None and res.primal.optimal:
        print(f"sos_value: {res.sos_value:.10g}", file=out)
    if res.error:
        print(f"error: {res.error}", file=out)
    return _finish(res, args)


def cmd_certify(args, out) -> int:
    try:
        pw = PiecewiseSosConvex.from_json(_load_json(args.piecewise))
        omega = ProjectedSpectrahedron.from_json(_load_json(args.support))
    except (ValidationError, ValueError, KeyError) as exc:
        raise InputError(str(exc)) from exc
    result = certify_piecewise_nonneg(pw, omega, tol=args.tol_res, seed=args.seed,
                                      check_convexity=args.strict_validate)
    if result:
        print("certified: True", file=out)
        print("margins: " + " ".join(f"{t:.6g}" for t in result.margins), file=out)
        if args.report:
            _write(args.report, result.dumps() + "\n")
        return EXIT_OK
    print("certified: False", file=out)
    print(f"reason: {result.reason} ({result.message})", file=out)
    if result.witness is not None:
        pt = ",".join(f"{x:.6g}" for x in result.witness)
        print(f"witness: ({pt}) value {result.witness_value:.6g}", file=out)
    return EXIT_SOLVER if result.reason == "numerical" else EXIT_UNCERTIFIED


def cmd_verify(args, out) -> int:
    try:
        cert = PiecewiseNonnegCertificate.from_json(_load_json(args.certificate))
    except (ValidationError, ValueError, KeyError) as exc:
        raise InputError(f"malformed certificate: {exc}") from exc
    rep = verify_piecewise(cert, tol_res=args.tol_res)
    print(f"verified: {rep.ok}", file=out)
    print(f"max_residual: {rep.max_residual:.3e}", file=out)
    print(f"min_gram_eig: {rep.min_gram_eig:.3e}", file=out)
    for line in rep.details:
        print(f"  - {line}", file=out)
    return EXIT_OK if rep.ok else EXIT_UNCERTIFIED


def _newsvendor_spec(args) -> NewsvendorSpec:
    try:
        return NewsvendorSpec(args.c, args.R, args.lo, args.hi, args.gamma1, args.gamma2, args.gamma3)
    except ValidationError as exc:
        raise InputError(str(exc)) from exc


def _revenue_spec(args) -> RevenueSpec:
    try:
        if args.customers:
            raw = _load_json(args.customers)
            customers = tuple(Customer(float(c["alpha"]), float(c["beta"]), float(c["b"]), float(c["c"]))
                              for c in raw)
            return RevenueSpec(customers, args.R, args.gamma1, args.gamma2)
        return RevenueSpec(R=args.R, gamma1=args.gamma1, gamma2=args.gamma2)
    except (ValidationError, KeyError, TypeError) as exc:
        raise InputError(f"bad revenue input: {exc}") from exc


def cmd_newsvendor(args, out) -> int:
    spec = _newsvendor_spec(args)
    if args.x is not None:
        try:
            problem = newsvendor_problem(spec, args.x)
        except ValidationError as exc:
            raise InputError(str(exc)) from exc
        res = solve_moment_problem(problem, backend=args.solver, tol=args.tol)
        _print_solution(res, out, label="min_expectation")
        if res.dual.optimal:
            print(f"worst_case_cost: {newsvendor_cost(spec, args.x, res.value):.10g}", file=out)
        return _finish(res, args)
    xs = np.linspace(0.0, spec.R, args.steps)
    rows = newsvendor_sweep(spec, xs, workers=args.workers, backend=args.solver, tol=args.tol)
    best = argmin_row(rows)
    print(f"best_x: {best.param:.6g}", file=out)
    print(f"min_cost: {best.derived:.10g}", file=out)
    print(f"measure: {best.measure}", file=out)
    if args.csv:
        _write(args.csv, rows_to_csv(rows, "x", "worst_case_cost"))
    return EXIT_OK if all(r.status == so.OPTIMAL for r in rows) else EXIT_SOLVER


def cmd_revenue(args, out) -> int:
    problem = revenue_problem(_revenue_spec(args))
    res = solve_moment_problem(problem, backend=args.solver, tol=args.tol)
    _print_solution(res, out, label="min_expectation")
    if res.dual.optimal:
        print(f"max_revenue: {-res.value:.10g}", file=out)
    return _finish(res, args)


def cmd_sweep(args, out) -> int:
    values = np.linspace(args.start, args.stop, args.steps)
    if args.app == "newsvendor":
        rows = newsvendor_sweep(_newsvendor_spec(args), values, workers=args.workers,
                                backend=args.solver, tol=args.tol)
        text = rows_to_csv(rows, "x", "worst_case_cost")
    else:
        rows = revenue_sweep(_revenue_spec(args), values, vary=args.vary, workers=args.workers,
                             backend=args.solver, tol=args.tol)
        text = rows_to_csv(rows, args.vary, "max_revenue")
    if args.csv:
        _write(args.csv, text)
    else:
        out.write(text)
    return EXIT_OK if all(r.status == so.OPTIMAL for r in rows) else EXIT_SOLVER


def cmd_oracle(args, out) -> int:
    problem = _load_problem(args.problem, args.strict_validate)
    if args.study:
        res = solve_moment_problem(problem, backend=args.solver, tol=args.tol, with_primal=False)
        rows = refinement_study(problem, args.study, sdp_value=res.value if res.dual.optimal else None)
        text = study_csv(rows)
        if args.csv:
            _write(args.csv, text)
        else:
            out.write(text)
        return EXIT_OK
    res = oracle_value(problem, args.grid)
    print(f"oracle_value: {res.value:.10g}", file=out)
    print(f"grid_points: {res.grid.points.shape[0]}", file=out)
    print(f"measure: {res.measure.format()}", file=out)
    return EXIT_OK


def cmd_export(args, out) -> int:
    problem = _load_problem(args.problem, args.strict_validate)
    try:
        pair = compile(problem)
    except DegreeOverflow as exc:
        raise InputError(str(exc)) from exc
    cp = pair.primal if args.which == "primal" else pair.dual
    export_sdpa(cp, args.output)
    print(f"wrote {args.output} ({cp.num_constraints} constraints, {len(cp.cones)} blocks)", file=out)
    return EXIT_OK


# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=1e-10, help="solver tolerance")
    common.add_argument("--solver", choices=BACKENDS, default="builtin")
    common.add_argument("--report", help="write a JSON report or certificate here")
    common.add_argument("--csv", help="write CSV output here")
    common.add_argument("--strict-validate", action="store_true", help="require SOS-convexity certificates")
    common.add_argument("--seed", type=int, default=0, help="seed for the witness search")
    common.add_argument("--grid", type=int, default=None, help="oracle grid points per coordinate")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="sosmoment", description="Moment problems with piecewise SOS-convex objectives.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="solve a moment problem JSON file")
    s.add_argument("problem")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("certify", parents=[common], help="certify non-negativity of a piecewise function")
    s.add_argument("piecewise")
    s.add_argument("support")
    s.add_argument("--tol-res", type=float, default=1e-7)
    s.set_defaults(func=cmd_certify)

    s = sub.add_parser("verify", parents=[common], help="re-check a certificate JSON file")
    s.add_argument("certificate")
    s.add_argument("--tol-res", type=float, default=1e-7)
    s.set_defaults(func=cmd_verify)

    def newsvendor_args(q):
        q.add_argument("--c", type=float, default=0.1)
        q.add_argument("--R", type=float, default=10.0)
        q.add_argument("--lo", type=float, default=0.0)
        q.add_argument("--hi", type=float, default=100.0)
        q.add_argument("--gamma1", type=float, default=1.0)
        q.add_argument("--gamma2", type=float, default=1.0)
        q.add_argument("--gamma3", type=float, default=None)

    s = sub.add_parser("newsvendor", parents=[common], help="worst-case Newsvendor cost")
    newsvendor_args(s)
    s.add_argument("--x", type=float, default=None, help="single order quantity (default: sweep)")
    s.add_argument("--steps", type=int, default=101)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_newsvendor)

    def revenue_args(q, defaults=True):
        q.add_argument("--customers", help="JSON list of {alpha, beta, b, c}")
        if defaults:
            q.add_argument("--R", type=float, default=4.0)
            q.add_argument("--gamma1", type=float, default=2.0)
            q.add_argument("--gamma2", type=float, default=2.0)

    s = sub.add_parser("revenue", parents=[common], help="worst-case revenue maximization")
    revenue_args(s)
    s.set_defaults(func=cmd_revenue)

    s = sub.add_parser("sweep", parents=[common], help="parameter sweep to CSV")
    s.add_argument("app", choices=["newsvendor", "revenue"])
    s.add_argument("--start", type=float, required=True)
    s.add_argument("--stop", type=float, required=True)
    s.add_argument("--steps", type=int, default=101)
    s.add_argument("--vary", choices=["gamma1", "gamma2"], default="gamma1")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--customers", help="JSON list of {alpha, beta, b, c} (revenue)")
    s.add_argument("--c", type=float, default=0.1)
    s.add_argument("--R", type=float, default=None)
    s.add_argument("--lo", type=float, default=0.0)
    s.add_argument("--hi", type=float, default=100.0)
    s.add_argument("--gamma1", type=float, default=None)
    s.add_argument("--gamma2", type=float, default=None)
    s.add_argument("--gamma3", type=float, default=None)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("oracle", parents=[common], help="grid LP reference value")
    s.add_argument("problem")
    s.add_argument("--study", type=int, nargs="+", help="grid sizes for a refinement table")
    s.set_defaults(func=cmd_oracle)

    s = sub.add_parser("export-sdpa", parents=[common], help="write the compiled SDP in sparse SDPA format")
    s.add_argument("problem")
    s.add_argument("output")
    s.add_argument("--which", choices=["primal", "dual"], default="dual")
    s.set_defaults(func=cmd_export)
    return p


def _sweep_defaults(args):
    if args.command != "sweep":
        return
    if args.app == "newsvendor":
        args.R = 10.0 if args.R is None else args.R
        args.gamma1 = 1.0 if args.gamma1 is None else args.gamma1
        args.gamma2 = 1.0 if args.gamma2 is None else args.gamma2
    else:
        args.R = 4.0 if args.R is None else args.R
        args.gamma1 = 2.0 if args.gamma1 is None else args.gamma1
        args.gamma2 = 2.0 if args.gamma2 is None else args.gamma2


def main(argv: Optional[List[str]] = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _sweep_defaults(args)
    try:
        return args.func(args, out)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OracleInfeasible as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except so.SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
