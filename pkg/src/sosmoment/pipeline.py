"""Compile, solve both SDPs, recover: the path every front-end goes through."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import solver as so
from .compile import CompiledPair, compile, compile_poly_opt
from .model import MomentProblem
from .polycore import Polynomial
from .recovery import NoAtoms, PolyOptResult, RecoveryReport, poly_minimizer, primal_value, recover
from .support import ProjectedSpectrahedron

BACKENDS = ("builtin", "external")
SOLVE_TOL = 1e-10


def solve_program(cp: so.ConicProgram, backend: str = "builtin", tol: float = SOLVE_TOL,
                  max_iter: int = 200) -> so.Solution:
    if backend == "builtin":
        return so.solve(cp, tol=tol, max_iter=max_iter)
    if backend == "external":
        from .sdpa import solve_external

        return solve_external(cp)
    raise ValueError(f"unknown backend {backend!r}; choose from {BACKENDS}")


@dataclass
class MomentSolution:
    pair: CompiledPair
    primal: Optional[so.Solution]
    dual: so.Solution
    report: Optional[RecoveryReport]
    error: Optional[str] = None

    @property
    def status(self) -> str:
        return self.dual.status

    @property
    def value(self) -> float:
        """min (P) as given by the moment side."""
        return self.dual.primal_objective if self.dual.optimal else float("nan")

    @property
    def sos_value(self) -> float:
        if self.primal is None or not self.primal.optimal:
            return float("nan")
        return primal_value(self.pair, self.primal.x)

    @property
    def duality_gap(self) -> float:
        return abs(self.sos_value - self.value)


def solve_moment_problem(problem: MomentProblem, backend: str = "builtin", tol: float = SOLVE_TOL,
                         with_primal: bool = True, bump: bool = False, eps0: float = 1e-6) -> MomentSolution:
    pair = compile(problem, bump=bump)
    dual = solve_program(pair.dual, backend, tol)
    primal = solve_program(pair.primal, backend, tol) if with_primal else None
    report, err = None, None
    if dual.optimal:
        try:
            report = recover(pair, dual, eps0=eps0)
        except NoAtoms as exc:
            err = str(exc)
    else:
        err = f"dual SDP status {dual.status}: {dual.message}"
    return MomentSolution(pair, primal, dual, report, err)


def minimize_polynomial(g: Polynomial, omega: ProjectedSpectrahedron, backend: str = "builtin",
                        tol: float = SOLVE_TOL) -> PolyOptResult:
    pair = compile_poly_opt(g, omega)
    sol = solve_program(pair.dual, backend, tol)
    if not sol.optimal:
        raise so.SolverError(f"moment SDP status {sol.status}")
    return poly_minimizer(pair, sol)
