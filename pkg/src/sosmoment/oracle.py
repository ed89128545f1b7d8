"""Brute-force reference: restrict the measure to a grid over the support and solve the LP."""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from . import solver as so
from .model import DiscreteMeasure, MomentProblem
from .support import bounding_box, membership_many

DEFAULT_GRID = {1: 2001, 2: 101}
POINT_CAP = 100_000


class OracleInfeasible(RuntimeError):
    pass


@dataclass
class GridDiscretization:
    points: np.ndarray
    g_values: np.ndarray
    h_values: np.ndarray  # shape (J, n_points)
    spacing: np.ndarray
    per_dim: int


def discretize(problem: MomentProblem, n_grid: Optional[int] = None, cap: int = POINT_CAP) -> GridDiscretization:
    """Box grid over the support's bounding box, filtered by membership.

    ``n_grid`` counts points per coordinate; it is lowered so the full box
    grid never exceeds ``cap`` points.
    """
    m = problem.num_vars
    if n_grid is None:
        n_grid = DEFAULT_GRID.get(m, 11)
    if n_grid < 2:
        raise ValueError("need at least two grid points per coordinate")
    per_dim = min(n_grid, int(np.floor(cap ** (1.0 / m) + 1e-9)))
    lo, hi = bounding_box(problem.support)
    axes = [np.linspace(a, b, per_dim) for a, b in zip(lo, hi)]
    pts = np.array(list(itertools.product(*axes))) if m > 1 else axes[0][:, None]
    pts = pts[membership_many(problem.support, pts)]
    if pts.shape[0] == 0:
        raise OracleInfeasible("no grid point lies in the support")
    g_vals = problem.objective.value_many(pts)
    h_vals = np.array([h.eval_many(pts) for h, _ in problem.constraints]).reshape(problem.J, pts.shape[0])
    return GridDiscretization(pts, g_vals, h_vals, (hi - lo) / (per_dim - 1), per_dim)


@dataclass
class OracleResult:
    value: float
    measure: DiscreteMeasure
    grid: GridDiscretization


def solve_grid(problem: MomentProblem, grid: GridDiscretization, tol: float = 1e-9) -> OracleResult:
    n = grid.points.shape[0]
    J = problem.J
    gammas = np.array([g for _, g in problem.constraints])
    A = np.zeros((J + 1, n + J))
    A[:J, :n] = grid.h_values
    A[:J, n:] = np.eye(J)
    A[J, :n] = 1.0
    b = np.append(gammas, 1.0)
    c = np.concatenate([grid.g_values, np.zeros(J)])
    cp = so.ConicProgram(c=c, A=A, b=b, cones=[so.Cone(so.NONNEG, n + J)], sense="min")
    # few rows, many columns: normal equations are the cheap path
    sol = so.InteriorPointSolver(so.SolverOptions(tol=tol, augmented_max=0)).solve(cp)
    if sol.status == so.INFEASIBLE:
        raise OracleInfeasible(f"grid LP infeasible with {n} points; refine the grid or loosen the moment bounds")
    if not sol.optimal:
        raise so.SolverError(f"grid LP status {sol.status}")
    p = np.clip(sol.x[:n], 0.0, None)
    keep = p > 1e-7 * p.max()
    w = p[keep] / p[keep].sum()
    return OracleResult(sol.primal_objective, DiscreteMeasure(w, grid.points[keep]), grid)


def oracle_value(problem: MomentProblem, n_grid: Optional[int] = None, cap: int = POINT_CAP) -> OracleResult:
    return solve_grid(problem, discretize(problem, n_grid, cap))


@dataclass
class StudyRow:
    n_grid: int
    n_points: int
    value: float
    abs_diff: float


def refinement_study(problem: MomentProblem, grids: Sequence[int] = (101, 401, 1601),
                     sdp_value: Optional[float] = None) -> List[StudyRow]:
    rows = []
    for n in grids:
        res = oracle_value(problem, n)
        diff = abs(res.value - sdp_value) if sdp_value is not None else float("nan")
        rows.append(StudyRow(n, res.grid.points.shape[0], res.value, diff))
    return rows


def study_csv(rows: Sequence[StudyRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n_grid", "n_points", "oracle_value", "abs_diff_to_sdp"])
    for r in rows:
        w.writerow([r.n_grid, r.n_points, f"{r.value:.10g}", f"{r.abs_diff:.3e}"])
    return buf.getvalue()
