"""Compile a moment problem into its primal SOS SDP and the dual moment SDP.

Primal (maximize)::

    -sum_j lam_j gamma_j - lam0
    s.t. for every k and every alpha with |alpha| <= d:
         sum_l delta^k_l (g^k_l)_alpha + sum_j lam_j (h_j)_alpha + lam0 [alpha = 0]
             - tr(Z_k F_alpha) - tr(Q_k B_alpha) = 0
         tr(Z_k M_t) = 0,  sum_l delta^k_l = 1,
         lam >= 0, delta^k >= 0, Z_k >= 0, Q_k >= 0

Dual (minimize)::

    sum_k z_k
    s.t. sum_k sum_alpha y^k_alpha (h_j)_alpha <= gamma_j
         sum_alpha y^k_alpha (g^k_l)_alpha <= z_k
         y^k_0 F_0 + sum_i y^k_{e_i} F_i + sum_t xi^k_t M_t >= 0
         sum_k y^k_0 = 1
         sum_alpha y^k_alpha B_alpha >= 0
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from . import solver as so
from .model import MomentProblem, PiecewiseSosConvex
from .polycore import GramBasis, Polynomial, gram_basis
from .support import ProjectedSpectrahedron

DEFAULT_MAX_DEGREE = 16


class DegreeOverflow(ValueError):
    pass


@dataclass
class CompiledPair:
    problem: MomentProblem
    degree: int
    gram: GramBasis
    primal: so.ConicProgram
    dual: so.ConicProgram
    alpha_rows: Dict[Tuple[int, tuple], int]

    @property
    def alphas(self) -> Tuple[tuple, ...]:
        return self.gram.alphas

    @property
    def r(self) -> int:
        return self.problem.objective.r

    # -- reading primal (SOS side) solutions -------------------------------
    def primal_parts(self, x: np.ndarray) -> dict:
        cp = self.primal
        out = {"lam": cp.extract(x, "lam") if self.problem.J else np.zeros(0),
               "lam0": float(cp.extract(x, "lam0")[0]),
               "delta": [], "Z": [], "Q": []}
        for k in range(self.r):
            out["delta"].append(cp.extract(x, f"delta_{k}"))
            out["Z"].append(cp.extract(x, f"Z_{k}"))
            out["Q"].append(cp.extract(x, f"Q_{k}"))
        return out

    # -- reading dual (moment side) solutions ------------------------------
    def moment_blocks(self, x: np.ndarray) -> List[np.ndarray]:
        return [self.dual.extract(x, f"y_{k}") for k in range(self.r)]

    def z_values(self, x: np.ndarray) -> np.ndarray:
        return np.array([float(self.dual.extract(x, f"z_{k}")[0]) for k in range(self.r)])

    def xi_values(self, x: np.ndarray) -> List[np.ndarray]:
        if not self.problem.support.lifted_dim:
            return [np.zeros(0) for _ in range(self.r)]
        return [self.dual.extract(x, f"xi_{k}") for k in range(self.r)]


def _check_degree(problem: MomentProblem, bump: bool, max_degree: int) -> int:
    d = problem.degree(bump=bump)
    if d > max_degree:
        raise DegreeOverflow(f"compiled degree {d} exceeds cap {max_degree}")
    return d


def compile_primal(problem: MomentProblem, d: int, G: GramBasis) -> Tuple[so.ConicProgram, dict]:
    omega = problem.support
    J, m = problem.J, problem.num_vars
    pw = problem.objective
    alphas = G.alphas
    h_coef = [G.coefficient_vector(h) for h, _ in problem.constraints]
    F_alpha = {alphas[0]: omega.F[0]}
    for i in range(m):
        F_alpha[alphas[1 + i]] = omega.F[1 + i]

    b = so.ProgramBuilder("max")
    if J:
        b.add_var("lam", so.NONNEG, J)
        for j, (_, gamma) in enumerate(problem.constraints):
            b.set_obj(b.col("lam", j), -gamma)
    b.add_var("lam0", so.FREE, 1)
    b.set_obj(b.col("lam0"), -1.0)
    rows = {}
    for k in range(pw.r):
        b.add_var(f"delta_{k}", so.NONNEG, pw.L)
        b.add_var(f"Z_{k}", so.PSD, omega.nu)
        b.add_var(f"Q_{k}", so.PSD, G.size)
        g_coef = [G.coefficient_vector(g) for g in pw.pieces[k]]
        for a_idx, alpha in enumerate(alphas):
            r = b.new_row(0.0)
            rows[(k, alpha)] = r
            for ell in range(pw.L):
                b.add(r, b.col(f"delta_{k}", ell), g_coef[ell][a_idx])
            for j in range(J):
                b.add(r, b.col("lam", j), h_coef[j][a_idx])
            if a_idx == 0:
                b.add(r, b.col("lam0"), 1.0)
            if alpha in F_alpha:
                b.add_matrix_term(r, f"Z_{k}", F_alpha[alpha], -1.0)
            b.add_matrix_term(r, f"Q_{k}", G.matrices[alpha], -1.0)
        for Mt in omega.M:
            r = b.new_row(0.0)
            b.add_matrix_term(r, f"Z_{k}", Mt, 1.0)
        r = b.new_row(1.0)
        for ell in range(pw.L):
            b.add(r, b.col(f"delta_{k}", ell), 1.0)
    return b.build(), rows


def compile_dual(problem: MomentProblem, d: int, G: GramBasis) -> so.ConicProgram:
    omega = problem.support
    J, m, N = problem.J, problem.num_vars, problem.support.lifted_dim
    pw = problem.objective
    alphas = G.alphas
    n_alpha = len(alphas)
    h_coef = [G.coefficient_vector(h) for h, _ in problem.constraints]

    b = so.ProgramBuilder("min")
    for k in range(pw.r):
        b.add_var(f"y_{k}", so.FREE, n_alpha)
        if N:
            b.add_var(f"xi_{k}", so.FREE, N)
        b.add_var(f"z_{k}", so.FREE, 1)
        b.set_obj(b.col(f"z_{k}"), 1.0)
    if J:
        b.add_var("s_h", so.NONNEG, J)
    for k in range(pw.r):
        b.add_var(f"s_g_{k}", so.NONNEG, pw.L)
        b.add_var(f"W_{k}", so.PSD, omega.nu)
        b.add_var(f"M_{k}", so.PSD, G.size)

    for j in range(J):
        r = b.new_row(problem.constraints[j][1])
        for k in range(pw.r):
            for a_idx in np.nonzero(h_coef[j])[0]:
                b.add(r, b.col(f"y_{k}", int(a_idx)), h_coef[j][a_idx])
        b.add(r, b.col("s_h", j), 1.0)
    Fv = [so.svec(f) for f in omega.F]
    Mv = [so.svec(f) for f in omega.M]
    Bv = [so.svec(G.matrices[a]) for a in alphas]
    for k in range(pw.r):
        for ell, g in enumerate(pw.pieces[k]):
            gc = G.coefficient_vector(g)
            r = b.new_row(0.0)
            for a_idx in np.nonzero(gc)[0]:
                b.add(r, b.col(f"y_{k}", int(a_idx)), gc[a_idx])
            b.add(r, b.col(f"z_{k}"), -1.0)
            b.add(r, b.col(f"s_g_{k}", ell), 1.0)
        for e in range(Fv[0].size):
            r = b.new_row(0.0)
            b.add(r, b.col(f"W_{k}", e), 1.0)
            for i in range(m + 1):
                b.add(r, b.col(f"y_{k}", i), -Fv[i][e])
            for t in range(N):
                b.add(r, b.col(f"xi_{k}", t), -Mv[t][e])
        for e in range(Bv[0].size):
            r = b.new_row(0.0)
            b.add(r, b.col(f"M_{k}", e), 1.0)
            for a_idx in range(n_alpha):
                b.add(r, b.col(f"y_{k}", a_idx), -Bv[a_idx][e])
    r = b.new_row(1.0)
    for k in range(pw.r):
        b.add(r, b.col(f"y_{k}", 0), 1.0)
    return b.build()


def compile(problem: MomentProblem, bump: bool = False, max_degree: int = DEFAULT_MAX_DEGREE) -> CompiledPair:
    d = _check_degree(problem, bump, max_degree)
    G = gram_basis(problem.num_vars, d)
    primal, rows = compile_primal(problem, d, G)
    dual = compile_dual(problem, d, G)
    return CompiledPair(problem, d, G, primal, dual, rows)


def compile_poly_opt(g: Polynomial, omega: ProjectedSpectrahedron, **kw) -> CompiledPair:
    """Minimizing one SOS-convex polynomial over the support."""
    problem = MomentProblem(PiecewiseSosConvex(((g,),)), (), omega)
    return compile(problem, **kw)
