"""Standard-form conic programs and a dense primal-dual interior-point solver.

Programs have the form::

    minimize    c^T x                 maximize    b^T y
    subject to  A x = b               subject to  A^T y + s = c
                x in K                            s in K*

where ``K`` is a product of free, non-negative, positive semidefinite and
zero cones.  Symmetric matrix variables are stored as scaled upper-triangle
vectors (``svec``): off-diagonal entries are multiplied by sqrt(2) so that
the vector inner product equals the trace inner product.

The solver embeds the pair in a homogeneous self-dual model and follows the
central path with Nesterov-Todd scaling and Mehrotra predictor-corrector
steps.  Free variables stay in the reduced KKT system; nothing is split.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla

log = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
DUAL_INFEASIBLE = "dual_infeasible"
NUMERICAL_LIMIT = "numerical_limit"

FREE, NONNEG, PSD, ZERO = "free", "nonneg", "psd", "zero"


# ---------------------------------------------------------------------------
# svec helpers


@lru_cache(maxsize=None)
def _tri(n: int):
    iu = np.triu_indices(n)
    scale = np.where(iu[0] == iu[1], 1.0, SQRT2)
    return iu, scale


def svec_dim(n: int) -> int:
    return n * (n + 1) // 2


def svec(M: np.ndarray) -> np.ndarray:
    """Scaled upper-triangle vectorization, row-major; works on stacks too."""
    M = np.asarray(M, dtype=float)
    n = M.shape[-1]
    iu, scale = _tri(n)
    return M[..., iu[0], iu[1]] * scale


def smat(v: np.ndarray, n: Optional[int] = None) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if n is None:
        n = int(round((math.sqrt(8 * v.shape[-1] + 1) - 1) / 2))
    iu, scale = _tri(n)
    M = np.zeros(v.shape[:-1] + (n, n))
    M[..., iu[0], iu[1]] = v / scale
    M[..., iu[1], iu[0]] = v / scale
    return M


# ---------------------------------------------------------------------------
# program description


@dataclass(frozen=True)
class Cone:
    kind: str
    size: int

    def __post_init__(self):
        if self.kind not in (FREE, NONNEG, PSD, ZERO):
            raise ValueError(f"unknown cone kind {self.kind!r}")
        if self.size < 0:
            raise ValueError("cone size must be non-negative")

    @property
    def dim(self) -> int:
        return svec_dim(self.size) if self.kind == PSD else self.size


@dataclass
class ConicProgram:
    """``min/max c^T x`` s.t. ``A x = b``, ``x`` in the product of ``cones``."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    cones: List[Cone]
    names: Dict[str, Tuple[int, Cone]] = field(default_factory=dict)
    sense: str = "min"
    row_names: Dict[str, Tuple[int, int]] = field(default_factory=dict)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        self.A = np.asarray(self.A, dtype=float).reshape(len(self.b), -1)
        n = sum(cone.dim for cone in self.cones)
        if self.c.shape[0] != n:
            raise ValueError(f"objective has length {self.c.shape[0]}, cones need {n}")
        if self.A.shape[1] != n:
            raise ValueError(f"constraint matrix has width {self.A.shape[1]}, cones need {n}")
        if self.sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")

    @property
    def num_vars(self) -> int:
        return self.c.shape[0]

    @property
    def num_constraints(self) -> int:
        return self.b.shape[0]

    def offsets(self) -> List[int]:
        out, pos = [], 0
        for cone in self.cones:
            out.append(pos)
            pos += cone.dim
        return out

    def extract(self, x: np.ndarray, name: str):
        """Value of a named variable; PSD blocks come back as matrices."""
        start, cone = self.names[name]
        seg = np.asarray(x)[start:start + cone.dim]
        if cone.kind == PSD:
            return smat(seg, cone.size)
        return seg.copy()

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x)


class ProgramBuilder:
    """Incremental assembly of a :class:`ConicProgram` by named blocks."""

    def __init__(self, sense: str = "min"):
        self.sense = sense
        self.cones: List[Cone] = []
        self.names: Dict[str, Tuple[int, Cone]] = {}
        self._dim = 0
        self._rows: List[Dict[int, float]] = []
        self._rhs: List[float] = []
        self._obj: Dict[int, float] = {}
        self.row_names: Dict[str, Tuple[int, int]] = {}

    def add_var(self, name: str, kind: str, size: int) -> int:
        if name in self.names:
            raise ValueError(f"duplicate variable name {name!r}")
        cone = Cone(kind, size)
        self.names[name] = (self._dim, cone)
        self.cones.append(cone)
        start = self._dim
        self._dim += cone.dim
        return start

    def col(self, name: str, i: int = 0) -> int:
        start, cone = self.names[name]
        if not 0 <= i < cone.dim:
            raise IndexError(f"{name}[{i}] out of range")
        return start + i

    def new_row(self, rhs: float = 0.0) -> int:
        self._rows.append({})
        self._rhs.append(float(rhs))
        return len(self._rows) - 1

    def add(self, row: int, col: int, value: float):
        if value != 0.0:
            r = self._rows[row]
            r[col] = r.get(col, 0.0) + float(value)

    def add_matrix_term(self, row: int, name: str, F: np.ndarray, scale: float = 1.0):
        """Add ``scale * tr(X F)`` for the PSD variable ``name``."""
        start, cone = self.names[name]
        if cone.kind != PSD:
            raise ValueError(f"{name} is not a PSD block")
        coef = svec(0.5 * (F + F.T)) * scale
        for i in np.nonzero(coef)[0]:
            self.add(row, start + int(i), coef[i])

    def add_matrix_rows(self, name: str, label: str = "") -> List[int]:
        """One row per svec entry of ``name`` with the entry itself at coefficient 1."""
        start, cone = self.names[name]
        rows = []
        for i in range(cone.dim):
            r = self.new_row(0.0)
            self.add(r, start + i, 1.0)
            rows.append(r)
        if label:
            self.row_names[label] = (rows[0], len(rows))
        return rows

    def set_obj(self, col: int, value: float):
        self._obj[col] = self._obj.get(col, 0.0) + float(value)

    def label_rows(self, label: str, first: int, count: int):
        self.row_names[label] = (first, count)

    def build(self) -> ConicProgram:
        n = self._dim
        A = np.zeros((len(self._rows), n))
        for r, entries in enumerate(self._rows):
            for col, v in entries.items():
                A[r, col] = v
        c = np.zeros(n)
        for col, v in self._obj.items():
            c[col] = v
        return ConicProgram(
            c=c, A=A, b=np.array(self._rhs), cones=list(self.cones),
            names=dict(self.names), sense=self.sense, row_names=dict(self.row_names),
        )


@dataclass
class Solution:
    status: str
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    primal_objective: float
    dual_objective: float
    residuals: Dict[str, float]
    iterations: int
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    @property
    def value(self) -> float:
        return self.primal_objective


class SolverError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# cone algebra in the Nesterov-Todd scaled space


class _Scaling:
    """Nesterov-Todd scaling for the LP entries and every PSD block."""

    def __init__(self, n_lp: int, psd_sizes: Sequence[int]):
        self.n_lp = n_lp
        self.psd = list(psd_sizes)
        self.w = np.ones(n_lp)
        self.R = [np.eye(n) for n in self.psd]
        self.Rinv = [np.eye(n) for n in self.psd]
        self.lam_lp = np.ones(n_lp)
        self.lam_psd = [np.ones(n) for n in self.psd]
        self.slices = []
        pos = n_lp
        for n in self.psd:
            self.slices.append(slice(pos, pos + svec_dim(n)))
            pos += svec_dim(n)
        self.dim = pos
        self.degree = n_lp + sum(self.psd)

    # the scaled point lambda as an svec-style vector
    def lam_vec(self) -> np.ndarray:
        out = np.empty(self.dim)
        out[: self.n_lp] = self.lam_lp
        for sl, lam in zip(self.slices, self.lam_psd):
            out[sl] = svec(np.diag(lam))
        return out

    def W(self, u):
        """x-like -> scaled."""
        out = np.empty_like(u)
        out[: self.n_lp] = self.w * u[: self.n_lp]
        for sl, R, n in zip(self.slices, self.R, self.psd):
            out[sl] = svec(R.T @ smat(u[sl], n) @ R)
        return out

    def WinvT(self, u):
        """s-like -> scaled."""
        out = np.empty_like(u)
        out[: self.n_lp] = u[: self.n_lp] / self.w
        for sl, Ri, n in zip(self.slices, self.Rinv, self.psd):
            out[sl] = svec(Ri @ smat(u[sl], n) @ Ri.T)
        return out

    def WT(self, u):
        """scaled -> s-like."""
        out = np.empty_like(u)
        out[: self.n_lp] = self.w * u[: self.n_lp]
        for sl, R, n in zip(self.slices, self.R, self.psd):
            out[sl] = svec(R @ smat(u[sl], n) @ R.T)
        return out

    def Winv(self, u):
        """scaled -> x-like."""
        out = np.empty_like(u)
        out[: self.n_lp] = u[: self.n_lp] / self.w
        for sl, Ri, n in zip(self.slices, self.Rinv, self.psd):
            out[sl] = svec(Ri.T @ smat(u[sl], n) @ Ri)
        return out

    def hinv_blocks(self):
        """``(W^T W)^{-1}``: a diagonal for LP and a dense matrix per PSD block."""
        diag = 1.0 / self.w ** 2
        mats = []
        for Ri, n in zip(self.Rinv, self.psd):
            T = Ri.T @ Ri
            d = svec_dim(n)
            E = smat(np.eye(d), n)
            mats.append(svec(T @ E @ T).T)
        return diag, mats

    def jordan(self, a, b):
        """Jordan product of two scaled-space vectors."""
        out = np.empty_like(a)
        out[: self.n_lp] = a[: self.n_lp] * b[: self.n_lp]
        for sl, n in zip(self.slices, self.psd):
            X, Y = smat(a[sl], n), smat(b[sl], n)
            out[sl] = svec(0.5 * (X @ Y + Y @ X))
        return out

    def lam_sq(self):
        out = np.empty(self.dim)
        out[: self.n_lp] = self.lam_lp ** 2
        for sl, lam in zip(self.slices, self.lam_psd):
            out[sl] = svec(np.diag(lam ** 2))
        return out

    def lam_div(self, d):
        """Solve ``lambda o u = d`` for ``u``."""
        out = np.empty_like(d)
        out[: self.n_lp] = d[: self.n_lp] / self.lam_lp
        for sl, lam, n in zip(self.slices, self.lam_psd, self.psd):
            D = smat(d[sl], n)
            out[sl] = svec(2.0 * D / (lam[:, None] + lam[None, :]))
        return out

    def unit(self):
        out = np.empty(self.dim)
        out[: self.n_lp] = 1.0
        for sl, n in zip(self.slices, self.psd):
            out[sl] = svec(np.eye(n))
        return out

    def interior(self, x, s) -> bool:
        if self.n_lp and (np.any(x[: self.n_lp] <= 0) or np.any(s[: self.n_lp] <= 0)):
            return False
        for sl, n in zip(self.slices, self.psd):
            for v in (x[sl], s[sl]):
                try:
                    np.linalg.cholesky(smat(v, n))
                except np.linalg.LinAlgError:
                    return False
        return True

    def max_step(self, du) -> float:
        """Largest ``a`` with ``lambda + a du`` in the cone (inf if unbounded)."""
        amax = np.inf
        if self.n_lp:
            d = du[: self.n_lp]
            neg = d < 0
            if np.any(neg):
                amax = min(amax, float(np.min(-self.lam_lp[neg] / d[neg])))
        for sl, lam, n in zip(self.slices, self.lam_psd, self.psd):
            isq = 1.0 / np.sqrt(lam)
            D = smat(du[sl], n) * isq[:, None] * isq[None, :]
            ev = np.linalg.eigvalsh(D)[0]
            if ev < 0:
                amax = min(amax, -1.0 / ev)
        return amax

    def compute(self, x, s):
        """Scaling of the pair (x, s) from scratch."""
        if self.n_lp:
            xl, sl_ = x[: self.n_lp], s[: self.n_lp]
            if np.any(xl <= 0) or np.any(sl_ <= 0):
                raise np.linalg.LinAlgError("LP iterate left the cone")
            self.w = np.sqrt(sl_ / xl)
            self.lam_lp = np.sqrt(xl * sl_)
        for idx, (sl, n) in enumerate(zip(self.slices, self.psd)):
            R, Rinv, lam = _nt_block(smat(x[sl], n), smat(s[sl], n))
            self.R[idx], self.Rinv[idx], self.lam_psd[idx] = R, Rinv, lam


def _nt_block(X, S):
    """R with R^T X R = R^{-1} S R^{-T} = diag(lam)."""
    n = X.shape[0]
    Lx = np.linalg.cholesky(0.5 * (X + X.T))
    Ls = np.linalg.cholesky(0.5 * (S + S.T))
    U, sv, Vt = np.linalg.svd(Lx.T @ Ls)
    if sv[-1] <= 0:
        raise np.linalg.LinAlgError("degenerate scaling")
    V = Vt.T
    R = Ls @ V / np.sqrt(sv)[None, :]
    Rinv = (np.sqrt(sv)[:, None] * V.T) @ sla.solve_triangular(Ls, np.eye(n), lower=True)
    return R, Rinv, sv


# ---------------------------------------------------------------------------
# solver


@dataclass
class SolverOptions:
    tol: float = 1e-8
    max_iter: int = 200
    step_fraction: float = 0.99
    refine: int = 4
    verbose: bool = False
    # dense augmented KKT up to this size, normal equations beyond
    augmented_max: int = 2500


def solve(cp: ConicProgram, tol: float = 1e-8, max_iter: int = 200, verbose: bool = False) -> Solution:
    """Solve ``cp`` with the built-in homogeneous self-dual interior-point method."""
    return InteriorPointSolver(SolverOptions(tol=tol, max_iter=max_iter, verbose=verbose)).solve(cp)


class InteriorPointSolver:
    def __init__(self, options: Optional[SolverOptions] = None):
        self.options = options or SolverOptions()

    # -- preprocessing ----------------------------------------------------
    def _layout(self, cp: ConicProgram):
        free_idx, lp_idx, psd_ranges, zero_idx = [], [], [], []
        for start, cone in zip(cp.offsets(), cp.cones):
            rng = list(range(start, start + cone.dim))
            if cone.kind == FREE:
                free_idx += rng
            elif cone.kind == NONNEG:
                lp_idx += rng
            elif cone.kind == PSD:
                if cone.size:
                    psd_ranges.append((start, cone.size))
            else:
                zero_idx += rng
        cone_idx = list(lp_idx)
        for start, n in psd_ranges:
            cone_idx += list(range(start, start + svec_dim(n)))
        return (np.array(free_idx, dtype=int), np.array(cone_idx, dtype=int),
                len(lp_idx), [n for _, n in psd_ranges], np.array(zero_idx, dtype=int))

    @staticmethod
    def _independent_rows(A: np.ndarray, b: np.ndarray):
        """Indices of a maximal independent row subset, or a Farkas vector."""
        m = A.shape[0]
        if m == 0:
            return np.arange(0), None
        Q, R, piv = sla.qr(A.T, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        if diag.size == 0 or diag[0] == 0:
            keep = np.array([], dtype=int)
        else:
            rank = int(np.sum(diag > 1e-11 * diag[0]))
            keep = np.sort(piv[:rank])
        dropped = np.setdiff1d(np.arange(m), keep)
        for r in dropped:
            if keep.size:
                w, *_ = np.linalg.lstsq(A[keep].T, A[r], rcond=None)
                mismatch = b[r] - w @ b[keep]
            else:
                w, mismatch = np.zeros(0), b[r]
            if abs(mismatch) > 1e-9 * (1.0 + abs(b[r]) + np.abs(b).max()):
                y = np.zeros(m)
                y[r] = 1.0
                y[keep] = -w
                return keep, y * np.sign(mismatch)
        return keep, None

    # -- main loop --------------------------------------------------------
    def solve(self, cp: ConicProgram) -> Solution:
        opts = self.options
        sign = 1.0 if cp.sense == "min" else -1.0
        c_all = sign * cp.c
        A_all, b_all = cp.A, cp.b
        n_all = cp.num_vars
        m_all = cp.num_constraints

        free_idx, cone_idx, n_lp, psd_sizes, zero_idx = self._layout(cp)

        def finish(status, x_f, x_k, y_int, s_k, iters, message=""):
            x = np.zeros(n_all)
            x[free_idx] = x_f
            x[cone_idx] = x_k
            y = np.zeros(m_all)
            y[keep] = y_int / row_norm[keep]
            s = c_all - A_all.T @ y
            s[free_idx] = 0.0
            s[cone_idx] = s_k
            res = _residuals(A_all, b_all, c_all, x, y, s, free_idx, cone_idx)
            pobj = float(cp.c @ x)
            dobj = sign * float(b_all @ y)
            return Solution(status, x, y, s, pobj, dobj, res, iters, message)

        # row equilibration, zero rows and dependent rows
        row_norm = np.linalg.norm(A_all, axis=1)
        zero_rows = row_norm == 0
        if np.any(np.abs(b_all[zero_rows]) > 1e-12):
            y = np.zeros(m_all)
            r = int(np.nonzero(zero_rows & (np.abs(b_all) > 1e-12))[0][0])
            y[r] = np.sign(b_all[r])
            return Solution(INFEASIBLE, np.zeros(n_all), y, np.zeros(n_all), np.nan,
                            np.nan, {}, 0, "zero constraint row with non-zero right-hand side")
        row_norm[zero_rows] = 1.0
        A_eq = A_all / row_norm[:, None]
        b_eq = b_all / row_norm
        keep, farkas = self._independent_rows(A_eq, b_eq)
        if farkas is not None:
            y = farkas / row_norm
            return Solution(INFEASIBLE, np.zeros(n_all), y, np.zeros(n_all), np.nan, np.nan,
                            {}, 0, "inconsistent linear equality constraints")
        A = A_eq[keep]
        b = b_eq[keep]
        m = A.shape[0]
        A_k = A[:, cone_idx]
        c_k = c_all[cone_idx]
        # free columns: keep an independent subset; a dependent one with a cost is a ray
        if free_idx.size:
            A_f = A[:, free_idx]
            _, Rf, pf = sla.qr(A_f, mode="economic", pivoting=True)
            dg = np.abs(np.diag(Rf))
            rank_f = int(np.sum(dg > 1e-10 * dg[0])) if dg.size and dg[0] > 0 else 0
            basic, nonbasic = np.sort(pf[:rank_f]), pf[rank_f:]
            c_free = c_all[free_idx]
            for j in nonbasic:
                d = np.zeros(free_idx.size)
                d[j] = 1.0
                if rank_f:
                    d[basic] = -np.linalg.lstsq(A_f[:, basic], A_f[:, j], rcond=None)[0]
                cd = float(c_free @ d)
                if abs(cd) > 1e-9 * (1.0 + np.linalg.norm(c_free)) * np.linalg.norm(d):
                    x = np.zeros(n_all)
                    x[free_idx] = -d / cd
                    return Solution(DUAL_INFEASIBLE, x, np.zeros(m_all), np.zeros(n_all), -1.0, np.nan,
                                    {}, 0, "free variables span an improving ray")
            free_idx = free_idx[basic]
        A_f = A[:, free_idx]
        c_f = c_all[free_idx]
        n_f = free_idx.size
        Qf, Rf = sla.qr(A_f, mode="full") if n_f else (np.eye(m), np.zeros((0, 0)))
        Q1, R1, Nf = Qf[:, :n_f], Rf[:n_f, :n_f], Qf[:, n_f:]

        scal = _Scaling(n_lp, psd_sizes)
        nu = scal.degree
        use_augmented = scal.dim + m + n_f <= opts.augmented_max
        x_f = np.zeros(n_f)
        x_k = scal.unit()
        s_k = scal.unit()
        y = np.zeros(m)
        tau = kappa = 1.0

        bnorm = 1.0 + np.linalg.norm(b_all)
        cnorm = 1.0 + np.linalg.norm(c_all)
        status, message = NUMERICAL_LIMIT, "iteration limit reached"
        small_steps = 0
        it = 0
        for it in range(opts.max_iter + 1):
            # convergence tests on the unscaled data
            xt_f, xt_k, yt, st = x_f / tau, x_k / tau, y / tau, s_k / tau
            x_full = np.zeros(n_all)
            x_full[free_idx] = xt_f
            x_full[cone_idx] = xt_k
            y_full = np.zeros(m_all)
            y_full[keep] = yt / row_norm[keep]
            pres = np.linalg.norm(A_all @ x_full - b_all) / bnorm
            dual_r = c_all - A_all.T @ y_full
            dual_r[cone_idx] -= st
            dual_r[zero_idx] = 0.0
            dres = np.linalg.norm(dual_r) / cnorm
            pobj = float(c_all @ x_full)
            dobj = float(b_all @ y_full)
            gap = abs(pobj - dobj)
            mu = (x_k @ s_k + tau * kappa) / (nu + 1)
            if opts.verbose:
                log.info("it %3d pobj %+.9e dobj %+.9e pres %.2e dres %.2e gap %.2e tau %.2e kappa %.2e",
                         it, pobj, dobj, pres, dres, gap, tau, kappa)
            if pres <= opts.tol and dres <= opts.tol and gap <= opts.tol * (1.0 + abs(pobj)):
                status, message = OPTIMAL, "converged"
                break
            # infeasibility certificates, unnormalized iterates
            by = float(b @ y)
            cx = float(c_f @ x_f + c_k @ x_k)
            if by > 0:
                dr = A_f.T @ y
                dk = A_k.T @ y + s_k
                if math.sqrt(dr @ dr + dk @ dk) <= opts.tol * by * cnorm / bnorm and tau < kappa:
                    status, message = INFEASIBLE, "primal infeasibility certificate"
                    break
            if cx < 0:
                pr = A_f @ x_f + A_k @ x_k
                if np.linalg.norm(pr) <= opts.tol * (-cx) * bnorm / cnorm and tau < kappa:
                    status, message = DUAL_INFEASIBLE, "dual infeasibility certificate"
                    break
            if it == opts.max_iter:
                break

            r_p = A_f @ x_f + A_k @ x_k - b * tau
            r_df = c_f * tau - A_f.T @ y
            r_dk = c_k * tau - A_k.T @ y - s_k
            r_g = float(b @ y - c_f @ x_f - c_k @ x_k - kappa)

            try:
                scal.compute(x_k, s_k)
                lam = scal.lam_vec()
                if use_augmented:
                    base_solve, cond_info = _augmented_solver(scal, A_k, A_f, m, n_f)
                else:
                    base_solve, cond_info = _normal_solver(scal, A_k, A_f, m, n_f, Q1, R1, Nf)

                # direction generated by one unit of tau
                v_f, v_k, v_y = base_solve(b, -c_f, -c_k, np.zeros_like(lam))
                wv = scal.W(v_k)
                denom = float(wv @ wv + kappa / tau)

                def newton(rp, rdf, rdk, rg, d_s, d_kappa):
                    """Solve the linearized HSD system for one right-hand side."""
                    u_f, u_k, u_y = base_solve(rp, rdf, rdk, d_s)
                    numer = rg + d_kappa / tau - b @ u_y + c_f @ u_f + c_k @ u_k
                    dtau = float(numer / denom)
                    dy = u_y + dtau * v_y
                    dxf = u_f + dtau * v_f
                    dxk = u_k + dtau * v_k
                    dsk = c_k * dtau - A_k.T @ dy - rdk
                    dkappa = (d_kappa - kappa * dtau) / tau
                    return [dxf, dxk, dy, dsk, dtau, dkappa]

                def newton_residual(rhs, sol):
                    dxf, dxk, dy, dsk, dtau, dkappa = sol
                    return [
                        rhs[0] - (A_f @ dxf + A_k @ dxk - b * dtau),
                        rhs[1] - (c_f * dtau - A_f.T @ dy),
                        rhs[2] - (c_k * dtau - A_k.T @ dy - dsk),
                        rhs[3] - (b @ dy - c_f @ dxf - c_k @ dxk - dkappa),
                        rhs[4] - scal.jordan(lam, scal.W(dxk) + scal.WinvT(dsk)),
                        rhs[5] - (kappa * dtau + tau * dkappa),
                    ]

                def direction(d_s, d_kappa, eta):
                    rhs = [-eta * r_p, -eta * r_df, -eta * r_dk, -eta * r_g, d_s, d_kappa]
                    sol = newton(*rhs)
                    res = newton_residual(rhs, sol)
                    rn = _stack_norm(res)
                    # refine while it helps; ill-conditioned steps need several passes
                    for _ in range(opts.refine):
                        if rn == 0.0:
                            break
                        cand = [a + c for a, c in zip(sol, newton(*res))]
                        cres = newton_residual(rhs, cand)
                        cn = _stack_norm(cres)
                        if not cn < rn:
                            break
                        sol, res, rn = cand, cres, cn
                    if opts.verbose:
                        log.info("   newton residuals %s %s",
                                 " ".join(f"{np.linalg.norm(r):.1e}" for r in newton_residual(rhs, sol)),
                                 cond_info())
                    dxf, dxk, dy, dsk, dtau, dkappa = sol
                    return dxf, dxk, dy, dsk, dtau, dkappa, scal.W(dxk), scal.WinvT(dsk)

                def step_to_boundary(dx_sc, ds_sc, dtau, dkappa):
                    a = min(scal.max_step(dx_sc), scal.max_step(ds_sc))
                    if dtau < 0:
                        a = min(a, -tau / dtau)
                    if dkappa < 0:
                        a = min(a, -kappa / dkappa)
                    return a

                # predictor
                d_aff = -scal.lam_sq()
                aff = direction(d_aff, -tau * kappa, 1.0)
                a_aff = min(1.0, step_to_boundary(*aff[6:8], aff[4], aff[5]))
                sigma = min(1.0, max(0.0, 1.0 - a_aff)) ** 3
                # corrector
                d_cc = (-scal.lam_sq() - scal.jordan(aff[7], aff[6]) + sigma * mu * scal.unit())
                dk_cc = -tau * kappa - aff[4] * aff[5] + sigma * mu
                dxf, dxk, dy, dsk, dtau, dkappa, dx_sc, ds_sc = direction(d_cc, dk_cc, 1.0 - sigma)
                if not (np.all(np.isfinite(dxk)) and np.all(np.isfinite(dy)) and math.isfinite(dtau)):
                    raise np.linalg.LinAlgError("non-finite search direction")
                a_max = step_to_boundary(dx_sc, ds_sc, dtau, dkappa)
                if opts.verbose:
                    log.info("   a_aff %.2e a_max %.2e sigma %.2e dtau %.2e", a_aff, a_max, sigma, dtau)
                alpha = min(1.0, opts.step_fraction * a_max)

                for _ in range(30):
                    if scal.interior(x_k + alpha * dxk, s_k + alpha * dsk):
                        break
                    alpha *= 0.8
                else:
                    raise np.linalg.LinAlgError("could not keep iterate interior")
            except (np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
                status, message = NUMERICAL_LIMIT, f"linear algebra failure: {exc}"
                break

            x_f = x_f + alpha * dxf
            x_k = x_k + alpha * dxk
            y = y + alpha * dy
            s_k = s_k + alpha * dsk
            tau = tau + alpha * dtau
            kappa = kappa + alpha * dkappa
            if alpha < 1e-9:
                small_steps += 1
                if small_steps >= 3:
                    status, message = NUMERICAL_LIMIT, "step length stalled"
                    break
            else:
                small_steps = 0

        if status == INFEASIBLE:
            # report the certificate normalized so that b^T y = 1
            by = float(b @ y)
            return finish(status, x_f * 0, x_k * 0, y / by, s_k / by, it, message)
        if status == DUAL_INFEASIBLE:
            cx = float(c_f @ x_f + c_k @ x_k)
            return finish(status, x_f / -cx, x_k / -cx, y * 0, s_k * 0, it, message)
        return finish(status, x_f / tau, x_k / tau, y / tau, s_k / tau, it, message)


def _augmented_solver(scal: _Scaling, A_k, A_f, m, n_f):
    """Solve in scaled variables: [[-I, At^T, 0], [At, 0, A_f], [0, A_f^T, 0]]."""
    n_k = scal.dim
    Winv = np.zeros((n_k, n_k))
    Winv[: scal.n_lp, : scal.n_lp] = np.diag(1.0 / scal.w)
    for sl, Ri, n in zip(scal.slices, scal.Rinv, scal.psd):
        E = smat(np.eye(sl.stop - sl.start), n)
        Winv[sl, sl] = svec(np.swapaxes(Ri, 0, 1) @ E @ Ri).T
    At = A_k @ Winv
    size = n_k + m + n_f
    K = np.zeros((size, size))
    K[:n_k, :n_k] = -np.eye(n_k)
    K[:n_k, n_k:n_k + m] = At.T
    K[n_k:n_k + m, :n_k] = At
    K[n_k:n_k + m, n_k + m:] = A_f
    K[n_k + m:, n_k:n_k + m] = A_f.T
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu = sla.lu_factor(K, check_finite=True)

    def solve(rp, rdf, rdk, d_s):
        rhs = np.concatenate([-scal.WinvT(rdk) - scal.lam_div(d_s), rp, -rdf])
        sol = sla.lu_solve(lu, rhs)
        sol = sol + sla.lu_solve(lu, rhs - K @ sol)
        xt, dy, dxf = sol[:n_k], sol[n_k:n_k + m], sol[n_k + m:]
        return dxf, Winv @ xt, dy

    return solve, lambda: f"aug {size}"


def _normal_solver(scal: _Scaling, A_k, A_f, m, n_f, Q1, R1, Nf):
    """Normal equations with the free block eliminated by a null-space basis."""
    n_lp = scal.n_lp
    hdiag, hmats = scal.hinv_blocks()

    def hinv(u):
        out = np.empty_like(u)
        out[:n_lp] = hdiag * u[:n_lp]
        for sl, H in zip(scal.slices, hmats):
            out[sl] = H @ u[sl]
        return out

    M = (A_k[:, :n_lp] * hdiag) @ A_k[:, :n_lp].T
    for sl, H in zip(scal.slices, hmats):
        Ab = A_k[:, sl]
        M += Ab @ H @ Ab.T
    NMN = Nf.T @ M @ Nf
    NMN = 0.5 * (NMN + NMN.T)
    try:
        chol = sla.cho_factor(NMN, lower=True, check_finite=True)
    except np.linalg.LinAlgError:
        shift = 1e-14 * max(1.0, float(np.trace(NMN)))
        chol = sla.cho_factor(NMN + shift * np.eye(NMN.shape[0]), lower=True)

    def kkt(r1, r2):
        yp = Q1 @ sla.solve_triangular(R1, r2, trans="T") if n_f else np.zeros(m)
        w = sla.cho_solve(chol, Nf.T @ (r1 - M @ yp)) if Nf.shape[1] else np.zeros(0)
        dy = yp + Nf @ w
        dxf = sla.solve_triangular(R1, Q1.T @ (r1 - M @ dy)) if n_f else np.zeros(0)
        return dy, dxf

    def solve(rp, rdf, rdk, d_s):
        gk = rdk + scal.WT(scal.lam_div(d_s))
        dy, dxf = kkt(rp - A_k @ hinv(gk), -rdf)
        return dxf, hinv(A_k.T @ dy + gk), dy

    return solve, lambda: f"normal cond {np.linalg.cond(NMN):.1e}"


def _stack_norm(parts) -> float:
    return math.sqrt(sum(float(np.sum(np.square(p))) for p in parts))


def _residuals(A, b, c, x, y, s, free_idx, cone_idx):
    pres = float(np.linalg.norm(A @ x - b) / (1.0 + np.linalg.norm(b)))
    r = c - A.T @ y - s
    dres = float(np.linalg.norm(r) / (1.0 + np.linalg.norm(c)))
    pobj, dobj = float(c @ x), float(b @ y)
    return {"primal": pres, "dual": dres, "gap": abs(pobj - dobj),
            "rel_gap": abs(pobj - dobj) / (1.0 + abs(pobj))}
