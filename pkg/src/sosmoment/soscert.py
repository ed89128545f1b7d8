"""SOS, SOS-convexity and piecewise non-negativity certificates.

Every certificate is cleaned after the solve (PSD projection, exact
re-assembly of the certified polynomial) and re-checked by ``verify``
functions that never call the solver.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import solver as so
from .model import PiecewiseSosConvex, ValidationError
from .polycore import GramBasis, Polynomial, even_degree_at_least, gram_basis
from .support import NotCompactError, ProjectedSpectrahedron, bounding_box, membership_many, slater_point

log = logging.getLogger(__name__)

TOL_PSD = 1e-8
TOL_RES = 1e-7


@dataclass
class NotCertified:
    reason: str  # "infeasible" | "numerical" | "odd_degree" | "negative"
    message: str = ""
    status: Optional[str] = None
    failed_k: List[int] = field(default_factory=list)
    margins: Optional[List[float]] = None
    witness: Optional[np.ndarray] = None
    witness_value: Optional[float] = None

    def __bool__(self):
        return False


@dataclass
class SosCertificate:
    gram: np.ndarray
    num_vars: int
    degree: int

    @property
    def basis(self):
        return gram_basis(self.num_vars, self.degree).basis

    def polynomial(self) -> Polynomial:
        return gram_basis(self.num_vars, self.degree).poly_from_gram(self.gram)

    def min_eig(self) -> float:
        return float(np.linalg.eigvalsh(self.gram)[0]) if self.gram.size else 0.0

    def residual(self, f: Polynomial) -> float:
        return (f - self.polynomial()).max_abs_coeff()

    def verify(self, f: Polynomial, tol_psd: float = TOL_PSD, tol_res: float = TOL_RES) -> bool:
        return self.min_eig() >= -tol_psd and self.residual(f) <= tol_res

    def to_json(self) -> dict:
        return {"num_vars": self.num_vars, "degree": self.degree, "gram": self.gram.tolist()}

    @classmethod
    def from_json(cls, data) -> "SosCertificate":
        return cls(np.array(data["gram"], dtype=float), int(data["num_vars"]), int(data["degree"]))


def _psd_project(Q: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (Q + Q.T))
    return (V * np.clip(w, 0.0, None)) @ V.T


def fit_gram(G: GramBasis, Q: np.ndarray, target: Polynomial) -> np.ndarray:
    """Closest matrix to ``Q`` (Frobenius) whose Gram polynomial equals ``target``.

    The index sets ``{(i, j) : label[i, j] = alpha}`` are disjoint, so the
    projection spreads each coefficient residual evenly over its entries.
    """
    want = G.coefficient_vector(target)
    have = np.zeros(len(G.alphas))
    np.add.at(have, G.label.ravel(), Q.ravel())
    counts = np.bincount(G.label.ravel(), minlength=len(G.alphas))
    return Q + ((want - have) / counts)[G.label]


def _gram_program(f: Polynomial, G: GramBasis) -> so.ConicProgram:
    b = so.ProgramBuilder("min")
    b.add_var("Q", so.PSD, G.size)
    coef = G.coefficient_vector(f)
    for a_idx, alpha in enumerate(G.alphas):
        r = b.new_row(coef[a_idx])
        b.add_matrix_term(r, "Q", G.matrices[alpha])
    return b.build()


def check_sos(f: Polynomial, tol_psd: float = TOL_PSD, tol_res: float = TOL_RES,
              solver_tol: float = 1e-9):
    """Find a PSD Gram matrix for ``f`` or report why none was found."""
    m = f.num_vars
    if f.is_zero():
        return SosCertificate(np.zeros((1, 1)), m, 0)
    if f.degree % 2:
        return NotCertified("odd_degree", f"degree {f.degree} is odd")
    G = gram_basis(m, f.degree)
    sol = so.solve(_gram_program(f, G), tol=solver_tol)
    if sol.status == so.INFEASIBLE:
        return NotCertified("infeasible", "no PSD Gram matrix exists", sol.status)
    if not sol.optimal:
        return NotCertified("numerical", sol.message, sol.status)
    Q = _psd_project(so.smat(sol.x, G.size))
    Q = fit_gram(G, Q, f)
    cert = SosCertificate(Q, m, f.degree)
    if not cert.verify(f, tol_psd, tol_res):
        return NotCertified("numerical", f"certificate failed re-verification (min eig {cert.min_eig():.2e})",
                            sol.status)
    return cert


def convexity_form(f: Polynomial) -> Polynomial:
    """``f(u) - f(w) - grad f(w)^T (u - w)`` in the 2m variables (u, w)."""
    m = f.num_vars
    first = list(range(m))
    second = list(range(m, 2 * m))
    fu = f.embed(2 * m, first)
    fw = f.embed(2 * m, second)
    out = fu - fw
    for i, gi in enumerate(f.gradient()):
        diff = Polynomial.variable(2 * m, i) - Polynomial.variable(2 * m, m + i)
        out = out - gi.embed(2 * m, second) * diff
    return out


def check_sos_convex(f: Polynomial, tol_psd: float = TOL_PSD, tol_res: float = TOL_RES):
    if f.degree <= 1:
        return SosCertificate(np.zeros((1, 1)), 2 * f.num_vars, 0)
    return check_sos(convexity_form(f), tol_psd, tol_res)


@lru_cache(maxsize=4096)
def _sos_convex_cached(f: Polynomial, tol: float) -> bool:
    return bool(check_sos_convex(f, tol_psd=tol))


def is_sos_convex(f: Polynomial, tol: float = TOL_PSD) -> bool:
    return _sos_convex_cached(f, tol)


# ----------------------------------------------------------------------
# piecewise non-negativity over a projected spectrahedron


@dataclass
class BlockCertificate:
    delta: np.ndarray
    Z: np.ndarray
    sigma: SosCertificate


@dataclass
class PiecewiseNonnegCertificate:
    pieces: PiecewiseSosConvex
    support: ProjectedSpectrahedron
    degree: int
    blocks: List[BlockCertificate]
    margins: List[float] = field(default_factory=list)

    def __bool__(self):
        return True

    def to_json(self) -> dict:
        return {
            "kind": "piecewise_nonneg",
            "degree": self.degree,
            "pieces": self.pieces.to_json(),
            "support": self.support.to_json(),
            "blocks": [{"delta": b.delta.tolist(), "Z": b.Z.tolist(), "gram": b.sigma.gram.tolist()}
                       for b in self.blocks],
            "margins": list(self.margins),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)

    @classmethod
    def from_json(cls, data) -> "PiecewiseNonnegCertificate":
        try:
            pieces = PiecewiseSosConvex.from_json(data["pieces"])
            omega = ProjectedSpectrahedron.from_json(data["support"])
            d = int(data["degree"])
            blocks = [BlockCertificate(np.array(b["delta"], dtype=float), np.array(b["Z"], dtype=float),
                                       SosCertificate(np.array(b["gram"], dtype=float), pieces.num_vars, d))
                      for b in data["blocks"]]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed certificate JSON: {exc}") from exc
        return cls(pieces, omega, d, blocks, list(data.get("margins", [])))


def sigma_polynomial(row: Sequence[Polynomial], delta, Z, omega: ProjectedSpectrahedron) -> Polynomial:
    """``sum_l delta_l g_l - tr(Z F_0) - sum_i v_i tr(Z F_i)``."""
    m = omega.dim
    out = Polynomial.constant(m, -float(np.sum(Z * omega.F[0])))
    for d_l, g in zip(delta, row):
        out = out + float(d_l) * g
    for i in range(m):
        out = out - float(np.sum(Z * omega.F[1 + i])) * Polynomial.variable(m, i)
    return out


@dataclass
class VerificationReport:
    ok: bool
    max_residual: float
    min_gram_eig: float
    min_Z_eig: float
    simplex_error: float
    lift_error: float
    details: List[str] = field(default_factory=list)


def verify_piecewise(cert: PiecewiseNonnegCertificate, tol_psd: float = TOL_PSD,
                     tol_res: float = TOL_RES) -> VerificationReport:
    """Re-check every algebraic condition of the certificate without solving anything."""
    pw, omega = cert.pieces, cert.support
    details = []
    if len(cert.blocks) != pw.r:
        return VerificationReport(False, np.inf, -np.inf, -np.inf, np.inf, np.inf,
                                  [f"expected {pw.r} blocks, found {len(cert.blocks)}"])
    max_res, min_q, min_z, simplex_err, lift_err = 0.0, np.inf, np.inf, 0.0, 0.0
    for k, blk in enumerate(cert.blocks):
        sig = sigma_polynomial(pw.pieces[k], blk.delta, blk.Z, omega)
        res = blk.sigma.residual(sig)
        qe = blk.sigma.min_eig()
        ze = float(np.linalg.eigvalsh(0.5 * (blk.Z + blk.Z.T))[0])
        se = max(abs(float(np.sum(blk.delta)) - 1.0), float(np.max(-blk.delta, initial=0.0)))
        le = max((abs(float(np.sum(blk.Z * Mt))) for Mt in omega.M), default=0.0)
        max_res, min_q, min_z = max(max_res, res), min(min_q, qe), min(min_z, ze)
        simplex_err, lift_err = max(simplex_err, se), max(lift_err, le)
        if res > tol_res:
            details.append(f"block {k}: residual {res:.2e}")
        if qe < -tol_psd or ze < -tol_psd:
            details.append(f"block {k}: negative eigenvalue (Gram {qe:.2e}, Z {ze:.2e})")
        if se > tol_res or le > tol_res:
            details.append(f"block {k}: simplex/lift error {se:.2e}/{le:.2e}")
    return VerificationReport(not details, max_res, min_q, min_z, simplex_err, lift_err, details)


def _margin_program(row: Sequence[Polynomial], omega: ProjectedSpectrahedron, G: GramBasis) -> so.ConicProgram:
    L = len(row)
    m = omega.dim
    b = so.ProgramBuilder("max")
    b.add_var("delta", so.NONNEG, L)
    b.add_var("Z", so.PSD, omega.nu)
    b.add_var("Q", so.PSD, G.size)
    b.add_var("t", so.FREE, 1)
    b.set_obj(b.col("t"), 1.0)
    coefs = [G.coefficient_vector(g) for g in row]
    for a_idx, alpha in enumerate(G.alphas):
        r = b.new_row(0.0)
        for ell in range(L):
            b.add(r, b.col("delta", ell), coefs[ell][a_idx])
        if a_idx == 0:
            b.add_matrix_term(r, "Z", omega.F[0], -1.0)
            b.add(r, b.col("t"), -1.0)
        elif a_idx <= m:
            b.add_matrix_term(r, "Z", omega.F[a_idx], -1.0)
        b.add_matrix_term(r, "Q", G.matrices[alpha], -1.0)
    for Mt in omega.M:
        r = b.new_row(0.0)
        b.add_matrix_term(r, "Z", Mt, 1.0)
    r = b.new_row(1.0)
    for ell in range(L):
        b.add(r, b.col("delta", ell), 1.0)
    return b.build()


def _certify_block(row, omega, G, tol):
    cp = _margin_program(row, omega, G)
    sol = so.solve(cp, tol=1e-9)
    if not sol.optimal:
        return sol.status, None, None
    t = float(cp.extract(sol.x, "t")[0])
    if t < -tol:
        return sol.status, t, None
    delta = np.clip(cp.extract(sol.x, "delta"), 0.0, None)
    delta = delta / delta.sum()
    Z = _psd_project(cp.extract(sol.x, "Z"))
    Q = cp.extract(sol.x, "Q")
    Q[0, 0] += t
    sig = sigma_polynomial(row, delta, Z, omega)
    Q = fit_gram(G, Q, sig)
    return sol.status, t, BlockCertificate(delta, Z, SosCertificate(Q, omega.dim, G.degree))


def certify_piecewise_nonneg(pw: PiecewiseSosConvex, omega: ProjectedSpectrahedron, tol: float = TOL_RES,
                             bump: bool = False, seed: int = 0, workers: int = 1,
                             check_convexity: bool = False):
    """Search for the per-block certificates; on failure look for a negative witness."""
    if pw.num_vars != omega.dim:
        raise ValueError("pieces and support have different dimensions")
    if check_convexity:
        for k, row in enumerate(pw.pieces):
            for ell, g in enumerate(row):
                if not is_sos_convex(g):
                    return NotCertified("numerical", f"piece g[{k}][{ell}] is not certified SOS-convex")
    d = even_degree_at_least([g.degree for g in pw.all_pieces()], bump=bump)
    G = gram_basis(omega.dim, d)
    rows = list(pw.pieces)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(lambda row: _certify_block(row, omega, G, tol), rows))
    else:
        results = [_certify_block(row, omega, G, tol) for row in rows]
    failed_num = [k for k, (st, t, _) in enumerate(results) if t is None]
    failed_neg = [k for k, (st, t, c) in enumerate(results) if t is not None and c is None]
    margins = [t if t is not None else float("nan") for _, t, _ in results]
    if failed_num or failed_neg:
        reason = "negative" if failed_neg else "numerical"
        target = failed_neg or failed_num
        w, val = find_witness(pw, omega, ks=target, seed=seed)
        st = results[target[0]][0]
        msg = (f"blocks {target} have negative margin" if failed_neg
               else f"solver status {st} for blocks {target}")
        return NotCertified(reason, msg, st, target, margins, w, val)
    cert = PiecewiseNonnegCertificate(pw, omega, d, [c for _, _, c in results], margins)
    report = verify_piecewise(cert, tol_psd=TOL_PSD, tol_res=tol)
    if not report.ok:
        return NotCertified("numerical", "; ".join(report.details), so.OPTIMAL, [], margins)
    return cert


# ----------------------------------------------------------------------
# witness search


def _sample_support(omega, rng, n):
    try:
        lo, hi = bounding_box(omega)
    except NotCompactError:
        c = slater_point(omega).v
        lo, hi = c - 10.0, c + 10.0
    pts = rng.uniform(lo, hi, size=(n, omega.dim))
    # include the corners and the centre, which are common minimizers
    extra = [0.5 * (lo + hi)]
    if omega.dim <= 3:
        grids = np.array(np.meshgrid(*[[a, b] for a, b in zip(lo, hi)])).reshape(omega.dim, -1).T
        extra += list(grids)
    pts = np.vstack([pts, np.array(extra)])
    inside = membership_many(omega, pts)
    return pts[inside], lo, hi


def find_witness(pw: PiecewiseSosConvex, omega: ProjectedSpectrahedron, ks: Optional[Sequence[int]] = None,
                 seed: int = 0, starts: int = 64, iters: int = 200) -> Tuple[Optional[np.ndarray], Optional[float]]:
    """Multi-start projected subgradient descent on ``max_l g^k_l`` over sampled support points."""
    rng = np.random.default_rng(seed)
    ks = list(range(pw.r)) if ks is None else list(ks)
    n_samples = 4 * starts if omega.lifted_dim == 0 else starts
    pts, lo, hi = _sample_support(omega, rng, n_samples)
    if pts.shape[0] == 0:
        return None, None
    grads = [[g.gradient() for g in row] for row in pw.pieces]
    diam = float(np.max(hi - lo))
    best_pt, best_val = None, np.inf
    for k in ks:
        row = pw.pieces[k]
        vals = pw.row_max_many(pts)[:, k]
        order = np.argsort(vals)[:starts]
        for p0 in pts[order]:
            p = p0.copy()
            fp = max(g.eval(p) for g in row)
            for it in range(iters):
                act = int(np.argmax([g.eval(p) for g in row]))
                gr = np.array([gi.eval(p) for gi in grads[k][act]])
                nrm = np.linalg.norm(gr)
                if nrm == 0:
                    break
                step = 0.1 * diam / np.sqrt(it + 1)
                cand = np.clip(p - step * gr / nrm, lo, hi)
                for _ in range(8):
                    if membership_many(omega, cand[None])[0]:
                        break
                    cand = 0.5 * (cand + p)
                else:
                    continue
                fc = max(g.eval(cand) for g in row)
                if fc < fp:
                    p, fp = cand, fc
            val = pw(p)
            if val < best_val:
                best_pt, best_val = p, val
    return best_pt, float(best_val)
