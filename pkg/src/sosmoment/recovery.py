"""Read an optimal discrete measure off the first-order moment blocks of the dual SDP."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import solver as so
from .compile import CompiledPair
from .model import DiscreteMeasure, MomentProblem, expectation
from .polycore import GramBasis, Polynomial
from .support import MEMBERSHIP_TOL, membership

log = logging.getLogger(__name__)

EPS0 = 1e-6
NEAR_ATOM = 1e-9
SIGN_TOL = 1e-7
CERT_TOL = 1e-6


class NoAtoms(RuntimeError):
    pass


@dataclass
class SignCheck:
    k: int
    z: float
    h_values: List[float]
    ok: bool


@dataclass
class RecoveryReport:
    measure: DiscreteMeasure
    K: List[int]
    moments: List[np.ndarray]
    sign_checks: List[SignCheck]
    slacks: List[float]
    objective: float
    sdp_value: float
    weight_sum: float
    atoms_in_support: List[bool]
    near_atoms: List[int] = field(default_factory=list)
    certified: bool = False
    reasons: List[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "certified": self.certified,
            "reasons": list(self.reasons),
            "sdp_value": self.sdp_value,
            "objective": self.objective,
            "measure": self.measure.to_json(),
            "K": list(self.K),
            "weight_sum_before_renormalization": self.weight_sum,
            "near_atoms": list(self.near_atoms),
            "atoms_in_support": list(self.atoms_in_support),
            "slacks": list(self.slacks),
            "sign_checks": [{"k": s.k, "z": s.z, "h": s.h_values, "ok": s.ok} for s in self.sign_checks],
            "moments": [y.tolist() for y in self.moments],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)


def recover(pair: CompiledPair, sol: so.Solution, eps0: float = EPS0, sign_tol: float = SIGN_TOL,
            tol: float = CERT_TOL) -> RecoveryReport:
    """Build the measure and check every condition needed to certify it."""
    if sol.status != so.OPTIMAL:
        raise ValueError(f"recovery needs an optimal dual solution, got {sol.status}")
    problem = pair.problem
    m = problem.num_vars
    G = pair.gram
    ys = pair.moment_blocks(sol.x)
    zs = pair.z_values(sol.x)
    h_coef = [G.coefficient_vector(h) for h, _ in problem.constraints]

    y0 = np.array([y[0] for y in ys])
    K = [k for k in range(pair.r) if y0[k] > eps0]
    near = [k for k in range(pair.r) if NEAR_ATOM < y0[k] <= eps0]
    if near:
        log.info("near-atoms below threshold: %s", near)
    if not K:
        raise NoAtoms(f"no block has y_0 > {eps0}")

    weights = y0[K]
    weight_sum = float(weights.sum())
    points = np.array([ys[k][1:1 + m] / ys[k][0] for k in K])
    mu = DiscreteMeasure(weights / weight_sum, points,
                         renormalized_from=weight_sum if abs(weight_sum - 1.0) > 0 else None)

    reasons = []
    if np.any(y0 < -sign_tol):
        reasons.append(f"negative y_0 in blocks {np.nonzero(y0 < -sign_tol)[0].tolist()}")
    signs = []
    for k in range(pair.r):
        if k in K:
            continue
        hv = [float(hc @ ys[k]) for hc in h_coef]
        ok = zs[k] >= -sign_tol and all(v >= -sign_tol for v in hv)
        signs.append(SignCheck(k, float(zs[k]), hv, ok))
        if not ok:
            reasons.append(f"sign condition fails for block {k} (z={zs[k]:.3g}, h={hv})")

    inside = [membership(problem.support, u, MEMBERSHIP_TOL) for u in points]
    if not all(inside):
        reasons.append("an atom lies outside the support")
    slacks = [expectation(mu, h) - gamma for h, gamma in problem.constraints]
    if any(s > tol for s in slacks):
        reasons.append(f"moment constraints violated (max slack {max(slacks):.3g})")
    obj = expectation(mu, problem.objective)
    sdp_value = sol.primal_objective
    if abs(obj - sdp_value) > tol:
        reasons.append(f"objective {obj:.9g} differs from SDP value {sdp_value:.9g}")
    if abs(weight_sum - 1.0) > tol:
        reasons.append(f"active weights sum to {weight_sum:.9g}")
    return RecoveryReport(mu, K, ys, signs, slacks, obj, sdp_value, weight_sum, inside, near,
                          not reasons, reasons)


def jensen_check(y, f: Polynomial, gram: GramBasis, tol: float = 1e-8):
    """``(L_y(f), f(L_y(v)), gap)`` for a pseudo-moment vector with PSD moment matrix."""
    y = np.asarray(y, dtype=float)
    if y[0] <= 0:
        raise ValueError("moment vector needs y_0 > 0")
    y = y / y[0]
    M = gram.moment_matrix(y)
    scale = 1.0 + np.abs(M).max()
    if np.linalg.eigvalsh(M)[0] < -tol * scale:
        raise ValueError("moment matrix is not PSD")
    lhs = float(gram.coefficient_vector(f) @ y)
    rhs = f.eval(y[1:1 + gram.num_vars])
    return lhs, rhs, lhs - rhs


def moments_of(mu: DiscreteMeasure, gram: GramBasis) -> np.ndarray:
    """Moment vector of a discrete measure in the Gram basis order."""
    out = np.zeros(len(gram.alphas))
    for i, alpha in enumerate(gram.alphas):
        out[i] = float(mu.weights @ np.prod(mu.points ** np.array(alpha), axis=1))
    return out


def primal_value(pair: CompiledPair, x: np.ndarray) -> float:
    """``-sum_j lam_j gamma_j - lam0`` from an SOS-side solution."""
    parts = pair.primal_parts(x)
    gammas = np.array([g for _, g in pair.problem.constraints])
    return float(-(parts["lam"] @ gammas) - parts["lam0"]) if gammas.size else -parts["lam0"]


def validate_against_primal(report: RecoveryReport, problem: MomentProblem, primal: float,
                            tol: float = 2e-3) -> bool:
    obj = expectation(report.measure, problem.objective)
    gap = abs(obj - primal)
    if gap > tol:
        log.warning("recovered objective %.9g vs SOS value %.9g (gap %.3g)", obj, primal, gap)
        return False
    return True


@dataclass
class PolyOptResult:
    value: float
    minimizer: np.ndarray
    moments: np.ndarray


def poly_minimizer(pair: CompiledPair, sol: so.Solution) -> PolyOptResult:
    """Minimizer ``(y_{e_1}, ..., y_{e_m})`` for the one-piece, no-constraint case."""
    if pair.r != 1 or pair.problem.objective.L != 1 or pair.problem.J:
        raise ValueError("poly_minimizer applies to a single polynomial without moment constraints")
    y = pair.moment_blocks(sol.x)[0]
    m = pair.problem.num_vars
    return PolyOptResult(sol.primal_objective, y[1:1 + m] / y[0], y / y[0])
