"""Problem data: piecewise SOS-convex objectives, moment constraints, discrete measures."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .polycore import Polynomial, even_degree_at_least
from .support import ProjectedSpectrahedron

MEASURE_TOL = 1e-8


class ValidationError(ValueError):
    pass


@dataclass(frozen=True)
class PiecewiseSosConvex:
    """``min_k max_l g[k][l](v)`` over an r-by-L grid of polynomials."""

    pieces: Tuple[Tuple[Polynomial, ...], ...]

    def __post_init__(self):
        grid = tuple(tuple(row) for row in self.pieces)
        if not grid or not grid[0]:
            raise ValidationError("piecewise function needs r >= 1 and L >= 1")
        L = len(grid[0])
        if any(len(row) != L for row in grid):
            raise ValidationError("piece grid must be rectangular (same L for every k)")
        m = grid[0][0].num_vars
        if any(p.num_vars != m for row in grid for p in row):
            raise ValidationError("all pieces must share the same number of variables")
        object.__setattr__(self, "pieces", grid)

    @property
    def r(self) -> int:
        return len(self.pieces)

    @property
    def L(self) -> int:
        return len(self.pieces[0])

    @property
    def num_vars(self) -> int:
        return self.pieces[0][0].num_vars

    @property
    def degree(self) -> int:
        return max(p.degree for row in self.pieces for p in row)

    def all_pieces(self) -> List[Polynomial]:
        return [p for row in self.pieces for p in row]

    def evaluate(self, v) -> Tuple[float, int, int]:
        """Value with the active (k, l); ties go to the smallest index."""
        vals = np.array([[p.eval(v) for p in row] for row in self.pieces])
        ell = np.argmax(vals, axis=1)
        row_max = vals[np.arange(self.r), ell]
        k = int(np.argmin(row_max))
        return float(row_max[k]), k, int(ell[k])

    def __call__(self, v) -> float:
        return self.evaluate(v)[0]

    def row_max_many(self, pts) -> np.ndarray:
        """``max_l g[k][l]`` at each point, shape (n_points, r)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        vals = np.stack([np.stack([p.eval_many(pts) for p in row], axis=-1) for row in self.pieces], axis=1)
        return vals.max(axis=-1)

    def value_many(self, pts) -> np.ndarray:
        return self.row_max_many(pts).min(axis=1)

    def shifted(self, c: float) -> "PiecewiseSosConvex":
        return PiecewiseSosConvex(tuple(tuple(p + c for p in row) for row in self.pieces))

    def to_json(self) -> dict:
        return {"pieces": [[p.to_json() for p in row] for row in self.pieces]}

    @classmethod
    def from_json(cls, data) -> "PiecewiseSosConvex":
        if "builder" in data:
            return build_piecewise(data["builder"], data.get("params", {}))
        return cls(tuple(tuple(Polynomial.from_json(p) for p in row) for row in data["pieces"]))


@dataclass(frozen=True)
class MomentProblem:
    """minimize E[g] over probability measures on the support with E[h_j] <= gamma_j."""

    objective: PiecewiseSosConvex
    constraints: Tuple[Tuple[Polynomial, float], ...]
    support: ProjectedSpectrahedron

    def __post_init__(self):
        cons = tuple((h, float(g)) for h, g in self.constraints)
        m = self.support.dim
        if self.objective.num_vars != m:
            raise ValidationError(f"objective has {self.objective.num_vars} variables, support has {m}")
        for h, _ in cons:
            if h.num_vars != m:
                raise ValidationError(f"constraint has {h.num_vars} variables, support has {m}")
        object.__setattr__(self, "constraints", cons)

    @property
    def num_vars(self) -> int:
        return self.support.dim

    @property
    def J(self) -> int:
        return len(self.constraints)

    def degree(self, bump: bool = False) -> int:
        degs = [p.degree for p in self.objective.all_pieces()] + [h.degree for h, _ in self.constraints]
        return even_degree_at_least(degs, bump=bump)

    def validate(self, level: str = "strict", tol: float = 1e-8) -> None:
        """Raise ValidationError unless every piece and every h_j is SOS-convex."""
        if level == "none":
            return
        if level != "strict":
            raise ValueError("validation level must be 'none' or 'strict'")
        from .soscert import is_sos_convex

        for k, row in enumerate(self.objective.pieces):
            for ell, p in enumerate(row):
                if not is_sos_convex(p, tol):
                    raise ValidationError(f"piece g[{k}][{ell}] is not certified SOS-convex")
        for j, (h, _) in enumerate(self.constraints):
            if not is_sos_convex(h, tol):
                raise ValidationError(f"constraint h[{j}] is not certified SOS-convex")

    def to_json(self) -> dict:
        return {
            "objective": self.objective.to_json(),
            "constraints": [{"h": h.to_json(), "gamma": g} for h, g in self.constraints],
            "support": self.support.to_json(),
        }

    @classmethod
    def from_json(cls, data) -> "MomentProblem":
        try:
            objective = PiecewiseSosConvex.from_json(data["objective"])
            support = ProjectedSpectrahedron.from_json(data["support"])
            cons = tuple((Polynomial.from_json(c["h"]), float(c["gamma"]))
                         for c in data.get("constraints", []))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed problem JSON: {exc}") from exc
        return cls(objective, cons, support)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    weights: np.ndarray
    points: np.ndarray
    renormalized_from: Optional[float] = field(default=None, compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        P = np.asarray(self.points, dtype=float)
        if P.ndim == 1:
            P = P.reshape(len(w), -1)
        if P.shape[0] != w.size:
            raise ValueError("one point per weight required")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        if abs(w.sum() - 1.0) > MEASURE_TOL:
            raise ValueError(f"weights sum to {w.sum():.12g}, not 1")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "points", P)

    @classmethod
    def dirac(cls, u) -> "DiscreteMeasure":
        return cls(np.array([1.0]), np.atleast_2d(np.asarray(u, dtype=float)))

    @property
    def num_atoms(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def atoms(self) -> List[Tuple[float, np.ndarray]]:
        return [(float(w), p.copy()) for w, p in zip(self.weights, self.points)]

    def to_json(self) -> dict:
        return {"atoms": [{"weight": float(w), "point": p.tolist()} for w, p in zip(self.weights, self.points)]}

    @classmethod
    def from_json(cls, data) -> "DiscreteMeasure":
        atoms = data["atoms"]
        return cls(np.array([a["weight"] for a in atoms]), np.array([a["point"] for a in atoms]))

    def format(self, digits: int = 4) -> str:
        parts = []
        for w, p in zip(self.weights, self.points):
            pt = ",".join(f"{x:.{digits}f}" for x in p)
            parts.append(f"{w:.{digits}f}@{pt}")
        return ";".join(parts)


def expectation(mu: DiscreteMeasure, f) -> float:
    """``sum_k w_k f(u_k)`` for a polynomial or piecewise function ``f``."""
    if f.num_vars != mu.dim:
        raise ValueError(f"function has {f.num_vars} variables, measure lives in R^{mu.dim}")
    if isinstance(f, PiecewiseSosConvex):
        vals = f.value_many(mu.points)
    else:
        vals = f.eval_many(mu.points)
    return float(mu.weights @ vals)


# ----------------------------------------------------------------------
# catalog of piecewise representations


def _v(m: int = 1, i: int = 0) -> Polynomial:
    return Polynomial.variable(m, i)


def truncated_l1(eps: float) -> PiecewiseSosConvex:
    """min(1, eps |v|)."""
    if eps <= 0:
        raise ValidationError("truncated_l1 needs eps > 0")
    one = Polynomial.constant(1, 1.0)
    v = _v()
    return PiecewiseSosConvex(((one, one), (eps * v, -eps * v)))


def piecewise_linear(P, q) -> PiecewiseSosConvex:
    """min_k p_k^T v + q_k."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    q = np.asarray(q, dtype=float).reshape(-1)
    if P.shape[0] != q.size:
        raise ValidationError("piecewise_linear: one offset per slope row")
    return PiecewiseSosConvex(tuple((Polynomial.affine(p, b),) for p, b in zip(P, q)))


def max_sos_convex(gs: Sequence[Polynomial]) -> PiecewiseSosConvex:
    """max_l g_l."""
    return PiecewiseSosConvex((tuple(gs),))


def dc_minmax(fs: Sequence[Polynomial], P, q) -> PiecewiseSosConvex:
    """max_l f_l - max_k (p_k^T v + q_k) as the grid f_l - p_k^T v - q_k."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    q = np.asarray(q, dtype=float).reshape(-1)
    if P.shape[0] != q.size:
        raise ValidationError("dc_minmax: one offset per slope row")
    rows = []
    for p, b in zip(P, q):
        aff = Polynomial.affine(p, b)
        rows.append(tuple(f - aff for f in fs))
    return PiecewiseSosConvex(tuple(rows))


def quad_quartic(alpha: float, beta: float, b: float, c: float) -> PiecewiseSosConvex:
    """alpha (v-b)^2 + beta (v-b)^4 + c on [0, b], then flat at c."""
    if alpha < 0 or beta < 0 or b < 0:
        raise ValidationError("quad_quartic needs alpha, beta, b >= 0")
    v = _v()
    top = alpha * (v - b) ** 2 + beta * (v - b) ** 4 + c
    secant = Polynomial.affine([-(alpha * b + beta * b ** 3)], alpha * b ** 2 + beta * b ** 4 + c)
    flat = Polynomial.constant(1, c)
    return PiecewiseSosConvex(((top, top), (secant, flat)))


def piecewise_quadratic(a: float, b: float, c: float) -> PiecewiseSosConvex:
    """a (v-b)^2 + c on [0, b], then flat at c."""
    if a < 0 or b < 0:
        raise ValidationError("piecewise_quadratic needs a, b >= 0")
    return quad_quartic(a, 0.0, b, c)


def huber(eps: float) -> PiecewiseSosConvex:
    if eps <= 0:
        raise ValidationError("huber needs eps > 0")
    v = _v()
    quad = 0.5 * v ** 2
    half = 0.5 * eps * eps
    return PiecewiseSosConvex((
        (quad, quad, quad, quad),
        (eps * v - half, -eps * v - half, 0.5 * eps * v, -0.5 * eps * v),
    ))


def _poly_list(items) -> List[Polynomial]:
    return [p if isinstance(p, Polynomial) else Polynomial.from_json(p) for p in items]


BUILDERS = {
    "truncated_l1": lambda p: truncated_l1(p["eps"]),
    "piecewise_linear": lambda p: piecewise_linear(p["P"], p["q"]),
    "max_sos_convex": lambda p: max_sos_convex(_poly_list(p["g"])),
    "dc_minmax": lambda p: dc_minmax(_poly_list(p["f"]), p["P"], p["q"]),
    "piecewise_quadratic": lambda p: piecewise_quadratic(p["a"], p["b"], p["c"]),
    "quad_quartic": lambda p: quad_quartic(p["alpha"], p["beta"], p["b"], p["c"]),
    "huber": lambda p: huber(p["eps"]),
}


def build_piecewise(name: str, params: Dict) -> PiecewiseSosConvex:
    if name not in BUILDERS:
        raise ValidationError(f"unknown builder {name!r}; known: {', '.join(sorted(BUILDERS))}")
    try:
        return BUILDERS[name](params)
    except KeyError as exc:
        raise ValidationError(f"builder {name!r} is missing parameter {exc}") from exc
