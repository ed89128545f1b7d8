"""Projected spectrahedra: {v : exists xi, F0 + sum v_i F_i + sum xi_t M_t >= 0}."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import solver as so

MEMBERSHIP_TOL = 1e-7


class NotCompactError(ValueError):
    pass


class NotFound(Exception):
    """No strictly feasible point exists (or none was found)."""


def _sym(M) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ValueError("LMI matrices must be square")
    if not np.allclose(M, M.T, atol=1e-12):
        raise ValueError("LMI matrices must be symmetric")
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class ProjectedSpectrahedron:
    F: tuple
    M: tuple = ()
    label: Optional[dict] = field(default=None, compare=False)

    def __post_init__(self):
        F = tuple(_sym(f) for f in self.F)
        M = tuple(_sym(f) for f in self.M)
        if len(F) < 2:
            raise ValueError("need F_0 and at least one F_i")
        nu = F[0].shape[0]
        if any(f.shape != (nu, nu) for f in F + M):
            raise ValueError("all LMI matrices must share one size")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "M", M)

    @property
    def dim(self) -> int:
        return len(self.F) - 1

    @property
    def lifted_dim(self) -> int:
        return len(self.M)

    @property
    def nu(self) -> int:
        return self.F[0].shape[0]

    def lmi(self, v, xi=None) -> np.ndarray:
        v = np.asarray(v, dtype=float).reshape(-1)
        if v.size != self.dim:
            raise ValueError(f"point has dimension {v.size}, support has {self.dim}")
        out = self.F[0] + np.tensordot(v, np.array(self.F[1:]), axes=1)
        if xi is not None and self.M:
            out = out + np.tensordot(np.asarray(xi, dtype=float), np.array(self.M), axes=1)
        return out

    # ------------------------------------------------------------------
    def to_json(self) -> dict:
        if self.label is not None:
            return dict(self.label)
        return {"m": self.dim, "nu": self.nu,
                "F": [f.tolist() for f in self.F], "M": [f.tolist() for f in self.M]}

    @classmethod
    def from_json(cls, data) -> "ProjectedSpectrahedron":
        if "interval" in data:
            lo, hi = data["interval"]
            return interval(lo, hi)
        if "box" in data:
            los, his = data["box"]
            return box(los, his)
        if "ball" in data:
            spec = data["ball"]
            return ball(spec["center"], spec.get("radius", 1.0))
        if "ellipsoid" in data:
            spec = data["ellipsoid"]
            return ellipsoid(spec["A"], spec.get("b"))
        if "F" not in data:
            raise ValueError("support JSON needs F matrices or a named form")
        omega = cls(tuple(data["F"]), tuple(data.get("M", [])))
        if "m" in data and data["m"] != omega.dim:
            raise ValueError("support JSON: 'm' does not match the number of F matrices")
        return omega


# ----------------------------------------------------------------------
# constructors


def interval(lo: float, hi: float) -> ProjectedSpectrahedron:
    lo, hi = float(lo), float(hi)
    if not lo < hi:
        raise ValueError("interval needs lo < hi")
    return ProjectedSpectrahedron((np.diag([-lo, hi]), np.diag([1.0, -1.0])),
                                  label={"interval": [lo, hi]})


def box(los: Sequence[float], his: Sequence[float]) -> ProjectedSpectrahedron:
    los = np.asarray(los, dtype=float).reshape(-1)
    his = np.asarray(his, dtype=float).reshape(-1)
    if los.shape != his.shape:
        raise ValueError("box bounds have different lengths")
    if los.size == 0 or np.any(los >= his):
        raise ValueError("box needs lo < hi in every coordinate")
    m = los.size
    F0 = np.diag(np.ravel(np.column_stack([-los, his])))
    F = [F0]
    for i in range(m):
        d = np.zeros(2 * m)
        d[2 * i], d[2 * i + 1] = 1.0, -1.0
        F.append(np.diag(d))
    return ProjectedSpectrahedron(tuple(F), label={"box": [los.tolist(), his.tolist()]})


def ellipsoid(A, b=None) -> ProjectedSpectrahedron:
    """{v : ||A v + b|| <= 1} through its Schur-complement LMI."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    p, m = A.shape
    b = np.zeros(p) if b is None else np.asarray(b, dtype=float).reshape(-1)
    if b.size != p:
        raise ValueError("ellipsoid: b must have one entry per row of A")

    def block(col, corner):
        out = np.zeros((p + 1, p + 1))
        out[:p, :p] = corner * np.eye(p)
        out[:p, p] = out[p, :p] = col
        out[p, p] = corner
        return out

    F = [block(b, 1.0)] + [block(A[:, i], 0.0) for i in range(m)]
    return ProjectedSpectrahedron(tuple(F), label={"ellipsoid": {"A": A.tolist(), "b": b.tolist()}})


def ball(center, radius: float = 1.0) -> ProjectedSpectrahedron:
    center = np.asarray(center, dtype=float).reshape(-1)
    if radius <= 0:
        raise ValueError("ball radius must be positive")
    m = center.size
    omega = ellipsoid(np.eye(m) / radius, -center / radius)
    return ProjectedSpectrahedron(omega.F, omega.M,
                                  label={"ball": {"center": center.tolist(), "radius": float(radius)}})


# ----------------------------------------------------------------------
# SDP-based queries


def _lmi_builder(omega: ProjectedSpectrahedron, sense: str, fixed_v=None, with_t=True):
    """Rows encoding X = F(v) + sum xi M - t I with X PSD."""
    b = so.ProgramBuilder(sense)
    b.add_var("X", so.PSD, omega.nu)
    if fixed_v is None:
        b.add_var("v", so.FREE, omega.dim)
    if omega.lifted_dim:
        b.add_var("xi", so.FREE, omega.lifted_dim)
    if with_t:
        b.add_var("t", so.FREE, 1)
    const = omega.F[0] if fixed_v is None else omega.lmi(fixed_v)
    c0 = so.svec(const)
    Fv = [so.svec(f) for f in omega.F[1:]]
    Mv = [so.svec(f) for f in omega.M]
    I = so.svec(np.eye(omega.nu))
    for e in range(c0.size):
        r = b.new_row(c0[e])
        b.add(r, b.col("X", e), 1.0)
        if fixed_v is None:
            for i, f in enumerate(Fv):
                b.add(r, b.col("v", i), -f[e])
        for t_, f in enumerate(Mv):
            b.add(r, b.col("xi", t_), -f[e])
        if with_t:
            b.add(r, b.col("t"), I[e])
    return b


def _eig_member(omega, pts, tol):
    stack = omega.F[0][None] + np.einsum("pi,ijk->pjk", pts, np.array(omega.F[1:]))
    return np.linalg.eigvalsh(stack)[:, 0] >= -tol


def membership(omega: ProjectedSpectrahedron, v, tol: float = MEMBERSHIP_TOL) -> bool:
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != omega.dim:
        raise ValueError(f"point has dimension {v.size}, support has {omega.dim}")
    if not omega.lifted_dim:
        return bool(_eig_member(omega, v[None], tol)[0])
    # maximize t with F(v) + sum xi M >= t I and t <= 1
    b = _lmi_builder(omega, "max", fixed_v=v)
    b.add_var("cap", so.NONNEG, 1)
    r = b.new_row(1.0)
    b.add(r, b.col("t"), 1.0)
    b.add(r, b.col("cap"), 1.0)
    b.set_obj(b.col("t"), 1.0)
    sol = so.solve(b.build())
    if sol.status == so.INFEASIBLE:
        return False
    if not sol.optimal:
        raise so.SolverError(f"membership solve failed: {sol.status}")
    return sol.primal_objective >= -tol


def membership_many(omega: ProjectedSpectrahedron, pts, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if not omega.lifted_dim:
        return _eig_member(omega, pts, tol)
    return np.array([membership(omega, p, tol) for p in pts], dtype=bool)


@dataclass
class SlaterPoint:
    v: np.ndarray
    xi: np.ndarray
    t: float
    unbounded: bool = False


def slater_point(omega: ProjectedSpectrahedron, threshold: float = 1e-6) -> SlaterPoint:
    """Most interior point: maximize t with F(v) + sum xi M >= t I."""
    b = _lmi_builder(omega, "max")
    b.set_obj(b.col("t"), 1.0)
    sol = so.solve(b.build())
    unbounded = False
    if sol.status == so.DUAL_INFEASIBLE:
        unbounded = True
        b.add_var("cap", so.NONNEG, 1)
        r = b.new_row(1.0)
        b.add(r, b.col("t"), 1.0)
        b.add(r, b.col("cap"), 1.0)
        sol = so.solve(b.build())
    if sol.status == so.INFEASIBLE:
        raise NotFound("LMI is infeasible")
    if not sol.optimal:
        raise so.SolverError(f"Slater search failed: {sol.status}")
    cp_names = b.names
    t = float(sol.x[cp_names["t"][0]])
    if t <= threshold:
        raise NotFound(f"no strictly feasible point (max margin {t:.3g})")
    start, cone = cp_names["v"]
    v = sol.x[start:start + cone.dim].copy()
    xi = np.zeros(0)
    if omega.lifted_dim:
        start, cone = cp_names["xi"]
        xi = sol.x[start:start + cone.dim].copy()
    return SlaterPoint(v, xi, t, unbounded)


def bounding_box(omega: ProjectedSpectrahedron, margin: float = 0.0):
    """Per-coordinate extremes of the support; raises NotCompactError if unbounded."""
    lo = np.empty(omega.dim)
    hi = np.empty(omega.dim)
    for i in range(omega.dim):
        for sense, store in (("min", lo), ("max", hi)):
            b = _lmi_builder(omega, sense, with_t=False)
            b.set_obj(b.col("v", i), 1.0)
            sol = so.solve(b.build())
            if sol.status == so.DUAL_INFEASIBLE:
                raise NotCompactError(f"support not compact in coordinate {i}")
            if sol.status == so.INFEASIBLE:
                raise ValueError("support is empty")
            if not sol.optimal:
                raise so.SolverError(f"bounding box solve failed: {sol.status}")
            store[i] = sol.x[b.names["v"][0] + i]
    return lo - margin, hi + margin
