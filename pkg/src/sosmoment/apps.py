"""Newsvendor and revenue-maximization builders, and parameter sweeps."""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .model import MomentProblem, PiecewiseSosConvex, ValidationError, quad_quartic
from .pipeline import solve_moment_problem
from .polycore import Polynomial
from .support import interval

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NewsvendorSpec:
    c: float = 0.1
    R: float = 10.0
    lo: float = 0.0
    hi: float = 100.0
    gamma1: float = 1.0
    gamma2: float = 1.0
    gamma3: Optional[float] = None  # fourth-moment bound; None gives the two-moment set

    def __post_init__(self):
        if not 0 <= self.c < 1:
            raise ValidationError("unit cost c must lie in [0, 1)")
        if not self.lo < self.hi:
            raise ValidationError("demand support needs lo < hi")
        if self.R <= 0:
            raise ValidationError("capacity R must be positive")


def newsvendor_problem(spec: NewsvendorSpec, x: float) -> MomentProblem:
    """``min E[min(x - v, 0)]``; the worst-case cost is ``c x`` minus its value."""
    if not 0 <= x <= spec.R:
        raise ValidationError(f"order quantity {x} outside [0, {spec.R}]")
    v = Polynomial.variable(1, 0)
    pw = PiecewiseSosConvex((((x - v),), (Polynomial.zero(1),)))
    cons = [(v, spec.gamma1), (v ** 2, spec.gamma2)]
    if spec.gamma3 is not None:
        cons.append((v ** 4, spec.gamma3))
    return MomentProblem(pw, tuple(cons), interval(spec.lo, spec.hi))


def newsvendor_cost(spec: NewsvendorSpec, x: float, value: float) -> float:
    return spec.c * x - value


@dataclass(frozen=True)
class Customer:
    alpha: float
    beta: float
    b: float
    c: float


DEFAULT_CUSTOMERS = (
    Customer(1.0, 1.0, 1.0, -5.0),
    Customer(1.0, 1.0 / 16, 2.0, -7.0),
    Customer(0.1, 1.0 / 100, 4.0, -7.5),
)


@dataclass(frozen=True)
class RevenueSpec:
    customers: Tuple[Customer, ...] = DEFAULT_CUSTOMERS
    R: float = 4.0
    gamma1: float = 2.0
    gamma2: float = 2.0

    def __post_init__(self):
        if not self.customers:
            raise ValidationError("need at least one customer")
        if self.R <= 0:
            raise ValidationError("supply cap R must be positive")
        for i, cu in enumerate(self.customers):
            if min(cu.alpha, cu.beta, cu.b) < 0:
                raise ValidationError(f"customer {i}: alpha, beta, b must be non-negative")
            # offer prices stay non-negative only below this level
            if cu.c > -cu.alpha * cu.b ** 2 - cu.beta * cu.b ** 4 + 1e-12:
                raise ValidationError(f"customer {i}: c must be at most -alpha b^2 - beta b^4")


def revenue_problem(spec: RevenueSpec) -> MomentProblem:
    """Minimize expected negative revenue; the maximum revenue is minus its value."""
    tops, tails = [], []
    for cu in spec.customers:
        (top, _), (secant, flat) = quad_quartic(cu.alpha, cu.beta, cu.b, cu.c).pieces
        tops.append((top, top))
        tails.append((secant, flat))
    v = Polynomial.variable(1, 0)
    cons = ((v, spec.gamma1), (v ** 2, spec.gamma2))
    return MomentProblem(PiecewiseSosConvex(tuple(tops + tails)), cons, interval(0.0, spec.R))


# ----------------------------------------------------------------------
# sweeps


@dataclass
class SweepRow:
    param: float
    status: str
    sdp_value: float
    derived: float
    measure: str = ""
    certified: bool = False


def _run_point(build: Callable[[float], MomentProblem], derive: Callable[[float, float], float], p: float,
               backend: str, tol: float) -> SweepRow:
    try:
        res = solve_moment_problem(build(p), backend=backend, tol=tol, with_primal=False)
    except Exception as exc:  # one failed point must not stop the sweep
        log.warning("sweep point %g failed: %s", p, exc)
        return SweepRow(p, "error", float("nan"), float("nan"))
    val = res.value
    rep = res.report
    return SweepRow(p, res.status, val, derive(p, val) if res.dual.optimal else float("nan"),
                    rep.measure.format() if rep else "", bool(rep and rep.certified))


def sweep(build: Callable[[float], MomentProblem], params: Sequence[float],
          derive: Callable[[float, float], float] = lambda p, v: v, workers: int = 1,
          backend: str = "builtin", tol: float = 1e-10) -> List[SweepRow]:
    """One independent solve per parameter value; rows keep the input order."""
    params = [float(p) for p in params]
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(lambda p: _run_point(build, derive, p, backend, tol), params))
    return [_run_point(build, derive, p, backend, tol) for p in params]


def newsvendor_sweep(spec: NewsvendorSpec, xs: Sequence[float], **kw) -> List[SweepRow]:
    return sweep(lambda x: newsvendor_problem(spec, x), xs, lambda x, v: newsvendor_cost(spec, x, v), **kw)


def revenue_sweep(spec: RevenueSpec, values: Sequence[float], vary: str = "gamma1", **kw) -> List[SweepRow]:
    """Vary gamma1 (with gamma2 = gamma1^2) or gamma2 alone."""
    if vary == "gamma1":
        def build(g):
            return revenue_problem(RevenueSpec(spec.customers, spec.R, g, g * g))
    elif vary == "gamma2":
        def build(g):
            return revenue_problem(RevenueSpec(spec.customers, spec.R, spec.gamma1, g))
    else:
        raise ValueError("vary must be 'gamma1' or 'gamma2'")
    return sweep(build, values, lambda g, v: -v, **kw)


def rows_to_csv(rows: Sequence[SweepRow], param_name: str = "param", derived_name: str = "derived_quantity") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([param_name, "status", "sdp_value", derived_name, "certified", "measure"])
    for r in rows:
        w.writerow([f"{r.param:.10g}", r.status, f"{r.sdp_value:.10g}", f"{r.derived:.10g}",
                    int(r.certified), r.measure])
    return buf.getvalue()


def argmin_row(rows: Sequence[SweepRow]) -> SweepRow:
    ok = [r for r in rows if np.isfinite(r.derived)]
    return min(ok, key=lambda r: r.derived)


def multi_product_cost(specs: Sequence[NewsvendorSpec], xs: Sequence[float], **kw) -> float:
    """Separable products: the total worst-case cost is the sum of single-product costs."""
    if len(specs) != len(xs):
        raise ValueError("one order quantity per product")
    total = 0.0
    for spec, x in zip(specs, xs):
        res = solve_moment_problem(newsvendor_problem(spec, x), with_primal=False, **kw)
        if not res.dual.optimal:
            raise RuntimeError(f"product solve failed with status {res.status}")
        total += newsvendor_cost(spec, x, res.value)
    return total
