import numpy as np
import pytest

from sosmoment.apps import (Customer, NewsvendorSpec, RevenueSpec, argmin_row, multi_product_cost,
                            newsvendor_cost, newsvendor_problem, newsvendor_sweep, revenue_problem, revenue_sweep,
                            rows_to_csv, sweep)
from sosmoment.model import ValidationError
from sosmoment.oracle import oracle_value
from sosmoment.pipeline import solve_moment_problem


def cost(spec, x):
    res = solve_moment_problem(newsvendor_problem(spec, x), with_primal=False)
    assert res.dual.optimal
    return newsvendor_cost(spec, x, res.value)


def test_newsvendor_reference_points():
    assert cost(NewsvendorSpec(), 1.5811) == pytest.approx(0.3162, abs=1e-3)
    assert cost(NewsvendorSpec(gamma3=1.0), 1.3337) == pytest.approx(0.1778, abs=1e-3)
    # zero upfront cost prices the call option max E[(v - x)^+]
    assert cost(NewsvendorSpec(c=0.0), 1.5811) == pytest.approx(0.3162 - 0.15811, abs=1e-3)


def test_newsvendor_zero_order_matches_oracle():
    spec = NewsvendorSpec()
    prob = newsvendor_problem(spec, 0.0)
    sdp = cost(spec, 0.0)
    orc = newsvendor_cost(spec, 0.0, oracle_value(prob, 2001).value)
    assert sdp <= 1.0 + 1e-6
    assert sdp == pytest.approx(orc, abs=5e-3)


def test_newsvendor_structure():
    prob = newsvendor_problem(NewsvendorSpec(gamma3=2.0), 1.0)
    assert (prob.objective.r, prob.objective.L, prob.J) == (2, 1, 3)
    assert prob.constraints[2][1] == 2.0
    with pytest.raises(ValidationError):
        newsvendor_problem(NewsvendorSpec(), 11.0)
    for bad in (dict(c=1.0), dict(c=-0.1), dict(lo=5.0, hi=5.0), dict(R=0.0)):
        with pytest.raises(ValidationError):
            NewsvendorSpec(**bad)


def test_revenue_reference_value():
    res = solve_moment_problem(revenue_problem(RevenueSpec()))
    assert -res.value == pytest.approx(6.6495, abs=2e-3)
    assert res.report.measure.points[0, 0] == pytest.approx(1.4142, abs=1e-3)


def test_revenue_zero_customer():
    spec = RevenueSpec((Customer(0.0, 0.0, 0.0, 0.0),), 4.0, 1.0, 3.0)
    res = solve_moment_problem(revenue_problem(spec))
    assert -res.value == pytest.approx(0.0, abs=1e-7)


def test_revenue_spec_checks():
    prob = revenue_problem(RevenueSpec())
    assert (prob.objective.r, prob.objective.L) == (6, 2)
    with pytest.raises(ValidationError):
        RevenueSpec((Customer(1.0, 1.0, 1.0, -1.0),))  # negative offer prices
    with pytest.raises(ValidationError):
        RevenueSpec((Customer(-1.0, 0.0, 1.0, -5.0),))
    with pytest.raises(ValidationError):
        RevenueSpec(())


def test_quadratic_offers_against_oracle():
    customers = (Customer(1.0, 0.0, 1.0, -3.0), Customer(0.5, 0.0, 2.5, -4.0), Customer(0.2, 0.0, 3.5, -3.0))
    prob = revenue_problem(RevenueSpec(customers, 4.0, 1.5, 3.0))
    sdp = -solve_moment_problem(prob, with_primal=False).value
    orc = -oracle_value(prob, 2001).value
    assert sdp >= orc - 5e-3
    assert sdp <= orc + 1e-6 + 5e-3


@pytest.fixture(scope="module")
def sweeps():
    xs = np.linspace(0, 10, 101)
    return (newsvendor_sweep(NewsvendorSpec(), xs, workers=4),
            newsvendor_sweep(NewsvendorSpec(gamma3=1.0), xs, workers=4))


def test_newsvendor_sweep_shape(sweeps):
    p1, p2 = sweeps
    assert argmin_row(p1).param == pytest.approx(1.5811, abs=0.1)
    assert argmin_row(p2).param == pytest.approx(1.3337, abs=0.1)
    c1 = np.array([r.derived for r in p1])
    c2 = np.array([r.derived for r in p2])
    assert np.all(c2 <= c1 + 1e-6)
    # discrete midpoint convexity along the grid
    for c in (c1, c2):
        assert np.all(c[:-2] + c[2:] - 2 * c[1:-1] >= -1e-6)


def test_sweep_csv_deterministic():
    xs = np.linspace(0, 4, 5)
    a = rows_to_csv(newsvendor_sweep(NewsvendorSpec(), xs, workers=3), "x", "worst_case_cost")
    b = rows_to_csv(newsvendor_sweep(NewsvendorSpec(), xs), "x", "worst_case_cost")
    assert a == b
    lines = a.splitlines()
    assert lines[0] == "x,status,sdp_value,worst_case_cost,certified,measure"
    assert len(lines) == 6 and lines[1].startswith("0,optimal,")


def test_sweep_records_failures():
    def build(x):
        if x > 0.5:
            raise ValidationError("bad point")
        return newsvendor_problem(NewsvendorSpec(), x)

    rows = sweep(build, [0.0, 1.0])
    assert rows[0].status == "optimal"
    assert rows[1].status == "error" and np.isnan(rows[1].derived)


def test_revenue_gamma2_sweep_nondecreasing():
    rows = revenue_sweep(RevenueSpec(), np.linspace(2.0, 4.0, 6), vary="gamma2")
    vals = [r.derived for r in rows]
    assert all(b >= a - 1e-6 for a, b in zip(vals, vals[1:]))


def test_multi_product_is_sum():
    specs = [NewsvendorSpec(), NewsvendorSpec(gamma3=1.0)]
    total = multi_product_cost(specs, [1.5811, 1.3337])
    assert total == pytest.approx(0.3162 + 0.1778, abs=2e-3)
    with pytest.raises(ValueError):
        multi_product_cost(specs, [1.0])
