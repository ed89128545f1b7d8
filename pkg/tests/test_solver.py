import numpy as np
import pytest
from scipy.optimize import linprog

from sosmoment import solver as so
from sosmoment.solver import (FREE, NONNEG, PSD, Cone, ConicProgram, ProgramBuilder, smat, solve, svec,
                              svec_dim)


def trace_program(C):
    """min tr(C X) s.t. tr(X) = 1, X PSD; optimum is the smallest eigenvalue."""
    n = C.shape[0]
    b = ProgramBuilder("min")
    b.add_var("X", PSD, n)
    r = b.new_row(1.0)
    b.add_matrix_term(r, "X", np.eye(n))
    for i, v in enumerate(svec(C)):
        b.set_obj(b.col("X", i), v)
    return b.build()


def test_svec_preserves_inner_product():
    rng = np.random.default_rng(0)
    for n in (1, 2, 5):
        A = rng.normal(size=(n, n))
        A = A + A.T
        B = rng.normal(size=(n, n))
        B = B + B.T
        assert svec(A) @ svec(B) == pytest.approx(np.trace(A @ B))
        np.testing.assert_allclose(smat(svec(A), n), A)
        assert svec(A).size == svec_dim(n)


def test_trace_weighted_example():
    cp = trace_program(np.diag([1.0, 2.0]))
    sol = solve(cp)
    assert sol.status == so.OPTIMAL
    assert sol.primal_objective == pytest.approx(1.0, abs=1e-7)
    np.testing.assert_allclose(cp.extract(sol.x, "X"), np.diag([1.0, 0.0]), atol=1e-6)


def test_max_offdiagonal_example():
    # max eta with [[1, eta], [eta, 1]] PSD
    b = ProgramBuilder("max")
    b.add_var("X", PSD, 2)
    b.add_var("eta", FREE, 1)
    r = b.new_row(1.0)
    b.add(r, b.col("X", 0), 1.0)
    r = b.new_row(1.0)
    b.add(r, b.col("X", 2), 1.0)
    r = b.new_row(0.0)
    b.add_matrix_term(r, "X", np.array([[0, 0.5], [0.5, 0]]))
    b.add(r, b.col("eta"), -1.0)
    b.set_obj(b.col("eta"), 1.0)
    sol = solve(b.build())
    assert sol.status == so.OPTIMAL
    assert sol.primal_objective == pytest.approx(1.0, abs=1e-7)


def random_feasible_lp(rng):
    m = int(rng.integers(1, 10))
    n = int(rng.integers(m + 1, 21))
    A = rng.normal(size=(m, n))
    x0 = rng.random(n)
    y0 = rng.normal(size=m)
    c = A.T @ y0 + rng.random(n) + 0.1  # dual feasible, so bounded
    return A, A @ x0, c


def test_random_lps_match_simplex():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        A, b, c = random_feasible_lp(rng)
        sol = solve(ConicProgram(c, A, b, [Cone(NONNEG, c.size)]))
        ref = linprog(c, A_eq=A, b_eq=b, bounds=(0, None), method="highs-ds")
        assert ref.status == 0
        assert sol.status == so.OPTIMAL
        assert sol.primal_objective == pytest.approx(ref.fun, abs=1e-6 * (1 + abs(ref.fun)))


def test_random_max_eigenvalue_sdps():
    rng = np.random.default_rng(7)
    for n in range(1, 7):
        for _ in range(3):
            G = rng.normal(size=(n, n))
            C = G + G.T
            sol = solve(trace_program(C))
            assert sol.status == so.OPTIMAL
            assert abs(sol.primal_objective - np.linalg.eigvalsh(C)[0]) <= 1e-7


def test_optimal_solution_contract():
    rng = np.random.default_rng(1)
    A, b, c = random_feasible_lp(rng)
    tol = 1e-8
    sol = solve(ConicProgram(c, A, b, [Cone(NONNEG, c.size)]), tol=tol)
    assert sol.optimal
    assert sol.residuals["primal"] <= tol and sol.residuals["dual"] <= tol
    assert abs(sol.primal_objective - sol.dual_objective) <= tol * (1 + abs(sol.primal_objective))


def test_infeasible_and_unbounded():
    sol = solve(ConicProgram([1.0, 1.0], [[1.0, 1.0]], [-1.0], [Cone(NONNEG, 2)]))
    assert sol.status == so.INFEASIBLE
    sol = solve(ConicProgram([-1.0, 0.0], [[1.0, -1.0]], [0.0], [Cone(NONNEG, 2)]))
    assert sol.status == so.DUAL_INFEASIBLE
    # inconsistent equalities are caught before iterating
    sol = solve(ConicProgram([1.0], [[1.0], [2.0]], [1.0, 3.0], [Cone(NONNEG, 1)]))
    assert sol.status == so.INFEASIBLE


def test_infeasible_sdp():
    # X PSD with X_00 = -1
    b = ProgramBuilder()
    b.add_var("X", PSD, 2)
    r = b.new_row(-1.0)
    b.add(r, b.col("X", 0), 1.0)
    assert solve(b.build()).status == so.INFEASIBLE


def test_dependent_rows_and_free_columns():
    # x1 + x2 = 1 written twice, free y duplicating x1
    A = np.array([[1.0, 1.0, 0.0, 0.0], [2.0, 2.0, 0.0, 0.0], [1.0, 0.0, -1.0, 1.0]])
    cp = ConicProgram([1.0, 2.0, 0.0, 0.0], A, [1.0, 2.0, 0.0],
                      [Cone(NONNEG, 2), Cone(FREE, 2)])
    sol = solve(cp)
    assert sol.optimal
    assert sol.primal_objective == pytest.approx(1.0, abs=1e-7)
    np.testing.assert_allclose(A @ sol.x, [1.0, 2.0, 0.0], atol=1e-8)


def test_deterministic():
    cp = trace_program(np.array([[2.0, 1.0], [1.0, 3.0]]))
    a, b = solve(cp), solve(cp)
    np.testing.assert_array_equal(a.x, b.x)
    assert a.iterations == b.iterations


def test_normal_equation_path_agrees():
    rng = np.random.default_rng(5)
    A, b, c = random_feasible_lp(rng)
    cp = ConicProgram(c, A, b, [Cone(NONNEG, c.size)])
    ref = solve(cp)
    alt = so.InteriorPointSolver(so.SolverOptions(augmented_max=0)).solve(cp)
    assert alt.optimal
    assert alt.primal_objective == pytest.approx(ref.primal_objective, abs=1e-7)


def test_structural_errors():
    with pytest.raises(ValueError):
        ConicProgram([1.0, 2.0], [[1.0]], [1.0], [Cone(NONNEG, 2)])
    with pytest.raises(ValueError):
        ConicProgram([1.0], [[1.0]], [1.0], [Cone(NONNEG, 1)], sense="up")


def test_max_iter_reports_numerical_limit():
    cp = trace_program(np.diag([1.0, 2.0, 3.0]))
    sol = solve(cp, max_iter=2)
    assert sol.status == so.NUMERICAL_LIMIT
