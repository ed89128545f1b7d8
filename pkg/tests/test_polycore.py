import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sosmoment.polycore import (GramBasis, Polynomial, basis_size, even_degree_at_least, gram_basis,
                                monomial_basis, multi_indices)


def random_poly(rng, m, d, n_terms=6):
    alphas = multi_indices(m, d)
    idx = rng.choice(len(alphas), size=min(n_terms, len(alphas)), replace=False)
    return Polynomial(m, {alphas[i]: rng.normal() for i in idx})


@st.composite
def polys(draw, m=None, max_deg=4):
    m = m or draw(st.integers(1, 3))
    d = draw(st.integers(0, max_deg))
    alphas = multi_indices(m, d)
    coeffs = draw(st.lists(st.floats(-3, 3, allow_nan=False), min_size=len(alphas), max_size=len(alphas)))
    return Polynomial(m, dict(zip(alphas, coeffs)))


def test_monomial_basis_small():
    assert list(monomial_basis(1, 2)) == [(0,), (1,), (2,)]
    assert list(monomial_basis(2, 1)) == [(0, 0), (1, 0), (0, 1)]
    assert len(monomial_basis(2, 2)) == 6 == basis_size(2, 2)


@pytest.mark.parametrize("m,h", [(1, 0), (1, 3), (2, 2), (3, 2), (4, 1)])
def test_basis_size_and_order(m, h):
    basis = monomial_basis(m, h)
    assert len(basis) == basis_size(m, h)
    assert basis[0] == (0,) * m
    degs = [sum(a) for a in basis]
    assert degs == sorted(degs)


def test_gram_basis_univariate_quartic():
    G = gram_basis(1, 4)
    expected = {
        0: [[1, 0, 0], [0, 0, 0], [0, 0, 0]],
        1: [[0, 1, 0], [1, 0, 0], [0, 0, 0]],
        2: [[0, 0, 1], [0, 1, 0], [1, 0, 0]],
        3: [[0, 0, 0], [0, 0, 1], [0, 1, 0]],
        4: [[0, 0, 0], [0, 0, 0], [0, 0, 1]],
    }
    for k, B in expected.items():
        np.testing.assert_array_equal(G[(k,)], B)


def test_gram_basis_small_cases():
    G0 = gram_basis(1, 0)
    assert list(G0.matrices) == [(0,)]
    np.testing.assert_array_equal(G0[(0,)], [[1.0]])
    G2 = gram_basis(1, 2)
    np.testing.assert_array_equal(G2[(0,)], [[1, 0], [0, 0]])
    np.testing.assert_array_equal(G2[(1,)], [[0, 1], [1, 0]])
    np.testing.assert_array_equal(G2[(2,)], [[0, 0], [0, 1]])
    with pytest.raises(ValueError):
        GramBasis(1, 3)


@pytest.mark.parametrize("m,d", [(1, 6), (2, 4), (3, 4), (4, 2)])
def test_gram_identity(m, d):
    G = gram_basis(m, d)
    rng = np.random.default_rng(m * 10 + d)
    for _ in range(5):
        v = rng.uniform(-2, 2, m)
        y = G.basis.evaluate(v)
        total = sum(B * np.prod(v ** np.array(a)) for a, B in G)
        assert np.max(np.abs(total - np.outer(y, y))) <= 1e-12 * max(1.0, np.abs(y).max() ** 2)
    pairs = sum(int(B.sum()) for _, B in G)
    assert pairs == G.size ** 2


def test_eval_examples():
    v = Polynomial.variable(1, 0)
    assert (v ** 2 - 2 * v + 1).eval([3.0]) == pytest.approx(4.0)
    assert Polynomial.zero(2).eval([1.5, -2.0]) == 0.0
    assert Polynomial.monomial((1, 2)).eval([2.0, 3.0]) == pytest.approx(18.0)
    with pytest.raises(ValueError):
        (v ** 2).eval([1.0, 2.0])


def test_zero_degree_and_cleanup():
    v = Polynomial.variable(1, 0)
    assert Polynomial.zero(1).degree == 0
    p = (v + 1e-16) - v
    assert p.is_zero()
    assert (v ** 3 - v ** 3).terms == {}


def test_hessian_examples():
    v = Polynomial.variable(1, 0)
    H = (v ** 4).hessian()
    assert H[0][0] == 12 * v ** 2
    x1, x2 = Polynomial.variable(2, 0), Polynomial.variable(2, 1)
    H = (x1 ** 2 + x2 ** 2).hessian()
    assert H[0][0] == Polynomial.constant(2, 2.0) and H[1][1] == Polynomial.constant(2, 2.0)
    assert H[0][1].is_zero() and H[1][0].is_zero()


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(3)
    h = 1e-4
    for m in (1, 2, 3):
        for _ in range(5):
            f = random_poly(rng, m, 3, n_terms=8)
            v0 = rng.uniform(-1, 1, m)
            grad = [g.eval(v0) for g in f.gradient()]
            for i in range(m):
                e = np.zeros(m)
                e[i] = h
                fd = (f.eval(v0 + e) - f.eval(v0 - e)) / (2 * h)
                assert abs(grad[i] - fd) <= 1e-6


def test_ring_identities_on_random_polynomials():
    rng = np.random.default_rng(11)
    for _ in range(100):
        m = int(rng.integers(1, 4))
        f = random_poly(rng, m, int(rng.integers(0, 4)))
        g = random_poly(rng, m, int(rng.integers(0, 4)))
        for _ in range(10):
            v = rng.uniform(-1.5, 1.5, m)
            fv, gv = f.eval(v), g.eval(v)
            assert (f + g).eval(v) == pytest.approx(fv + gv, rel=1e-10, abs=1e-10)
            assert (f * g).eval(v) == pytest.approx(fv * gv, rel=1e-10, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(polys(), st.data())
def test_json_round_trip(f, data):
    g = Polynomial.from_json(f.to_json())
    assert g == f
    v = data.draw(st.lists(st.floats(-2, 2), min_size=f.num_vars, max_size=f.num_vars))
    assert g.eval(v) == f.eval(v)


@settings(max_examples=40, deadline=None)
@given(polys(m=2, max_deg=4))
def test_gram_round_trip_reproduces_coefficients(f):
    d = even_degree_at_least([f.degree])
    G = gram_basis(2, d)
    # a diagonal-spread Gram matrix built from the coefficients must map back
    coef = G.coefficient_vector(f)
    counts = np.bincount(G.label.ravel(), minlength=len(G.alphas))
    Q = (coef / counts)[G.label]
    assert G.poly_from_gram(Q).allclose(f, 1e-12)


def test_embed_and_compose():
    v = Polynomial.variable(1, 0)
    f = v ** 2 + 3 * v
    g = f.embed(3, [2])
    assert g.eval([9.0, 9.0, 2.0]) == pytest.approx(10.0)
    h = f.compose_affine(np.array([[2.0]]), np.array([1.0]))  # f(2u + 1)
    assert h.eval([1.0]) == pytest.approx(f.eval([3.0]))


def test_even_degree_rule():
    assert even_degree_at_least([1, 2]) == 2
    assert even_degree_at_least([3]) == 4
    assert even_degree_at_least([4], bump=True) == 6
    assert even_degree_at_least([3], bump=True) == 4
    assert even_degree_at_least([]) == 0


def test_coefficient_vector_rejects_high_degree():
    v = Polynomial.variable(1, 0)
    with pytest.raises(ValueError):
        gram_basis(1, 2).coefficient_vector(v ** 3)
