"""Sparse multivariate polynomials, monomial bases and Gram basis matrices.

A polynomial in ``m`` variables is stored as a mapping from exponent tuples
(multi-indices) to float coefficients.  Monomials are ordered graded
lexicographically: lower total degree first, and within one degree the
exponent of ``v_1`` dominates, so the degree-2 part of the basis for two
variables reads ``v1^2, v1*v2, v2^2``.
"""

from __future__ import annotations

import itertools
from functools import lru_cache
from typing import Dict, Iterable, Mapping, Sequence, Tuple

import numpy as np

MultiIndex = Tuple[int, ...]

COEFF_TOL = 1e-14


def degree(alpha: Sequence[int]) -> int:
    return int(sum(alpha))


def grlex_key(alpha: Sequence[int]):
    """Sort key realising the graded lexicographic order."""
    return (degree(alpha), tuple(-a for a in alpha))


@lru_cache(maxsize=None)
def _exponents(m: int, max_deg: int) -> Tuple[MultiIndex, ...]:
    out = []
    for deg in range(max_deg + 1):
        for combo in itertools.combinations_with_replacement(range(m), deg):
            alpha = [0] * m
            for i in combo:
                alpha[i] += 1
            out.append(tuple(alpha))
    out.sort(key=grlex_key)
    return tuple(out)


class Polynomial:
    """Immutable sparse polynomial ``sum_alpha c_alpha v^alpha``."""

    __slots__ = ("_m", "_terms", "_hash")

    def __init__(self, num_vars: int, terms: Mapping[Sequence[int], float] | None = None):
        if num_vars < 1:
            raise ValueError("a polynomial needs at least one variable")
        clean: Dict[MultiIndex, float] = {}
        for alpha, c in (terms or {}).items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != num_vars:
                raise ValueError(f"multi-index {alpha} does not have length {num_vars}")
            if any(a < 0 for a in alpha):
                raise ValueError(f"negative exponent in {alpha}")
            clean[alpha] = clean.get(alpha, 0.0) + float(c)
        self._m = int(num_vars)
        self._terms = {a: c for a, c in clean.items() if abs(c) >= COEFF_TOL}
        self._hash = None

    # -- constructors -----------------------------------------------------
    @classmethod
    def zero(cls, m: int) -> "Polynomial":
        return cls(m)

    @classmethod
    def constant(cls, m: int, value: float) -> "Polynomial":
        return cls(m, {(0,) * m: value})

    @classmethod
    def variable(cls, m: int, i: int) -> "Polynomial":
        if not 0 <= i < m:
            raise ValueError(f"variable index {i} out of range for m={m}")
        alpha = [0] * m
        alpha[i] = 1
        return cls(m, {tuple(alpha): 1.0})

    @classmethod
    def monomial(cls, alpha: Sequence[int], coeff: float = 1.0) -> "Polynomial":
        return cls(len(alpha), {tuple(alpha): coeff})

    @classmethod
    def affine(cls, p: Sequence[float], q: float) -> "Polynomial":
        """``p^T v + q``."""
        m = len(p)
        terms = {(0,) * m: q}
        for i, pi in enumerate(p):
            alpha = [0] * m
            alpha[i] = 1
            terms[tuple(alpha)] = pi
        return cls(m, terms)

    @classmethod
    def univariate(cls, coeffs: Sequence[float]) -> "Polynomial":
        """Univariate polynomial from ascending coefficients ``c0 + c1 v + ...``."""
        return cls(1, {(k,): c for k, c in enumerate(coeffs)})

    # -- basic accessors --------------------------------------------------
    @property
    def num_vars(self) -> int:
        return self._m

    @property
    def terms(self) -> Dict[MultiIndex, float]:
        return dict(self._terms)

    @property
    def degree(self) -> int:
        if not self._terms:
            return 0
        return max(degree(a) for a in self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def coeff(self, alpha: Sequence[int]) -> float:
        return self._terms.get(tuple(alpha), 0.0)

    def sorted_terms(self):
        return sorted(self._terms.items(), key=lambda t: grlex_key(t[0]))

    def max_abs_coeff(self) -> float:
        return max((abs(c) for c in self._terms.values()), default=0.0)

    # -- arithmetic -------------------------------------------------------
    def _check(self, other: "Polynomial"):
        if other._m != self._m:
            raise ValueError(f"variable count mismatch: {self._m} vs {other._m}")

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(self._m, float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms = dict(self._terms)
        for a, c in other._terms.items():
            terms[a] = terms.get(a, 0.0) + c
        return Polynomial(self._m, terms)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self._m, {a: -c for a, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial(self._m, {a: c * float(other) for a, c in self._terms.items()})
        if not isinstance(other, Polynomial):
            return NotImplemented
        self._check(other)
        terms: Dict[MultiIndex, float] = {}
        for a, ca in self._terms.items():
            for b, cb in other._terms.items():
                key = tuple(x + y for x, y in zip(a, b))
                terms[key] = terms.get(key, 0.0) + ca * cb
        return Polynomial(self._m, terms)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("only non-negative integer powers are supported")
        out = Polynomial.constant(self._m, 1.0)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self._m == other._m and self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self._m, frozenset(self._terms.items())))
        return self._hash

    def allclose(self, other: "Polynomial", tol: float = 1e-9) -> bool:
        return (self - other).max_abs_coeff() <= tol

    # -- evaluation and calculus ------------------------------------------
    def __call__(self, v) -> float:
        return self.eval(v)

    def eval(self, v) -> float:
        v = np.asarray(v, dtype=float).reshape(-1)
        if v.shape[0] != self._m:
            raise ValueError(f"point has dimension {v.shape[0]}, polynomial has {self._m} variables")
        total = 0.0
        for alpha, c in self._terms.items():
            total += c * float(np.prod(v ** np.asarray(alpha)))
        return total

    def eval_many(self, points) -> np.ndarray:
        """Evaluate at every row of an ``(n, m)`` array."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1) if self._m == 1 else pts.reshape(1, -1)
        if pts.shape[1] != self._m:
            raise ValueError(f"points have dimension {pts.shape[1]}, polynomial has {self._m} variables")
        out = np.zeros(pts.shape[0])
        for alpha, c in self._terms.items():
            mono = np.ones(pts.shape[0])
            for i, a in enumerate(alpha):
                if a:
                    mono = mono * pts[:, i] ** a
            out += c * mono
        return out

    def diff(self, i: int) -> "Polynomial":
        terms = {}
        for alpha, c in self._terms.items():
            if alpha[i] == 0:
                continue
            beta = list(alpha)
            beta[i] -= 1
            terms[tuple(beta)] = c * alpha[i]
        return Polynomial(self._m, terms)

    def gradient(self) -> list:
        return [self.diff(i) for i in range(self._m)]

    def hessian(self) -> list:
        grad = self.gradient()
        H = [[None] * self._m for _ in range(self._m)]
        for i in range(self._m):
            for j in range(i, self._m):
                H[i][j] = H[j][i] = grad[i].diff(j)
        return H

    def embed(self, new_m: int, var_map: Sequence[int]) -> "Polynomial":
        """Rename variable ``i`` to ``var_map[i]`` inside ``new_m`` variables."""
        if len(var_map) != self._m:
            raise ValueError("var_map must list a target for every variable")
        terms = {}
        for alpha, c in self._terms.items():
            beta = [0] * new_m
            for i, a in enumerate(alpha):
                beta[var_map[i]] += a
            terms[tuple(beta)] = terms.get(tuple(beta), 0.0) + c
        return Polynomial(new_m, terms)

    def compose_affine(self, P: np.ndarray, q: np.ndarray) -> "Polynomial":
        """Substitute ``v -> P u + q`` where ``P`` is ``(m, k)``."""
        P = np.atleast_2d(np.asarray(P, dtype=float))
        q = np.asarray(q, dtype=float).reshape(-1)
        k = P.shape[1]
        subs = [Polynomial.affine(P[i], q[i]) for i in range(self._m)]
        out = Polynomial.zero(k)
        for alpha, c in self._terms.items():
            term = Polynomial.constant(k, c)
            for i, a in enumerate(alpha):
                if a:
                    term = term * subs[i] ** a
            out = out + term
        return out

    # -- presentation and serialization ------------------------------------
    def __repr__(self):
        if not self._terms:
            return f"Polynomial(m={self._m}, 0)"
        parts = []
        for alpha, c in self.sorted_terms():
            mono = "*".join(
                f"v{i + 1}" + (f"^{a}" if a > 1 else "") for i, a in enumerate(alpha) if a
            )
            parts.append(f"{c:g}" + (f"*{mono}" if mono else ""))
        return f"Polynomial(m={self._m}, " + " + ".join(parts) + ")"

    def to_json(self) -> dict:
        return {
            "m": self._m,
            "terms": [{"alpha": list(a), "c": c} for a, c in self.sorted_terms()],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "Polynomial":
        try:
            m = int(data["m"])
            terms = {tuple(t["alpha"]): float(t["c"]) for t in data.get("terms", [])}
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed polynomial JSON: {exc}") from exc
        return cls(m, terms)


class MonomialBasis:
    """All monomials of degree at most ``half_degree`` in grlex order."""

    def __init__(self, num_vars: int, half_degree: int):
        if num_vars < 1 or half_degree < 0:
            raise ValueError("need num_vars >= 1 and half_degree >= 0")
        self.num_vars = num_vars
        self.half_degree = half_degree
        self.entries: Tuple[MultiIndex, ...] = _exponents(num_vars, half_degree)
        self.index = {alpha: i for i, alpha in enumerate(self.entries)}

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def evaluate(self, v) -> np.ndarray:
        """The vector ``y(v)``."""
        v = np.asarray(v, dtype=float).reshape(-1)
        return np.array([np.prod(v ** np.asarray(a)) for a in self.entries])


def monomial_basis(m: int, half_degree: int) -> MonomialBasis:
    return MonomialBasis(m, half_degree)


def basis_size(m: int, d: int) -> int:
    """``s(m, d) = binom(m + d, d)``."""
    from math import comb

    return comb(m + d, d)


def multi_indices(m: int, d: int) -> Tuple[MultiIndex, ...]:
    """The index set of all exponents of total degree at most ``d``."""
    return _exponents(m, d)


class GramBasis:
    """Matrices ``B_alpha`` with ``y(v) y(v)^T = sum_alpha B_alpha v^alpha``."""

    def __init__(self, num_vars: int, degree_: int):
        if degree_ % 2:
            raise ValueError(f"Gram basis needs an even degree, got {degree_}")
        self.num_vars = num_vars
        self.degree = degree_
        self.basis = MonomialBasis(num_vars, degree_ // 2)
        self.alphas = multi_indices(num_vars, degree_)
        self.alpha_index = {a: i for i, a in enumerate(self.alphas)}
        s = len(self.basis)
        # label[i, j] = index of alpha = basis_i + basis_j
        label = np.empty((s, s), dtype=int)
        for i, a in enumerate(self.basis):
            for j, b in enumerate(self.basis):
                label[i, j] = self.alpha_index[tuple(x + y for x, y in zip(a, b))]
        self.label = label
        self.matrices: Dict[MultiIndex, np.ndarray] = {}
        for k, alpha in enumerate(self.alphas):
            self.matrices[alpha] = (label == k).astype(float)

    @property
    def size(self) -> int:
        return len(self.basis)

    def __getitem__(self, alpha) -> np.ndarray:
        return self.matrices[tuple(alpha)]

    def __iter__(self):
        return iter(self.matrices.items())

    def moment_matrix(self, y: Sequence[float]) -> np.ndarray:
        """``sum_alpha y_alpha B_alpha`` for moments listed in ``self.alphas`` order."""
        y = np.asarray(y, dtype=float)
        return y[self.label]

    def poly_from_gram(self, Q: np.ndarray) -> Polynomial:
        """The polynomial ``y(v)^T Q y(v)``."""
        coeffs = np.zeros(len(self.alphas))
        np.add.at(coeffs, self.label.ravel(), np.asarray(Q, dtype=float).ravel())
        return Polynomial(self.num_vars, {a: c for a, c in zip(self.alphas, coeffs)})

    def coefficient_vector(self, f: Polynomial) -> np.ndarray:
        """Coefficients of ``f`` in ``self.alphas`` order; rejects higher degrees."""
        out = np.zeros(len(self.alphas))
        for alpha, c in f.terms.items():
            if alpha not in self.alpha_index:
                raise ValueError(f"term {alpha} exceeds degree {self.degree}")
            out[self.alpha_index[alpha]] = c
        return out


@lru_cache(maxsize=64)
def gram_basis(m: int, d: int) -> GramBasis:
    return GramBasis(m, d)


def even_degree_at_least(degrees: Iterable[int], bump: bool = False) -> int:
    """Smallest even integer ``>=`` every degree (strictly ``>`` when ``bump``)."""
    top = max(list(degrees) or [0])
    if bump:
        return top + 2 if top % 2 == 0 else top + 1
    return top + (top % 2)
