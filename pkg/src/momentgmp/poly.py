"""Sparse multivariate polynomials, monomial bases and the norms used on them.

Exponent vectors (multi-indices) are plain tuples of nonnegative ints.  All
dense vectors in the package are indexed by :func:`monomials_upto`, which
enumerates monomials in graded lexicographic order.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

MultiIndex = tuple[int, ...]


def mdeg(alpha: MultiIndex) -> int:
    return sum(alpha)


def mfactorial(alpha: MultiIndex) -> int:
    """alpha! = alpha_1! ... alpha_n!"""
    return math.prod(math.factorial(a) for a in alpha)


def multinomial(d: int, alpha: MultiIndex) -> int:
    """binom(d, alpha) = d! / ((d - |alpha|)! alpha_1! ... alpha_n!)."""
    k = mdeg(alpha)
    if k > d:
        raise ValueError(f"|alpha| = {k} exceeds d = {d}")
    return math.factorial(d) // (math.factorial(d - k) * mfactorial(alpha))


def _compositions(n: int, k: int):
    # exponent tuples of total degree k, lexicographically descending
    if n == 1:
        yield (k,)
        return
    for first in range(k, -1, -1):
        for rest in _compositions(n - 1, k - first):
            yield (first,) + rest


@lru_cache(maxsize=None)
def monomials_upto(n: int, k: int) -> tuple[MultiIndex, ...]:
    """All exponents with |alpha| <= k in graded lexicographic order.

    >>> monomials_upto(2, 1)
    ((0, 0), (1, 0), (0, 1))
    """
    if n < 1 or k < 0:
        raise ValueError("need n >= 1 and k >= 0")
    return tuple(a for deg in range(k + 1) for a in _compositions(n, deg))


@lru_cache(maxsize=None)
def monomial_index(n: int, k: int) -> dict[MultiIndex, int]:
    return {a: i for i, a in enumerate(monomials_upto(n, k))}


def n_monomials(n: int, k: int) -> int:
    return math.comb(n + k, n)


def _add_exp(a: MultiIndex, b: MultiIndex) -> MultiIndex:
    return tuple(x + y for x, y in zip(a, b))


@lru_cache(maxsize=None)
def exponent_matrix(n: int, k: int) -> np.ndarray:
    return np.array(monomials_upto(n, k), dtype=np.int64).reshape(-1, n)


def monomial_vector(points: np.ndarray, k: int) -> np.ndarray:
    """Rows are v_k(x) = (x^alpha)_{|alpha| <= k} for each point x.

    ``points`` has shape (m, n) or (n,); the result has shape (m, C(n+k, n)).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    E = exponent_matrix(pts.shape[1], k)
    return np.prod(pts[:, None, :] ** E[None, :, :], axis=2)


@dataclass(frozen=True)
class Polynomial:
    """Real polynomial in ``n`` variables stored as ``{exponent: coefficient}``.

    Zero coefficients are dropped on construction.
    """

    n: int
    terms: Mapping[MultiIndex, float] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for alpha, c in self.terms.items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != self.n or any(a < 0 for a in alpha):
                raise ValueError(f"bad exponent {alpha} for n = {self.n}")
            c = float(c)
            if c != 0.0:
                clean[alpha] = clean.get(alpha, 0.0) + c
        object.__setattr__(self, "terms", {a: c for a, c in clean.items() if c != 0.0})

    def __hash__(self):
        return hash((self.n, frozenset(self.terms.items())))

    # construction helpers

    @classmethod
    def constant(cls, n: int, c: float = 1.0) -> "Polynomial":
        return cls(n, {(0,) * n: c})

    @classmethod
    def monomial(cls, alpha: Sequence[int], c: float = 1.0) -> "Polynomial":
        alpha = tuple(alpha)
        return cls(len(alpha), {alpha: c})

    @classmethod
    def variable(cls, n: int, i: int) -> "Polynomial":
        alpha = [0] * n
        alpha[i] = 1
        return cls(n, {tuple(alpha): 1.0})

    @classmethod
    def ball(cls, n: int, radius: float = 1.0) -> "Polynomial":
        """radius^2 - |x|^2"""
        terms = {(0,) * n: radius**2}
        for i in range(n):
            alpha = [0] * n
            alpha[i] = 2
            terms[tuple(alpha)] = -1.0
        return cls(n, terms)

    @classmethod
    def from_vector(cls, n: int, coef: np.ndarray, k: int | None = None) -> "Polynomial":
        coef = np.asarray(coef, dtype=float)
        if k is None:
            k = 0
            while n_monomials(n, k) < coef.size:
                k += 1
        basis = monomials_upto(n, k)
        if len(basis) != coef.size:
            raise ValueError("coefficient vector length is not a binomial C(n+k, n)")
        return cls(n, dict(zip(basis, coef)))

    # queries

    @property
    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        return max((mdeg(a) for a in self.terms), default=-1)

    def is_zero(self) -> bool:
        return not self.terms

    def is_homogeneous(self) -> bool:
        return len({mdeg(a) for a in self.terms}) <= 1

    def coef(self, alpha: Sequence[int]) -> float:
        return self.terms.get(tuple(alpha), 0.0)

    def to_vector(self, k: int | None = None) -> np.ndarray:
        """Dense coefficients in the basis ``monomials_upto(n, k)``."""
        if k is None:
            k = max(self.degree, 0)
        if self.degree > k:
            raise ValueError(f"degree {self.degree} exceeds basis degree {k}")
        idx = monomial_index(self.n, k)
        out = np.zeros(len(idx))
        for a, c in self.terms.items():
            out[idx[a]] = c
        return out

    def __call__(self, x) -> float | np.ndarray:
        """Evaluate at one point (shape (n,)) or many points (shape (m, n))."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        if pts.shape[1] != self.n:
            raise ValueError("point dimension mismatch")
        if not self.terms:
            vals = np.zeros(pts.shape[0])
        else:
            E = np.array(list(self.terms), dtype=np.int64)
            c = np.array(list(self.terms.values()))
            vals = np.prod(pts[:, None, :] ** E[None, :, :], axis=2) @ c
        return float(vals[0]) if single else vals

    # arithmetic

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.n, other)
        self._check(other)
        terms = dict(self.terms)
        for a, c in other.terms.items():
            terms[a] = terms.get(a, 0.0) + c
        return Polynomial(self.n, terms)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.n, {a: -c for a, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating)):
            return Polynomial(self.n, {a: float(other) * c for a, c in self.terms.items()})
        self._check(other)
        terms: dict[MultiIndex, float] = {}
        for a, ca in self.terms.items():
            for b, cb in other.terms.items():
                ab = _add_exp(a, b)
                terms[ab] = terms.get(ab, 0.0) + ca * cb
        return Polynomial(self.n, terms)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        out = Polynomial.constant(self.n)
        for _ in range(k):
            out = out * self
        return out

    def _check(self, other):
        if not isinstance(other, Polynomial) or other.n != self.n:
            raise ValueError("polynomials live in different rings")

    def allclose(self, other: "Polynomial", atol: float = 1e-12) -> bool:
        diff = self - other
        return all(abs(c) <= atol for c in diff.terms.values())

    # serialization

    def to_json(self) -> dict:
        terms = sorted(self.terms.items(), key=lambda t: (mdeg(t[0]), tuple(-e for e in t[0])))
        return {"n": self.n, "terms": [{"alpha": list(a), "coef": c} for a, c in terms]}

    @classmethod
    def from_json(cls, obj: Mapping) -> "Polynomial":
        n = int(obj["n"])
        terms: dict[MultiIndex, float] = {}
        for t in obj["terms"]:
            a = tuple(int(e) for e in t["alpha"])
            terms[a] = terms.get(a, 0.0) + float(t["coef"])
        return cls(n, terms)

    def __repr__(self):
        if not self.terms:
            return f"Polynomial(n={self.n}, 0)"
        parts = []
        for a, c in sorted(self.terms.items(), key=lambda t: (mdeg(t[0]), tuple(-e for e in t[0]))):
            mono = "*".join(f"x{i + 1}" + (f"^{e}" if e > 1 else "") for i, e in enumerate(a) if e)
            parts.append(f"{c:+g}" + (f"*{mono}" if mono else ""))
        return f"Polynomial(n={self.n}, {' '.join(parts)})"


def load_polynomial(path) -> Polynomial:
    with open(path) as fh:
        return Polynomial.from_json(json.load(fh))


@dataclass(frozen=True)
class PseudoMoments:
    """Truncated linear functional lambda: values[i] = lambda(x^alpha_i).

    Values are dense over ``monomials_upto(n, order)``.
    """

    n: int
    order: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).ravel()
        if vals.size != n_monomials(self.n, self.order):
            raise ValueError(
                f"expected {n_monomials(self.n, self.order)} values for n={self.n}, "
                f"order={self.order}, got {vals.size}"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, n: int, order: int, fn) -> "PseudoMoments":
        return cls(n, order, np.array([fn(a) for a in monomials_upto(n, order)]))

    @classmethod
    def dirac(cls, point: Sequence[float], order: int, weight: float = 1.0) -> "PseudoMoments":
        point = np.asarray(point, dtype=float).ravel()
        return cls(point.size, order, weight * monomial_vector(point, order)[0])

    def __getitem__(self, alpha: Sequence[int]) -> float:
        return float(self.values[monomial_index(self.n, self.order)[tuple(alpha)]])

    @property
    def mass(self) -> float:
        return float(self.values[0])

    def pair(self, f: Polynomial) -> float:
        """<lambda, f>"""
        if f.n != self.n:
            raise ValueError("dimension mismatch")
        if f.degree > self.order:
            raise ValueError(f"deg f = {f.degree} exceeds order {self.order}")
        idx = monomial_index(self.n, self.order)
        return float(sum(c * self.values[idx[a]] for a, c in f.terms.items()))

    def truncate(self, k: int) -> "PseudoMoments":
        if k > self.order:
            raise ValueError("cannot truncate to a higher order")
        return PseudoMoments(self.n, k, self.values[: n_monomials(self.n, k)])

    def canonical(self, k: int) -> "PseudoMoments":
        """Same order, entries of degree > k set to zero."""
        vals = self.values.copy()
        vals[n_monomials(self.n, k):] = 0.0
        return PseudoMoments(self.n, self.order, vals)

    def __sub__(self, other: "PseudoMoments") -> "PseudoMoments":
        if (self.n, self.order) != (other.n, other.order):
            raise ValueError("shape mismatch")
        return PseudoMoments(self.n, self.order, self.values - other.values)


def apolar_product(f: Polynomial, g: Polynomial, d: int) -> float:
    """<f, g>_d = sum_alpha binom(d, alpha)^{-1} f_alpha g_alpha."""
    if f.n != g.n:
        raise ValueError("dimension mismatch")
    if f.degree > d or g.degree > d:
        raise ValueError(f"degree exceeds d = {d}")
    small, big = (f, g) if len(f.terms) <= len(g.terms) else (g, f)
    return float(
        sum(c * big.terms[a] / multinomial(d, a) for a, c in small.terms.items() if a in big.terms)
    )


def apolar_norm(f: Polynomial, d: int) -> float:
    return math.sqrt(max(apolar_product(f, f, d), 0.0))


def power_of_affine(xi: Sequence[float], d: int) -> Polynomial:
    """(1 + <xi, x>)^d expanded in the monomial basis."""
    xi = np.asarray(xi, dtype=float).ravel()
    n = xi.size
    terms = {}
    for a in monomials_upto(n, d):
        terms[a] = multinomial(d, a) * float(np.prod(xi ** np.array(a)))
    return Polynomial(n, terms)


def a_norm(f: Polynomial) -> float:
    """||f||_A = sum_alpha alpha! |f_alpha|."""
    return float(sum(mfactorial(a) * abs(c) for a, c in f.terms.items()))


def coefficient_l1(f: Polynomial) -> float:
    """Plain coefficient l1 norm sum |f_alpha| (no factorial weights)."""
    return float(sum(abs(c) for c in f.terms.values()))


def weighted_functional_norm(lam: PseudoMoments) -> float:
    """max_{|alpha| <= order} |lambda(x^alpha)| / alpha!

    Truncated version of the sup over all alpha, so it is a lower bound of the
    untruncated norm.
    """
    fact = np.array([mfactorial(a) for a in monomials_upto(lam.n, lam.order)], dtype=float)
    return float(np.max(np.abs(lam.values) / fact))


def dehomogenize_rescale(F_hom: Polynomial, scale: float) -> Polynomial:
    """Set x0 = 1 and substitute x_i -> x_i / scale.

    A decomposition point xi of the result corresponds to the point
    ``scale * xi`` of the dehomogenized input (see :func:`rescale_points`).
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    if not F_hom.is_homogeneous():
        raise ValueError("input polynomial is not homogeneous")
    terms = {}
    for a, c in F_hom.terms.items():
        rest = a[1:]
        terms[rest] = terms.get(rest, 0.0) + c / scale ** mdeg(rest)
    return Polynomial(F_hom.n - 1, terms)


def rescale_points(points: np.ndarray, scale: float) -> np.ndarray:
    return np.asarray(points, dtype=float) * scale


def homogenize(f: Polynomial, d: int) -> Polynomial:
    """Inverse of dehomogenization at scale 1: prepend x0 with exponent d - |alpha|."""
    if f.degree > d:
        raise ValueError("degree exceeds d")
    return Polynomial(f.n + 1, {(d - mdeg(a),) + a: c for a, c in f.terms.items()})


def random_polynomial(n: int, k: int, rng: np.random.Generator) -> Polynomial:
    return Polynomial.from_vector(n, rng.standard_normal(n_monomials(n, k)), k)


def linear_combination(polys: Iterable[Polynomial], weights: Iterable[float], n: int) -> Polynomial:
    out = Polynomial(n, {})
    for p, w in zip(polys, weights):
        out = out + float(w) * p
    return out
