"""Moment, localizing and catalecticant matrices and their numeric kernels."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .poly import (
    MultiIndex,
    Polynomial,
    PseudoMoments,
    monomial_index,
    monomials_upto,
    multinomial,
)


@dataclass(frozen=True)
class MomentMatrix:
    """Symmetric matrix indexed on both sides by ``basis`` (graded lex)."""

    basis: tuple[MultiIndex, ...]
    entries: np.ndarray
    col_basis: tuple[MultiIndex, ...] | None = None

    @property
    def cols(self) -> tuple[MultiIndex, ...]:
        return self.basis if self.col_basis is None else self.col_basis

    @property
    def size(self) -> int:
        return len(self.basis)

    @property
    def n(self) -> int:
        return len(self.basis[0])

    def __getitem__(self, key):
        (b, g) = key
        ridx = {a: i for i, a in enumerate(self.basis)}
        cidx = {a: i for i, a in enumerate(self.cols)}
        return float(self.entries[ridx[tuple(b)], cidx[tuple(g)]])


@dataclass(frozen=True)
class LocalizingMatrix(MomentMatrix):
    generator: Polynomial | None = None


def localizing_half_degree(order: int, g: Polynomial) -> int:
    return (order - max(g.degree, 0)) // 2


@lru_cache(maxsize=256)
def _shift_table(n: int, k: int, order: int) -> np.ndarray:
    # position of beta + gamma in monomials_upto(n, order); shape (s, s)
    basis = monomials_upto(n, k)
    idx = monomial_index(n, order)
    s = len(basis)
    out = np.empty((s, s), dtype=np.int64)
    for i, b in enumerate(basis):
        for j, g in enumerate(basis[: i + 1]):
            out[i, j] = out[j, i] = idx[tuple(x + y for x, y in zip(b, g))]
    return out


def localizing_operator(n: int, g: Polynomial, order: int, k: int | None = None) -> sp.csr_matrix:
    """Sparse map from moment values (over degree <= order) to the row-major
    flattened localizing matrix L[beta, gamma] = lambda(g x^(beta+gamma)).

    ``k`` defaults to floor((order - deg g) / 2).
    """
    if k is None:
        k = localizing_half_degree(order, g)
    if k < 0 or 2 * k + max(g.degree, 0) > order:
        raise ValueError("localizing matrix does not fit in the given order")
    s = len(monomials_upto(n, k))
    idx = monomial_index(n, order)
    table = _shift_table(n, k, order).ravel()
    basis_order = monomials_upto(n, order)
    rows, cols, vals = [], [], []
    for delta, c in g.terms.items():
        if not any(delta):
            rows.append(np.arange(s * s))
            cols.append(table)
        else:
            # x^delta * x^alpha for every alpha that appears in the table
            shifted = np.array(
                [idx[tuple(a + d for a, d in zip(basis_order[t], delta))] for t in table]
            )
            rows.append(np.arange(s * s))
            cols.append(shifted)
        vals.append(np.full(s * s, c))
    if not rows:
        return sp.csr_matrix((s * s, len(idx)))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(s * s, len(idx)),
    )


def moment_matrix(lam: PseudoMoments, k: int) -> MomentMatrix:
    """M[beta, gamma] = lambda(x^(beta+gamma)) for |beta|, |gamma| <= k."""
    if 2 * k > lam.order:
        raise ValueError(f"moment matrix of half-degree {k} needs order >= {2 * k}")
    table = _shift_table(lam.n, k, lam.order)
    return MomentMatrix(monomials_upto(lam.n, k), lam.values[table])


def localizing_matrix(lam: PseudoMoments, g: Polynomial, order: int) -> LocalizingMatrix:
    """L[beta, gamma] = lambda(g x^(beta+gamma)), basis up to (order - deg g) // 2."""
    if g.degree > order:
        raise ValueError("deg g exceeds the order")
    if lam.order < order:
        raise ValueError("pseudo-moments are truncated below the requested order")
    k = localizing_half_degree(order, g)
    op = localizing_operator(lam.n, g, lam.order, k)
    s = len(monomials_upto(lam.n, k))
    return LocalizingMatrix(monomials_upto(lam.n, k), (op @ lam.values).reshape(s, s), generator=g)


def apolar_functional(F: Polynomial, d: int) -> PseudoMoments:
    """Moments alpha -> binom(d, alpha)^{-1} F_alpha for |alpha| <= d."""
    if F.degree > d:
        raise ValueError("deg F exceeds d")
    return PseudoMoments.from_function(F.n, d, lambda a: F.coef(a) / multinomial(d, a))


def catalecticant(F: Polynomial, a: int, b: int, d: int) -> MomentMatrix:
    """H^{a,b}[beta, gamma] = binom(d, beta+gamma)^{-1} F_(beta+gamma).

    Rows run over monomials of degree <= a, columns over degree <= b.
    """
    if a + b > d:
        raise ValueError(f"a + b = {a + b} exceeds d = {d}")
    lam = apolar_functional(F, d)
    rows = monomials_upto(F.n, a)
    cols = monomials_upto(F.n, b)
    H = np.array([[lam[tuple(x + y for x, y in zip(r, c))] for c in cols] for r in rows])
    return MomentMatrix(rows, H, None if a == b else cols)


def kernel_basis(M: MomentMatrix, tol: float = 1e-6) -> list[Polynomial]:
    """Orthonormal (coefficient-wise) basis of the numeric kernel of M.

    Right singular vectors with singular value <= tol * sigma_max.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = np.asarray(M.entries, dtype=float)
    _, s, Vt = np.linalg.svd(A)
    smax = s[0] if s.size else 0.0
    ncols = A.shape[1]
    if smax == 0.0:
        null = np.eye(ncols)
    else:
        full = np.zeros(ncols)
        full[: s.size] = s
        null = Vt[full <= tol * smax].T
    n = len(M.basis[0])
    cols = M.cols
    return [Polynomial(n, dict(zip(cols, null[:, j]))) for j in range(null.shape[1])]
