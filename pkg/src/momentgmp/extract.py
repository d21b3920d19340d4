"""Atom extraction from low-rank moment data, and the inverse maps."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linear_sum_assignment

from .moment import moment_matrix
from .poly import (
    Polynomial,
    PseudoMoments,
    monomial_index,
    monomial_vector,
    monomials_upto,
    multinomial,
    n_monomials,
)


class NoFlatRank(RuntimeError):
    """No degree k with rank M_k == rank M_{k+1} was found; raise the order."""


class ExtractionUnstable(RuntimeError):
    def __init__(self, msg: str, condition: float):
        super().__init__(f"{msg} (condition estimate {condition:.3g})")
        self.condition = condition


@dataclass
class AtomSet:
    """Discrete measure sum_i weights[i] * delta(points[i])."""

    weights: np.ndarray
    points: np.ndarray
    residual: float | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        pts = np.asarray(self.points, dtype=float)
        self.points = pts.reshape(self.weights.size, -1) if pts.size else pts.reshape(0, pts.shape[-1] if pts.ndim == 2 else 0)

    @classmethod
    def empty(cls, n: int) -> "AtomSet":
        return cls(np.zeros(0), np.zeros((0, n)))

    @property
    def n(self) -> int:
        return self.points.shape[1]

    @property
    def rank(self) -> int:
        return self.weights.size

    @property
    def signed(self) -> bool:
        return bool(np.any(self.weights < 0))

    @property
    def total_variation(self) -> float:
        return float(np.abs(self.weights).sum())

    def __len__(self):
        return self.rank

    def rescaled(self, scale: float) -> "AtomSet":
        return AtomSet(self.weights.copy(), self.points * scale, self.residual, dict(self.info))

    def concat(self, other: "AtomSet", sign: float = 1.0) -> "AtomSet":
        return AtomSet(
            np.concatenate([self.weights, sign * other.weights]),
            np.vstack([self.points, other.points]),
        )

    def sorted(self) -> "AtomSet":
        order = np.lexsort(self.points.T[::-1]) if self.rank else np.zeros(0, int)
        return AtomSet(self.weights[order], self.points[order], self.residual, dict(self.info))

    def to_json(self) -> dict:
        return {
            "atoms": [{"weight": float(w), "point": [float(v) for v in p]}
                      for w, p in zip(self.weights, self.points)],
            "residual": None if self.residual is None else float(self.residual),
        }

    @classmethod
    def from_json(cls, obj) -> "AtomSet":
        atoms = obj["atoms"]
        if not atoms:
            return cls(np.zeros(0), np.zeros((0, 0)), obj.get("residual"))
        return cls([a["weight"] for a in atoms], [a["point"] for a in atoms], obj.get("residual"))

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)


def numeric_rank(M: np.ndarray, tol: float = 1e-6) -> int:
    """Number of singular values above tol * sigma_max."""
    s = np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def atoms_to_moments(a: AtomSet, ell: int, n: int | None = None) -> PseudoMoments:
    if n is None and a.points.ndim == 2 and a.points.shape[1]:
        n = a.n
    if n is None:
        raise ValueError("dimension of an empty atom set must be given")
    if not a.rank:
        return PseudoMoments(n, ell, np.zeros(n_monomials(n, ell)))
    return PseudoMoments(n, ell, monomial_vector(a.points, ell).T @ a.weights)


def reconstruct_polynomial(a: AtomSet, d: int, n: int | None = None) -> Polynomial:
    """sum_i w_i (1 + <xi_i, x>)^d."""
    lam = atoms_to_moments(a, d, n)
    return Polynomial(lam.n, {al: multinomial(d, al) * v
                              for al, v in zip(monomials_upto(lam.n, d), lam.values)})


def rank_trajectory(lam: PseudoMoments, tol: float = 1e-6) -> list[int]:
    return [numeric_rank(moment_matrix(lam, k).entries, tol) for k in range(lam.order // 2 + 1)]


def flat_degree(lam: PseudoMoments, tol: float = 1e-6) -> tuple[int, int]:
    """Smallest k >= 1 with rank M_k == rank M_{k+1}; returns (k, rank)."""
    ranks = rank_trajectory(lam, tol)
    ks = flat_degrees(ranks)
    if not ks:
        raise NoFlatRank(f"no stable rank in trajectory {ranks}")
    return ks[0], ranks[ks[0]]


def _shift_matrices(lam: PseudoMoments, k: int) -> list[np.ndarray]:
    basis = monomials_upto(lam.n, k)
    idx = monomial_index(lam.n, lam.order)
    vals = lam.values
    out = []
    for j in range(lam.n):
        e = [0] * lam.n
        e[j] = 1
        H = np.empty((len(basis), len(basis)))
        for p, b in enumerate(basis):
            for q, g in enumerate(basis[: p + 1]):
                H[p, q] = H[q, p] = vals[idx[tuple(x + y + z for x, y, z in zip(b, g, e))]]
        out.append(H)
    return out


def merge_close(a: AtomSet, tol: float) -> AtomSet:
    """Merge atoms closer than ``tol`` in the max norm, summing weights."""
    w = list(a.weights)
    pts = [p for p in a.points]
    i = 0
    while i < len(pts):
        j = i + 1
        while j < len(pts):
            if np.max(np.abs(pts[i] - pts[j])) < tol:
                tot = w[i] + w[j]
                if tot != 0:
                    pts[i] = (w[i] * pts[i] + w[j] * pts[j]) / tot
                w[i] = tot
                del w[j], pts[j]
            else:
                j += 1
        i += 1
    return AtomSet(np.array(w), np.array(pts).reshape(len(w), a.n), a.residual, dict(a.info))


def flat_degrees(ranks: Sequence[int]) -> list[int]:
    """All k >= 1 with rank M_k == rank M_{k+1}."""
    return [k for k in range(1, len(ranks) - 1) if ranks[k] == ranks[k + 1]]


def _points_at(lam: PseudoMoments, k: int, r: int, seed: int, max_condition: float):
    H0 = moment_matrix(lam, k).entries
    U, _, _ = np.linalg.svd(H0)
    U = U[:, :r]
    G0 = U.T @ H0 @ U
    cond = np.linalg.cond(G0)
    if not np.isfinite(cond) or cond > max_condition:
        raise ExtractionUnstable("moment matrix basis is ill-conditioned", cond)
    Ns = [np.linalg.solve(G0, U.T @ Hj @ U) for Hj in _shift_matrices(lam, k)]

    rng = np.random.default_rng(seed)
    for attempt in range(2):
        c = rng.standard_normal(lam.n)
        c /= np.linalg.norm(c)
        N = sum(cj * Nj for cj, Nj in zip(c, Ns))
        T, Z = sla.schur(N, output="real")
        ev = np.sort(np.diag(T))
        gap = np.min(np.diff(ev)) if r > 1 else np.inf
        if gap >= 1e-10:
            break
    zcond = np.linalg.cond(Z)
    if zcond > max_condition:
        raise ExtractionUnstable("Schur basis is ill-conditioned", zcond)
    pts = np.column_stack([np.diag(Z.T @ Nj @ Z) for Nj in Ns])
    return pts, float(cond), float(gap)


def extract_atoms(
    lam: PseudoMoments,
    tol: float = 1e-6,
    merge_tol: float = 1e-6,
    seed: int = 0,
    max_condition: float = 1e10,
) -> AtomSet:
    """Recover sum_i w_i delta(xi_i) from (pseudo-)moments with a flat rank.

    The column space of M_k is spanned by its top-r singular vectors U.  With
    G0 = U^T M_k U and Gj = U^T (x_j M)_k U the matrices N_j = G0^{-1} Gj
    commute and share eigenvectors; their eigenvalues are the point
    coordinates.  A random combination of the N_j is brought to real Schur
    form and coordinates are read off the diagonal of Z^T N_j Z.

    The smallest flat degree k is preferred.  Larger flat degrees are also
    tried, with weights fitted on the moments up to degree 2 k_max + 1, and
    replace it only if they lower the moment residual more than tenfold.  This
    matters when the points are nearly degenerate in low degree, e.g. four
    nearly coplanar points in R^3.
    """
    if lam.order < 4:
        raise ValueError("extraction needs order >= 4")
    if np.max(np.abs(lam.values), initial=0.0) == 0.0:
        return AtomSet(np.zeros(0), np.zeros((0, lam.n)), 0.0, {"flat_degree": 0})
    ranks = rank_trajectory(lam, tol)
    ks = flat_degrees(ranks)
    if not ks:
        raise NoFlatRank(f"no stable rank in trajectory {ranks}")
    if ranks[ks[0]] == 0:
        return AtomSet(np.zeros(0), np.zeros((0, lam.n)), 0.0, {"flat_degree": ks[0], "ranks": ranks})

    deg = min(2 * ks[-1] + 1, lam.order)
    target = lam.values[: n_monomials(lam.n, deg)]
    best = None
    error = None
    for k in ks:
        r = ranks[k]
        try:
            pts, cond, gap = _points_at(lam, k, r, seed, max_condition)
        except ExtractionUnstable as exc:
            error = exc
            continue
        w, *_ = np.linalg.lstsq(monomial_vector(pts, deg).T, target, rcond=None)
        atoms = merge_close(AtomSet(w, pts), merge_tol)
        fit = monomial_vector(atoms.points, deg).T @ atoms.weights if atoms.rank else np.zeros_like(target)
        atoms.residual = float(np.max(np.abs(fit - target)))
        atoms.info.update({"flat_degree": k, "rank": r, "ranks": ranks,
                           "condition": cond, "spectral_gap": gap})
        floor = 1e-12 * max(1.0, float(np.max(np.abs(target))))
        if best is None or (best.residual > floor and atoms.residual < 0.1 * best.residual):
            best = atoms
    if best is None:
        raise error
    return best


def match_atoms(a: AtomSet, b: AtomSet) -> tuple[float, float]:
    """Optimal matching of two atom sets by point distance.

    Returns (max point error, max weight error); infinite if sizes differ.
    """
    if a.rank != b.rank:
        return np.inf, np.inf
    if a.rank == 0:
        return 0.0, 0.0
    cost = np.linalg.norm(a.points[:, None, :] - b.points[None, :, :], axis=2)
    ri, ci = linear_sum_assignment(cost)
    perr = float(np.max(np.abs(a.points[ri] - b.points[ci])))
    werr = float(np.max(np.abs(a.weights[ri] - b.weights[ci])))
    return perr, werr
