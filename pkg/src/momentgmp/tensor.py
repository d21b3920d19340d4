"""Symmetric tensor decomposition as a generalized moment problem.

A tensor F of degree d in n+1 variables is dehomogenized and rescaled so that
the sought points lie in the unit ball, F(x) = sum_i w_i (1 + <xi_i, x>)^d.
By the reproducing property of the apolar product the measure
mu = sum_i w_i delta(xi_i) satisfies <mu, x^alpha> = F_alpha / binom(d, alpha),
which gives linear moment constraints; minimizing the trace of the moment
matrix favours low-rank (few-atom) solutions.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .conic import SolverSettings, Status, solve
from .extract import AtomSet, atoms_to_moments, extract_atoms, reconstruct_polynomial
from .gmp import ConstraintRow, GMPInstance, MeasureSlot, RowKind, assemble_primal
from .moment import catalecticant, kernel_basis
from .poly import (
    Polynomial,
    apolar_norm,
    dehomogenize_rescale,
    exponent_matrix,
    homogenize,
    monomial_vector,
    monomials_upto,
    multinomial,
)


class Mode(str, Enum):
    POSITIVE = "positive"
    SIGNED = "signed"


class NotCertified(UserWarning):
    """Extraction residual above the certification tolerance; result kept."""


@dataclass
class DecompositionConfig:
    """Settings of the decomposition pipeline.

    ``psi_halfdeg`` defaults to ``order // 2`` (trace of the full moment
    matrix).  ``L`` is the total-variation cap of the signed mode; ``None``
    picks ``10 * (apolar_norm(F, d) + 1)``.
    """

    order: int = 12
    psi_halfdeg: int | None = None
    scale: float = 1.0
    L: float | None = None
    use_kernel: bool = False
    rank_tol: float = 1e-6
    merge_tol: float = 1e-6
    kernel_tol: float = 1e-6
    eps: float = 1e-8
    max_iter: int = 200000
    seed: int = 0
    certify_tol: float = 1e-3
    polish: bool = True

    @property
    def dprime(self) -> int:
        return self.order // 2 if self.psi_halfdeg is None else self.psi_halfdeg

    def validate(self, d: int, mode: Mode | str = Mode.POSITIVE) -> None:
        if 2 * self.dprime <= d:
            raise ValueError(f"need 2 d' > d, got d' = {self.dprime}, d = {d}")
        if self.order < 2 * self.dprime:
            raise ValueError(f"order {self.order} is below 2 d' = {2 * self.dprime}")
        if self.order < d:
            raise ValueError("order must be at least the tensor degree")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if Mode(mode) == Mode.SIGNED and self.L is not None and self.L <= 0:
            raise ValueError("L must be positive")


def default_config(d: int, **overrides) -> DecompositionConfig:
    """Order 12 with d' = 6 for quartics; in general the smallest d' with
    2 d' > d, order 2 (d' + 2) (at least 12) and the trace over the full
    moment matrix."""
    dmin = d // 2 + 1
    order = max(12, 2 * (dmin + 2))
    return replace(DecompositionConfig(order=order, psi_halfdeg=order // 2), **overrides)


def default_psi(n: int, dprime: int) -> Polynomial:
    """sum_{|alpha| <= d'} x^(2 alpha)."""
    if dprime < 0:
        raise ValueError("d' must be >= 0")
    return Polynomial(n, {tuple(2 * a for a in al): 1.0 for al in monomials_upto(n, dprime)})


def moment_rows(F: Polynomial, d: int) -> list[tuple[tuple[int, ...], float]]:
    """(alpha, F_alpha / binom(d, alpha)) for all |alpha| <= d."""
    if F.degree > d:
        raise ValueError(f"deg F = {F.degree} exceeds d = {d}")
    return [(al, F.coef(al) / multinomial(d, al)) for al in monomials_upto(F.n, d)]


def build_positive_gmp(F: Polynomial, d: int, cfg: DecompositionConfig) -> GMPInstance:
    n = F.n
    rows = [ConstraintRow((Polynomial.monomial(al),), t, RowKind.EQ) for al, t in moment_rows(F, d)]
    # row 0 is alpha = 0 and 1 > 0 on the ball
    return GMPInstance((MeasureSlot.ball(n),), (default_psi(n, cfg.dprime),), tuple(rows), {0: 1.0})


def default_L(F: Polynomial, d: int) -> float:
    return 10.0 * (apolar_norm(F, d) + 1.0)


def build_signed_gmp(
    F: Polynomial,
    d: int,
    cfg: DecompositionConfig,
    kernel: Sequence[Polynomial] | None = None,
) -> GMPInstance:
    """Two measures lambda_+ and lambda_- on the unit ball with
    lambda_+ - lambda_- matching the apolar moments of F and a total-variation
    cap.  Kernel polynomials q add rows <lambda_+-, q x^beta> = 0 for
    |beta| <= order - d // 2, so every multiple of q up to the relaxation
    order is annihilated."""
    n = F.n
    L = default_L(F, d) if cfg.L is None else float(cfg.L)
    if L <= 0:
        raise ValueError("L must be positive")
    one = Polynomial.constant(n)
    zero = Polynomial(n, {})
    rows = [ConstraintRow((one, one), L, RowKind.LE)]
    for al, t in moment_rows(F, d):
        m = Polynomial.monomial(al)
        rows.append(ConstraintRow((m, -m), t, RowKind.EQ))
    for q in kernel or ():
        if q.is_zero():
            continue
        for beta in monomials_upto(n, cfg.order - d // 2):
            qb = q * Polynomial.monomial(beta)
            rows.append(ConstraintRow((qb, zero), 0.0, RowKind.EQ))
            rows.append(ConstraintRow((zero, qb), 0.0, RowKind.EQ))
    psi = default_psi(n, cfg.dprime)
    slot = MeasureSlot.ball(n)
    return GMPInstance((slot, slot), (psi, psi), tuple(rows), {0: 1.0})


def _moment_jacobian(w: np.ndarray, P: np.ndarray, d: int) -> np.ndarray:
    # d/dw and d/dxi of sum_i w_i xi_i^alpha over |alpha| <= d
    E = exponent_matrix(P.shape[1], d)
    V = monomial_vector(P, d)  # (r, N)
    cols = [V.T]
    for j in range(P.shape[1]):
        e = E[:, j]
        lower = E.copy()
        lower[:, j] = np.maximum(e - 1, 0)
        Vl = np.prod(P[:, None, :] ** lower[None, :, :], axis=2)
        cols.append((Vl * e[None, :] * w[:, None]).T)
    return np.hstack(cols)


def polish(F: Polynomial, a: AtomSet, d: int, max_shift: float = 1e-2) -> AtomSet:
    """Gauss-Newton refinement of points and weights on the apolar moments of F.

    The tensor data is exact while solver moments carry first-order noise.
    The refined atoms are kept only if the residual decreases and no point
    moves by more than ``max_shift``; otherwise ``a`` is returned.
    """
    if not a.rank:
        return a
    target = np.array([t for _, t in moment_rows(F, d)])
    r, n = a.rank, a.n

    def unpack(z):
        return z[:r], z[r:].reshape(n, r).T

    def resid(z):
        w, P = unpack(z)
        return monomial_vector(P, d).T @ w - target

    def jac(z):
        return _moment_jacobian(*unpack(z), d)

    z0 = np.concatenate([a.weights, a.points.T.ravel()])
    method = "lm" if z0.size <= target.size else "trf"
    res = least_squares(resid, z0, jac=jac, method=method, xtol=1e-15, ftol=1e-15, gtol=1e-15)
    w, P = unpack(res.x)
    before = float(np.max(np.abs(resid(z0))))
    after = float(np.max(np.abs(resid(res.x))))
    if not np.all(np.isfinite(res.x)) or after > before or np.max(np.abs(P - a.points)) > max_shift:
        return a
    out = AtomSet(w, P, a.residual, dict(a.info))
    out.info["polish"] = {"before": before, "after": after}
    return out


def reconstruction_error(F: Polynomial, a: AtomSet, d: int) -> float:
    """Apolar norm of F - sum_i w_i (1 + <xi_i, x>)^d."""
    return apolar_norm(F - reconstruct_polynomial(a, d, F.n), d)


def suggest_scale(F_hom: Polynomial) -> float:
    """Smallest power of two above a coarse radius estimate of the points.

    Uses max_alpha (|F_alpha| / binom(d, alpha) / |F_0|)^(1/|alpha|) on the
    dehomogenized tensor, which is exact for a single atom.
    """
    F = dehomogenize_rescale(F_hom, 1.0)
    d = F_hom.degree
    f0 = abs(F.coef((0,) * F.n))
    if f0 == 0:
        f0 = max(abs(v) for v in F.terms.values())
    radius = 0.0
    for al, v in F.terms.items():
        k = sum(al)
        if k:
            radius = max(radius, (abs(v) / multinomial(d, al) / f0) ** (1.0 / k))
    if radius <= 1.0:
        return 1.0
    return float(2 ** math.ceil(math.log2(radius)))


@dataclass
class Diagnostics:
    mode: str
    status: str
    iterations: int
    solve_time: float
    objective: float
    residuals: dict
    rank_trajectory: list
    extraction_residual: float
    reconstruction_error: float
    reconstruction_error_rescaled: float
    certified: bool
    kernel_dim: int = 0
    L: float | None = None
    n_rows: int = 0
    config: dict = field(default_factory=dict)
    rescaled_atoms: dict | None = None
    raw_atoms: dict | None = None
    messages: list = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)


def _extract_slot(lam, cfg: DecompositionConfig, ref_mass: float) -> AtomSet:
    if abs(lam.mass) <= 1e-7 * max(ref_mass, 1.0) and np.max(np.abs(lam.values)) <= 1e-6 * max(ref_mass, 1.0):
        return AtomSet.empty(lam.n)
    return extract_atoms(lam, tol=cfg.rank_tol, merge_tol=cfg.merge_tol, seed=cfg.seed)


def decompose(
    F_hom: Polynomial,
    d: int,
    mode: Mode | str = Mode.POSITIVE,
    cfg: DecompositionConfig | None = None,
) -> tuple[AtomSet, Diagnostics]:
    """Decompose a homogeneous tensor into powers of affine forms.

    Returns atoms in the original coordinates (points multiplied back by the
    scale) and diagnostics.  If the extraction residual exceeds
    ``cfg.certify_tol`` a :class:`NotCertified` warning is issued and
    ``diagnostics.certified`` is False.
    """
    mode = Mode(mode)
    cfg = cfg or default_config(d)
    if not F_hom.is_homogeneous() or F_hom.degree not in (d, -1):
        raise ValueError(f"expected a homogeneous tensor of degree {d}")
    cfg.validate(d, mode)
    F = dehomogenize_rescale(F_hom, cfg.scale)
    n = F.n
    messages = []

    kernel = []
    L = None
    if mode == Mode.POSITIVE:
        inst = build_positive_gmp(F, d, cfg)
    else:
        if cfg.use_kernel:
            h = d // 2
            kernel = kernel_basis(catalecticant(F, h, d - h, d), cfg.kernel_tol)
        L = default_L(F, d) if cfg.L is None else float(cfg.L)
        inst = build_signed_gmp(F, d, DecompositionConfig(**{**asdict(cfg), "L": L}), kernel)

    # kernel rows annihilate every multiple of q: restrict the PSD blocks to
    # the exposed face and drop the (highly redundant) equality rows
    face = {0: kernel, 1: kernel} if kernel else None
    ap = assemble_primal(inst, cfg.order, face=face)
    settings = SolverSettings(eps=cfg.eps, max_iter=cfg.max_iter, presolve=bool(kernel))
    sol = solve(ap.problem, settings)
    if sol.status != Status.OPTIMAL:
        messages.append(f"solver stopped with status {sol.status.value}")
    lams = ap.moments(sol)

    ref = max(abs(lam.mass) for lam in lams)
    parts = [_extract_slot(lam, cfg, ref) for lam in lams]
    ranks = [p.info.get("ranks", []) for p in parts]
    resid = max((p.residual or 0.0) for p in parts)
    atoms = parts[0] if mode == Mode.POSITIVE else parts[0].concat(parts[1], sign=-1.0)
    atoms.residual = resid
    raw = atoms
    if cfg.polish and atoms.rank:
        atoms = polish(F, atoms, d)
        atoms.residual = resid

    err_rescaled = reconstruction_error(F, atoms, d)
    original = atoms.rescaled(cfg.scale)
    original.residual = resid
    err = reconstruction_error(dehomogenize_rescale(F_hom, 1.0), original, d)

    certified = bool(resid <= cfg.certify_tol)
    if not certified:
        msg = f"extraction residual {resid:.3g} exceeds {cfg.certify_tol:g}"
        messages.append(msg)
        warnings.warn(msg, NotCertified, stacklevel=2)

    diag = Diagnostics(
        mode=mode.value,
        status=sol.status.value,
        iterations=int(sol.iterations),
        solve_time=float(sol.solve_time),
        objective=float(sol.primal_objective),
        residuals={k: float(v) for k, v in sol.residuals.items()},
        rank_trajectory=ranks,
        extraction_residual=float(resid),
        reconstruction_error=float(err),
        reconstruction_error_rescaled=float(err_rescaled),
        certified=certified,
        kernel_dim=len(kernel),
        L=L,
        n_rows=len(ap.kept_rows),
        config=asdict(cfg),
        rescaled_atoms=atoms.to_json(),
        raw_atoms=raw.rescaled(cfg.scale).to_json(),
        messages=messages,
    )
    return original, diag


def ground_truth_moments(a: AtomSet, ell: int, scale: float = 1.0):
    """Moments of a known decomposition in rescaled coordinates."""
    return atoms_to_moments(AtomSet(a.weights, a.points / scale), ell)


def tensor_from_atoms(a: AtomSet, d: int) -> Polynomial:
    """Homogeneous F(x0, x) = sum_i w_i (x0 + <xi_i, x>)^d."""
    return homogenize(reconstruct_polynomial(a, d), d)
