"""Generalized moment problems on vectors of measures and their moment-SoS
relaxations, assembled as :class:`~momentgmp.conic.ConicProblem` instances.

Primal relaxation of order ``ell``::

    minimize    sum_i <lambda_i, f_i>
    subject to  sum_i <lambda_i, h_ij> = t_j    (kind "eq")
                sum_i <lambda_i, h_ij> <= t_j   (kind "le")
                M_{ell//2}(lambda_i) >= 0,  L_ell(g lambda_i) >= 0 for g in slot i

with rows j restricted to those of degree <= ell.

When the rows annihilate every multiple of some polynomials q on a slot
(<lambda_i, q x^beta> = 0 up to degree ell), each PSD block X of that slot
satisfies X v = 0 for the coefficient vectors v of q x^beta that fit in its
basis.  Passing those q as ``face`` replaces X >= 0 by P^T X P >= 0 with P an
orthonormal basis of the complement (facial reduction).  The feasible set is
unchanged but the reduced blocks regain a strictly feasible point, which first
order solvers need.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.stats import qmc

from .conic import PSD, ConicProblem, ConicSolution, NonNeg, Zero, smat, svec_rows
from .moment import localizing_half_degree, localizing_operator
from .poly import Polynomial, PseudoMoments, monomials_upto, n_monomials


class RowKind(str, Enum):
    EQ = "eq"
    LE = "le"


class WitnessError(ValueError):
    """The S-fullness witness is missing or not positive on the sampled set."""


@dataclass(frozen=True)
class MeasureSlot:
    """One measure supported on S = {x in R^n : g(x) >= 0 for g in generators}.

    The unit-ball generator 1 - |x|^2 must be present.
    """

    n: int
    generators: tuple[Polynomial, ...]

    def __post_init__(self):
        gens = tuple(self.generators)
        object.__setattr__(self, "generators", gens)
        for g in gens:
            if g.n != self.n:
                raise ValueError("generator dimension mismatch")
        if not self.includes_ball:
            raise ValueError("slot generators must include the ball constraint 1 - |x|^2")

    @classmethod
    def ball(cls, n: int, extra: Sequence[Polynomial] = ()) -> "MeasureSlot":
        return cls(n, (Polynomial.ball(n),) + tuple(extra))

    @property
    def includes_ball(self) -> bool:
        ball = Polynomial.ball(self.n)
        return any(g.allclose(ball, 0.0) for g in self.generators)

    def contains(self, pts: np.ndarray, tol: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(pts)
        ok = np.ones(pts.shape[0], dtype=bool)
        for g in self.generators:
            ok &= g(pts) >= -tol
        return ok

    def sample(self, count: int = 4096, seed: int = 0) -> np.ndarray:
        """Quasi-random points of S: scrambled Sobol in [-1, 1]^n, rejected
        outside S, plus the origin when it lies in S."""
        sampler = qmc.Sobol(d=self.n, scramble=True, seed=seed)
        out = []
        have = 0
        while have < count:
            pts = 2.0 * sampler.random(2 ** max(int(math.ceil(math.log2(2 * count))), 1)) - 1.0
            pts = pts[self.contains(pts)]
            out.append(pts)
            have += pts.shape[0]
        pts = np.vstack(out)[:count]
        origin = np.zeros((1, self.n))
        if self.contains(origin)[0]:
            pts = np.vstack([origin, pts[:-1]])
        return pts


@dataclass(frozen=True)
class ConstraintRow:
    """sum_i <lambda_i, h[i]> (= or <=) t."""

    h: tuple[Polynomial, ...]
    t: float
    kind: RowKind = RowKind.EQ

    def __post_init__(self):
        object.__setattr__(self, "h", tuple(self.h))
        object.__setattr__(self, "kind", RowKind(self.kind))
        object.__setattr__(self, "t", float(self.t))

    @property
    def degree(self) -> int:
        return max(p.degree for p in self.h)


@dataclass(frozen=True)
class GMPInstance:
    slots: tuple[MeasureSlot, ...]
    objective: tuple[Polynomial, ...]
    rows: tuple[ConstraintRow, ...]
    witness: Mapping[int, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(self.slots))
        object.__setattr__(self, "objective", tuple(self.objective))
        object.__setattr__(self, "rows", tuple(self.rows))
        if self.witness is not None:
            object.__setattr__(self, "witness", {int(k): float(v) for k, v in self.witness.items()})
        m = len(self.slots)
        if len(self.objective) != m:
            raise ValueError("one objective polynomial per slot is required")
        for f, slot in zip(self.objective, self.slots):
            if f.n != slot.n:
                raise ValueError("objective dimension mismatch")
        for j, row in enumerate(self.rows):
            if len(row.h) != m or any(h.n != s.n for h, s in zip(row.h, self.slots)):
                raise ValueError(f"row {j} does not match the slot layout")
        if self.witness:
            for j, w in self.witness.items():
                if not 0 <= j < len(self.rows):
                    raise ValueError(f"witness refers to missing row {j}")
                if self.rows[j].kind == RowKind.LE and w < 0:
                    raise WitnessError(f"witness weight on inequality row {j} must be >= 0")

    @property
    def degree(self) -> int:
        return max(f.degree for f in self.objective)

    def with_objective(self, objective: Sequence[Polynomial]) -> "GMPInstance":
        return replace(self, objective=tuple(objective))

    # serialization

    def to_json(self) -> dict:
        out = {
            "slots": [{"n": s.n, "generators": [g.to_json() for g in s.generators]} for s in self.slots],
            "objective": [f.to_json() for f in self.objective],
            "rows": [
                {"h": [h.to_json() for h in r.h], "t": r.t, "kind": r.kind.value} for r in self.rows
            ],
        }
        if self.witness is not None:
            out["witness"] = {str(k): v for k, v in self.witness.items()}
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> "GMPInstance":
        slots = []
        for s in obj["slots"]:
            gens = [Polynomial.from_json(g) for g in s.get("generators", [])]
            slot_n = int(s["n"])
            if not any(g.allclose(Polynomial.ball(slot_n), 0.0) for g in gens):
                gens.insert(0, Polynomial.ball(slot_n))
            slots.append(MeasureSlot(slot_n, tuple(gens)))
        objective = [Polynomial.from_json(f) for f in obj["objective"]]
        rows = [
            ConstraintRow(tuple(Polynomial.from_json(h) for h in r["h"]), r["t"], r.get("kind", "eq"))
            for r in obj.get("rows", [])
        ]
        witness = obj.get("witness")
        return cls(tuple(slots), tuple(objective), tuple(rows), witness)

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "GMPInstance":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def pop_instance(f: Polynomial, extra_generators: Sequence[Polynomial] = ()) -> GMPInstance:
    """min f over S as a GMP over probability measures (one row <lambda, 1> = 1)."""
    slot = MeasureSlot.ball(f.n, extra_generators)
    row = ConstraintRow((Polynomial.constant(f.n),), 1.0, RowKind.EQ)
    return GMPInstance((slot,), (f,), (row,), {0: 1.0})


# -- assembly -----------------------------------------------------------------------


@lru_cache(maxsize=128)
def _svec_operator(n: int, g: Polynomial, order: int) -> sp.csr_matrix:
    k = localizing_half_degree(order, g)
    s = n_monomials(n, k)
    full = localizing_operator(n, g, order, k)
    rows, w = svec_rows(s)
    return sp.csr_matrix(sp.diags(w) @ full[rows])


def _check_order(instance: GMPInstance, ell: int):
    if ell < 2:
        raise ValueError("relaxation order must be >= 2")
    if instance.degree > ell:
        raise ValueError(f"relaxation order {ell} is below the objective degree {instance.degree}")
    for slot in instance.slots:
        for g in slot.generators:
            if g.degree > ell:
                raise ValueError(f"generator of degree {g.degree} exceeds order {ell}")


@dataclass
class AssembledProblem:
    """Conic data for the order-``ell`` moment relaxation plus the maps needed
    to read a solution back in terms of the instance."""

    problem: ConicProblem
    order: int
    instance: GMPInstance
    offsets: tuple[int, ...]
    eq_rows: tuple[int, ...]
    le_rows: tuple[int, ...]
    row_scale: np.ndarray
    blocks: tuple[tuple[int, int], ...]  # (slot, generator index or -1 for the moment matrix)
    dropped_rows: tuple[int, ...] = ()
    face_bases: tuple = ()  # per block: None or the basis P of the reduced face

    @property
    def kept_rows(self) -> tuple[int, ...]:
        return self.eq_rows + self.le_rows

    def moments(self, sol: ConicSolution | np.ndarray) -> list[PseudoMoments]:
        x = sol.x if isinstance(sol, ConicSolution) else np.asarray(sol)
        out = []
        for i, slot in enumerate(self.instance.slots):
            N = n_monomials(slot.n, self.order)
            out.append(PseudoMoments(slot.n, self.order, x[self.offsets[i]: self.offsets[i] + N]))
        return out

    def to_vector(self, lams: Sequence[PseudoMoments]) -> np.ndarray:
        return np.concatenate([lam.values for lam in lams])

    def dual_multipliers(self, sol: ConicSolution) -> dict[int, float]:
        """v_j with f - sum_j v_j h_j in the truncated quadratic module."""
        k = len(self.kept_rows)
        v = -sol.y[:k] / self.row_scale
        return dict(zip(self.kept_rows, v.tolist()))

    def gram_matrices(self, sol: ConicSolution) -> list[np.ndarray]:
        out = []
        off = len(self.kept_rows)
        bases = self.face_bases or (None,) * len(self.blocks)
        for cone, P in zip(self.problem.cones[2:], bases):
            G = smat(sol.y[off: off + cone.dim])
            out.append(G if P is None else P @ G @ P.T)
            off += cone.dim
        return out

    def row_residuals(self, x: np.ndarray) -> np.ndarray:
        """Unscaled <lambda, h_j> - t_j for every kept row."""
        k = len(self.kept_rows)
        A = self.problem.A[:k]
        return (A @ x - self.problem.b[:k]) * self.row_scale


def face_basis(n: int, k: int, polys: Sequence[Polynomial], tol: float = 1e-10):
    """Orthonormal basis of the complement of span{q x^beta : deg <= k} in
    R[x]_k, or None when nothing is removed."""
    basis = monomials_upto(n, k)
    vecs = []
    for q in polys:
        if q.is_zero() or q.degree > k:
            continue
        for beta in monomials_upto(n, k - q.degree):
            vecs.append((q * Polynomial.monomial(beta)).to_vector(k))
    if not vecs:
        return None
    V = np.array(vecs)
    _, sv, Vt = np.linalg.svd(V, full_matrices=True)
    rank = int(np.sum(sv > tol * sv[0]))
    if rank == 0:
        return None
    return Vt[rank:].T.copy() if rank < len(basis) else np.zeros((len(basis), 0))


def _congruence_operator(P: np.ndarray) -> np.ndarray:
    """Matrix T with T svec(X) = svec(P^T X P)."""
    s, r = P.shape
    I, J = np.tril_indices(s)
    a, b = np.tril_indices(r)
    T = P[I][:, a] * P[J][:, b] + P[J][:, a] * P[I][:, b]
    T *= np.where(I == J, 0.5, 1.0 / math.sqrt(2.0))[:, None]
    T *= np.where(a == b, 1.0, math.sqrt(2.0))[None, :]
    return T.T


def assemble_primal(
    instance: GMPInstance,
    ell: int,
    normalize_rows: bool = True,
    face: Mapping[int, Sequence[Polynomial]] | None = None,
) -> AssembledProblem:
    """Order-``ell`` moment relaxation in conic standard form.

    Decision vector: concatenated pseudo-moments of every slot over
    ``monomials_upto(n_i, ell)``.  Cone order: Zero (equality rows),
    NonNeg (inequality rows), then per slot the moment matrix of half-degree
    ``ell // 2`` followed by one localizing matrix per generator.

    ``face`` maps a slot index to polynomials whose multiples up to degree
    ``ell`` are annihilated by the equality rows (the caller guarantees this);
    the PSD blocks of that slot are then restricted to the reduced face.
    """
    _check_order(instance, ell)
    sizes = [n_monomials(s.n, ell) for s in instance.slots]
    offsets = tuple(int(v) for v in np.concatenate([[0], np.cumsum(sizes)[:-1]]))
    nvar = int(sum(sizes))

    eq_rows, le_rows, dropped = [], [], []
    for j, row in enumerate(instance.rows):
        if row.degree > ell:
            dropped.append(j)
        elif row.kind == RowKind.EQ:
            eq_rows.append(j)
        else:
            le_rows.append(j)
    if not eq_rows and not le_rows and instance.rows:
        warnings.warn("no constraint row survives truncation at this order", RuntimeWarning)

    lin = []
    rhs = []
    for j in eq_rows + le_rows:
        row = instance.rows[j]
        coef = np.concatenate([h.to_vector(ell) for h in row.h])
        lin.append(coef)
        rhs.append(row.t)
    lin = np.array(lin).reshape(-1, nvar)
    rhs = np.array(rhs, dtype=float)
    scale = np.linalg.norm(lin, axis=1) if normalize_rows and lin.size else np.ones(len(rhs))
    scale = np.where(scale > 0, scale, 1.0)
    lin = lin / scale[:, None]
    rhs = rhs / scale

    blocks_A = [sp.csr_matrix(lin)]
    cones = [Zero(len(eq_rows)), NonNeg(len(le_rows))]
    labels = []
    bases = []
    face = face or {}
    for i, slot in enumerate(instance.slots):
        gens = [(-1, Polynomial.constant(slot.n))] + list(enumerate(slot.generators))
        for gi, g in gens:
            op = _svec_operator(slot.n, g, ell)
            k = localizing_half_degree(ell, g)
            side = n_monomials(slot.n, k)
            P = face_basis(slot.n, k, face[i]) if face.get(i) else None
            if P is not None:
                op = sp.csr_matrix(_congruence_operator(P) @ op)
                op.data[np.abs(op.data) < 1e-14 * max(1.0, np.abs(op.data).max(initial=0.0))] = 0.0
                op.eliminate_zeros()
                side = P.shape[1]
            padded = sp.hstack(
                [sp.csr_matrix((op.shape[0], offsets[i])), -op,
                 sp.csr_matrix((op.shape[0], nvar - offsets[i] - op.shape[1]))]
            )
            blocks_A.append(sp.csr_matrix(padded))
            cones.append(PSD(side))
            labels.append((i, gi))
            bases.append(P)
    A = sp.csr_matrix(sp.vstack(blocks_A))
    b = np.concatenate([rhs, np.zeros(A.shape[0] - len(rhs))])
    c = np.concatenate([f.to_vector(ell) for f in instance.objective])
    return AssembledProblem(
        ConicProblem(c, A, b, tuple(cones)), ell, instance, offsets,
        tuple(eq_rows), tuple(le_rows), scale, tuple(labels), tuple(dropped),
        tuple(bases) if any(P is not None for P in bases) else (),
    )


@dataclass
class AssembledDual:
    """The SoS program as a conic problem in standard form.

    Variables ``z`` are the conic multipliers of the primal assembly:
    ``v_j = -z_j / scale_j`` for constraint rows and SoS Gram matrices (svec)
    for the PSD blocks.  Constraints: ``A_p^T z + c_p = 0`` (coefficient
    matching, a Zero block) and z in the dual cone of the primal blocks.
    The problem minimizes ``b_p^T z``; the SoS value is its negative.
    """

    problem: ConicProblem
    primal: AssembledProblem

    def value(self, sol: ConicSolution) -> float:
        return -sol.primal_objective

    def multipliers(self, sol: ConicSolution) -> dict[int, float]:
        k = len(self.primal.kept_rows)
        v = -sol.x[:k] / self.primal.row_scale
        return dict(zip(self.primal.kept_rows, v.tolist()))


def assemble_dual(instance: GMPInstance, ell: int, normalize_rows: bool = True) -> AssembledDual:
    """Order-``ell`` SoS relaxation: sup sum_j v_j t_j s.t. f - sum_j v_j h_j in Q_ell."""
    pa = assemble_primal(instance, ell, normalize_rows)
    P = pa.problem
    n_eq = P.cones[0].dim
    m = P.m
    # z_free (equality multipliers) are unconstrained; the remaining z lie in K
    sel = sp.eye(m, format="csr")[n_eq:]
    A = sp.vstack([sp.csr_matrix(P.A.T), -sel])
    b = np.concatenate([-P.c, np.zeros(m - n_eq)])
    cones = (Zero(P.n),) + P.cones[1:]
    return AssembledDual(ConicProblem(P.b.copy(), A, b, cones), pa)


# -- S-fullness ---------------------------------------------------------------------


def witness_polynomials(instance: GMPInstance) -> list[Polynomial]:
    """b_i = sum_j w_j h_ij for every slot."""
    if not instance.witness:
        raise WitnessError("instance has no S-fullness witness")
    out = []
    for i, slot in enumerate(instance.slots):
        bi = Polynomial(slot.n, {})
        for j, w in instance.witness.items():
            bi = bi + w * instance.rows[j].h[i]
        out.append(bi)
    return out


def witness_minimum(instance: GMPInstance, samples: int = 4096, seed: int = 0) -> float:
    """Sampled min over all slots of b_i on S_i."""
    vals = []
    for slot, bi in zip(instance.slots, witness_polynomials(instance)):
        vals.append(float(np.min(bi(slot.sample(samples, seed)))))
    return min(vals)


def mass_bound(instance: GMPInstance, samples: int = 4096, seed: int = 0) -> float:
    """<t, w> / b_min: bound on the total mass sum_i lambda_i(1) of any feasible point."""
    bmin = witness_minimum(instance, samples, seed)
    if bmin <= 0:
        raise WitnessError(f"witness is not positive on the sampled set (min {bmin:.3g})")
    tw = sum(w * instance.rows[j].t for j, w in instance.witness.items())
    return tw / bmin
