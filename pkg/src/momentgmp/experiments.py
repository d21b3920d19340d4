"""Empirical checks of the hierarchy: gap sweeps against a grid oracle,
a sampled Hausdorff-distance estimate and optimizer convergence.

Independent solves run on a thread pool capped by ``MOMENTGMP_THREADS``;
results are always collected by index, so output does not depend on the
number of workers.
"""
from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog

from .conic import SolverSettings, Status, solve
from .gmp import GMPInstance, RowKind, assemble_primal
from .poly import Polynomial, PseudoMoments, a_norm, monomials_upto, weighted_functional_norm


class ReferenceInfeasible(RuntimeError):
    """The moment rows cannot be met by atoms on the candidate grid."""


def worker_count(default: int | None = None) -> int:
    env = os.environ.get("MOMENTGMP_THREADS")
    if env:
        return max(1, int(env))
    return default if default is not None else min(4, os.cpu_count() or 1)


def parallel_map(fn: Callable, items: Sequence, workers: int | None = None) -> list:
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# -- grid oracle ------------------------------------------------------------------


def candidate_grid(slot, points_per_dim: int, max_points: int = 250_000) -> np.ndarray:
    """Tensor grid on [-1, 1]^n restricted to S; per-dimension resolution is
    lowered when the full grid would exceed ``max_points``."""
    n = slot.n
    m = points_per_dim
    if m ** n > max_points:
        m = int(max_points ** (1.0 / n))
    axes = np.linspace(-1.0, 1.0, m)
    mesh = np.stack(np.meshgrid(*([axes] * n), indexing="ij"), -1).reshape(-1, n)
    return mesh[slot.contains(mesh, tol=1e-12)]


def reference_optimum(instance: GMPInstance, grid_points_per_dim: int = 2001,
                      max_points: int = 250_000) -> float:
    """Optimum of the GMP restricted to nonnegative atoms on a grid.

    An LP over atom weights; an upper bound on the GMP value that converges
    as the grid refines.
    """
    if any(s.n > 2 for s in instance.slots):
        raise ValueError("the grid oracle is limited to n <= 2")
    grids = [candidate_grid(s, grid_points_per_dim, max_points) for s in instance.slots]
    cost = np.concatenate([f(g) for f, g in zip(instance.objective, grids)])
    A_eq, b_eq, A_ub, b_ub = [], [], [], []
    for row in instance.rows:
        vals = np.concatenate([h(g) for h, g in zip(row.h, grids)])
        if row.kind == RowKind.EQ:
            A_eq.append(vals)
            b_eq.append(row.t)
        else:
            A_ub.append(vals)
            b_ub.append(row.t)
    res = linprog(
        cost,
        A_ub=np.array(A_ub) if A_ub else None, b_ub=np.array(b_ub) if b_ub else None,
        A_eq=np.array(A_eq) if A_eq else None, b_eq=np.array(b_eq) if b_eq else None,
        bounds=(0, None), method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status == 2:
        raise ReferenceInfeasible("moment rows are not representable on the grid")
    if res.status != 0:
        raise RuntimeError(f"grid LP failed: {res.message}")
    return float(res.fun)


# -- hierarchy sweeps ---------------------------------------------------------------


@dataclass
class SweepRow:
    ell: int
    primal: float
    dual: float
    primal_residual: float
    dual_residual: float
    time: float
    status: str
    error: str | None = None


@dataclass
class SweepResult:
    rows: list[SweepRow]
    reference: float | None = None

    @property
    def ells(self) -> list[int]:
        return [r.ell for r in self.rows]

    @property
    def primal(self) -> np.ndarray:
        return np.array([r.primal for r in self.rows])

    @property
    def dual(self) -> np.ndarray:
        return np.array([r.dual for r in self.rows])

    @property
    def gaps(self) -> np.ndarray:
        if self.reference is None:
            return np.full(len(self.rows), np.nan)
        return self.reference - self.primal

    def to_csv(self, path_or_file) -> None:
        own = isinstance(path_or_file, (str, os.PathLike))
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["ell", "p_ell", "d_ell", "gap", "time_ms"])
            for r, g in zip(self.rows, self.gaps):
                w.writerow([r.ell, repr(r.primal), repr(r.dual),
                            "" if np.isnan(g) else repr(float(g)), f"{1000 * r.time:.1f}"])
        finally:
            if own:
                fh.close()


def solve_relaxation(instance: GMPInstance, ell: int, settings: SolverSettings | None = None):
    """Assemble and solve the order-``ell`` relaxation; returns (assembly, solution)."""
    ap = assemble_primal(instance, ell)
    return ap, solve(ap.problem, settings or SolverSettings())


def _sweep_row(instance, ell, settings) -> SweepRow:
    t0 = time.perf_counter()
    try:
        _, sol = solve_relaxation(instance, ell, settings)
    except Exception as exc:  # a failed row should not stop the sweep
        return SweepRow(ell, np.nan, np.nan, np.nan, np.nan, time.perf_counter() - t0, "Error", str(exc))
    return SweepRow(ell, sol.primal_objective, sol.dual_objective, sol.primal_residual,
                    sol.dual_residual, time.perf_counter() - t0, sol.status.value)


def gap_sweep(instance: GMPInstance, ell_list: Sequence[int], reference: float | None = None,
              settings: SolverSettings | None = None, workers: int | None = None) -> SweepResult:
    ells = list(ell_list)
    if any(e % 2 for e in ells) or ells != sorted(ells):
        raise ValueError("relaxation orders must be even and ascending")
    rows = parallel_map(lambda e: _sweep_row(instance, e, settings), ells, workers)
    return SweepResult(rows, reference)


# -- sampled Hausdorff estimate --------------------------------------------------------


def sample_unit_anorm(n: int, k: int, seed: int) -> Polynomial:
    """Gaussian coefficients on all monomials of degree <= k, scaled to A-norm 1."""
    if k < 0:
        raise ValueError("k must be >= 0")
    rng = np.random.default_rng(seed)
    basis = monomials_upto(n, k)
    f = Polynomial(n, dict(zip(basis, rng.standard_normal(len(basis)))))
    return f * (1.0 / a_norm(f))


def sample_objectives(instance: GMPInstance, k: int, seed: int) -> list[Polynomial]:
    """One objective per slot with total A-norm 1."""
    fs = [sample_unit_anorm(s.n, k, seed * 7919 + i) for i, s in enumerate(instance.slots)]
    tot = sum(a_norm(f) for f in fs)
    return [f * (1.0 / tot) for f in fs]


@dataclass
class HausdorffRow:
    ell: int
    estimate: float
    samples: int
    grid: int
    gaps: list = field(default_factory=list)


def empirical_hausdorff(instance: GMPInstance, k: int, ell: int, samples: int = 50,
                        grid: int = 2001, seed: int = 0, settings: SolverSettings | None = None,
                        workers: int | None = None, details: bool = False):
    """max over sampled unit-A-norm objectives of max(0, reference - p_ell).

    A sampled lower estimate of the Hausdorff distance between the degree-k
    truncations of the true and relaxed moment sets, biased upward by the
    grid resolution of the reference.
    """
    if ell < k:
        raise ValueError(f"relaxation order {ell} is below the objective degree {k}")
    if samples < 1:
        raise ValueError("samples must be >= 1")

    def one(s):
        inst = instance.with_objective(sample_objectives(instance, k, seed + s))
        ref = reference_optimum(inst, grid)
        _, sol = solve_relaxation(inst, ell, settings)
        return max(0.0, ref - sol.primal_objective)

    gaps = parallel_map(one, list(range(samples)), workers)
    est = float(max(gaps))
    return HausdorffRow(ell, est, samples, grid, gaps) if details else est


def hausdorff_sweep(instance: GMPInstance, k: int, ell_list: Sequence[int], samples: int = 50,
                    grid: int = 2001, seed: int = 0, settings: SolverSettings | None = None,
                    workers: int | None = None) -> list[HausdorffRow]:
    return [empirical_hausdorff(instance, k, ell, samples, grid, seed, settings, workers, details=True)
            for ell in ell_list]


def write_hausdorff_csv(rows: Sequence[HausdorffRow], path_or_file) -> None:
    own = isinstance(path_or_file, (str, os.PathLike))
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ell", "estimate", "samples", "grid"])
        for r in rows:
            w.writerow([r.ell, repr(r.estimate), r.samples, r.grid])
    finally:
        if own:
            fh.close()


# -- optimizer convergence ----------------------------------------------------------


@dataclass
class ConvergenceRow:
    ell: int
    distance: float
    objective: float
    status: str


def optimizer_convergence(instance: GMPInstance, ell_list: Sequence[int], k: int,
                          reference: Sequence[PseudoMoments] | None = None,
                          settings: SolverSettings | None = None,
                          workers: int | None = None) -> list[ConvergenceRow]:
    """Weighted-norm distance of the degree-k truncation of each relaxation's
    optimizer to that of the largest order (or to ``reference`` when known).

    Multiple slots are combined by taking the max over slots.
    """
    ells = list(ell_list)
    if not ells:
        return []
    if k > min(ells):
        raise ValueError("k exceeds the smallest relaxation order")
    sols = parallel_map(lambda e: solve_relaxation(instance, e, settings), ells, workers)
    trunc = [[lam.truncate(k) for lam in ap.moments(sol)] for ap, sol in sols]
    target = [lam.truncate(k) for lam in reference] if reference is not None else trunc[-1]
    rows = []
    for ell, lams, (_, sol) in zip(ells, trunc, sols):
        dist = max(weighted_functional_norm(a - b) for a, b in zip(lams, target))
        rows.append(ConvergenceRow(ell, float(dist), float(sol.primal_objective), sol.status.value))
    return rows
