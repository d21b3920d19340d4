"""First-order conic solver for zero / nonnegative / PSD cone products.

Standard form::

    minimize    c^T x
    subject to  A x + s = b,   s in K

    maximize    -b^T y
    subject to  A^T y + c = 0, y in K*

K is an ordered product of ``Zero``, ``NonNeg`` and ``PSD`` blocks.  A PSD
block of side ``s`` occupies s(s+1)/2 coordinates holding the lower triangle
of a symmetric matrix in ``np.tril_indices`` order, off-diagonal entries
multiplied by sqrt(2) so that the Euclidean inner product of two vectors equals
the trace inner product of the matrices.

The algorithm is ADMM applied to the homogeneous self-dual embedding, with
over-relaxation, Ruiz equilibration, a cached dense Cholesky factor of
I + A^T A, and a few rescalings of b that balance the primal and dual iterate
norms (the factor is cached, so rebalancing costs one extra solve).  The iteration is written as a fixed-point map on z = u - v, from
which u = Pi(z) and v = u - z are recovered, and is sped up with safeguarded
type-II Anderson acceleration.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

log = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class Zero:
    dim: int


@dataclass(frozen=True)
class NonNeg:
    dim: int


@dataclass(frozen=True)
class PSD:
    side: int

    @property
    def dim(self) -> int:
        return self.side * (self.side + 1) // 2


Cone = Zero | NonNeg | PSD


class Status(str, Enum):
    OPTIMAL = "Optimal"
    PRIMAL_INFEASIBLE = "PrimalInfeasible"
    DUAL_INFEASIBLE = "DualInfeasible"
    MAX_ITER = "MaxIter"


# -- symmetric-matrix vectorization -------------------------------------------------


def side_from_dim(m: int) -> int:
    s = int(round((math.sqrt(8 * m + 1) - 1) / 2))
    if s * (s + 1) // 2 != m:
        raise ValueError(f"{m} is not a triangular number")
    return s


def svec(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    i, j = np.tril_indices(X.shape[0])
    return np.where(i == j, 1.0, SQRT2) * X[i, j]


def smat(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    s = side_from_dim(v.size)
    i, j = np.tril_indices(s)
    vals = np.where(i == j, 1.0, 1.0 / SQRT2) * v
    X = np.zeros((s, s))
    X[i, j] = vals
    X[j, i] = vals
    return X


def svec_rows(s: int) -> tuple[np.ndarray, np.ndarray]:
    """Flat row-major indices of the lower triangle and their svec weights."""
    i, j = np.tril_indices(s)
    return i * s + j, np.where(i == j, 1.0, SQRT2)


def psd_project(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of an svec-packed symmetric matrix onto the PSD cone."""
    w, V = np.linalg.eigh(smat(v))
    return svec((V * np.maximum(w, 0.0)) @ V.T)


# -- problem and solution types -----------------------------------------------------


@dataclass(frozen=True)
class ConicProblem:
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    cones: tuple

    def __post_init__(self):
        A = sp.csr_matrix(self.A, dtype=float)
        c = np.asarray(self.c, dtype=float).ravel()
        b = np.asarray(self.b, dtype=float).ravel()
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "cones", tuple(self.cones))
        m = sum(k.dim for k in self.cones)
        if A.shape != (m, c.size) or b.size != m:
            raise ValueError(
                f"dimension mismatch: A is {A.shape}, cones give {m} rows, "
                f"len(b) = {b.size}, len(c) = {c.size}"
            )

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def dump(self, path) -> None:
        """Write the sparse triplet text format.

        Line 1: ``m n nnz``; line 2: cone spec tokens ``Z k``, ``L k``, ``S side``;
        then ``n`` lines of c, ``m`` lines of b, and ``nnz`` lines ``i j value``
        (0-based).
        """
        A = self.A.tocoo()
        spec = []
        for k in self.cones:
            tag = {Zero: "Z", NonNeg: "L", PSD: "S"}[type(k)]
            spec.append(f"{tag} {k.side if isinstance(k, PSD) else k.dim}")
        with open(path, "w") as fh:
            fh.write(f"{self.m} {self.n} {A.nnz}\n")
            fh.write(" ".join(spec) + "\n")
            fh.writelines(f"{float(v)!r}\n" for v in self.c)
            fh.writelines(f"{float(v)!r}\n" for v in self.b)
            fh.writelines(f"{i} {j} {float(v)!r}\n" for i, j, v in zip(A.row, A.col, A.data))

    @classmethod
    def load(cls, path) -> "ConicProblem":
        with open(path) as fh:
            m, n, nnz = (int(t) for t in fh.readline().split())
            toks = fh.readline().split()
            cones = []
            for tag, val in zip(toks[::2], toks[1::2]):
                cones.append({"Z": Zero, "L": NonNeg, "S": PSD}[tag](int(val)))
            c = np.array([float(fh.readline()) for _ in range(n)])
            b = np.array([float(fh.readline()) for _ in range(m)])
            trip = np.array([fh.readline().split() for _ in range(nnz)], dtype=float).reshape(-1, 3)
        A = sp.csr_matrix((trip[:, 2], (trip[:, 0].astype(int), trip[:, 1].astype(int))), shape=(m, n))
        return cls(c, A, b, tuple(cones))


@dataclass
class SolverSettings:
    eps: float = 1e-8
    max_iter: int = 200000
    scale: bool = True
    alpha: float = 1.5
    check_every: int = 10
    eps_infeas: float = 1e-9
    time_limit: float | None = None
    verbose: bool = False
    anderson: int = 0  # Anderson memory; 0 disables acceleration
    anderson_reg: float = 1e-10
    presolve: bool = False  # eliminate the Zero block through a null-space basis
    presolve_tol: float = 1e-9
    adaptive: bool = True  # rebalance the primal/dual scaling of b
    adapt_ratio: float = 5.0
    adapt_interval: int = 100
    adapt_max: int = 40


@dataclass
class ConicSolution:
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    status: Status
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    primal_objective: float
    dual_objective: float
    solve_time: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def residuals(self) -> dict:
        return {"primal": self.primal_residual, "dual": self.dual_residual, "gap": self.gap}


# -- solver internals ---------------------------------------------------------------


class _ConeOps:
    """Vectorized projections for a fixed cone layout."""

    def __init__(self, cones):
        self.zero, self.nonneg = [], []
        psd_groups: dict[int, list[int]] = {}
        self.blocks = []
        off = 0
        for k in cones:
            sl = slice(off, off + k.dim)
            self.blocks.append((k, sl))
            if isinstance(k, Zero):
                self.zero.append(np.arange(off, off + k.dim))
            elif isinstance(k, NonNeg):
                self.nonneg.append(np.arange(off, off + k.dim))
            else:
                psd_groups.setdefault(k.side, []).append(off)
            off += k.dim
        self.m = off
        self.zero = np.concatenate(self.zero) if self.zero else np.zeros(0, int)
        self.nonneg = np.concatenate(self.nonneg) if self.nonneg else np.zeros(0, int)
        # for each PSD side: gather indices (nblocks, dim) plus tril maps
        self.psd = []
        for s, offs in sorted(psd_groups.items()):
            i, j = np.tril_indices(s)
            dim = s * (s + 1) // 2
            idx = np.array(offs)[:, None] + np.arange(dim)[None, :]
            w = np.where(i == j, 1.0, SQRT2)
            self.psd.append((s, idx, i, j, w))

    def project_dual(self, z: np.ndarray) -> np.ndarray:
        """Projection onto K* (zero blocks are free)."""
        out = z.copy()
        out[self.nonneg] = np.maximum(z[self.nonneg], 0.0)
        for s, idx, i, j, w in self.psd:
            out[idx] = self._proj_psd(z[idx], s, i, j, w)
        return out

    def project_primal(self, z: np.ndarray) -> np.ndarray:
        """Projection onto K (zero blocks map to 0)."""
        out = self.project_dual(z)
        out[self.zero] = 0.0
        return out

    @staticmethod
    def _proj_psd(vecs, s, i, j, w):
        X = np.zeros((vecs.shape[0], s, s))
        vals = vecs / w
        X[:, i, j] = vals
        X[:, j, i] = vals
        ev, V = np.linalg.eigh(X)
        P = (V * np.maximum(ev, 0.0)[:, None, :]) @ V.transpose(0, 2, 1)
        return P[:, i, j] * w

    def distance_to_dual(self, z: np.ndarray) -> float:
        return float(np.max(np.abs(z - self.project_dual(z)), initial=0.0))

    def block_average(self, d: np.ndarray) -> np.ndarray:
        """Replace row scalings by their block mean inside each PSD block."""
        d = d.copy()
        for _, idx, *_ in self.psd:
            d[idx] = d[idx].mean(axis=1, keepdims=True)
        return d


def _ruiz(A: sp.csr_matrix, ops: _ConeOps, iters: int = 25):
    m, n = A.shape
    D = np.ones(m)
    E = np.ones(n)
    Aw = A.copy()
    for _ in range(iters):
        absA = abs(Aw)
        rmax = np.asarray(absA.max(axis=1).todense()).ravel()
        cmax = np.asarray(absA.max(axis=0).todense()).ravel()
        dr = 1.0 / np.sqrt(np.where(rmax > 0, rmax, 1.0))
        dc = 1.0 / np.sqrt(np.where(cmax > 0, cmax, 1.0))
        dr = ops.block_average(dr)
        D = np.clip(D * dr, 1e-4, 1e4)
        E = np.clip(E * dc, 1e-4, 1e4)
        Aw = sp.diags(D) @ A @ sp.diags(E)
    return sp.csr_matrix(Aw), D, E


def _residuals(p: ConicProblem, x, y, s):
    pres = np.max(np.abs(p.A @ x + s - p.b), initial=0.0) / (1.0 + np.max(np.abs(p.b), initial=0.0))
    dres = np.max(np.abs(p.A.T @ y + p.c), initial=0.0) / (1.0 + np.max(np.abs(p.c), initial=0.0))
    pobj = float(p.c @ x)
    dobj = float(-p.b @ y)
    gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
    return float(pres), float(dres), float(gap), pobj, dobj


def solve(p: ConicProblem, settings: SolverSettings | None = None, **overrides) -> ConicSolution:
    """Solve ``p`` to relative accuracy ``settings.eps``.

    Residuals are measured on the unscaled data with infinity norms:
    ``|Ax + s - b| / (1 + |b|)``, ``|A^T y + c| / (1 + |c|)`` and
    ``|c^T x + b^T y| / (1 + |c^T x| + |b^T y|)``.
    """
    settings = replace(settings or SolverSettings(), **overrides)
    if settings.presolve and p.cones and isinstance(p.cones[0], Zero) and p.cones[0].dim:
        return _solve_eliminated(p, settings)
    t0 = time.perf_counter()
    ops = _ConeOps(p.cones)
    m, n = p.m, p.n

    if settings.scale:
        A, D, E = _ruiz(p.A, ops)
    else:
        A, D, E = p.A, np.ones(m), np.ones(n)
    b = D * p.b
    c = E * p.c
    nb = np.linalg.norm(b)
    nc = np.linalg.norm(c)
    sb = 1.0 / nb if settings.scale and nb > 1e-12 else 1.0
    sc = 1.0 / nc if settings.scale and nc > 1e-12 else 1.0
    b = b * sb
    c = c * sc
    AT = sp.csr_matrix(A.T)

    K = np.eye(n) + (AT @ A).toarray() if n else np.zeros((0, 0))
    chol = sla.cho_factor(K, lower=True, check_finite=False)

    def solve_M(a, bb):
        x = sla.cho_solve(chol, a - AT @ bb, check_finite=False)
        return x, bb + A @ x

    gx, gy = solve_M(c, b)
    hg = 1.0 + c @ gx + b @ gy

    alpha = settings.alpha
    nz = n + m + 1

    def project(z):
        u = z.copy()
        u[n:n + m] = ops.project_dual(z[n:n + m])
        u[-1] = max(z[-1], 0.0)
        return u

    def T(z):
        u = project(z)
        w = 2.0 * u - z
        mx, my = solve_M(w[:n], w[n:n + m])
        ut = (w[-1] + c @ mx + b @ my) / hg
        ut_vec = np.concatenate([mx - ut * gx, my - ut * gy, [ut]])
        return z + alpha * (ut_vec - u)

    def split(z):
        u = project(z)
        v = u - z
        return u[:n], u[n:n + m], u[-1], v[n:n + m], v[-1]

    def unscale(xs, ys, ss):
        return E * xs / sb, D * ys / sc, ss / D / sb

    z = np.zeros(nz)
    z[-1] = 1.0  # tau = 1, kappa = 0
    Tz = T(z)
    g = Tz - z
    gnorm = np.linalg.norm(g)
    mem = settings.anderson
    S_hist: list = []
    Y_hist: list = []
    n_accept = n_reject = 0
    n_adapt = 0
    interval = settings.adapt_interval
    next_adapt = interval

    status = Status.MAX_ITER
    it = 0
    best = None
    for it in range(1, settings.max_iter + 1):
        z_plain = Tz
        z_next = z_plain
        if mem and S_hist:
            Y = np.column_stack(Y_hist)
            S = np.column_stack(S_hist)
            G = Y.T @ Y
            G[np.diag_indices_from(G)] += settings.anderson_reg * (1.0 + np.trace(G))
            try:
                gamma = np.linalg.solve(G, Y.T @ g)
                z_aa = z + g - (S + Y) @ gamma
                if np.all(np.isfinite(z_aa)):
                    z_next = z_aa
            except np.linalg.LinAlgError:
                pass
        T_next = T(z_next)
        g_next = T_next - z_next
        gn_next = np.linalg.norm(g_next)
        if z_next is not z_plain:
            if gn_next <= gnorm:
                n_accept += 1
            else:
                n_reject += 1
                S_hist.clear()
                Y_hist.clear()
                z_next = z_plain
                T_next = T(z_next)
                g_next = T_next - z_next
                gn_next = np.linalg.norm(g_next)
        if mem:
            S_hist.append(z_next - z)
            Y_hist.append(g_next - g)
            if len(S_hist) > mem:
                S_hist.pop(0)
                Y_hist.pop(0)
        z, Tz, g, gnorm = z_next, T_next, g_next, gn_next
        x, y, tau, s, kappa = split(z)

        if it % settings.check_every and it != settings.max_iter:
            continue
        if settings.time_limit and time.perf_counter() - t0 > settings.time_limit:
            break
        if tau > 1e-12:
            xo, yo, so = unscale(x / tau, y / tau, s / tau)
            pres, dres, gap, pobj, dobj = _residuals(p, xo, yo, so)
            best = (xo, yo, so, pres, dres, gap, pobj, dobj)
            if settings.verbose and it % (settings.check_every * 100) == 0:
                log.info("it %d pres %.2e dres %.2e gap %.2e obj %.8g", it, pres, dres, gap, pobj)
            if max(pres, dres, gap) <= settings.eps:
                status = Status.OPTIMAL
                break
            ps_norm = math.hypot(np.linalg.norm(x), np.linalg.norm(s))
            y_norm = np.linalg.norm(y)
            if settings.adaptive and it >= next_adapt and n_adapt < settings.adapt_max \
                    and ps_norm > 0 and y_norm > 0:
                # balance primal and dual iterate magnitudes in the scaled space
                ratio = y_norm / ps_norm
                if ratio > settings.adapt_ratio or ratio < 1.0 / settings.adapt_ratio:
                    # b -> f b maps (x, s, kappa) -> f (x, s, kappa), y and tau fixed
                    f = float(np.clip(ratio, 1e-2, 1e2))
                    u = project(z)
                    v = u - z
                    u[:n] *= f
                    v[n:] *= f
                    z = u - v
                    sb *= f
                    b = b * f
                    gx, gy = solve_M(c, b)
                    hg = 1.0 + c @ gx + b @ gy
                    Tz = T(z)
                    g = Tz - z
                    gnorm = np.linalg.norm(g)
                    S_hist.clear()
                    Y_hist.clear()
                    n_adapt += 1
                    interval = int(interval * 1.5)
                next_adapt = it + interval
        # infeasibility certificates on the unscaled rays
        xo, yo, so = unscale(x, y, s)
        bty = p.b @ yo
        if bty < 0:
            ray = yo / -bty
            if np.max(np.abs(p.A.T @ ray), initial=0.0) <= settings.eps_infeas * (1 + np.max(np.abs(p.c), initial=0.0)) \
                    and ops.distance_to_dual(ray) <= settings.eps_infeas:
                status = Status.PRIMAL_INFEASIBLE
                best = (np.full(n, np.nan), ray, np.full(m, np.nan), np.nan, np.nan, np.nan, np.inf, np.inf)
                break
        ctx = p.c @ xo
        if ctx < 0:
            ray_x = xo / -ctx
            ray_s = so / -ctx
            if np.max(np.abs(p.A @ ray_x + ray_s), initial=0.0) <= settings.eps_infeas * (1 + np.max(np.abs(p.b), initial=0.0)):
                status = Status.DUAL_INFEASIBLE
                best = (ray_x, np.full(m, np.nan), ray_s, np.nan, np.nan, np.nan, -np.inf, -np.inf)
                break

    if best is None:
        xo, yo, so = unscale(x, y, s)
        best = (xo, yo, so, np.inf, np.inf, np.inf, np.nan, np.nan)
    xo, yo, so, pres, dres, gap, pobj, dobj = best
    return ConicSolution(
        x=xo, y=yo, s=so, status=status,
        primal_residual=pres, dual_residual=dres, gap=gap,
        iterations=it, primal_objective=pobj, dual_objective=dobj,
        solve_time=time.perf_counter() - t0,
        info={"tau": tau, "kappa": kappa, "anderson_accepted": n_accept, "anderson_rejected": n_reject,
              "adaptations": n_adapt, "b_scale": sb,
              "xnorm": float(np.linalg.norm(x)), "ynorm": float(np.linalg.norm(y)), "snorm": float(np.linalg.norm(s))},
    )


def _solve_eliminated(p: ConicProblem, settings: SolverSettings) -> ConicSolution:
    """Solve with the leading Zero block removed.

    Writes x = x0 + N z with N an orthonormal null-space basis of the equality
    rows, solves the remaining cone program in z, and recovers the equality
    multipliers by least squares.  Redundant equality rows are harmless here,
    whereas in the full splitting they leave the dual optimal set unbounded.
    """
    t0 = time.perf_counter()
    k = p.cones[0].dim
    Aeq = p.A[:k].toarray()
    beq = p.b[:k]
    U, sv, Vt = np.linalg.svd(Aeq, full_matrices=True)
    r = int(np.sum(sv > settings.presolve_tol * sv[0])) if sv.size and sv[0] > 0 else 0
    x0 = Vt[:r].T @ ((U[:, :r].T @ beq) / sv[:r])
    miss = Aeq @ x0 - beq
    scale_b = 1.0 + np.max(np.abs(p.b), initial=0.0)
    if np.max(np.abs(miss), initial=0.0) > settings.eps * scale_b:
        # inconsistent equalities: y = miss certifies A^T y = 0, b^T y < 0
        ray = np.zeros(p.m)
        ray[:k] = miss / -(beq @ miss)
        return ConicSolution(
            x=np.full(p.n, np.nan), y=ray, s=np.full(p.m, np.nan),
            status=Status.PRIMAL_INFEASIBLE, primal_residual=np.nan, dual_residual=np.nan,
            gap=np.nan, iterations=0, primal_objective=np.inf, dual_objective=np.inf,
            solve_time=time.perf_counter() - t0, info={"presolve_rank": r},
        )
    N = Vt[r:].T
    rest = p.A[k:]
    # residuals grow by up to sqrt(dim) when mapped back through N
    sub_settings = replace(settings, presolve=False, eps=settings.eps / math.sqrt(max(Vt.shape[0] - r, 1)))
    if N.shape[1] == 0:
        x = x0
        sub = None
        y_rest = np.zeros(p.m - k)
        status = Status.OPTIMAL if _ConeOps(p.cones[1:]).distance_to_dual(p.b[k:] - rest @ x) <= settings.eps \
            else Status.PRIMAL_INFEASIBLE
        iters = 0
    else:
        red = ConicProblem(N.T @ p.c, sp.csr_matrix(rest @ N), p.b[k:] - rest @ x0, p.cones[1:])
        sub = solve(red, sub_settings)
        status, iters = sub.status, sub.iterations
        if status == Status.DUAL_INFEASIBLE:
            x = N @ sub.x
        else:
            x = x0 + N @ sub.x if status != Status.PRIMAL_INFEASIBLE else np.full(p.n, np.nan)
        y_rest = sub.y
    if status == Status.PRIMAL_INFEASIBLE and sub is not None:
        y = np.concatenate([np.zeros(k), y_rest])
        return ConicSolution(
            x=x, y=y, s=np.full(p.m, np.nan), status=status, primal_residual=np.nan,
            dual_residual=np.nan, gap=np.nan, iterations=iters, primal_objective=np.inf,
            dual_objective=np.inf, solve_time=time.perf_counter() - t0,
            info={"presolve_rank": r, **sub.info},
        )
    if status == Status.DUAL_INFEASIBLE:
        s_full = np.concatenate([np.zeros(k), sub.s])
        return ConicSolution(
            x=x, y=np.full(p.m, np.nan), s=s_full, status=status, primal_residual=np.nan,
            dual_residual=np.nan, gap=np.nan, iterations=iters, primal_objective=-np.inf,
            dual_objective=-np.inf, solve_time=time.perf_counter() - t0,
            info={"presolve_rank": r, **sub.info},
        )
    # equality multipliers: A_eq^T y_eq = -c - A_rest^T y_rest
    rhs = -p.c - rest.T @ y_rest
    y_eq = U[:, :r] @ ((Vt[:r] @ rhs) / sv[:r])
    y = np.concatenate([y_eq, y_rest])
    s_rest = sub.s if sub is not None else p.b[k:] - rest @ x
    s_full = np.concatenate([np.zeros(k), s_rest])
    pres, dres, gap, pobj, dobj = _residuals(p, x, y, s_full)
    if status == Status.OPTIMAL and max(pres, dres, gap) > settings.eps:
        status = Status.MAX_ITER
    return ConicSolution(
        x=x, y=y, s=s_full, status=status, primal_residual=pres, dual_residual=dres, gap=gap,
        iterations=iters, primal_objective=pobj, dual_objective=dobj,
        solve_time=time.perf_counter() - t0,
        info={"presolve_rank": r, **(sub.info if sub is not None else {})},
    )
