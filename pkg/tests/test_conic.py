import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from momentgmp.conic import (
    PSD,
    ConicProblem,
    NonNeg,
    SolverSettings,
    Status,
    Zero,
    psd_project,
    smat,
    solve,
    svec,
)


def random_sdp(rng, side, m):
    """SDP with a strictly complementary optimal pair built in.

    min <C, X> s.t. <A_i, X> = b_i, X psd, with X* and S* = C - sum y_i A_i
    sharing eigenvectors on complementary supports.  The first constraint
    fixes the trace so the optimal set is bounded.
    """
    Q, _ = np.linalg.qr(rng.standard_normal((side, side)))
    r = rng.integers(1, side)
    lam = np.concatenate([rng.uniform(0.5, 2.0, r), np.zeros(side - r)])
    sig = np.concatenate([np.zeros(r), rng.uniform(0.5, 2.0, side - r)])
    X = Q @ np.diag(lam) @ Q.T
    S = Q @ np.diag(sig) @ Q.T
    As = [np.eye(side)] + [(lambda B: B + B.T)(rng.standard_normal((side, side))) for _ in range(m - 1)]
    y = rng.standard_normal(m)
    C = S + sum(yi * Ai for yi, Ai in zip(y, As))
    Aeq = np.array([svec(Ai) for Ai in As])
    dim = side * (side + 1) // 2
    A = sp.vstack([sp.csr_matrix(Aeq), -sp.eye(dim)]).tocsr()
    b = np.concatenate([Aeq @ svec(X), np.zeros(dim)])
    return ConicProblem(svec(C), A, b, (Zero(m), PSD(side))), float(np.sum(C * X))


class TestPSDProjection:
    def test_examples(self):
        I = np.eye(3)
        assert np.allclose(smat(psd_project(svec(I))), I)
        assert np.allclose(smat(psd_project(svec(-I))), 0)
        assert np.allclose(smat(psd_project(svec(np.diag([3.0, -2.0])))), np.diag([3.0, 0.0]))

    def test_svec_isometry(self, rng):
        A = rng.standard_normal((4, 4))
        A = A + A.T
        B = rng.standard_normal((4, 4))
        B = B + B.T
        assert svec(A) @ svec(B) == pytest.approx(np.sum(A * B))
        assert np.allclose(smat(svec(A)), A)

    @given(st.integers(0, 2**31), st.integers(1, 8))
    def test_idempotent_and_nonexpansive(self, seed, side):
        rng = np.random.default_rng(seed)
        dim = side * (side + 1) // 2
        u, v = rng.standard_normal(dim) * 3, rng.standard_normal(dim) * 3
        pu = psd_project(u)
        assert np.max(np.abs(psd_project(pu) - pu)) <= 1e-12 * max(1.0, np.abs(pu).max())
        assert np.linalg.norm(pu - psd_project(v)) <= np.linalg.norm(u - v) + 1e-12
        assert np.linalg.eigvalsh(smat(pu)).min() >= -1e-12


class TestSolve:
    def test_nonneg_lp(self):
        p = ConicProblem(np.array([1.0]), sp.csr_matrix([[-1.0]]), np.zeros(1), (NonNeg(1),))
        sol = solve(p)
        assert sol.status == Status.OPTIMAL
        assert sol.x[0] == pytest.approx(0.0, abs=1e-7)

    def test_trace_with_pinned_corner(self):
        # X = [[x0, x1], [x1, x2]], min x0 + x2, X11 = 1
        A = sp.vstack([sp.csr_matrix([[1.0, 0, 0]]), -sp.diags([1.0, np.sqrt(2), 1.0])]).tocsr()
        p = ConicProblem(np.array([1.0, 0, 1.0]), A, np.array([1.0, 0, 0, 0]), (Zero(1), PSD(2)))
        sol = solve(p)
        assert sol.status == Status.OPTIMAL
        assert sol.primal_objective == pytest.approx(1.0, abs=1e-6)
        assert np.allclose(sol.x, [1.0, 0.0, 0.0], atol=1e-5)

    def test_optimal_residuals_within_tolerance(self, rng):
        p, _ = random_sdp(rng, 4, 3)
        sol = solve(p, eps=1e-7)
        assert sol.status == Status.OPTIMAL
        assert max(sol.residuals.values()) <= 1e-7

    def test_primal_infeasible(self):
        # x = 1 and x = -1
        A = sp.csr_matrix([[1.0], [1.0]])
        p = ConicProblem(np.zeros(1), A, np.array([1.0, -1.0]), (Zero(2),))
        assert solve(p, max_iter=20000).status == Status.PRIMAL_INFEASIBLE

    def test_dual_infeasible(self):
        # min -x with x >= 0
        p = ConicProblem(np.array([-1.0]), sp.csr_matrix([[-1.0]]), np.zeros(1), (NonNeg(1),))
        assert solve(p, max_iter=20000).status == Status.DUAL_INFEASIBLE

    def test_max_iter(self, rng):
        p, _ = random_sdp(rng, 5, 4)
        sol = solve(p, max_iter=3)
        assert sol.status == Status.MAX_ITER
        assert sol.iterations == 3

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            ConicProblem(np.zeros(2), sp.csr_matrix(np.ones((2, 2))), np.zeros(3), (Zero(3),))
        with pytest.raises(ValueError):
            ConicProblem(np.zeros(2), sp.csr_matrix(np.ones((3, 2))), np.zeros(3), (PSD(3),))

    def test_homogeneity(self, rng):
        p, _ = random_sdp(rng, 3, 2)
        base = solve(p, eps=1e-9)
        scaled = solve(ConicProblem(3 * p.c, p.A, 3 * p.b, p.cones), eps=1e-9)
        assert scaled.status == base.status == Status.OPTIMAL
        assert scaled.primal_objective == pytest.approx(9 * base.primal_objective, rel=1e-6, abs=1e-6)

    @pytest.mark.parametrize("scale", [True, False])
    def test_random_sdps_small(self, scale):
        rng = np.random.default_rng(7)
        for _ in range(5):
            side = int(rng.integers(2, 5))
            p, opt = random_sdp(rng, side, int(rng.integers(1, side * (side + 1) // 2)))
            sol = solve(p, eps=1e-9, scale=scale)
            assert sol.status == Status.OPTIMAL
            assert abs(sol.primal_objective - opt) <= 1e-6 * max(1.0, abs(opt))

    @pytest.mark.slow
    def test_hundred_random_sdps(self):
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(100):
            side = int(rng.integers(2, 7))
            p, opt = random_sdp(rng, side, int(rng.integers(1, side * (side + 1) // 2)))
            sol = solve(p, eps=1e-9, max_iter=50000)
            assert max(sol.residuals.values()) <= 1e-6
            worst = max(worst, abs(sol.primal_objective - opt) / max(1.0, abs(opt)))
        assert worst <= 1e-6

    @pytest.mark.parametrize("kw", [{"anderson": 10}, {"presolve": True}, {"adaptive": False}])
    def test_solver_options_agree(self, rng, kw):
        p, opt = random_sdp(rng, 4, 5)
        sol = solve(p, eps=1e-9, **kw)
        assert sol.status == Status.OPTIMAL
        assert sol.primal_objective == pytest.approx(opt, rel=1e-6, abs=1e-6)
        assert max(sol.residuals.values()) <= 1e-9

    def test_presolve_detects_inconsistent_equalities(self):
        A = sp.csr_matrix([[1.0], [1.0]])
        p = ConicProblem(np.zeros(1), A, np.array([1.0, -1.0]), (Zero(2),))
        sol = solve(p, presolve=True)
        assert sol.status == Status.PRIMAL_INFEASIBLE
        assert np.allclose(p.A.T @ sol.y, 0) and p.b @ sol.y < 0

    def test_settings_not_mutated(self):
        st_ = SolverSettings()
        p = ConicProblem(np.array([1.0]), sp.csr_matrix([[-1.0]]), np.zeros(1), (NonNeg(1),))
        solve(p, st_, eps=1e-3)
        assert st_.eps == 1e-8

    def test_deterministic(self, rng):
        p, _ = random_sdp(rng, 4, 3)
        a, b = solve(p), solve(p)
        assert np.array_equal(a.x, b.x) and a.iterations == b.iterations


def test_dump_load_round_trip(tmp_path, rng):
    p, _ = random_sdp(rng, 3, 2)
    path = tmp_path / "p.txt"
    p.dump(path)
    q = ConicProblem.load(path)
    assert q.cones == p.cones
    assert np.allclose(q.c, p.c) and np.allclose(q.b, p.b)
    assert abs(q.A - p.A).max() < 1e-15
    header = path.read_text().splitlines()[:2]
    assert header[0].split() == [str(p.m), str(p.n), str(p.A.nnz)]
    assert header[1].split() == ["Z", "2", "S", "3"]
