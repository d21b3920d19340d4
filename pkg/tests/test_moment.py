from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from momentgmp.extract import AtomSet, atoms_to_moments, numeric_rank
from momentgmp.moment import (
    apolar_functional,
    catalecticant,
    kernel_basis,
    localizing_matrix,
    moment_matrix,
)
from momentgmp.poly import (
    Polynomial,
    PseudoMoments,
    dehomogenize_rescale,
    load_polynomial,
    monomial_vector,
    monomials_upto,
    power_of_affine,
)

x = Polynomial.variable(1, 0)
DATA = Path(__file__).parent / "data"


def printed_catalecticant():
    """Printed matrix permuted into graded-lex order (1, x1, x2, x3, x1^2, ...)."""
    with open(DATA / "example2_catalecticant.csv") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    labels = lines[0].strip().split(",")
    H = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])

    def parse(lbl):
        e = [0, 0, 0]
        for part in lbl.replace("x_", " ").split():
            if "^" in part:
                var, p = part.split("^")
                e[int(var) - 1] += int(p)
            else:
                e[int(part) - 1] += 1
        return tuple(e)

    exps = [parse(lbl) if lbl != "1" else (0, 0, 0) for lbl in labels]
    perm = [exps.index(a) for a in monomials_upto(3, 2)]
    return H[np.ix_(perm, perm)]


@st.composite
def atom_sets(draw, n, max_atoms=4, signed=False):
    r = draw(st.integers(1, max_atoms))
    pts = []
    for _ in range(r):
        v = np.array(draw(st.lists(st.floats(-1, 1), min_size=n, max_size=n)))
        nrm = np.linalg.norm(v)
        pts.append(v / nrm if nrm > 1 else v)
    lo = -10.0 if signed else 0.1
    w = draw(st.lists(st.floats(lo, 10.0), min_size=r, max_size=r))
    return AtomSet(w, np.array(pts))


class TestMomentMatrix:
    def test_dirac_origin(self):
        M = moment_matrix(PseudoMoments.dirac([0.0, 0.0], 2), 1).entries
        expected = np.zeros((3, 3))
        expected[0, 0] = 1
        assert np.array_equal(M, expected)

    def test_dirac_is_outer_product(self):
        xi = np.array([0.3, -0.4])
        M = moment_matrix(PseudoMoments.dirac(xi, 6), 3).entries
        v = monomial_vector(xi, 3)[0]
        assert np.allclose(M, np.outer(v, v))

    def test_rank_bounded_by_atoms(self):
        a = AtomSet([1.0, 2.0, 0.5], [[0.1, 0.2], [-0.5, 0.3], [0.7, -0.1]])
        M = moment_matrix(atoms_to_moments(a, 6), 3).entries
        assert numeric_rank(M, 1e-9) == 3

    def test_order_too_small(self):
        with pytest.raises(ValueError):
            moment_matrix(PseudoMoments.dirac([0.0], 3), 2)

    def test_indexing(self):
        M = moment_matrix(PseudoMoments.dirac([2.0, 3.0], 4), 2)
        assert M[(1, 0), (0, 1)] == 6.0


class TestLocalizing:
    def test_constant_generator_is_moment_matrix(self):
        lam = atoms_to_moments(AtomSet([1.0, 2.0], [[0.2], [-0.6]]), 6)
        L = localizing_matrix(lam, Polynomial.constant(1), 6)
        assert np.allclose(L.entries, moment_matrix(lam, 3).entries)

    def test_inside_point_scales_outer_product(self):
        lam = PseudoMoments.dirac([0.5], 4)
        g = 1 - x ** 2
        L = localizing_matrix(lam, g, 4)
        v = monomial_vector(np.array([0.5]), 1)[0]
        assert L.size == 2
        assert np.allclose(L.entries, 0.75 * np.outer(v, v))
        assert L.generator == g

    def test_outside_point_not_psd(self):
        L = localizing_matrix(PseudoMoments.dirac([2.0], 4), 1 - x ** 2, 4)
        assert np.linalg.eigvalsh(L.entries).min() < 0

    @given(atom_sets(n=2))
    def test_positive_atoms_give_psd(self, a):
        lam = atoms_to_moments(a, 6)
        scale = max(1.0, a.total_variation)
        assert np.linalg.eigvalsh(moment_matrix(lam, 3).entries).min() >= -1e-10 * scale
        L = localizing_matrix(lam, Polynomial.ball(2), 6).entries
        assert np.linalg.eigvalsh(L).min() >= -1e-10 * scale


class TestCatalecticant:
    def test_constant_tensor(self):
        H = catalecticant(Polynomial.constant(2), 1, 1, 4).entries
        expected = np.zeros((3, 3))
        expected[0, 0] = 1
        assert np.allclose(H, expected)

    def test_single_power_is_rank_one(self):
        F = 3 * (1 + 0.5 * x) ** 4
        H = catalecticant(F, 2, 2, 4).entries
        v = monomial_vector(np.array([0.5]), 2)[0]
        assert np.allclose(H, 3 * np.outer(v, v))

    def test_too_large(self):
        with pytest.raises(ValueError):
            catalecticant(Polynomial.constant(1), 3, 2, 4)

    def test_rectangular(self):
        H = catalecticant(power_of_affine([0.2, 0.1], 4), 1, 3, 4)
        assert H.entries.shape == (3, 10)

    @given(st.integers(0, 2**31))
    def test_matches_moment_matrix_of_apolar_functional(self, seed):
        rng = np.random.default_rng(seed)
        F = Polynomial.from_vector(2, rng.standard_normal(15), 4)
        H = catalecticant(F, 2, 2, 4).entries
        M = moment_matrix(apolar_functional(F, 4), 2).entries
        assert np.allclose(H, M)

    def test_printed_example2_entries(self, example2_path):
        F = dehomogenize_rescale(load_polynomial(example2_path), 1.0)
        H = catalecticant(F, 2, 2, 4)
        assert H[(0, 0, 0), (0, 0, 0)] == pytest.approx(0.614154, abs=1e-6)
        assert H[(0, 0, 0), (0, 0, 1)] == pytest.approx(0.313336, abs=1e-6)
        assert np.allclose(H.entries, printed_catalecticant(), atol=1e-5)


class TestKernel:
    def test_zero_matrix(self):
        M = moment_matrix(PseudoMoments(2, 4, np.zeros(15)), 1)
        assert len(kernel_basis(M)) == 3

    def test_rank_one(self):
        M = moment_matrix(PseudoMoments.dirac([0.5], 2), 1)
        (q,) = kernel_basis(M)
        c = q.coef((1,))
        assert q.allclose(c * (x - 0.5), 1e-12)

    def test_full_rank_has_no_kernel(self):
        lam = atoms_to_moments(AtomSet([1, 1], [[0.3], [-0.4]]), 2)
        assert kernel_basis(moment_matrix(lam, 1)) == []

    def test_printed_example2_kernel_dimension(self):
        H = printed_catalecticant()
        assert numeric_rank(H, 1e-6) == 7
        from momentgmp.moment import MomentMatrix
        ker = kernel_basis(MomentMatrix(monomials_upto(3, 2), H), 1e-6)
        assert len(ker) == 3

    @given(st.integers(0, 2**31))
    def test_kernel_residual_small(self, seed):
        rng = np.random.default_rng(seed)
        pts = rng.uniform(-1, 1, (4, 2))
        lam = atoms_to_moments(AtomSet(rng.uniform(0.5, 2, 4), pts), 4)
        M = moment_matrix(lam, 2)
        smax = np.linalg.norm(M.entries, 2)
        for q in kernel_basis(M, 1e-6):
            v = q.to_vector(2)
            assert np.linalg.norm(M.entries @ v) <= 2e-6 * smax * np.linalg.norm(v)
            # kernel polynomials vanish at the atoms
            assert np.max(np.abs(q(pts))) < 1e-4
