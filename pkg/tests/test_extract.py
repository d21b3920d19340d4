import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from momentgmp.extract import (
    AtomSet,
    ExtractionUnstable,
    NoFlatRank,
    atoms_to_moments,
    extract_atoms,
    flat_degree,
    match_atoms,
    merge_close,
    numeric_rank,
    rank_trajectory,
    reconstruct_polynomial,
)
from momentgmp.moment import moment_matrix
from momentgmp.poly import Polynomial, PseudoMoments, monomials_upto

x = Polynomial.variable(1, 0)


def random_atoms(rng, n, r, signed=True, sep=0.2):
    pts = []
    while len(pts) < r:
        v = rng.standard_normal(n)
        v *= rng.uniform(0, 1) ** (1 / n) / np.linalg.norm(v)
        if all(np.linalg.norm(v - p) >= sep for p in pts):
            pts.append(v)
    mag = rng.uniform(0.1, 10, r)
    sign = rng.choice([-1.0, 1.0], r) if signed else np.ones(r)
    return AtomSet(sign * mag, np.array(pts))


def identifiable_order(n, r):
    """Smallest even order whose moment matrices can separate r atoms."""
    from math import comb
    k = 1
    while comb(n + k, n) < r:
        k += 1
    return 2 * (k + 1)


class TestNumericRank:
    def test_examples(self):
        assert numeric_rank(np.zeros((3, 3))) == 0
        v = np.array([1.0, 2.0, -1.0])
        assert numeric_rank(np.outer(v, v)) == 1

    def test_relative_threshold(self):
        assert numeric_rank(np.diag([1.0, 1e-5, 1e-7]), 1e-6) == 2
        assert numeric_rank(np.diag([1e6, 10.0, 1e-3]), 1e-6) == 2


class TestAtomsToMoments:
    def test_empty(self):
        lam = atoms_to_moments(AtomSet.empty(2), 3)
        assert np.all(lam.values == 0)
        with pytest.raises(ValueError):
            atoms_to_moments(AtomSet(np.zeros(0), np.zeros((0, 0))), 3)

    def test_powers_of_one(self):
        assert np.array_equal(atoms_to_moments(AtomSet([2.0], [[1.0]]), 3).values, [2, 2, 2, 2])

    def test_reconstruct_examples(self):
        assert reconstruct_polynomial(AtomSet([1.0], [[0.0, 0.0]]), 4).allclose(Polynomial.constant(2))
        odd = reconstruct_polynomial(AtomSet([1.0, -1.0], [[0.5], [-0.5]]), 2)
        assert odd.allclose(2 * x, 1e-15)


class TestExtract:
    def test_origin(self):
        a = extract_atoms(PseudoMoments.dirac([0.0, 0.0], 4))
        assert a.rank == 1
        assert a.weights[0] == pytest.approx(1.0) and np.allclose(a.points, 0)

    def test_scaled_dirac(self):
        a = extract_atoms(PseudoMoments.dirac([0.5], 4, weight=3.0))
        assert abs(a.weights[0] - 3) < 1e-10 and abs(a.points[0, 0] - 0.5) < 1e-10

    def test_zero_moments(self):
        assert extract_atoms(PseudoMoments(2, 4, np.zeros(15))).rank == 0

    def test_order_too_small(self):
        with pytest.raises(ValueError):
            extract_atoms(PseudoMoments.dirac([0.5], 2))

    def test_no_flat_rank(self):
        # five atoms on the line cannot be certified from order-4 moments
        a = AtomSet(np.ones(5), np.linspace(-0.8, 0.8, 5)[:, None])
        with pytest.raises(NoFlatRank):
            extract_atoms(atoms_to_moments(a, 4))

    def test_ill_conditioned(self):
        a = AtomSet([1.0, 1e-12], [[0.1], [0.6]])
        with pytest.raises(ExtractionUnstable):
            extract_atoms(atoms_to_moments(a, 6), tol=1e-14, max_condition=1e6)

    def test_reports_diagnostics(self):
        a = AtomSet([1.0, 2.0, 0.5], [[0.1, 0.2], [-0.5, 0.3], [0.7, -0.1]])
        out = extract_atoms(atoms_to_moments(a, 8))
        assert out.info["flat_degree"] == flat_degree(atoms_to_moments(a, 8))[0]
        assert out.info["ranks"] == rank_trajectory(atoms_to_moments(a, 8))
        assert out.residual < 1e-12

    def test_nearly_degenerate_low_degree(self):
        # four nearly coplanar points in R^3: degree one barely separates them
        pts = np.array([[0.3, 0.0, 0.1], [-0.2, 0.4, 0.1], [0.1, -0.5, 0.1], [-0.4, -0.1, 0.1 + 1e-5]])
        a = AtomSet([1.0, 0.5, 2.0, 0.7], pts)
        out = extract_atoms(atoms_to_moments(a, 12))
        pe, we = match_atoms(out, a)
        assert pe < 1e-6 and we < 1e-5

    def test_merge_close(self):
        a = merge_close(AtomSet([1.0, 2.0, 1.0], [[0.1], [0.1 + 1e-9], [0.5]]), 1e-6)
        assert a.rank == 2
        assert sorted(a.weights) == [1.0, 3.0]

    def test_seed_invariance(self):
        rng = np.random.default_rng(5)
        a = random_atoms(rng, 3, 5)
        lam = atoms_to_moments(a, identifiable_order(3, 5))
        pe, we = match_atoms(extract_atoms(lam, seed=0), extract_atoms(lam, seed=99))
        assert pe < 1e-8 and we < 1e-8


def test_round_trip_fifty():
    rng = np.random.default_rng(20240611)
    failures = 0
    for _ in range(50):
        n = int(rng.integers(1, 4))
        r = int(rng.integers(1, 6))
        a = random_atoms(rng, n, r)
        out = extract_atoms(atoms_to_moments(a, identifiable_order(n, r)))
        pe, we = match_atoms(out, a)
        failures += not (pe <= 1e-7 and we <= 1e-6)
    assert failures == 0


@settings(max_examples=40)
@given(st.integers(0, 2**31), st.integers(1, 3), st.integers(1, 4))
def test_round_trip_property(seed, n, r):
    a = random_atoms(np.random.default_rng(seed), n, r)
    out = extract_atoms(atoms_to_moments(a, identifiable_order(n, r)))
    pe, we = match_atoms(out, a)
    assert pe <= 1e-7 and we <= 1e-6 * max(1.0, np.abs(a.weights).max())


class TestAtomSet:
    def test_json_round_trip(self, tmp_path):
        a = AtomSet([1.5, -2.0], [[0.1, 0.2], [0.3, -0.4]], residual=1e-9)
        path = tmp_path / "a.json"
        a.dump(path)
        obj = json.loads(path.read_text())
        assert set(obj) == {"atoms", "residual"}
        b = AtomSet.from_json(obj)
        assert np.array_equal(a.weights, b.weights) and np.array_equal(a.points, b.points)

    def test_properties(self):
        a = AtomSet([1.5, -2.0], [[0.1, 0.2], [0.3, -0.4]])
        assert a.signed and a.total_variation == 3.5 and a.n == 2 and len(a) == 2
        assert np.allclose(a.rescaled(2.0).points, 2 * a.points)
        c = a.concat(AtomSet([1.0], [[0.0, 0.0]]), sign=-1.0)
        assert c.weights.tolist() == [1.5, -2.0, -1.0]

    def test_match_is_permutation_invariant(self):
        a = AtomSet([1.0, 2.0, 3.0], [[0.1], [0.5], [-0.3]])
        b = AtomSet([3.0, 1.0, 2.0], [[-0.3], [0.1], [0.5]])
        assert match_atoms(a, b) == (0.0, 0.0)
        assert match_atoms(a, AtomSet([1.0], [[0.1]])) == (np.inf, np.inf)

    def test_moment_matrix_rank_equals_atom_count(self):
        a = AtomSet([5.0, 3.0, 15.0, 15.0], [[-0.6, -0.15], [0.6, -0.65], [-0.1, 0.15], [0.1, 0.15]])
        M = moment_matrix(atoms_to_moments(a, 12), 6).entries
        assert numeric_rank(M, 1e-6) == 4
