"""Hypothesis strategies shared by the test modules."""
import numpy as np
from hypothesis import strategies as st

from momentgmp.poly import Polynomial, monomials_upto

coef = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


@st.composite
def polynomials(draw, n=None, max_degree=4):
    n = draw(st.integers(1, 3)) if n is None else n
    k = draw(st.integers(0, max_degree))
    basis = monomials_upto(n, k)
    vals = draw(st.lists(coef, min_size=len(basis), max_size=len(basis)))
    return Polynomial(n, dict(zip(basis, vals)))


@st.composite
def ball_points(draw, n, radius=1.0):
    v = np.array(draw(st.lists(st.floats(-1, 1), min_size=n, max_size=n)))
    nrm = np.linalg.norm(v)
    return v * radius / nrm if nrm > radius else v
