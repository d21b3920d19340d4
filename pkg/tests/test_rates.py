import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from momentgmp.rates import (
    Preset,
    PsatzConstants,
    RateInputs,
    SlotRate,
    c_s_ball,
    ell_threshold,
    gap_bound,
    hausdorff_kappa,
    kappa_theta,
    psi_max_ball,
    rate_table,
    tensor_rate,
)

pos = st.floats(0.01, 100.0)


def trivial(**kw):
    ps = PsatzConstants.generic(kw.pop("theta", 2.0), kw.pop("gamma", 1.0))
    slot = SlotRate(kw.pop("f_max", 1.0), kw.pop("h_star_max", 0.0), kw.pop("hw_min", 1.0), ps,
                    c_s=kw.pop("c_s", 1.0))
    return RateInputs((slot,), kw.pop("t_dot_w", 1.0), kw.pop("v1", 0.0))


class TestPsatz:
    def test_ball_preset(self):
        p = PsatzConstants.ball(2, 4)
        assert (p.theta, p.ell0, p.preset) == (2.0, 32.0, Preset.BALL)

    @given(st.integers(1, 20), st.integers(1, 30))
    def test_ball_ell0_exact(self, n, d):
        assert PsatzConstants.ball(n, d).ell0 == 2 * n * d ** 1.5

    def test_box_presets(self):
        assert PsatzConstants.box1(2, 3).theta == 1.0
        assert PsatzConstants.box2(2, 3).theta == 2.0
        assert PsatzConstants.box1(2, 3).ell0 == pytest.approx(math.pi * 2 * 2 * 3)

    def test_invalid(self):
        with pytest.raises(ValueError):
            PsatzConstants(0.0, 2.0)
        with pytest.raises(ValueError):
            PsatzConstants(1.0, 2.0, -1.0)
        with pytest.raises(ValueError):
            PsatzConstants.from_preset("generic")
        with pytest.raises(ValueError):
            PsatzConstants.from_preset("ball", n=2)


class TestKappa:
    def test_trivial(self):
        assert kappa_theta(trivial()) == (2.0, 2.0)

    def test_linear_in_t_dot_w(self):
        k1, t1 = kappa_theta(trivial(t_dot_w=1.0))
        k2, t2 = kappa_theta(trivial(t_dot_w=2.0))
        assert k2 == 2 * k1 and t1 == t2

    def test_min_theta(self):
        a = SlotRate(1.0, 0.0, 1.0, PsatzConstants.generic(2.0))
        b = SlotRate(1.0, 0.0, 1.0, PsatzConstants.generic(1.0))
        assert kappa_theta(RateInputs((a, b), 1.0))[1] == 1.0

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            trivial(hw_min=0.0)
        with pytest.raises(ValueError):
            trivial(t_dot_w=-1.0)
        with pytest.raises(ValueError):
            RateInputs((), 1.0)

    @given(pos, pos, pos, pos, pos, pos, st.floats(0.5, 3.0), st.floats(0.0, 10.0))
    def test_hand_formula(self, tw, hw, gamma, fmax, v1, hs, theta, c):
        k, th = kappa_theta(trivial(t_dot_w=tw, hw_min=hw, gamma=gamma, f_max=fmax, v1=v1,
                                    h_star_max=hs, theta=theta))
        assert th == theta
        assert k == pytest.approx(tw / hw * gamma ** theta * (2 * fmax + v1 * hs), rel=1e-12)

    @given(pos, pos, st.floats(0.1, 10.0))
    def test_homogeneous(self, fmax, hs, c):
        k1, _ = kappa_theta(trivial(f_max=fmax, v1=1.0, h_star_max=hs))
        k2, _ = kappa_theta(trivial(f_max=c * fmax, v1=1.0, h_star_max=c * hs))
        assert k2 == pytest.approx(c * k1, rel=1e-12)


class TestHausdorffKappa:
    def test_trivial(self):
        assert c_s_ball() == 1.0
        assert hausdorff_kappa(trivial(f_max=123.0)) == 2.0

    @given(pos, pos)
    def test_dominates_kappa(self, fmax, extra):
        inp = trivial(f_max=fmax, c_s=fmax + extra, v1=1.0, h_star_max=1.0)
        assert hausdorff_kappa(inp) >= kappa_theta(inp)[0]


class TestGapBound:
    def test_examples(self):
        assert gap_bound(10, 2, 2) == pytest.approx(0.02)
        assert gap_bound(1, 3.5, 1.7) == 3.5
        with pytest.raises(ValueError):
            gap_bound(0, 1, 1)

    @given(pos, st.floats(0.1, 2.0), st.floats(1.0, 1e3))
    def test_decreasing_convex(self, kappa, theta, ell):
        a, b, c = (gap_bound(ell + i, kappa, theta) for i in range(3))
        assert a > b > c
        assert a - 2 * b + c >= -1e-12 * a

    def test_threshold(self):
        assert ell_threshold([32], [4]) == 32
        assert ell_threshold([0], [4]) == 4
        assert ell_threshold([5], []) == 5

    def test_table(self):
        rows = rate_table(2.0, 2.0, 10, 20, 10)
        assert [r[0] for r in rows] == [10, 20]
        assert np.allclose([r[1] for r in rows], [0.02, 0.005])


class TestTensorRate:
    def test_examples(self):
        assert tensor_rate("positive", 1.0, 1.0, 0.0) == 2.0
        assert tensor_rate("signed", 1.0, 1.0, 0.0, 0.0, 1.0) == 2.0
        assert tensor_rate("signed", 1.0, 1.0, 0.5, 0.2, 3.0) == pytest.approx(3 * tensor_rate("signed", 1.0, 1.0, 0.5, 0.2, 1.0))
        with pytest.raises(ValueError):
            tensor_rate("other", 1, 1, 0)

    @pytest.mark.parametrize("n,dp,expected", [(1, 1, 2.0), (1, 6, 7.0), (2, 1, 2.0)])
    def test_psi_max(self, n, dp, expected):
        assert psi_max_ball(n, dp) == pytest.approx(expected, rel=1e-9)

    def test_psi_max_bounds_samples(self, rng):
        from momentgmp.tensor import default_psi
        psi = default_psi(2, 3)
        pts = rng.standard_normal((500, 2))
        pts /= np.maximum(1.0, np.linalg.norm(pts, axis=1))[:, None]
        assert psi(pts).max() <= psi_max_ball(2, 3) + 1e-12
