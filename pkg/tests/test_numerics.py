import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from satlink.numerics import (McSpec, NumericalError, QuadratureSpec, bessel_suite, find_root_bracketed, hyp2f3,
                              integrate_adaptive, mc_mean, normal_cdf)

SCINT_PARAMS = (7 / 6, 1.5, 2.0, 13 / 6, 3.0)


class TestIntegrateAdaptive:
    def test_power(self):
        v, err = integrate_adaptive(lambda x: x ** (5 / 3), (0.0, 1.0))
        assert v == pytest.approx(3 / 8, rel=1e-12)
        assert err <= 1e-10

    def test_gaussian_half_line(self):
        v, _ = integrate_adaptive(lambda x: math.exp(-x * x), (0.0, math.inf))
        assert v == pytest.approx(math.sqrt(math.pi) / 2, rel=1e-10)

    def test_series_oracle(self):
        # int_0^1 x^(5/3) e^(-x) dx = sum_n (-1)^n / (n! (n + 8/3))
        ref = math.fsum((-1) ** n / (math.factorial(n) * (n + 8 / 3)) for n in range(40))
        v, _ = integrate_adaptive(lambda x: x ** (5 / 3) * math.exp(-x), (0.0, 1.0))
        assert v == pytest.approx(ref, rel=1e-10)

    def test_nonconvergence_raises(self):
        with pytest.raises(NumericalError):
            integrate_adaptive(lambda x: math.sin(1 / x) / x, (1e-6, 1.0), QuadratureSpec(1e-14, 1e-300, 5))

    @pytest.mark.parametrize("bad", [dict(rel_tol=0), dict(abs_tol=-1), dict(max_depth=0)])
    def test_spec_validation(self, bad):
        with pytest.raises(ValueError):
            QuadratureSpec(**bad)


class TestRootFinding:
    def test_linear(self):
        assert find_root_bracketed(lambda x: x - 0.5, 0, 1) == pytest.approx(0.5, abs=1e-12)

    def test_sqrt2(self):
        assert find_root_bracketed(lambda x: x * x - 2, 1, 2) == pytest.approx(1.41421356, abs=1e-8)

    def test_no_sign_change(self):
        with pytest.raises(ValueError):
            find_root_bracketed(lambda x: x * x + 1, -1, 1)


class TestBessel:
    @pytest.mark.parametrize("order,expected", [("J0", 1.0), ("J1", 0.0), ("I0", 1.0), ("I1", 0.0)])
    def test_origin(self, order, expected):
        assert bessel_suite(order, 0.0) == expected

    def test_j1_over_x_limit(self):
        assert bessel_suite("J1", 1e-8) / 1e-8 == pytest.approx(0.5, rel=1e-12)

    def test_first_zero_of_j0(self):
        assert abs(bessel_suite("J0", 2.404825557695773)) < 1e-15

    @pytest.mark.parametrize("order,mp", [("J0", lambda x: mpmath.besselj(0, x)), ("J1", lambda x: mpmath.besselj(1, x)),
                                          ("I0", lambda x: mpmath.besseli(0, x)), ("I1", lambda x: mpmath.besseli(1, x))])
    @pytest.mark.parametrize("x", [0.3, 2.0, 17.5, 63.0, 99.0])
    def test_against_mpmath(self, order, mp, x):
        ref = float(mp(x))
        got = float(bessel_suite(order, x))
        assert got == pytest.approx(ref, rel=1e-12, abs=1e-15)

    def test_unknown_order(self):
        with pytest.raises(ValueError):
            bessel_suite("K0", 1.0)

    def test_normal_cdf(self):
        assert normal_cdf(0.0) == 0.5
        assert normal_cdf(1.0) == pytest.approx(float(mpmath.ncdf(1)), rel=1e-14)


class TestHyp2F3:
    def test_zero(self):
        assert hyp2f3(*SCINT_PARAMS, 0.0) == 1.0

    def test_two_term_taylor(self):
        a1, a2, b1, b2, b3 = SCINT_PARAMS
        x = -1e-4
        assert hyp2f3(*SCINT_PARAMS, x) == pytest.approx(1 + a1 * a2 / (b1 * b2 * b3) * x, abs=1e-10)

    @pytest.mark.parametrize("x", [-0.5, -3.0, -25.0, -100.0, -199.0, -343.0, -1500.0])
    def test_against_mpmath(self, x):
        with mpmath.workdps(60):
            ref = float(mpmath.hyp2f3(*[mpmath.mpf(p) for p in SCINT_PARAMS], x))
        assert hyp2f3(*SCINT_PARAMS, x) == pytest.approx(ref, rel=1e-8)

    def test_bessel_fallback_agrees_with_series_at_minus_100(self):
        from satlink.numerics import _hyp2f3_bessel_quadrature, _hyp2f3_series
        s, _ = _hyp2f3_series(*SCINT_PARAMS, -100.0)
        q = _hyp2f3_bessel_quadrature(7 / 6, -100.0)
        assert q == pytest.approx(s, rel=1e-8)

    def test_positive_argument_rejected(self):
        with pytest.raises(ValueError):
            hyp2f3(*SCINT_PARAMS, 1.0)

    def test_unsupported_family_raises_when_series_fails(self):
        with pytest.raises(NumericalError):
            hyp2f3(0.5, 0.7, 1.1, 1.3, 1.9, -5000.0)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-300.0, -1e-3))
    def test_bounded_by_one(self, x):
        # the scintillation family is a weighted mean of a squared aperture filter
        v = hyp2f3(*SCINT_PARAMS, x)
        assert 0.0 < v <= 1.0


class TestMonteCarlo:
    @staticmethod
    def _uniform_square(rng, n):
        return rng.random(n) ** 2

    def test_mean_of_u_squared(self):
        est = mc_mean(self._uniform_square, McSpec(seed=1, max_samples=400_000, target_rel_se=1e-9, block_size=50_000))
        assert est.n_samples == 400_000
        assert abs(est.mean.real - 1 / 3) < 4 * est.std_err

    def test_early_stop(self):
        est = mc_mean(self._uniform_square, McSpec(seed=1, max_samples=10_000_000, target_rel_se=0.01, block_size=10_000))
        assert est.n_samples < 10_000_000
        assert est.rel_se <= 0.01

    @pytest.mark.parametrize("workers", [1, 2, 3, 8])
    def test_bitwise_independent_of_workers(self, workers):
        base = mc_mean(self._uniform_square, McSpec(seed=7, max_samples=300_000, target_rel_se=1e-9, block_size=20_000))
        other = mc_mean(self._uniform_square, McSpec(seed=7, max_samples=300_000, target_rel_se=1e-9,
                                                     block_size=20_000, workers=workers))
        assert other.mean == base.mean and other.std_err == base.std_err

    def test_seed_changes_stream(self):
        a = mc_mean(self._uniform_square, McSpec(seed=1, max_samples=20_000, target_rel_se=1e-9, block_size=10_000))
        b = mc_mean(self._uniform_square, McSpec(seed=2, max_samples=20_000, target_rel_se=1e-9, block_size=10_000))
        assert a.mean != b.mean

    def test_complex_samples(self):
        est = mc_mean(lambda rng, n: np.exp(1j * 2 * np.pi * rng.random(n)),
                      McSpec(seed=3, max_samples=200_000, target_rel_se=1e-9, block_size=50_000))
        assert abs(est.mean.imag) < 4 * est.std_err_imag
