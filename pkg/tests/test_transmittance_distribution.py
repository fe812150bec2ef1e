import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from satlink.transmittance_distribution import (PdtModel, average_over_pdt, build_pdt, pdt_cdf, pdt_density,
                                                pdt_density_grid, pdt_moments, pdt_sample, pdt_summary,
                                                shape_parameters, write_pdt_files)


def ks_distance(model, samples, chunk=50_000):
    x = np.sort(samples)
    n = len(x)
    worst = 0.0
    for i in range(0, n, chunk):
        F = pdt_cdf(model, x[i:i + chunk])
        idx = np.arange(i, i + len(F))
        worst = max(worst, float(np.max(np.abs(F - idx / n))), float(np.max(np.abs(F - (idx + 1) / n))))
    return worst


def truncated_lognormal_density(eta, mu, s):
    return stats.norm.pdf((np.log(eta) + mu) / s) / (s * eta) / stats.norm.cdf(mu / s)


@pytest.fixture(scope="module")
def mid_model():
    a = 0.5
    return build_pdt(0.5, 0.26, a, 0.1 * a, a)


@pytest.fixture(scope="module")
def satellite_model():
    # shape typical of a long downlink: small mean, wander comparable to the aperture
    return build_pdt(4.5e-3, 2.2e-5, 9.5, 0.6, 0.5)


class TestShape:
    @pytest.mark.parametrize("x", [1e-6, 5e-5, 1e-2, 2e-2, 0.1, 1.0, 4.0])
    def test_positive(self, x):
        R, lam = shape_parameters(math.sqrt(x), 1.0)
        assert R > 0 and lam > 0

    def test_series_branch_continuous(self):
        below = shape_parameters(math.sqrt(1e-2 * (1 - 1e-12)), 1.0)
        above = shape_parameters(math.sqrt(1e-2 * (1 + 1e-12)), 1.0)
        assert below[0] == pytest.approx(above[0], rel=1e-10)
        assert below[1] == pytest.approx(above[1], rel=1e-10)

    def test_small_spot_limit(self):
        # a tiny aperture sees a locally Gaussian spot, so the decay is quadratic
        R, lam = shape_parameters(1e-4, 1.0)
        assert lam == pytest.approx(2.0, rel=1e-6)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            shape_parameters(0.0, 1.0)


class TestBuild:
    def test_rejects_variance_bounds(self):
        with pytest.raises(ValueError):
            build_pdt(0.5, 0.2, 0.5, 0.05, 0.5)
        with pytest.raises(ValueError):
            build_pdt(0.5, 0.6, 0.5, 0.05, 0.5)
        with pytest.raises(ValueError):
            build_pdt(1.2, 1.3, 0.5, 0.05, 0.5)

    def test_tracking_needs_length(self):
        with pytest.raises(ValueError):
            build_pdt(0.5, 0.26, 0.5, 0.05, 0.5, tracking_theta=1e-6)

    def test_tracking_keeps_turbulent_parameters(self):
        a = build_pdt(4.5e-3, 2.2e-5, 9.5, 0.6, 0.5)
        b = build_pdt(4.5e-3, 2.2e-5, 9.5, 0.6, 0.5, tracking_theta=1e-6, L_r=8e5)
        assert (a.eta0, a.zeta0_sq) == (b.eta0, b.zeta0_sq)
        assert b.sigma_bw_or_tr == pytest.approx(0.8)

    def test_model_validation(self):
        with pytest.raises(ValueError):
            PdtModel(0.5, 0.2, 1.0, 2.0, 0.1, 0.5, 0.5)

    def test_log_normal_parameters(self, mid_model):
        m = mid_model
        assert m.mu_0 == pytest.approx(-math.log(m.eta0 ** 2 / math.sqrt(m.zeta0_sq)), rel=1e-15)
        assert m.sigma_r_sq == pytest.approx(math.log(m.zeta0_sq / m.eta0 ** 2), rel=1e-15)

    @pytest.mark.parametrize("r_over_R", [0.0, 0.3, 0.8])
    def test_conditional_moments(self, mid_model, r_over_R):
        m = mid_model
        r0 = r_over_R * m.R_scale
        mu, s = float(m.mu(r0)), m.sigma_r
        dens = lambda e, p: e ** p * truncated_lognormal_density(e, mu, s)
        c1 = integrate.quad(dens, 0, 1, args=(1,), epsabs=1e-13)[0]
        c2 = integrate.quad(dens, 0, 1, args=(2,), epsabs=1e-13)[0]
        decay = math.exp(-r_over_R ** m.lambda_shape)
        assert c1 == pytest.approx(m.eta0 * decay, rel=0.03)
        assert c2 == pytest.approx(m.zeta0_sq * decay ** 2, rel=0.03)

    def test_moment_reproduction(self, mid_model):
        m1, m2 = pdt_moments(mid_model, (1, 2))
        assert m1 == pytest.approx(0.5, rel=0.02)
        assert m2 == pytest.approx(0.26, rel=0.02)

    def test_satellite_moment_reproduction(self, satellite_model):
        assert satellite_model.sigma_bw_or_tr / satellite_model.R_scale < 0.3
        m1, m2 = pdt_moments(satellite_model, (1, 2))
        assert m1 == pytest.approx(4.5e-3, rel=0.02)
        assert m2 == pytest.approx(2.2e-5, rel=0.02)


class TestDensity:
    @pytest.mark.parametrize("eta", [-0.1, 0.0, 1.0 + 1e-9, 2.0])
    def test_support(self, mid_model, eta):
        assert pdt_density(mid_model, eta) == 0.0
        assert pdt_density_grid(mid_model, eta)[0] == 0.0

    @pytest.mark.parametrize("fixture", ["mid_model", "satellite_model"])
    def test_normalized(self, request, fixture):
        m = request.getfixturevalue(fixture)
        assert average_over_pdt(m, lambda e: np.ones_like(e)) == pytest.approx(1.0, abs=1e-6)
        assert average_over_pdt(m, lambda e: 1.0, method="adaptive") == pytest.approx(1.0, abs=1e-6)

    def test_density_integral(self, satellite_model):
        m = satellite_model
        v = integrate.quad(lambda e: pdt_density_grid(m, e)[0], 0, 1, points=[1e-3, 4.5e-3, 1e-2, 3e-2],
                           limit=400, epsabs=1e-10)[0]
        assert v == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("eta", [0.2, 0.45, 0.6])
    def test_grid_matches_adaptive(self, mid_model, eta):
        assert pdt_density_grid(mid_model, eta)[0] == pytest.approx(pdt_density(mid_model, eta), rel=1e-6)

    def test_delta_limit(self):
        m = build_pdt(0.3, 0.095, 0.5, 0.0, 0.5)
        mu = -math.log(m.eta0 ** 2 / math.sqrt(m.zeta0_sq))
        s = math.sqrt(math.log(m.zeta0_sq / m.eta0 ** 2))
        eta = np.linspace(0.01, 0.99, 50)
        np.testing.assert_allclose(pdt_density_grid(m, eta), truncated_lognormal_density(eta, mu, s), rtol=1e-12)

    def test_concentrates(self):
        a = 0.5
        sd = 0.01
        m = build_pdt(0.9, 0.81 + sd ** 2, 0.1 * a, 1e-3 * a, a)
        lo, hi = 0.9 - 3 * sd, 0.9 + 3 * sd
        mass = float(pdt_cdf(m, hi)[0] - pdt_cdf(m, lo)[0])
        assert mass >= 0.99

    def test_tail_vanishes(self, satellite_model):
        d = pdt_density_grid(satellite_model, np.array([0.5, 0.9, 0.999, 1.0]))
        assert np.all(np.diff(d) <= 0)
        assert d[-1] < 1e-12

    def test_cdf_monotone(self, satellite_model):
        F = pdt_cdf(satellite_model, np.linspace(-0.1, 1.1, 500))
        assert F[0] == 0.0 and F[-1] == 1.0
        assert np.all(np.diff(F) >= 0)


class TestTracking:
    @staticmethod
    def spread(thetas):
        out = []
        for th in thetas:
            m = build_pdt(4.5e-3, 2.2e-5, 9.5, 0.6, 0.5, tracking_theta=th, L_r=8e5)
            m1, m2 = pdt_moments(m, (1, 2))
            out.append((m1, m2 - m1 * m1))
        return out

    def test_normalized_variance_monotone(self):
        s = [v / (m * m) for m, v in self.spread((0.0, 0.1e-6, 0.5e-6, 1e-6, 2e-6, 4e-6))]
        assert all(b >= a for a, b in zip(s, s[1:]))

    def test_mean_decreases(self):
        m = [m for m, _ in self.spread((0.0, 1e-6, 2e-6, 4e-6))]
        assert all(b < a for a, b in zip(m, m[1:]))

    def test_absolute_variance_strong_jitter(self):
        v = [v for _, v in self.spread((3e-6, 4e-6, 6e-6))]
        assert all(b >= a for a, b in zip(v, v[1:]))

    def test_absolute_variance_dip_weak_jitter(self):
        # the conditional variance shrinks with the offset faster than the
        # centroid spread adds to it while sigma_tr << R
        (_, v0), (_, v1) = self.spread((0.0, 1e-6))
        assert v1 < v0


class TestSampling:
    def test_reproducible(self, satellite_model):
        a = pdt_sample(satellite_model, 42, 1000)
        b = pdt_sample(satellite_model, 42, 1000)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, pdt_sample(satellite_model, 43, 1000))

    def test_support(self, mid_model):
        x = pdt_sample(mid_model, 1, 100_000)
        assert np.all((x > 0) & (x <= 1))

    def test_rejects_empty(self, mid_model):
        with pytest.raises(ValueError):
            pdt_sample(mid_model, 1, 0)

    @pytest.mark.parametrize("fixture", ["mid_model", "satellite_model"])
    def test_ks(self, request, fixture):
        m = request.getfixturevalue(fixture)
        assert ks_distance(m, pdt_sample(m, 2024, 1_000_000)) < 0.005

    def test_ks_no_wander(self):
        m = build_pdt(0.3, 0.095, 0.5, 0.0, 0.5)
        x = pdt_sample(m, 5, 1_000_000)
        mu, s = m.mu_0, m.sigma_r
        # independent truncated-normal reference in the log variable
        ref = stats.truncnorm(-np.inf, mu / s, loc=0.0, scale=1.0)
        z = (np.log(x) + mu) / s
        assert stats.kstest(z, ref.cdf).statistic < 0.005

    def test_sample_mean(self, satellite_model):
        x = pdt_sample(satellite_model, 9, 1_000_000)
        ref = average_over_pdt(satellite_model, lambda e: e)
        assert abs(x.mean() - ref) < 3 * x.std() / math.sqrt(len(x))


class TestAverage:
    def test_mean_identity(self, mid_model):
        m1 = average_over_pdt(mid_model, lambda e: e)
        assert m1 == pytest.approx(pdt_moments(mid_model, (1,))[0], rel=1e-15)

    def test_methods_agree(self, satellite_model):
        f = lambda e: -np.expm1(-200.0 * e)
        assert average_over_pdt(satellite_model, f, method="adaptive") == pytest.approx(
            average_over_pdt(satellite_model, f), abs=1e-7)

    @settings(max_examples=10, deadline=None)
    @given(st.floats(1.0, 1e3))
    def test_against_monte_carlo(self, c):
        m = build_pdt(4.5e-3, 2.2e-5, 9.5, 0.6, 0.5)
        x = -np.expm1(-c * pdt_sample(m, 77, 200_000))
        ref = average_over_pdt(m, lambda e: -np.expm1(-c * e))
        assert abs(x.mean() - ref) < 3 * x.std() / math.sqrt(len(x)) + 1e-12

    def test_bad_method(self, mid_model):
        with pytest.raises(ValueError):
            average_over_pdt(mid_model, lambda e: e, method="simpson")


def test_export(tmp_path, satellite_model):
    c, j = write_pdt_files(satellite_model, tmp_path / "p.csv", tmp_path / "p.json", n_grid=64,
                           header_lines=["seed: 1"])
    lines = c.read_text().splitlines()
    assert lines[:2] == ["# seed: 1", "eta,density"]
    assert len(lines) == 66
    summary = pdt_summary(satellite_model)
    assert set(summary) == {"eta_mean", "eta2_mean", "skew", "mass_below_0.01"}
    assert summary["skew"] > 0
    assert j.read_text().startswith("{")
