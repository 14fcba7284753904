import numpy as np
import pytest
from scipy.stats import chi2

from vcate.errors import DegenerateOmega11
from vcate.gchisq import (
    EmpiricalProcessParams,
    QuadFormCoeffs,
    critical_values,
    empirical_process_value,
    gchisq_cdf,
    gchisq_quantile,
    quadform_value,
    reduce_params,
)


def random_params(rng, n_max=5000):
    a = rng.normal(size=(2, 2))
    omega = a @ a.T + 1e-5 * np.eye(2)
    return EmpiricalProcessParams(
        n=int(rng.integers(5, n_max)),
        v_star=float(rng.choice([0.0, rng.exponential(0.5), rng.exponential(4.0)])),
        omega=omega,
        zeta=int(rng.choice([-1, 1])),
    )


class TestReduceParams:
    def test_zero_v_star_is_rescaled_chi_square(self):
        omega = np.array([[2.0, 0.3], [0.3, 1.0]])
        c = reduce_params(EmpiricalProcessParams(n=100, v_star=0.0, omega=omega, zeta=1))
        assert c.kappa1 == 0.0 and c.kappa2 == 0.0
        assert c.nu1 == pytest.approx(2.0 / 100)

    def test_identity_omega_direct_substitution(self):
        c = reduce_params(
            EmpiricalProcessParams(n=1, v_star=1.0, omega=np.eye(2), zeta=1)
        )
        assert (c.nu1, c.kappa1, c.kappa2) == pytest.approx((1.0, 2.0, 1.0))

    def test_pathwise_equality_with_direct_process(self):
        rng = np.random.default_rng(5)
        for _ in range(60):
            p = random_params(rng)
            c = reduce_params(p)
            z = rng.standard_normal((2, 500))
            g_direct = empirical_process_value(p, z)
            g_quad = quadform_value(c, z)
            scale = max(1.0, float(np.max(np.abs(g_direct))))
            assert np.max(np.abs(g_direct - g_quad)) <= 1e-12 * scale

    def test_requires_positive_omega11(self):
        omega = np.array([[0.0, 0.0], [0.0, 1.0]])
        with pytest.raises(DegenerateOmega11):
            reduce_params(EmpiricalProcessParams(n=10, v_star=1.0, omega=omega, zeta=1))


class TestCdf:
    def test_pure_chi_square(self):
        c = QuadFormCoeffs(nu1=1.0, kappa1=0.0, kappa2=0.0)
        assert gchisq_cdf(3.841, c) == pytest.approx(0.95, abs=5e-4)
        assert gchisq_cdf(chi2.ppf(0.5, 1), c) == pytest.approx(0.5, abs=1e-12)

    def test_normal_limit_for_small_quadratic_part(self):
        from scipy.stats import norm

        c = QuadFormCoeffs(nu1=1e-10, kappa1=0.0, kappa2=1.0)
        for v in (-1.5, 0.0, 0.8):
            assert gchisq_cdf(v, c) == pytest.approx(norm.cdf(v), abs=1e-6)

    def test_monotone_and_in_unit_interval(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            c = reduce_params(random_params(rng))
            m = c.kappa1 / (2 * c.nu1)
            sd = np.sqrt(c.nu1**2 * (2 + 4 * m**2) + c.kappa2**2)
            grid = np.linspace(c.nu1 - 8 * sd, c.nu1 + 8 * sd, 200)
            vals = np.array([gchisq_cdf(v, c) for v in grid])
            assert np.all(vals >= 0.0) and np.all(vals <= 1.0)
            assert np.all(np.diff(vals) >= -1e-10)

    def test_matches_monte_carlo_oracle(self):
        # desk-scale version of the acceptance criterion (full run uses 1e7)
        rng = np.random.default_rng(17)
        for _ in range(8):
            c = reduce_params(random_params(rng))
            z = rng.standard_normal((2, 1_000_000))
            g = np.sort(quadform_value(c, z))
            deciles = np.quantile(g, np.arange(0.1, 0.91, 0.1))
            mc = np.searchsorted(g, deciles, side="right") / g.size
            ours = np.array([gchisq_cdf(v, c) for v in deciles])
            assert np.max(np.abs(ours - mc)) <= 3e-3

    def test_zeta_irrelevant_when_off_diagonal_zero(self):
        omega = np.diag([1.7, 0.6])
        for v_star in (0.0, 0.4, 3.0):
            cp = reduce_params(EmpiricalProcessParams(n=50, v_star=v_star, omega=omega, zeta=1))
            cm = reduce_params(EmpiricalProcessParams(n=50, v_star=v_star, omega=omega, zeta=-1))
            for v in (-0.5, 0.0, 0.2, 1.0):
                assert gchisq_cdf(v, cp) == gchisq_cdf(v, cm)


class TestQuantile:
    def test_round_trip(self):
        rng = np.random.default_rng(23)
        for _ in range(20):
            c = reduce_params(random_params(rng))
            v0 = gchisq_quantile(0.31, c)
            u0 = gchisq_cdf(v0, c)
            assert abs(u0 - 0.31) <= 1e-8
            v1 = gchisq_quantile(u0, c)
            assert abs(v1 - v0) <= 1e-6 * max(1.0, abs(v0))

    def test_chi_square_case(self):
        c = QuadFormCoeffs(nu1=0.37, kappa1=0.0, kappa2=0.0)
        assert gchisq_quantile(0.95, c) == pytest.approx(0.37 * chi2.ppf(0.95, 1), rel=1e-7)

    def test_rejects_bad_u(self):
        c = QuadFormCoeffs(nu1=1.0, kappa1=0.0, kappa2=0.0)
        with pytest.raises(ValueError):
            gchisq_quantile(0.0, c)


class TestCriticalValues:
    def test_zero_v_star_gives_zero_and_one_minus_alpha(self):
        c = reduce_params(
            EmpiricalProcessParams(n=100, v_star=0.0, omega=np.eye(2), zeta=1)
        )
        q_lo, q_hi = critical_values(c, 0.05)
        assert q_lo == 0.0
        assert q_hi == pytest.approx(0.95)

    def test_unadjusted_when_f0_large(self):
        # big v_star: plenty of mass below zero, so F(0) > alpha/2
        c = reduce_params(
            EmpiricalProcessParams(n=100, v_star=5.0, omega=np.eye(2), zeta=1)
        )
        q_lo, q_hi = critical_values(c, 0.05)
        assert q_lo == pytest.approx(0.025)
        assert q_hi == pytest.approx(0.975)

    def test_spread_identity(self):
        rng = np.random.default_rng(31)
        for _ in range(25):
            c = reduce_params(random_params(rng))
            alpha = float(rng.uniform(0.01, 0.3))
            q_lo, q_hi = critical_values(c, alpha)
            assert q_hi - q_lo == pytest.approx(1.0 - alpha, abs=1e-15)
