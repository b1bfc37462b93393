"""Oracle machinery tests: the oracles must themselves be verified before
anything else is checked against them."""

import numpy as np
import pytest

from kernelvi.density_ratio import KernelConfig, fit_ratio, median_bandwidth
from kernelvi.oracles import (HmcConfig, analytic_gaussian_kl,
                              brute_force_ulsif, default_quadrature_grid,
                              gamma_log_density, hmc_sample, quadrature_kl_1d)


def gaussian_pdf(mean, std):
    return lambda z: np.exp(-0.5 * ((z - mean) / std) ** 2) / (std * np.sqrt(2 * np.pi))


class TestAnalyticGaussianKl:
    def test_identical_is_zero(self):
        assert analytic_gaussian_kl([1.0, -2.0], [0.5, 2.0], [1.0, -2.0], [0.5, 2.0]) == 0.0

    def test_unit_shift_formula(self):
        assert np.isclose(analytic_gaussian_kl(1.0, 1.0, 0.0, 1.0), 0.5, rtol=1e-14)

    def test_matches_quadrature(self):
        grid = default_quadrature_grid(0.3, 1.4)
        kl_quad = quadrature_kl_1d(gaussian_pdf(0.3, 0.7), gaussian_pdf(-0.2, 1.4), grid)
        kl_true = analytic_gaussian_kl(0.3, 0.7, -0.2, 1.4)
        assert abs(kl_quad - kl_true) <= 1e-8

    def test_rejects_bad_std(self):
        with pytest.raises(ValueError):
            analytic_gaussian_kl(0.0, 0.0, 0.0, 1.0)


class TestQuadratureKl:
    def test_equal_densities_give_zero(self):
        grid = default_quadrature_grid(0.0, 1.0)
        assert abs(quadrature_kl_1d(gaussian_pdf(0, 1), gaussian_pdf(0, 1), grid)) <= 1e-12

    def test_gmm_vs_normal_positive_and_grid_stable(self):
        def gmm(z):
            return 0.5 * gaussian_pdf(-3, 1)(z) + 0.5 * gaussian_pdf(3, 1)(z)

        coarse = np.linspace(-15, 15, 2 ** 14 + 1)
        fine = np.linspace(-15, 15, 2 ** 15 + 1)
        kl_c = quadrature_kl_1d(gmm, gaussian_pdf(0, 1), coarse)
        kl_f = quadrature_kl_1d(gmm, gaussian_pdf(0, 1), fine)
        assert kl_f > 0
        assert abs(kl_c - kl_f) < 1e-6

    def test_nonpositive_p_on_support_rejected(self):
        grid = np.linspace(-5, 5, 101)
        with pytest.raises(ValueError):
            quadrature_kl_1d(gaussian_pdf(0, 1), lambda z: np.zeros_like(z), grid)

    def test_gamma_log_density_normalizes(self):
        grid = np.linspace(1e-9, 40.0, 400001)
        mass = np.trapezoid(np.exp(gamma_log_density(grid, 6.0, 6.0)), grid)
        assert abs(mass - 1.0) <= 1e-6


class TestBruteForceUlsif:
    def test_agrees_with_closed_form(self):
        rng = np.random.default_rng(0)
        for d in (1, 2, 5):
            num = rng.standard_normal((20, d))
            den = rng.standard_normal((20, d)) + 0.3
            sigma = 0.35 * median_bandwidth(np.vstack([num, den]))
            lam = 0.1
            model = fit_ratio(num, den, KernelConfig(lam=lam, bandwidth=sigma))
            alpha, beta = brute_force_ulsif(num, den, sigma, lam)
            assert np.abs(alpha - model.alpha).max() <= 1e-5
            assert np.abs(beta - model.beta).max() <= 1e-5

    def test_beta_is_constant_vector(self):
        rng = np.random.default_rng(1)
        num = rng.standard_normal((12, 2))
        den = rng.standard_normal((12, 2))
        sigma = median_bandwidth(np.vstack([num, den]))
        _, beta = brute_force_ulsif(num, den, sigma, lam=0.25)
        np.testing.assert_allclose(beta, 1.0 / (0.25 * 12), atol=1e-8)

    def test_huge_lambda_kills_alpha(self):
        rng = np.random.default_rng(2)
        num = rng.standard_normal((10, 1))
        den = rng.standard_normal((10, 1))
        sigma = median_bandwidth(np.vstack([num, den]))
        alpha, _ = brute_force_ulsif(num, den, sigma, lam=1e6)
        assert np.abs(alpha).max() <= 1e-4

    def test_zero_lambda_rejected(self):
        with pytest.raises(ValueError):
            brute_force_ulsif(np.ones((3, 1)), np.zeros((3, 1)), 1.0, lam=0.0)


class TestHmcConfig:
    def test_zero_leapfrog_rejected_at_construction(self):
        with pytest.raises(ValueError):
            HmcConfig(n_leapfrog=0)
        with pytest.raises(ValueError):
            HmcConfig(target_accept=1.0)
        with pytest.raises(ValueError):
            HmcConfig(initial_step_size=0.0)


def std_normal_logp_and_grad(q):
    return -0.5 * np.sum(q * q, axis=1), -q


class TestHmcSampler:
    def test_standard_normal_moments(self):
        """100 chains x 100 kept draws on N(0, I2): mean within 0.05,
        covariance within 0.1 of the identity."""
        cfg = HmcConfig(n_chains=100, n_iters=200, n_leapfrog=10,
                        initial_step_size=0.001, target_accept=0.8, burn_in=100)
        result = hmc_sample(std_normal_logp_and_grad, 2, cfg,
                            np.random.default_rng(7))
        assert result.samples.shape == (100 * 100, 2)
        assert np.abs(result.samples.mean(axis=0)).max() <= 0.05
        cov = np.cov(result.samples.T)
        assert np.abs(cov - np.eye(2)).max() <= 0.1

    def test_dual_averaging_hits_target_acceptance(self):
        """Anharmonic target (smooth acceptance-vs-step curve): the adapted
        step size lands the empirical acceptance within 0.05 of target."""

        def quartic(q):
            return (-0.5 * np.sum(q * q, axis=1) - 0.25 * np.sum(q ** 4, axis=1),
                    -q - q ** 3)

        for target in (0.7, 0.9):
            cfg = HmcConfig(n_chains=50, n_iters=400, n_leapfrog=10,
                            initial_step_size=0.001, target_accept=target,
                            burn_in=200)
            result = hmc_sample(quartic, 2, cfg, np.random.default_rng(8))
            assert abs(result.accept_rate - target) <= 0.05

    def test_correlated_gaussian_recovers_correlation(self):
        rho = 0.8
        prec = np.linalg.inv(np.array([[1.0, rho], [rho, 1.0]]))

        def logp_and_grad(q):
            return -0.5 * np.sum((q @ prec) * q, axis=1), -(q @ prec)

        cfg = HmcConfig(n_chains=50, n_iters=400, n_leapfrog=10,
                        initial_step_size=0.001, target_accept=0.8, burn_in=200)
        result = hmc_sample(logp_and_grad, 2, cfg, np.random.default_rng(9))
        cov = np.cov(result.samples.T)
        corr = cov[0, 1] / np.sqrt(cov[0, 0] * cov[1, 1])
        assert abs(corr - rho) <= 0.05

    def test_leapfrog_energy_conservation(self):
        """One trajectory on a quadratic potential with a tiny step changes
        the Hamiltonian by <= 1e-6 (symplectic integrator property)."""
        eps = 1e-4
        q = np.array([[1.3, -0.4]])
        p = np.array([[0.7, 0.2]])
        logp, grad = std_normal_logp_and_grad(q)
        h0 = -logp[0] + 0.5 * np.sum(p ** 2)
        p = p + 0.5 * eps * grad
        for step in range(10):
            q = q + eps * p
            logp, grad = std_normal_logp_and_grad(q)
            if step < 9:
                p = p + eps * grad
        p = p + 0.5 * eps * grad
        h1 = -logp[0] + 0.5 * np.sum(p ** 2)
        assert abs(h1 - h0) <= 1e-6

    def test_divergent_trajectories_rejected_not_fatal(self):
        """A cliff in the log-density triggers divergences; sampling still
        completes and reports the count."""

        def cliff(q):
            lp = -0.5 * np.sum(q * q, axis=1)
            lp = np.where(np.abs(q[:, 0]) > 1.5, lp - 1e9, lp)
            return lp, -q

        cfg = HmcConfig(n_chains=8, n_iters=60, n_leapfrog=5,
                        initial_step_size=0.5, target_accept=0.8, burn_in=30)
        result = hmc_sample(cliff, 2, cfg, np.random.default_rng(10))
        assert result.n_divergent > 0
        assert result.samples.shape[0] == 8 * 30

    def test_chains_merged_deterministically(self):
        cfg = HmcConfig(n_chains=5, n_iters=50, n_leapfrog=5,
                        initial_step_size=0.01, burn_in=25)
        r1 = hmc_sample(std_normal_logp_and_grad, 2, cfg, np.random.default_rng(11))
        r2 = hmc_sample(std_normal_logp_and_grad, 2, cfg, np.random.default_rng(11))
        np.testing.assert_array_equal(r1.samples, r2.samples)
