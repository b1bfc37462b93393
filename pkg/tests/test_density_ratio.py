"""Closed-form ratio estimator tests: bandwidth heuristic, Gram matrix,
coefficient formulas, optimality/stationarity of the solution, clipping,
and the tape-aware evaluation path."""

import numpy as np
import pytest

import kernelvi.autodiff as ad
from kernelvi.autodiff import Tensor, backward
from kernelvi.density_ratio import (DegenerateSamplesError, FactorizationError,
                                    KernelConfig, empirical_objective,
                                    evaluate_ratio, evaluate_ratio_tensor,
                                    fit_ratio, median_bandwidth,
                                    objective_gradients, rbf_gram)


class TestMedianBandwidth:
    def test_single_pair(self):
        assert median_bandwidth(np.array([[0.0], [2.0]])) == 2.0

    def test_three_points_enumeration(self):
        # distances {1, 2, 3} -> median 2
        assert median_bandwidth(np.array([[0.0], [1.0], [3.0]])) == 2.0

    def test_even_count_uses_middle_average(self):
        # distances {1, 2, 3, 3, 4, 7}: median = (3 + 3) / 2
        s = np.array([[0.0], [1.0], [4.0], [-3.0]])
        d = [1.0, 4.0, 3.0, 3.0, 4.0, 7.0]
        assert median_bandwidth(s) == np.median(d)

    def test_matches_exhaustive_oracle(self):
        """Brute-force all-pairs median on Gaussian draws, computed with
        explicit loops, must agree exactly."""
        rng = np.random.default_rng(0)
        s = rng.standard_normal((100, 5))
        dists = []
        for i in range(100):
            for j in range(i + 1, 100):
                dists.append(np.sqrt(np.sum((s[i] - s[j]) ** 2)))
        assert median_bandwidth(s) == np.median(dists)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            median_bandwidth(np.array([[1.0]]))

    def test_duplicates_fall_back_to_smallest_positive(self):
        # 6 of 10 pairwise distances are zero -> median 0 -> fallback
        s = np.array([[0.0], [0.0], [0.0], [0.0], [5.0]])
        assert median_bandwidth(s) == 5.0

    def test_all_identical_is_degenerate(self):
        with pytest.raises(DegenerateSamplesError):
            median_bandwidth(np.zeros((4, 2)))

    def test_scale_equivariance(self):
        """Scaling the samples by s scales the median bandwidth by s and
        leaves every Gram entry unchanged once the bandwidth is recomputed."""
        rng = np.random.default_rng(1)
        a = rng.standard_normal((30, 3))
        sigma = median_bandwidth(a)
        for s in (0.1, 2.0, 17.5):
            sigma_s = median_bandwidth(s * a)
            assert np.isclose(sigma_s, s * sigma, rtol=1e-12)
            np.testing.assert_allclose(rbf_gram(s * a, s * a, sigma_s),
                                       rbf_gram(a, a, sigma), rtol=1e-10)


class TestRbfGram:
    def test_zero_distance_is_one(self):
        z = np.array([[0.3, -1.2]])
        assert rbf_gram(z, z, 0.7)[0, 0] == 1.0

    def test_closed_form_value(self):
        sigma = 1.3
        a = np.array([[0.0]])
        b = np.array([[sigma * np.sqrt(2.0)]])
        assert np.isclose(rbf_gram(a, b, sigma)[0, 0], np.exp(-1.0), rtol=1e-12)

    def test_symmetric_with_unit_diagonal(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((12, 4))
        k = rbf_gram(a, a, 0.9)
        np.testing.assert_allclose(k, k.T, rtol=1e-14)
        np.testing.assert_allclose(np.diag(k), 1.0, rtol=1e-14)
        assert np.all(k > 0.0) and np.all(k <= 1.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            rbf_gram(np.ones((2, 3)), np.ones((2, 4)), 1.0)


class TestFitRatio:
    def test_beta_formula_direct(self):
        rng = np.random.default_rng(3)
        model = fit_ratio(rng.standard_normal((10, 1)), rng.standard_normal((10, 1)),
                          KernelConfig(lam=0.1))
        np.testing.assert_array_equal(model.beta, np.ones(10))  # 1/(0.1*10)

    def test_beta_formula_regression_setting(self):
        rng = np.random.default_rng(4)
        model = fit_ratio(rng.standard_normal((100, 3)), rng.standard_normal((100, 3)),
                          KernelConfig(lam=0.001))
        np.testing.assert_allclose(model.beta, 10.0, rtol=1e-14)

    def test_stationarity_residual(self):
        """First-order conditions of the expanded quadratic hold at the
        closed-form solution to near machine precision."""
        rng = np.random.default_rng(5)
        for d in (1, 2, 5):
            num = rng.standard_normal((20, d))
            den = rng.standard_normal((20, d)) + 0.3
            model = fit_ratio(num, den, KernelConfig(lam=0.05))
            g_a, g_b = objective_gradients(model.alpha, model.beta, num, den,
                                           model.bandwidth, 0.05)
            scale = 1.0 + max(np.abs(g_a).max(), np.abs(g_b).max(), 1.0)
            assert max(np.abs(g_a).max(), np.abs(g_b).max()) <= 1e-8 * scale

    def test_perturbation_optimality(self):
        """The closed-form solution beats 200 random coefficient
        perturbations of norm 1e-3."""
        rng = np.random.default_rng(6)
        num = rng.standard_normal((15, 2))
        den = rng.standard_normal((15, 2)) - 0.2
        lam = 0.05
        model = fit_ratio(num, den, KernelConfig(lam=lam))
        base = empirical_objective(model.alpha, model.beta, num, den,
                                   model.bandwidth, lam)
        n_tot = model.alpha.size + model.beta.size
        for _ in range(200):
            delta = rng.standard_normal(n_tot)
            delta *= 1e-3 / np.linalg.norm(delta)
            perturbed = empirical_objective(model.alpha + delta[:15],
                                            model.beta + delta[15:],
                                            num, den, model.bandwidth, lam)
            assert base <= perturbed + 1e-15

    def test_empty_sets_and_dim_mismatch(self):
        cfg = KernelConfig(lam=0.1)
        with pytest.raises(ValueError):
            fit_ratio(np.empty((0, 2)), np.ones((3, 2)), cfg)
        with pytest.raises(ValueError):
            fit_ratio(np.ones((3, 2)), np.ones((3, 3)), cfg)

    def test_factorization_failure_signals_small_lambda(self):
        # duplicated denominator points leave K/n rank one; a lam below
        # float64 resolution cannot restore positive definiteness
        dup = np.zeros((3, 1))
        with pytest.raises(FactorizationError):
            fit_ratio(np.ones((3, 1)), dup, KernelConfig(lam=1e-20, bandwidth=1.0))

    def test_fitting_never_touches_the_tape(self):
        rng = np.random.default_rng(7)
        num = rng.standard_normal((8, 1))
        den = rng.standard_normal((8, 1))
        model = fit_ratio(num, den, KernelConfig(lam=0.1))
        for arr in (model.alpha, model.beta, model.den_centers, model.num_centers):
            assert isinstance(arr, np.ndarray)


class TestEvaluateRatio:
    def test_identical_sets_give_unit_ratio(self):
        """When numerator and denominator samples coincide the true ratio
        is identically 1; the fit should sit near 1 at the sample points
        (15% band, seed-averaged)."""
        rng = np.random.default_rng(8)
        errs = []
        for _ in range(10):
            s = rng.standard_normal((80, 1))
            model = fit_ratio(s, s, KernelConfig(lam=0.01))
            values = evaluate_ratio(model, s)
            errs.append(np.mean(np.abs(values - 1.0)))
        assert np.mean(errs) <= 0.15

    def test_far_point_clips_to_floor(self):
        rng = np.random.default_rng(9)
        s = rng.standard_normal((30, 2))
        model = fit_ratio(s, s + 0.5, KernelConfig(lam=0.01, clip=1e-8))
        far = np.array([[1e6, -1e6]])
        np.testing.assert_array_equal(evaluate_ratio(model, far), 1e-8)

    def test_clip_floor_is_global_minimum(self):
        rng = np.random.default_rng(10)
        num = rng.standard_normal((60, 1))
        den = rng.standard_normal((60, 1)) + 1.0
        model = fit_ratio(num, den, KernelConfig(lam=0.003, clip=1e-8))
        grid = np.linspace(-6, 6, 500)[:, None]
        assert evaluate_ratio(model, grid).min() >= 1e-8

    def test_gaussian_analytic_ratio(self):
        """num = N(0,1), den = N(0.5,1): the fitted ratio tracks the
        analytic density ratio on [-2, 2] with mean abs error <= 0.1
        (fitted curve averaged over refits to suppress sampling noise)."""
        rng = np.random.default_rng(11)
        grid = np.linspace(-2, 2, 201)[:, None]
        curves = []
        for _ in range(10):
            num = rng.standard_normal((500, 1))
            den = rng.standard_normal((500, 1)) + 0.5
            model = fit_ratio(num, den, KernelConfig(lam=0.003))
            curves.append(evaluate_ratio(model, grid))
        true = np.exp(-0.5 * grid[:, 0] ** 2 + 0.5 * (grid[:, 0] - 0.5) ** 2)
        assert np.mean(np.abs(np.mean(curves, axis=0) - true)) <= 0.1

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(12)
        model = fit_ratio(rng.standard_normal((5, 2)), rng.standard_normal((5, 2)),
                          KernelConfig(lam=0.1))
        with pytest.raises(ValueError):
            evaluate_ratio(model, np.ones((3, 4)))


class TestEvaluateRatioTensor:
    def test_matches_numpy_path(self):
        rng = np.random.default_rng(13)
        num = rng.standard_normal((20, 2))
        den = rng.standard_normal((20, 2)) + 0.3
        model = fit_ratio(num, den, KernelConfig(lam=0.05))
        pts = rng.standard_normal((15, 2))
        out_t = evaluate_ratio_tensor(model, Tensor(pts))
        np.testing.assert_allclose(out_t.data, evaluate_ratio(model, pts),
                                   rtol=1e-12)

    def test_gradient_through_points_only(self):
        """Finite differences w.r.t. the evaluation points; coefficients
        and centers are constants by construction."""
        rng = np.random.default_rng(14)
        num = rng.standard_normal((10, 2))
        den = rng.standard_normal((10, 2)) + 0.3
        model = fit_ratio(num, den, KernelConfig(lam=0.05))
        pts = Tensor(rng.standard_normal((6, 2)), requires_grad=True)

        loss = ad.tsum(evaluate_ratio_tensor(model, pts))
        grads = backward(loss)
        h = 1e-6
        fd = np.zeros_like(pts.data)
        for i in range(6):
            for j in range(2):
                for sgn, tgt in ((+1, 0), (-1, 1)):
                    shifted = pts.data.copy()
                    shifted[i, j] += sgn * h
                    val = evaluate_ratio(model, shifted).sum()
                    fd[i, j] += sgn * val / (2 * h)
        np.testing.assert_allclose(grads[pts], fd, rtol=1e-4, atol=1e-8)


class TestEmpiricalObjective:
    def test_zero_coefficients_give_zero(self):
        rng = np.random.default_rng(15)
        num = rng.standard_normal((7, 1))
        den = rng.standard_normal((9, 1))
        assert empirical_objective(np.zeros(9), np.zeros(7), num, den, 1.0, 0.1) == 0.0

    def test_gradient_scale_bound_at_solution(self):
        """Max gradient entry at the solution is <= 1e-8 x (1 + max
        Hessian diagonal), the concrete stationarity bound."""
        rng = np.random.default_rng(16)
        num = rng.standard_normal((20, 1))
        den = rng.standard_normal((20, 1)) + 0.4
        lam = 0.02
        model = fit_ratio(num, den, KernelConfig(lam=lam))
        g_a, g_b = objective_gradients(model.alpha, model.beta, num, den,
                                       model.bandwidth, lam)
        k_den = rbf_gram(den, den, model.bandwidth)
        k_num = rbf_gram(num, num, model.bandwidth)
        k_c = rbf_gram(den, num, model.bandwidth)
        hess_diag = np.concatenate([
            np.diag(k_den @ k_den / 20 + lam * k_den),
            np.diag(k_c.T @ k_c / 20 + lam * k_num)])
        bound = 1e-8 * (1.0 + np.abs(hess_diag).max())
        assert max(np.abs(g_a).max(), np.abs(g_b).max()) <= bound

    def test_config_validation(self):
        with pytest.raises(ValueError):
            KernelConfig(lam=0.0)
        with pytest.raises(ValueError):
            KernelConfig(lam=0.1, clip=-1.0)
        with pytest.raises(ValueError):
            KernelConfig(lam=0.1, bandwidth=0.0)
