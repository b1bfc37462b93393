"""Gradient-engine tests: forward values, reverse-mode gradients against a
central finite-difference oracle, the detach contract, and sampling."""

import numpy as np
import pytest

import kernelvi.autodiff as ad
from kernelvi.autodiff import NonFiniteError, Tensor, backward

from conftest import check_gradients, make_param


class TestForwardOps:
    def test_relu_definition(self):
        out = ad.relu(Tensor([-1.0, 0.0, 2.0]))
        np.testing.assert_array_equal(out.data, [0.0, 0.0, 2.0])

    def test_matmul_identity(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((3, 7))
        out = ad.matmul(Tensor(np.eye(3)), Tensor(a))
        np.testing.assert_array_equal(out.data, a)

    def test_matmul_shape_errors(self):
        with pytest.raises(ValueError):
            ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))
        with pytest.raises(ValueError):
            ad.matmul(Tensor(np.ones((2, 2, 3))), Tensor(np.ones((3, 3, 4))))

    def test_broadcast_suffix_and_scalar(self):
        a = Tensor(np.ones((4, 3)))
        np.testing.assert_array_equal(ad.add(a, Tensor([1.0, 2.0, 3.0])).data,
                                      np.ones((4, 3)) + np.array([1.0, 2.0, 3.0]))
        np.testing.assert_array_equal(ad.add(a, 2.0).data, 3 * np.ones((4, 3)))

    def test_broadcast_rejects_fancier_cases(self):
        with pytest.raises(ValueError):
            ad.add(Tensor(np.ones((4, 1))), Tensor(np.ones(3)))

    def test_log_domain_error(self):
        with pytest.raises(ValueError):
            ad.log(Tensor([1.0, 0.0]))

    def test_div_by_zero(self):
        with pytest.raises(ZeroDivisionError):
            ad.div(Tensor([1.0]), Tensor([0.0]))

    def test_nonfinite_surfaced_at_producing_op(self):
        with pytest.raises(NonFiniteError):
            ad.exp(Tensor([1000.0]))

    def test_nonfinite_checks_can_be_disabled(self):
        ad.set_finite_checks(False)
        try:
            out = ad.exp(Tensor([1000.0]))
            assert np.isinf(out.data[0])
        finally:
            ad.set_finite_checks(True)

    def test_logsumexp_matches_numpy(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((5, 4))
        out = ad.logsumexp(Tensor(a), axis=1)
        expected = np.log(np.sum(np.exp(a), axis=1))
        np.testing.assert_allclose(out.data, expected, rtol=1e-12)

    def test_pairwise_sq_dists_values(self):
        x = np.array([[0.0, 0.0], [1.0, 1.0]])
        c = np.array([[0.0, 1.0]])
        out = ad.pairwise_sq_dists(Tensor(x), c)
        np.testing.assert_allclose(out.data, [[1.0], [1.0]])


class TestBackward:
    def test_sum_gradient_is_ones(self):
        theta = Tensor(np.arange(5.0), requires_grad=True)
        grads = backward(ad.tsum(theta))
        np.testing.assert_array_equal(grads[theta], np.ones(5))

    def test_quadratic_gradient_is_theta(self):
        rng = np.random.default_rng(2)
        theta = make_param(rng, (6,))
        grads = backward(ad.mul(0.5, ad.tsum(ad.square(theta))))
        np.testing.assert_allclose(grads[theta], theta.data, rtol=1e-12)

    def test_x_tanh_x_matches_central_difference(self):
        x = Tensor(0.7, requires_grad=True)
        grads = backward(ad.mul(x, ad.tanh(x)))
        h = 1e-5
        fd = ((0.7 + h) * np.tanh(0.7 + h) - (0.7 - h) * np.tanh(0.7 - h)) / (2 * h)
        assert abs(grads[x] - fd) / abs(fd) <= 1e-6

    def test_two_layer_relu_net_finite_differences(self):
        rng = np.random.default_rng(3)
        w1, b1 = make_param(rng, (4, 8), 0.5), make_param(rng, (8,), 0.1)
        w2, b2 = make_param(rng, (8, 1), 0.5), make_param(rng, (1,), 0.1)
        x = rng.standard_normal((10, 4))
        y = rng.standard_normal(10)

        def loss():
            h = ad.relu(ad.add(ad.matmul(Tensor(x), w1), b1))
            pred = ad.reshape(ad.add(ad.matmul(h, w2), b2), (10,))
            return ad.tsum(ad.square(ad.sub(pred, Tensor(y))))

        check_gradients(loss, [w1, b1, w2, b2], rtol=1e-5)

    def test_non_scalar_root_rejected(self):
        t = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError):
            backward(ad.exp(t))

    def test_unreachable_parameter_gets_zeros(self):
        a = Tensor(1.0, requires_grad=True)
        b = Tensor(2.0, requires_grad=True)
        grads = backward(ad.square(a), params=[a, b])
        assert grads[b].shape == b.shape
        np.testing.assert_array_equal(grads[b], 0.0)

    def test_backward_deterministic(self):
        def run():
            rng = np.random.default_rng(11)
            w = Tensor(rng.standard_normal((5, 5)), requires_grad=True)
            x = Tensor(rng.standard_normal((3, 5)))
            loss = ad.tsum(ad.tanh(ad.matmul(x, w)))
            return backward(loss)[w]

        g1, g2 = run(), run()
        np.testing.assert_array_equal(g1, g2)

    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_random_composition_finite_differences(self, seed):
        """Every differentiable op in a random composition passes the
        central-difference check at h=1e-5 on O(1) inputs."""
        rng = np.random.default_rng(seed)
        a = make_param(rng, (3, 4), 0.8)
        b = make_param(rng, (4,), 0.8)
        c = make_param(rng, (4, 2), 0.8)

        def loss():
            h = ad.add(ad.matmul(ad.tanh(a), c), 0.3)           # (3, 2)
            h = ad.mul(ad.sigmoid(h), ad.softplus(h))
            h2 = ad.concat([h, ad.square(h)], axis=1)           # (3, 4)
            h3 = ad.div(ad.exp(ad.mul(0.1, h2)), ad.add(ad.softplus(b), 1.0))
            s = ad.logsumexp(h3, axis=1)
            return ad.tmean(ad.mul(s, s))

        check_gradients(loss, [a, b, c], rtol=1e-5)

    def test_slicing_concat_reshape_gradients(self):
        rng = np.random.default_rng(7)
        a = make_param(rng, (6, 3))

        def loss():
            top = a[:2, :]
            rest = a[2:, :]
            glued = ad.concat([top, ad.mul(rest, 2.0)], axis=0)
            return ad.tsum(ad.square(ad.reshape(glued, (18,))))

        check_gradients(loss, [a], rtol=1e-6)

    def test_pairwise_sq_dists_gradient(self):
        rng = np.random.default_rng(8)
        x = make_param(rng, (5, 3))
        centers = rng.standard_normal((4, 3))

        def loss():
            k = ad.exp(ad.neg(ad.pairwise_sq_dists(x, centers)))
            return ad.tsum(ad.mul(k, rng_weights))

        rng_weights = rng.standard_normal((5, 4))
        check_gradients(loss, [x], rtol=1e-5)

    def test_digamma_lgamma_gradients(self):
        rng = np.random.default_rng(9)
        x = Tensor(np.abs(rng.standard_normal(4)) + 0.5, requires_grad=True)

        def loss():
            return ad.tsum(ad.add(ad.digamma(x), ad.lgamma(x)))

        check_gradients(loss, [x], rtol=1e-5)

    def test_clip_min_gradient_masks_clipped_entries(self):
        x = Tensor([0.5, 2.0], requires_grad=True)
        grads = backward(ad.tsum(ad.clip_min(x, 1.0)))
        np.testing.assert_array_equal(grads[x], [0.0, 1.0])

    def test_matmul_3d_gradients(self):
        rng = np.random.default_rng(10)
        w = make_param(rng, (4, 3))
        batch = rng.standard_normal((5, 2, 4))

        def loss():
            return ad.tsum(ad.square(ad.matmul(Tensor(batch), w)))

        check_gradients(loss, [w], rtol=1e-5)


class TestDetach:
    def test_values_identical(self):
        x = Tensor([1.0, -2.0, 3.0], requires_grad=True)
        d = ad.detach(x)
        np.testing.assert_array_equal(d.data, x.data)
        assert not d.requires_grad

    def test_product_with_detached_copy(self):
        """loss = sum(detach(x) * x) must have gradient detach(x), not 2x."""
        x = Tensor([1.0, -2.0, 3.0], requires_grad=True)
        loss = ad.tsum(ad.mul(ad.detach(x), x))
        grads = backward(loss)
        np.testing.assert_array_equal(grads[x], x.data)

    def test_detached_branch_contributes_zero_gradient(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        loss = ad.tsum(ad.square(ad.detach(ad.exp(x))))
        grads = backward(loss, params=[x])
        np.testing.assert_array_equal(grads[x], 0.0)


class TestGaussianSample:
    def test_zero_std_returns_mean(self):
        rng = np.random.default_rng(0)
        mean = Tensor([1.0, -1.0])
        out = ad.gaussian_sample((5, 2), mean, std=np.zeros(2), rng=rng)
        np.testing.assert_array_equal(out.data, np.broadcast_to(mean.data, (5, 2)))

    def test_clt_bound_on_sample_mean(self):
        rng = np.random.default_rng(1)
        out = ad.gaussian_sample((100_000,), Tensor(3.0), std=Tensor(1.0), rng=rng)
        assert abs(out.data.mean() - 3.0) <= 4 * 1.0 / np.sqrt(100_000)

    def test_gradient_to_mean_is_one(self):
        rng = np.random.default_rng(2)
        mean = Tensor(np.zeros(3), requires_grad=True)
        out = ad.gaussian_sample((7, 3), mean, log_std=Tensor(np.zeros(3)), rng=rng)
        grads = backward(ad.tsum(out))
        np.testing.assert_array_equal(grads[mean], 7 * np.ones(3))

    def test_gradient_flows_to_std_not_noise(self):
        rng = np.random.default_rng(3)
        log_std = Tensor(np.zeros(2), requires_grad=True)
        out = ad.gaussian_sample((50, 2), Tensor(np.zeros(2)), log_std=log_std, rng=rng)
        grads = backward(ad.tsum(out), params=[log_std])
        assert grads[log_std].shape == (2,)  # eps itself is a constant

    def test_negative_std_rejected(self):
        with pytest.raises(ValueError):
            ad.gaussian_sample((2,), Tensor(0.0), std=Tensor(-1.0),
                               rng=np.random.default_rng(0))

    def test_reproducible_given_seed(self):
        a = ad.gaussian_sample((4,), Tensor(0.0), std=Tensor(1.0),
                               rng=np.random.default_rng(42))
        b = ad.gaussian_sample((4,), Tensor(0.0), std=Tensor(1.0),
                               rng=np.random.default_rng(42))
        np.testing.assert_array_equal(a.data, b.data)


class TestSplitRng:
    def test_streams_are_independent_and_deterministic(self):
        s1 = ad.split_rng(np.random.default_rng(5), 3)
        s2 = ad.split_rng(np.random.default_rng(5), 3)
        for a, b in zip(s1, s2):
            np.testing.assert_array_equal(a.standard_normal(4), b.standard_normal(4))
        draws = [s.standard_normal(4) for s in ad.split_rng(np.random.default_rng(5), 3)]
        assert not np.allclose(draws[0], draws[1])
