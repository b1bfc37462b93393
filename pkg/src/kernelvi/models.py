"""Target models: log-joints plus prior samplers.

Every model exposes the same surface to the training loop:

- ``latent_dim``: dimensionality of the latent vector z (flattened weights
  for the BNN),
- ``sample_prior(n, rng)``: n prior draws as a plain array,
- ``log_likelihood(z, batch)``: per-sample log p(data | z) on the tape,
  scaled to full-data size when minibatching; ``None`` when the model has
  no data term (density-approximation targets),
- ``log_prior(z)``: per-sample log p(z) on the tape,
- ``parameters()``: trainable model-side parameters (possibly empty),
- ``extra_kl()``: an analytic KL term to add to the estimated one (the
  Gamma precision posterior of the regression BNN), or ``None``.
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .special import digamma, trigamma  # noqa: F401  (re-exported)

__all__ = [
    "GaussianMixtureTarget",
    "IsotropicGaussianTarget",
    "BlrModel",
    "make_blr_data",
    "BnnRegressionModel",
    "gamma_kl",
    "bnn_gamma_elbo_terms",
    "AmortizedDecoderModel",
    "Standardizer",
    "load_regression_csv",
    "train_test_split",
    "digamma",
    "trigamma",
]

LOG_2PI = math.log(2.0 * math.pi)


class GaussianMixtureTarget:
    """1-D Gaussian mixture used directly as the distribution to approximate.

    There is no data term: the mixture plays the role of the prior, so the
    ELBO reduces to minus the KL from the variational sampler to the
    mixture.
    """

    def __init__(self, means=(-3.0, 3.0), stds=(1.0, 1.0), weights=(0.5, 0.5)):
        self.means = np.asarray(means, dtype=np.float64)
        self.stds = np.asarray(stds, dtype=np.float64)
        self.weights = np.asarray(weights, dtype=np.float64)
        if np.any(self.stds <= 0):
            raise ValueError("component stds must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-12 or np.any(self.weights < 0):
            raise ValueError("weights must be non-negative and sum to 1")
        self.latent_dim = 1

    def parameters(self):
        return []

    def sample_prior(self, n: int, rng) -> np.ndarray:
        comps = rng.choice(len(self.weights), size=n, p=self.weights)
        return (self.means[comps] + self.stds[comps] * rng.standard_normal(n))[:, None]

    def log_prior(self, z: Tensor) -> Tensor:
        cols = []
        zf = ad.reshape(z, (z.shape[0],))
        for w, m, s in zip(self.weights, self.means, self.stds):
            quad = ad.mul(ad.square(ad.sub(zf, m)), -0.5 / (s * s))
            const = math.log(w) - math.log(s) - 0.5 * LOG_2PI
            cols.append(ad.reshape(ad.add(quad, const), (z.shape[0], 1)))
        return ad.logsumexp(ad.concat(cols, axis=1), axis=1)

    def log_likelihood(self, z: Tensor, batch=None):
        return None

    def extra_kl(self):
        return None

    def log_density_np(self, grid: np.ndarray) -> np.ndarray:
        grid = np.asarray(grid, dtype=np.float64)
        comp = [w / (s * math.sqrt(2 * math.pi)) * np.exp(-0.5 * ((grid - m) / s) ** 2)
                for w, m, s in zip(self.weights, self.means, self.stds)]
        return np.sum(comp, axis=0)


class IsotropicGaussianTarget:
    """N(0, I_d) as the distribution to approximate (no data term).

    Used by the KL-only minimization experiments: the ELBO reduces to
    minus the KL from the sampler to this target.
    """

    def __init__(self, dim: int):
        self.latent_dim = int(dim)

    def parameters(self):
        return []

    def sample_prior(self, n: int, rng) -> np.ndarray:
        return rng.standard_normal((n, self.latent_dim))

    def log_prior(self, z: Tensor) -> Tensor:
        return ad.sub(ad.mul(ad.tsum(ad.square(z), axis=1), -0.5),
                      0.5 * self.latent_dim * LOG_2PI)

    def log_likelihood(self, z: Tensor, batch=None):
        return None

    def extra_kl(self):
        return None


# ---------------------------------------------------------------------------
# 2-D Bayesian logistic regression


def make_blr_data(rng, n: int = 200, box: float = 5.0):
    """Synthetic inputs uniform on [-box, box]^2, labels from a prior draw."""
    x = rng.uniform(-box, box, size=(n, 2))
    w_true = rng.standard_normal(2)
    probs = 1.0 / (1.0 + np.exp(-(x @ w_true)))
    y = (rng.uniform(size=n) < probs).astype(np.float64)
    return x, y, w_true


class BlrModel:
    """w ~ N(0, I_2), y_i ~ Bernoulli(sigmoid(w' x_i)); full-batch likelihood."""

    def __init__(self, x: np.ndarray, y: np.ndarray):
        self.x = np.asarray(x, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        if self.x.ndim != 2 or self.x.shape[1] != 2:
            raise ValueError("x must be (N, 2)")
        if set(np.unique(self.y)) - {0.0, 1.0}:
            raise ValueError("labels must be binary")
        self.latent_dim = 2

    def parameters(self):
        return []

    def sample_prior(self, n: int, rng) -> np.ndarray:
        return rng.standard_normal((n, 2))

    def log_likelihood(self, w: Tensor, batch=None) -> Tensor:
        # sum_i [ y_i eta_i - softplus(eta_i) ],  eta = w x'
        eta = ad.matmul(w, Tensor(self.x.T))                # (n, N)
        return ad.tsum(ad.sub(ad.mul(eta, Tensor(self.y)), ad.softplus(eta)), axis=1)

    def log_prior(self, w: Tensor) -> Tensor:
        return ad.sub(ad.mul(ad.tsum(ad.square(w), axis=1), -0.5), LOG_2PI)

    def extra_kl(self):
        return None

    def log_joint_np(self, w_grid: np.ndarray) -> np.ndarray:
        """Unnormalized log-posterior on plain arrays (plot grids, HMC checks)."""
        w_grid = np.asarray(w_grid, dtype=np.float64)
        eta = w_grid @ self.x.T
        ll = np.sum(self.y * eta - (np.maximum(eta, 0) + np.log1p(np.exp(-np.abs(eta)))),
                    axis=1)
        return ll - 0.5 * np.sum(w_grid ** 2, axis=1) - LOG_2PI

    def log_joint_and_grad(self, w_block: np.ndarray):
        """Vectorized (value, gradient) of the log-joint, for HMC chains."""
        t = Tensor(np.asarray(w_block, dtype=np.float64), requires_grad=True)
        lp = ad.add(self.log_likelihood(t), self.log_prior(t))
        root = ad.tsum(lp)  # chains are independent: d(sum)/dw = per-chain grads
        grads = ad.backward(root)
        return lp.data.copy(), grads[t]


# ---------------------------------------------------------------------------
# BNN regression with Gamma-precision observation noise


GAMMA_PRIOR_SHAPE = 6.0
GAMMA_PRIOR_RATE = 6.0


def gamma_kl(log_a: Tensor, log_b: Tensor,
             prior_shape: float = GAMMA_PRIOR_SHAPE,
             prior_rate: float = GAMMA_PRIOR_RATE) -> Tensor:
    """KL( Gamma(a, b) || Gamma(a0, b0) ), shape-rate parameterization.

    (a - a0) psi(a) - log G(a) + log G(a0) + a0 (log b - log b0) + a (b0 - b) / b
    """
    a = ad.exp(log_a)
    b = ad.exp(log_b)
    term1 = ad.mul(ad.sub(a, prior_shape), ad.digamma(a))
    term2 = ad.neg(ad.lgamma(a))
    term3 = math.lgamma(prior_shape)
    term4 = ad.mul(prior_shape, ad.sub(log_b, math.log(prior_rate)))
    term5 = ad.div(ad.mul(a, ad.sub(prior_rate, b)), b)
    return ad.add(ad.add(ad.add(term1, term2), ad.add(term3, term4)), term5)


def bnn_gamma_elbo_terms(y: np.ndarray, y_hat: Tensor, log_a: Tensor,
                         log_b: Tensor, scale: float = 1.0):
    """(expected log-likelihood term, gamma KL) for Gaussian noise with a
    Gamma(a, b) posterior on its precision.

    Per datapoint the precision integrates out analytically:
    0.5 (psi(a) - log b - (a/b)(y - y_hat)^2 - log 2pi). ``y_hat`` is
    (S, B) over S weight samples and a batch of size B; the result is
    averaged over both and multiplied by ``scale`` (N / batch size).
    """
    a = ad.exp(log_a)
    b = ad.exp(log_b)
    sq = ad.square(ad.sub(Tensor(np.asarray(y, float)), y_hat))   # (S, B)
    e_log_prec = ad.sub(ad.digamma(a), log_b)
    per_point = ad.mul(0.5, ad.sub(e_log_prec,
                                   ad.add(ad.mul(ad.div(a, b), sq), LOG_2PI)))
    return ad.mul(ad.tmean(per_point), scale), gamma_kl(log_a, log_b)


class BnnRegressionModel:
    """Feed-forward regression BNN: W ~ N(0, I) (bias rows included),
    y ~ N(f(x, W), 1/lambda) with lambda given a Gamma(6, 6) prior and a
    Gamma(a, b) variational posterior updated alongside the weights.

    Works in standardized feature/target space; ``predict`` un-standardizes.
    """

    def __init__(self, in_dim: int, hidden=(50,), init_log_a: float = None,
                 init_log_b: float = None):
        self.layer_dims = [int(in_dim), *map(int, hidden), 1]
        self.weight_shapes = [(self.layer_dims[i] + 1, self.layer_dims[i + 1])
                              for i in range(len(self.layer_dims) - 1)]
        self.block_dims = [r * c for r, c in self.weight_shapes]
        self.latent_dim = sum(self.block_dims)
        self.log_a = Tensor(math.log(GAMMA_PRIOR_SHAPE) if init_log_a is None else init_log_a,
                            requires_grad=True)
        self.log_b = Tensor(math.log(GAMMA_PRIOR_RATE) if init_log_b is None else init_log_b,
                            requires_grad=True)

    def parameters(self):
        return [self.log_a, self.log_b]

    def sample_prior(self, n: int, rng) -> np.ndarray:
        return rng.standard_normal((n, self.latent_dim))

    def unflatten(self, z: Tensor) -> list[Tensor]:
        """Split flat (S, D) weight samples into per-layer (S, rows, cols)."""
        blocks = []
        offset = 0
        for (rows, cols), size in zip(self.weight_shapes, self.block_dims):
            flat = z[:, offset:offset + size]
            blocks.append(ad.reshape(flat, (z.shape[0], rows, cols)))
            offset += size
        return blocks

    def forward(self, x: np.ndarray, weights: list[Tensor]) -> Tensor:
        """Network outputs, shape (S, B), for S weight samples on a batch."""
        x = np.asarray(x, dtype=np.float64)
        n_samples = weights[0].shape[0]
        h = Tensor(np.broadcast_to(x, (n_samples, *x.shape)).copy())
        n_layers = len(weights)
        for i, w in enumerate(weights):
            ones = Tensor(np.ones((n_samples, h.shape[1], 1)))
            h = ad.matmul(ad.concat([h, ones], axis=2), w)
            if i < n_layers - 1:
                h = ad.relu(h)
        return ad.reshape(h, (n_samples, x.shape[0]))

    def log_likelihood(self, z: Tensor, batch) -> Tensor:
        """Expected log-likelihood per weight sample, full-data scaled.

        ``batch`` is (x, y, scale); returns shape (S,).
        """
        x, y, scale = batch
        y_hat = self.forward(x, self.unflatten(z))
        a = ad.exp(self.log_a)
        b = ad.exp(self.log_b)
        sq = ad.square(ad.sub(Tensor(np.asarray(y, float)), y_hat))
        e_log_prec = ad.sub(ad.digamma(a), self.log_b)
        per_point = ad.mul(0.5, ad.sub(e_log_prec,
                                       ad.add(ad.mul(ad.div(a, b), sq), LOG_2PI)))
        return ad.mul(ad.tsum(per_point, axis=1), float(scale))

    def log_prior(self, z: Tensor) -> Tensor:
        return ad.sub(ad.mul(ad.tsum(ad.square(z), axis=1), -0.5),
                      0.5 * self.latent_dim * LOG_2PI)

    def extra_kl(self) -> Tensor:
        return gamma_kl(self.log_a, self.log_b)

    def predict(self, posterior, x_test: np.ndarray, y_test: np.ndarray,
                n_samples: int, rng, scaler: "Standardizer"):
        """Monte Carlo predictive mixture over W and precision draws.

        Returns (predictive mean, predictive variance, RMSE, mean test
        log-likelihood), all in the original (un-standardized) units. The
        test log-likelihood is a log-mean-exp over per-sample Gaussian
        likelihoods.
        """
        x_std = scaler.transform_x(x_test)
        blocks, _ = posterior.sample_weights(n_samples, rng)
        y_hat_std = self.forward(x_std, blocks).data       # (S, B)
        y_hat = scaler.untransform_y(y_hat_std)
        a, b = math.exp(self.log_a.item()), math.exp(self.log_b.item())
        lam = rng.gamma(shape=a, scale=1.0 / b, size=n_samples)
        noise_var = scaler.y_scale ** 2 / lam               # (S,)

        pred_mean = y_hat.mean(axis=0)
        pred_var = y_hat.var(axis=0) + noise_var.mean()
        rmse = float(np.sqrt(np.mean((pred_mean - y_test) ** 2)))
        # log p(y*) ~= logmeanexp_s log N(y* | y_hat_s, noise_var_s)
        log_comp = (-0.5 * (y_test[None, :] - y_hat) ** 2 / noise_var[:, None]
                    - 0.5 * np.log(2 * np.pi * noise_var)[:, None])
        m = log_comp.max(axis=0)
        test_ll = float(np.mean(m + np.log(np.mean(np.exp(log_comp - m), axis=0))))
        return pred_mean, pred_var, rmse, test_ll


# ---------------------------------------------------------------------------
# amortized decoder (local latent variables)


class AmortizedDecoderModel:
    """z ~ N(0, I), x ~ P(f(z)) with a small decoder MLP.

    ``output`` selects the observation distribution: "bernoulli" puts
    sigmoid outputs through independent Bernoullis, "gaussian" uses unit
    observation noise around the decoder mean.
    """

    def __init__(self, latent_dim: int, data_dim: int, hidden, rng,
                 output: str = "bernoulli"):
        if output not in ("bernoulli", "gaussian"):
            raise ValueError(f"unknown output distribution '{output}'")
        self.latent_dim = int(latent_dim)
        self.data_dim = int(data_dim)
        self.output = output
        widths = [latent_dim, *hidden, data_dim]
        self.weights = [Tensor(rng.standard_normal((widths[i], widths[i + 1]))
                               / np.sqrt(widths[i]), requires_grad=True)
                        for i in range(len(widths) - 1)]
        self.biases = [Tensor(np.zeros(w), requires_grad=True) for w in widths[1:]]

    def parameters(self):
        return [*self.weights, *self.biases]

    def sample_prior(self, n: int, rng) -> np.ndarray:
        return rng.standard_normal((n, self.latent_dim))

    def decode(self, z: Tensor) -> Tensor:
        h = z
        n_layers = len(self.weights)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = ad.add(ad.matmul(h, w), b)
            if i < n_layers - 1:
                h = ad.relu(h)
        return h

    def log_likelihood(self, z: Tensor, batch) -> Tensor:
        """Row i of ``batch`` pairs with latent sample i; shape (n,)."""
        x = np.asarray(batch, dtype=np.float64)
        f = self.decode(z)
        if self.output == "bernoulli":
            # sum_d [ x f - softplus(f) ]
            return ad.tsum(ad.sub(ad.mul(f, Tensor(x)), ad.softplus(f)), axis=1)
        resid = ad.sub(Tensor(x), f)
        return ad.sub(ad.mul(ad.tsum(ad.square(resid), axis=1), -0.5),
                      0.5 * self.data_dim * LOG_2PI)

    def log_prior(self, z: Tensor) -> Tensor:
        return ad.sub(ad.mul(ad.tsum(ad.square(z), axis=1), -0.5),
                      0.5 * self.latent_dim * LOG_2PI)

    def extra_kl(self):
        return None


# ---------------------------------------------------------------------------
# dataset plumbing


class Standardizer:
    """Zero-mean unit-variance scaling fit on the training split."""

    def __init__(self, x_train: np.ndarray, y_train: np.ndarray):
        self.x_mean = x_train.mean(axis=0)
        self.x_scale = x_train.std(axis=0)
        self.x_scale[self.x_scale == 0.0] = 1.0
        self.y_mean = float(y_train.mean())
        self.y_scale = float(y_train.std()) or 1.0

    def transform_x(self, x):
        return (np.asarray(x, float) - self.x_mean) / self.x_scale

    def transform_y(self, y):
        return (np.asarray(y, float) - self.y_mean) / self.y_scale

    def untransform_y(self, y_std):
        return np.asarray(y_std, float) * self.y_scale + self.y_mean


def load_regression_csv(path, has_header: bool = False):
    """Last column is the target; everything before it is the feature block."""
    data = np.genfromtxt(path, delimiter=",", skip_header=1 if has_header else 0,
                         dtype=np.float64)
    if data.ndim != 2 or data.shape[1] < 2:
        raise ValueError(f"expected a 2-D table with >= 2 columns in {path}")
    if np.any(~np.isfinite(data)):
        raise ValueError(f"non-finite entries in {path}")
    return data[:, :-1], data[:, -1]


def train_test_split(x, y, rng, train_fraction: float = 0.9):
    """Seeded shuffle, then a train/test cut at the given fraction."""
    n = x.shape[0]
    perm = rng.permutation(n)
    cut = int(round(train_fraction * n))
    tr, te = perm[:cut], perm[cut:]
    return x[tr], y[tr], x[te], y[te]
