"""Variational posterior samplers.

Implicit families (noise-injection MLPs, matrix-multiplication networks)
produce samples with no tractable density; tractable baselines (mean-field
Gaussian, planar flow) additionally return the log-density of each sample.
All samplers are reparameterized: for a fixed noise draw the output is a
deterministic, differentiable function of the parameters.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

__all__ = [
    "SampleResult",
    "NoiseNetPosterior",
    "MmnnPosterior",
    "mmnn_forward",
    "MeanFieldGaussian",
    "PlanarFlowPosterior",
    "planar_log_det",
    "FactorizedBnnPosterior",
    "AmortizedGaussianPosterior",
]

LOG_2PI = math.log(2.0 * math.pi)


class SampleResult(NamedTuple):
    samples: Tensor              # (n, d), tape-attached
    log_density: Tensor | None   # (n,) for tractable families, else None


def _init_weight(rng, fan_in: int, fan_out: int) -> Tensor:
    return Tensor(rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in),
                  requires_grad=True)


def _init_bias(fan_out: int) -> Tensor:
    return Tensor(np.zeros(fan_out), requires_grad=True)


class NoiseNetPosterior:
    """Implicit sampler: an MLP applied to Gaussian input noise.

    ``mid_noise_after`` names a hidden layer (0-based) whose affine output
    receives additional Gaussian noise with trainable per-unit log
    variances; that layer is kept linear (no activation before or after
    the injection), matching the stochastic-network topology used for the
    logistic-regression posterior. With all noise forced to zero the
    sampler is a deterministic function of its parameters.
    """

    def __init__(self, noise_dim: int, hidden, out_dim: int, rng,
                 mid_noise_after: int | None = None,
                 output_bias: np.ndarray | None = None):
        self.noise_dim = int(noise_dim)
        self.dim = int(out_dim)
        widths = [self.noise_dim, *hidden, self.dim]
        self.weights = [_init_weight(rng, widths[i], widths[i + 1])
                        for i in range(len(widths) - 1)]
        self.biases = [_init_bias(w) for w in widths[1:]]
        if output_bias is not None:
            self.biases[-1] = Tensor(np.asarray(output_bias, float), requires_grad=True)
        self.mid_noise_after = mid_noise_after
        if mid_noise_after is not None:
            if not 0 <= mid_noise_after < len(hidden):
                raise ValueError(f"mid_noise_after={mid_noise_after} out of range")
            width = hidden[mid_noise_after]
            self.mid_log_var = Tensor(np.zeros(width), requires_grad=True)
        else:
            self.mid_log_var = None

    def parameters(self) -> list[Tensor]:
        params = [*self.weights, *self.biases]
        if self.mid_log_var is not None:
            params.append(self.mid_log_var)
        return params

    def sample(self, n: int, rng, zero_noise: bool = False) -> SampleResult:
        if n < 1:
            raise ValueError("n must be >= 1")
        eps = np.zeros((n, self.noise_dim)) if zero_noise else rng.standard_normal((n, self.noise_dim))
        h = Tensor(eps)
        n_layers = len(self.weights)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = ad.add(ad.matmul(h, w), b)
            last = i == n_layers - 1
            if self.mid_noise_after is not None and i == self.mid_noise_after:
                width = self.mid_log_var.shape[0]
                noise = np.zeros((n, width)) if zero_noise else rng.standard_normal((n, width))
                h = ad.add(h, ad.mul(ad.exp(ad.mul(self.mid_log_var, 0.5)), Tensor(noise)))
            elif not last:
                h = ad.relu(h)
        return SampleResult(h, None)


class MmnnPosterior:
    """Matrix-multiplication network sampler for large weight matrices.

    Each layer maps an M_in x N_in matrix X to relu(A_l X + B_l) A_r + B_r
    (the final layer stays linear). Modeling an M x N matrix from M0 x N0
    input noise needs M*M0 + M*N0 + N0*N + M*N parameters per layer instead
    of the M0*N0*M*N a fully-connected map would take.
    """

    def __init__(self, input_shape, layer_shapes, rng):
        self.input_shape = tuple(input_shape)
        self.layer_shapes = [tuple(s) for s in layer_shapes]
        if not self.layer_shapes:
            raise ValueError("at least one layer is required")
        self.layers = []
        m_in, n_in = self.input_shape
        for m_out, n_out in self.layer_shapes:
            a_l = Tensor(rng.standard_normal((m_out, m_in)) / np.sqrt(m_in),
                         requires_grad=True)
            b_l = Tensor(np.zeros((m_out, n_in)), requires_grad=True)
            a_r = Tensor(rng.standard_normal((n_in, n_out)) / np.sqrt(n_in),
                         requires_grad=True)
            b_r = Tensor(np.zeros((m_out, n_out)), requires_grad=True)
            expected = m_out * m_in + m_out * n_in + n_in * n_out + m_out * n_out
            actual = a_l.size + b_l.size + a_r.size + b_r.size
            if actual != expected:
                raise AssertionError(
                    f"layer parameter count {actual} != formula {expected}")
            self.layers.append((a_l, b_l, a_r, b_r))
            m_in, n_in = m_out, n_out
        self.out_shape = self.layer_shapes[-1]
        self.dim = self.out_shape[0] * self.out_shape[1]

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer]

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def sample_matrix(self, n: int, rng, zero_noise: bool = False) -> Tensor:
        """n output matrices, shape (n, M, N)."""
        m0, n0 = self.input_shape
        noise = np.zeros((n, m0, n0)) if zero_noise else rng.standard_normal((n, m0, n0))
        return mmnn_forward(self.layers, Tensor(noise))

    def sample(self, n: int, rng, zero_noise: bool = False) -> SampleResult:
        out = self.sample_matrix(n, rng, zero_noise=zero_noise)
        return SampleResult(ad.reshape(out, (n, self.dim)), None)


def mmnn_forward(layers, x0: Tensor) -> Tensor:
    """Run the alternating left/right matrix-multiplication layers.

    ``x0`` has shape (M0, N0) or (n, M0, N0); relu is applied between
    layers, never after the last.
    """
    h = x0
    n_layers = len(layers)
    for i, (a_l, b_l, a_r, b_r) in enumerate(layers):
        h = ad.add(ad.matmul(a_l, h), b_l)
        h = ad.add(ad.matmul(h, a_r), b_r)
        if i < n_layers - 1:
            h = ad.relu(h)
    return h


class MeanFieldGaussian:
    """Fully factorized Gaussian with trainable mean and log-std."""

    def __init__(self, dim: int, init_mean=None, init_log_std=None):
        self.dim = int(dim)
        mean = np.zeros(dim) if init_mean is None else np.asarray(init_mean, float)
        log_std = np.zeros(dim) if init_log_std is None else np.asarray(init_log_std, float)
        self.mean = Tensor(mean, requires_grad=True)
        self.log_std = Tensor(log_std, requires_grad=True)

    def parameters(self) -> list[Tensor]:
        return [self.mean, self.log_std]

    def sample(self, n: int, rng, zero_noise: bool = False) -> SampleResult:
        if zero_noise:
            eps = Tensor(np.zeros((n, self.dim)))
            z = ad.add(self.mean, ad.mul(ad.exp(self.log_std), eps))
        else:
            z = ad.gaussian_sample((n, self.dim), self.mean,
                                   log_std=self.log_std, rng=rng)
        return SampleResult(z, self.log_density(z))

    def log_density(self, z: Tensor) -> Tensor:
        std = ad.exp(self.log_std)
        scaled = ad.div(ad.sub(z, self.mean), std)
        quad = ad.tsum(ad.square(scaled), axis=1)
        return ad.sub(ad.mul(-0.5, quad),
                      ad.add(ad.tsum(self.log_std), 0.5 * self.dim * LOG_2PI))


def planar_log_det(u_hat: Tensor, w: Tensor, b: Tensor, z: Tensor) -> Tensor:
    """log |1 + u_hat' w h'(w'z + b)| per sample, h = tanh.

    ``u_hat`` must already carry the invertibility correction, which keeps
    the argument of the log strictly positive.
    """
    a = ad.add(ad.reshape(ad.matmul(z, ad.reshape(w, (w.shape[0], 1))), (z.shape[0],)), b)
    h_prime = ad.sub(1.0, ad.square(ad.tanh(a)))
    uw = ad.tsum(ad.mul(u_hat, w))
    return ad.log(ad.add(1.0, ad.mul(uw, h_prime)))


def _corrected_u(u: Tensor, w: Tensor) -> Tensor:
    # u_hat = u + (m(w'u) - w'u) w / ||w||^2,  m(x) = -1 + softplus(x)
    wu = ad.tsum(ad.mul(w, u))
    m = ad.add(-1.0, ad.softplus(wu))
    w_norm2 = ad.add(ad.tsum(ad.square(w)), 1e-12)
    return ad.add(u, ad.mul(ad.div(ad.sub(m, wu), w_norm2), w))


class PlanarFlowPosterior:
    """Standard Gaussian base pushed through K planar transforms.

    Each layer applies z -> z + u_hat h(w'z + b) with h = tanh and the
    canonical correction that keeps the map invertible, so the sample's
    log-density follows by accumulating the per-layer log-determinants.
    K = 0 is exactly the base Gaussian.
    """

    def __init__(self, dim: int, n_layers: int, rng):
        self.dim = int(dim)
        self.n_layers = int(n_layers)
        self.u = [Tensor(0.01 * rng.standard_normal(dim), requires_grad=True)
                  for _ in range(n_layers)]
        self.w = [Tensor(rng.standard_normal(dim) / np.sqrt(dim), requires_grad=True)
                  for _ in range(n_layers)]
        self.b = [Tensor(0.0, requires_grad=True) for _ in range(n_layers)]

    def parameters(self) -> list[Tensor]:
        return [*self.u, *self.w, *self.b]

    def sample(self, n: int, rng, zero_noise: bool = False) -> SampleResult:
        eps = np.zeros((n, self.dim)) if zero_noise else rng.standard_normal((n, self.dim))
        z = Tensor(eps)
        base_logq = -0.5 * np.sum(eps * eps, axis=1) - 0.5 * self.dim * LOG_2PI
        logq = Tensor(base_logq)
        for u, w, b in zip(self.u, self.w, self.b):
            u_hat = _corrected_u(u, w)
            # the log-determinant is evaluated at the layer INPUT z
            a = ad.add(ad.reshape(ad.matmul(z, ad.reshape(w, (self.dim, 1))), (n,)), b)
            h = ad.tanh(a)
            h_prime = ad.sub(1.0, ad.square(h))
            uw = ad.tsum(ad.mul(u_hat, w))
            logq = ad.sub(logq, ad.log(ad.add(1.0, ad.mul(uw, h_prime))))
            z = ad.add(z, ad.matmul(ad.reshape(h, (n, 1)),
                                    ad.reshape(u_hat, (1, self.dim))))
        return SampleResult(z, logq)


class FactorizedBnnPosterior:
    """Layerwise product of implicit samplers over a network's weights.

    Each layer has its own sampler producing (n, fan_in + 1, fan_out)
    weight blocks (bias row included). ``sample_weights`` returns both the
    per-layer blocks for the forward pass and the flattened concatenation
    used for a single joint ratio fit; a per-layer KL instead fits one
    ratio model per block.
    """

    def __init__(self, layer_samplers, weight_shapes):
        self.layer_samplers = list(layer_samplers)
        self.weight_shapes = [tuple(s) for s in weight_shapes]
        if len(self.layer_samplers) != len(self.weight_shapes):
            raise ValueError("one sampler per weight block required")
        for sampler, shape in zip(self.layer_samplers, self.weight_shapes):
            if sampler.dim != shape[0] * shape[1]:
                raise ValueError(
                    f"sampler dim {sampler.dim} != prod{shape}")
        self.block_dims = [a * b for a, b in self.weight_shapes]
        self.dim = sum(self.block_dims)

    def parameters(self) -> list[Tensor]:
        return [p for s in self.layer_samplers for p in s.parameters()]

    def sample_weights(self, n: int, rng, zero_noise: bool = False):
        """Returns ([(n, rows, cols) tensors], flat (n, total) tensor)."""
        streams = ad.split_rng(rng, len(self.layer_samplers))
        blocks, flats = [], []
        for sampler, shape, stream in zip(self.layer_samplers,
                                          self.weight_shapes, streams):
            flat = sampler.sample(n, stream, zero_noise=zero_noise).samples
            flats.append(flat)
            blocks.append(ad.reshape(flat, (n, *shape)))
        return blocks, ad.concat(flats, axis=1)

    def sample(self, n: int, rng, zero_noise: bool = False) -> SampleResult:
        _, flat = self.sample_weights(n, rng, zero_noise=zero_noise)
        return SampleResult(flat, None)


class AmortizedGaussianPosterior:
    """Per-datapoint Gaussian q(z | x) from an encoder MLP.

    With ``noise_dim == 0`` the head is a tractable diagonal Gaussian
    (mean and log-std per datapoint). A positive ``noise_dim`` injects
    Gaussian noise into the penultimate hidden layer instead, giving an
    implicit amortized family with no tractable density.
    """

    def __init__(self, data_dim: int, hidden, latent_dim: int, rng,
                 noise_dim: int = 0):
        self.data_dim = int(data_dim)
        self.dim = int(latent_dim)
        self.noise_dim = int(noise_dim)
        widths = [data_dim, *hidden]
        self.weights = [_init_weight(rng, widths[i], widths[i + 1])
                        for i in range(len(widths) - 1)]
        self.biases = [_init_bias(w) for w in widths[1:]]
        last = widths[-1]
        if self.noise_dim > 0:
            self.noise_proj = _init_weight(rng, self.noise_dim, last)
            self.head_w = _init_weight(rng, last, latent_dim)
            self.head_b = _init_bias(latent_dim)
            self.head_logstd_w = None
        else:
            self.noise_proj = None
            self.head_w = _init_weight(rng, last, latent_dim)
            self.head_b = _init_bias(latent_dim)
            self.head_logstd_w = _init_weight(rng, last, latent_dim)
            self.head_logstd_b = _init_bias(latent_dim)

    def parameters(self) -> list[Tensor]:
        params = [*self.weights, *self.biases, self.head_w, self.head_b]
        if self.noise_proj is not None:
            params.append(self.noise_proj)
        else:
            params.extend([self.head_logstd_w, self.head_logstd_b])
        return params

    def _trunk(self, x: np.ndarray) -> Tensor:
        h = Tensor(np.asarray(x, float))
        for w, b in zip(self.weights, self.biases):
            h = ad.relu(ad.add(ad.matmul(h, w), b))
        return h

    def sample_given(self, x_batch, rng) -> SampleResult:
        """One latent sample per datapoint, shape (batch, latent_dim)."""
        x = np.asarray(x_batch, float)
        h = self._trunk(x)
        if self.noise_proj is not None:
            eps = Tensor(rng.standard_normal((x.shape[0], self.noise_dim)))
            h = ad.relu(ad.add(h, ad.matmul(eps, self.noise_proj)))
            z = ad.add(ad.matmul(h, self.head_w), self.head_b)
            return SampleResult(z, None)
        mean = ad.add(ad.matmul(h, self.head_w), self.head_b)
        log_std = ad.add(ad.matmul(h, self.head_logstd_w), self.head_logstd_b)
        eps = Tensor(rng.standard_normal((x.shape[0], self.dim)))
        z = ad.add(mean, ad.mul(ad.exp(log_std), eps))
        quad = ad.tsum(ad.square(ad.div(ad.sub(z, mean), ad.exp(log_std))), axis=1)
        logq = ad.sub(ad.mul(-0.5, quad),
                      ad.add(ad.tsum(log_std, axis=1), 0.5 * self.dim * LOG_2PI))
        return SampleResult(z, logq)
