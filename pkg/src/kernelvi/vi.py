"""Training loop: KL estimation through the fitted ratio, ELBO assembly,
reparameterized gradients, adaptive contrast, and a first-order optimizer.

The KL between the sampler q and the prior p is estimated with the
reverse ratio trick: fit r = p/q (numerator = prior samples, denominator
= posterior samples, both detached), then average -log r over posterior
samples whose gradient path stays open. Only the evaluation points carry
gradients; the fitted coefficients are constants, which is exactly the
identity that the true KL gradient does not flow through the ratio
function.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import NonFiniteError, Tensor
from .density_ratio import KernelConfig, fit_ratio, evaluate_ratio_tensor

__all__ = [
    "KiviConfig",
    "ElboEstimate",
    "Trace",
    "estimate_kl",
    "elbo_step",
    "analytic_vi_step",
    "adaptive_contrast_step",
    "Adam",
    "Sgd",
    "make_optimizer",
    "schedule_factor",
    "optimize",
]

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class KiviConfig:
    """Hyperparameters of one training run."""

    n_p: int = 100               # prior samples per iteration
    n_q: int = 100               # posterior samples per iteration
    m_reconstruction: int = 100  # samples for the reconstruction term
    kernel: KernelConfig = field(default_factory=KernelConfig)
    optimizer: str = "adam"
    learning_rate: float = 0.001
    n_iters: int = 1000
    batch_size: int | None = None
    seed: int = 0
    reverse_trick: bool = True
    kl_eval_fresh: bool = False  # evaluate the KL on an independent batch
    kl_per_layer: bool = False   # factorized posteriors: one fit per block
    lr_schedule: dict | None = None  # {"kind": "step"|"hyperbolic", ...}

    def __post_init__(self):
        if min(self.n_p, self.n_q, self.m_reconstruction) < 1:
            raise ValueError("n_p, n_q and M must all be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.n_iters < 1:
            raise ValueError("n_iters must be >= 1")


@dataclass
class ElboEstimate:
    elbo: float
    reconstruction: float
    kl: float

    def __post_init__(self):
        # stored identity, exact: elbo = reconstruction - kl
        if self.elbo != self.reconstruction - self.kl:
            raise ValueError("elbo must equal reconstruction - kl exactly")


def _kl_from_samples(z_p: np.ndarray, z_q_fit: np.ndarray, z_q_eval: Tensor,
                     kernel: KernelConfig, reverse_trick: bool) -> Tensor:
    """Tape-attached KL estimate given already-drawn sample sets.

    ``z_q_fit`` is the detached posterior batch used as fitting input;
    ``z_q_eval`` the tape-attached evaluation batch (usually the same
    draws).
    """
    if reverse_trick:
        model = fit_ratio(num_samples=z_p, den_samples=z_q_fit, config=kernel)
        log_r = ad.log(evaluate_ratio_tensor(model, z_q_eval))
        return ad.neg(ad.tmean(log_r))
    model = fit_ratio(num_samples=z_q_fit, den_samples=z_p, config=kernel)
    log_r = ad.log(evaluate_ratio_tensor(model, z_q_eval))
    return ad.tmean(log_r)


def estimate_kl(posterior, prior_sampler, config: KiviConfig, rng) -> Tensor:
    """KL( q || p ) estimate as a scalar tensor with gradients to q's parameters.

    Draws fresh prior and posterior batches, fits the ratio on detached
    copies, and evaluates at tape-attached posterior samples (the same
    batch by default; an independent one when ``kl_eval_fresh``).
    """
    z_p = np.asarray(prior_sampler(config.n_p, rng), dtype=np.float64)
    z_q = posterior.sample(config.n_q, rng).samples
    if config.kl_eval_fresh:
        z_eval = posterior.sample(config.n_q, rng).samples
    else:
        z_eval = z_q
    return _kl_from_samples(z_p, z_q.data.copy(), z_eval,
                            config.kernel, config.reverse_trick)


def _posterior_kl(model, posterior, config: KiviConfig, rng,
                  z_flat: Tensor, blocks: list | None) -> Tensor:
    """KL term for a drawn batch; per-layer mode fits one ratio per block."""
    if not config.kl_per_layer or blocks is None:
        z_p = model.sample_prior(config.n_p, rng)
        return _kl_from_samples(z_p, z_flat.data.copy(), z_flat,
                                config.kernel, config.reverse_trick)
    total = None
    offset = 0
    streams = ad.split_rng(rng, len(blocks))
    for block, stream in zip(blocks, streams):
        size = block.data[0].size
        flat = z_flat[:, offset:offset + size]
        z_p = stream.standard_normal((config.n_p, size))
        part = _kl_from_samples(z_p, flat.data.copy(), flat,
                                config.kernel, config.reverse_trick)
        total = part if total is None else ad.add(total, part)
        offset += size
    return total


def elbo_step(model, posterior, data_batch, config: KiviConfig, rng):
    """One objective evaluation: returns (ElboEstimate, gradients).

    Fresh prior and posterior samples every call. The posterior batch
    serves both the KL (first n_q draws; detached copy for fitting,
    attached for evaluation) and the reconstruction (first M draws).
    Gradients cover the posterior parameters and any model-side
    parameters.
    """
    n_draw = max(config.n_q, config.m_reconstruction)
    blocks = None
    if hasattr(posterior, "sample_weights"):
        blocks, z_all = posterior.sample_weights(n_draw, rng)
    else:
        z_all = posterior.sample(n_draw, rng).samples

    z_q = z_all if config.n_q == n_draw else z_all[:config.n_q, :]
    kl_t = _posterior_kl(model, posterior, config, rng, z_q,
                         blocks if config.kl_per_layer else None)
    extra = model.extra_kl()
    if extra is not None:
        kl_t = ad.add(kl_t, extra)

    loglik = None
    if data_batch is not None:
        z_m = z_all if config.m_reconstruction == n_draw else z_all[:config.m_reconstruction, :]
        loglik = model.log_likelihood(z_m, data_batch)

    if loglik is not None:
        recon_t = ad.tmean(loglik)
        loss = ad.sub(kl_t, recon_t)
        recon_v = float(recon_t.data)
    else:
        loss = kl_t
        recon_v = 0.0

    params = list(posterior.parameters()) + list(model.parameters())
    grads = ad.backward(loss, params=params)
    kl_v = float(kl_t.data)
    return ElboEstimate(elbo=recon_v - kl_v, reconstruction=recon_v, kl=kl_v), grads


def analytic_vi_step(model, posterior, data_batch, config: KiviConfig, rng):
    """Plain reparameterized VI for tractable posteriors (baselines).

    ELBO = E_q[ log p(x|z) + log p(z) - log q(z) ], all terms Monte Carlo
    with the posterior's own log-density.
    """
    result = posterior.sample(config.n_q, rng)
    if result.log_density is None:
        raise ValueError("analytic VI requires a tractable posterior")
    z, logq = result.samples, result.log_density
    terms = ad.sub(model.log_prior(z), logq)
    loglik = model.log_likelihood(z[:config.m_reconstruction, :], data_batch) \
        if data_batch is not None else None
    kl_v = float(ad.neg(ad.tmean(terms)).data)
    objective = ad.tmean(terms)
    recon_v = 0.0
    if loglik is not None:
        recon_t = ad.tmean(loglik)
        objective = ad.add(objective, recon_t)
        recon_v = float(recon_t.data)
    extra = model.extra_kl()
    if extra is not None:
        objective = ad.sub(objective, extra)
        kl_v += float(extra.data)
    loss = ad.neg(objective)
    params = list(posterior.parameters()) + list(model.parameters())
    grads = ad.backward(loss, params=params)
    return ElboEstimate(elbo=recon_v - kl_v, reconstruction=recon_v, kl=kl_v), grads


def adaptive_contrast_step(model, amortized_posterior, x_batch,
                           config: KiviConfig, rng):
    """Objective against a moment-matched Gaussian helper distribution.

    The ELBO is rewritten as E_q[ -log r_a(z|x) + log p(x, z) ] minus
    KL(q || r_a) with r_a the factorized Gaussian matching the batch mean
    and std of q's samples; the residual KL is estimated on standardized
    samples against N(0, I), the regime where the ratio fit is most
    accurate.
    """
    x = np.asarray(x_batch, dtype=np.float64)
    if x.shape[0] < 2:
        raise ValueError("adaptive contrast needs a batch of at least 2 points")
    z = amortized_posterior.sample_given(x, rng).samples          # (B, d)
    d = z.shape[1]

    mu_r = z.data.mean(axis=0)
    sd_r = np.maximum(z.data.std(axis=0, ddof=1), 1e-6)
    if np.any(z.data.std(axis=0, ddof=1) == 0.0):
        raise ValueError("degenerate batch: zero std in some latent dimension")

    # first term: -log r_a(z) + log p(x, z), Monte Carlo over the batch
    scaled = ad.div(ad.sub(z, Tensor(mu_r)), Tensor(sd_r))
    neg_log_r = ad.add(ad.mul(ad.tsum(ad.square(scaled), axis=1), 0.5),
                       float(np.sum(np.log(sd_r)) + 0.5 * d * LOG_2PI))
    log_joint = ad.add(model.log_likelihood(z, x_batch), model.log_prior(z))
    first = ad.tmean(ad.add(neg_log_r, log_joint))

    # second term: KL between standardized samples and N(0, I)
    z_std = scaled
    z_p = rng.standard_normal((config.n_p, d))
    residual_kl = _kl_from_samples(z_p, z_std.data.copy(), z_std,
                                   config.kernel, config.reverse_trick)

    objective = ad.sub(first, residual_kl)
    loss = ad.neg(objective)
    params = list(amortized_posterior.parameters()) + list(model.parameters())
    grads = ad.backward(loss, params=params)
    kl_v = float(residual_kl.data)
    first_v = float(first.data)
    return ElboEstimate(elbo=first_v - kl_v, reconstruction=first_v, kl=kl_v), grads


# ---------------------------------------------------------------------------
# optimizer and loop


class Adam:
    """First-order adaptive-moment ascent/descent on parameter tensors."""

    def __init__(self, params, lr: float = 0.001, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros(p.shape) for p in self.params]
        self.v = [np.zeros(p.shape) for p in self.params]
        self.t = 0

    def step(self, grads: dict, lr_factor: float = 1.0) -> None:
        self.t += 1
        lr_t = (self.lr * lr_factor * math.sqrt(1 - self.beta2 ** self.t)
                / (1 - self.beta1 ** self.t))
        for i, p in enumerate(self.params):
            g = grads.get(p)
            if g is None:
                continue
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            p.data = p.data - lr_t * self.m[i] / (np.sqrt(self.v[i]) + self.eps)


class Sgd:
    def __init__(self, params, lr: float = 0.001):
        self.params = list(params)
        self.lr = lr

    def step(self, grads: dict, lr_factor: float = 1.0) -> None:
        for p in self.params:
            g = grads.get(p)
            if g is not None:
                p.data = p.data - self.lr * lr_factor * g


def make_optimizer(name: str, params, lr: float):
    if name == "adam":
        return Adam(params, lr=lr)
    if name == "sgd":
        return Sgd(params, lr=lr)
    raise ValueError(f"unknown optimizer '{name}'")


def schedule_factor(schedule: dict | None, iteration: int) -> float:
    """Learning-rate multiplier at a (0-based) iteration."""
    if schedule is None:
        return 1.0
    kind = schedule.get("kind")
    if kind == "step":
        # decay by `factor` every `every` iterations
        return schedule["factor"] ** (iteration // schedule["every"])
    if kind == "hyperbolic":
        # t0 / (t0 + iteration), the linear-anneal rule used for the 2-D runs
        t0 = schedule.get("t0", 100.0)
        return t0 / (t0 + iteration)
    raise ValueError(f"unknown schedule kind '{kind}'")


@dataclass
class Trace:
    iterations: list = field(default_factory=list)
    elbo: list = field(default_factory=list)
    kl: list = field(default_factory=list)
    reconstruction: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)
    aborted: bool = False
    abort_reason: str | None = None

    def append(self, it: int, est: ElboEstimate, wall_ms: float) -> None:
        self.iterations.append(it)
        self.elbo.append(est.elbo)
        self.kl.append(est.kl)
        self.reconstruction.append(est.reconstruction)
        self.wall_ms.append(wall_ms)

    def __len__(self) -> int:
        return len(self.iterations)

    def write_csv(self, path) -> None:
        """Deterministic columns only; wall time goes in the timings file."""
        with open(path, "w") as fh:
            fh.write("iteration,elbo,kl,reconstruction\n")
            for i, e, k, r in zip(self.iterations, self.elbo, self.kl,
                                  self.reconstruction):
                fh.write(f"{i},{e!r},{k!r},{r!r}\n")

    def write_timings_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("iteration,wall_time_ms\n")
            for i, w in zip(self.iterations, self.wall_ms):
                fh.write(f"{i},{w:.3f}\n")


def optimize(step_fn, params, config: KiviConfig) -> Trace:
    """Run the gradient loop; returns the per-iteration trace.

    ``step_fn(iteration)`` must evaluate the objective and its gradients.
    A non-finite loss aborts the loop with the trace collected so far
    preserved and flagged.
    """
    optimizer = make_optimizer(config.optimizer, params, config.learning_rate)
    trace = Trace()
    for it in range(config.n_iters):
        t0 = time.perf_counter()
        try:
            est, grads = step_fn(it)
        except NonFiniteError as err:
            trace.aborted = True
            trace.abort_reason = f"iteration {it}: {err}"
            break
        if not (math.isfinite(est.elbo) and math.isfinite(est.kl)):
            trace.aborted = True
            trace.abort_reason = f"iteration {it}: non-finite objective"
            break
        optimizer.step(grads, lr_factor=schedule_factor(config.lr_schedule, it))
        trace.append(it, est, (time.perf_counter() - t0) * 1000.0)
    return trace
