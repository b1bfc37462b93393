"""Independent ground-truth machinery for verification.

Everything here deliberately avoids the code paths it is used to check:
the brute-force ratio fit solves the full stationarity system in extended
precision instead of the reduced closed form, KLs come from analytic
formulas or quadrature, and the HMC sampler provides reference posterior
draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from mpmath import mp, mpf, matrix as mp_matrix, lu_solve as mp_lu_solve
from mpmath import exp as mp_exp

__all__ = [
    "analytic_gaussian_kl",
    "quadrature_kl_1d",
    "gamma_log_density",
    "brute_force_ulsif",
    "HmcConfig",
    "HmcResult",
    "hmc_sample",
]


# ---------------------------------------------------------------------------
# KL oracles


def analytic_gaussian_kl(mu1, sd1, mu2, sd2) -> float:
    """KL( N(mu1, diag sd1^2) || N(mu2, diag sd2^2) ), diagonal Gaussians."""
    mu1, sd1 = np.atleast_1d(np.asarray(mu1, float)), np.atleast_1d(np.asarray(sd1, float))
    mu2, sd2 = np.atleast_1d(np.asarray(mu2, float)), np.atleast_1d(np.asarray(sd2, float))
    if np.any(sd1 <= 0) or np.any(sd2 <= 0):
        raise ValueError("standard deviations must be positive")
    var_ratio = (sd1 / sd2) ** 2
    return float(0.5 * np.sum(var_ratio + ((mu2 - mu1) / sd2) ** 2
                              - 1.0 + 2.0 * np.log(sd2 / sd1)))


def quadrature_kl_1d(density_q, density_p, grid) -> float:
    """Trapezoid-rule KL(q || p) = int q log(q/p) over a 1-D grid.

    ``density_q`` and ``density_p`` are callables evaluated on the grid;
    the grid must cover essentially all of q's mass. Points where q is
    (numerically) zero contribute nothing; p must be positive wherever q
    is not.
    """
    grid = np.asarray(grid, dtype=np.float64)
    q = np.asarray(density_q(grid), dtype=np.float64)
    p = np.asarray(density_p(grid), dtype=np.float64)
    support = q > 0.0
    if np.any(p[support] <= 0.0):
        raise ValueError("density_p non-positive on the support of q")
    integrand = np.zeros_like(q)
    integrand[support] = q[support] * (np.log(q[support]) - np.log(p[support]))
    return float(np.trapezoid(integrand, grid))


def default_quadrature_grid(mean: float, std: float, span: float = 12.0,
                            n: int = 2 ** 15 + 1) -> np.ndarray:
    return np.linspace(mean - span * std, mean + span * std, n)


def gamma_log_density(x, shape_a: float, rate_b: float) -> np.ndarray:
    """Shape-rate Gamma log-density, for quadrature oracles."""
    from scipy.special import gammaln

    x = np.asarray(x, dtype=np.float64)
    out = np.full_like(x, -np.inf)
    pos = x > 0
    out[pos] = (shape_a * np.log(rate_b) - gammaln(shape_a)
                + (shape_a - 1.0) * np.log(x[pos]) - rate_b * x[pos])
    return out


# ---------------------------------------------------------------------------
# brute-force uLSIF: full stationarity system, extended precision


def brute_force_ulsif(num_samples, den_samples, sigma: float, lam: float,
                      dps: int = 60):
    """Minimize the empirical ratio objective by solving the full
    (n_den + n_num)-dimensional first-order system directly.

    The joint system's matrix is the objective's Hessian,
    (1/n_den) G[:, :n_den] G[:n_den, :] + lam G with G the Gram matrix over
    all centers. G is positive definite for distinct points but its float64
    condition number is astronomically large in low dimensions, so the
    solve runs in extended precision (mpmath); the result is the exact
    minimizer, independent of the reduced closed form used by fit_ratio.
    """
    if lam <= 0:
        raise ValueError(f"lam must be positive (system singular at 0), got {lam}")
    num = np.asarray(num_samples, dtype=np.float64)
    den = np.asarray(den_samples, dtype=np.float64)
    n_den, n_num = den.shape[0], num.shape[0]
    n = n_den + n_num
    pts = np.vstack([den, num])

    old_dps = mp.dps
    mp.dps = dps
    try:
        coords = [[mpf(float(v)) for v in row] for row in pts]
        two_s2 = 2 * mpf(float(sigma)) ** 2
        lam_mp = mpf(float(lam))
        gram = mp_matrix(n, n)
        for i in range(n):
            gram[i, i] = mpf(1)
            for j in range(i + 1, n):
                d2 = sum((a - b) ** 2 for a, b in zip(coords[i], coords[j]))
                gram[i, j] = gram[j, i] = mp_exp(-d2 / two_s2)
        hess = mp_matrix(n, n)
        for i in range(n):
            for j in range(i, n):
                acc = mpf(0)
                for k in range(n_den):
                    acc += gram[i, k] * gram[k, j]
                hess[i, j] = hess[j, i] = acc / n_den + lam_mp * gram[i, j]
        rhs = mp_matrix(n, 1)
        for i in range(n):
            acc = mpf(0)
            for j in range(n_den, n):
                acc += gram[i, j]
            rhs[i] = acc / n_num
        sol = mp_lu_solve(hess, rhs)
        alpha = np.array([float(sol[i]) for i in range(n_den)])
        beta = np.array([float(sol[i]) for i in range(n_den, n)])
    finally:
        mp.dps = old_dps
    return alpha, beta


# ---------------------------------------------------------------------------
# Hamiltonian Monte Carlo with dual-averaging step-size adaptation


@dataclass
class HmcConfig:
    n_chains: int = 4
    n_iters: int = 200
    n_leapfrog: int = 10
    initial_step_size: float = 0.001
    target_accept: float = 0.8
    burn_in: int | None = None  # default: half of n_iters
    divergence_threshold: float = 1000.0
    # dual-averaging constants (standard published defaults)
    da_gamma: float = 0.05
    da_t0: float = 10.0
    da_kappa: float = 0.75

    def __post_init__(self):
        if self.n_chains < 1 or self.n_iters < 1 or self.n_leapfrog < 1:
            raise ValueError("chain/iteration/leapfrog counts must be >= 1")
        if self.initial_step_size <= 0:
            raise ValueError("initial step size must be positive")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target acceptance must lie in (0, 1)")
        if self.burn_in is not None and not 0 <= self.burn_in < self.n_iters:
            raise ValueError("burn_in must lie in [0, n_iters)")


@dataclass
class HmcResult:
    samples: np.ndarray          # (n_chains * kept, d), merged by chain index
    accept_rate: float           # post burn-in average
    n_divergent: int
    final_step_sizes: np.ndarray  # per chain
    chain_means: np.ndarray = field(repr=False, default=None)


def _reasonable_step_sizes(log_density_and_grad, q, eps0, rng_eps):
    """Initial step-size search: double or halve per chain until a single
    leapfrog step's acceptance probability crosses 1/2 (the standard
    initialization of dual-averaging adaptation)."""
    C, dim = q.shape
    eps = np.full(C, eps0)
    logp, grad = log_density_and_grad(q)
    p0 = rng_eps.standard_normal((C, dim))

    def accept_logprob(step):
        with np.errstate(over="ignore", invalid="ignore"):
            p = p0 + 0.5 * step[:, None] * grad
            q1 = q + step[:, None] * p
            logp1, grad1 = log_density_and_grad(q1)
            p = p + 0.5 * step[:, None] * grad1
            delta = (logp1 - 0.5 * np.sum(p * p, axis=1)) - \
                    (logp - 0.5 * np.sum(p0 * p0, axis=1))
        return np.where(np.isfinite(delta), delta, -np.inf)

    direction = np.where(accept_logprob(eps) > math.log(0.5), 1.0, -1.0)
    for _ in range(60):
        candidate = eps * np.power(2.0, direction)
        keep_going = np.where(direction > 0,
                              accept_logprob(candidate) > math.log(0.5),
                              accept_logprob(eps) <= math.log(0.5))
        if not np.any(keep_going):
            break
        eps = np.where(keep_going, candidate, eps)
    return eps


def hmc_sample(log_density_and_grad, dim: int, config: HmcConfig,
               rng: np.random.Generator, initial: np.ndarray | None = None) -> HmcResult:
    """Standard HMC: momentum resampling, leapfrog, Metropolis accept.

    ``log_density_and_grad`` maps a (n_chains, dim) position block to
    (log-density (n_chains,), gradient (n_chains, dim)); chains advance in
    lockstep but are statistically independent, each driven by its own rng
    stream. Step sizes start from the configured value, pass through the
    standard crossing-1/2 doubling search, then adapt per chain by dual
    averaging during burn-in and are frozen afterwards. Divergent
    trajectories (energy error above the threshold) are rejected and
    counted, not fatal.
    """
    C, L = config.n_chains, config.n_leapfrog
    burn = config.burn_in if config.burn_in is not None else config.n_iters // 2
    streams = rng.spawn(C)
    if initial is None:
        q = np.stack([s.standard_normal(dim) for s in streams])
    else:
        q = np.array(initial, dtype=np.float64).reshape(C, dim).copy()

    # pre-draw per-chain randomness so chains are reproducible independently
    momenta = np.stack([s.standard_normal((config.n_iters, dim)) for s in streams])
    unifs = np.stack([s.uniform(size=config.n_iters) for s in streams])

    eps = _reasonable_step_sizes(log_density_and_grad, q,
                                 config.initial_step_size, rng.spawn(1)[0])
    mu = np.log(10.0 * eps)
    log_eps_bar = np.log(eps)
    h_bar = np.zeros(C)

    logp, grad = log_density_and_grad(q)
    kept = []
    n_divergent = 0
    accepted_post = 0
    proposals_post = 0

    for it in range(config.n_iters):
        p0 = momenta[:, it, :]
        h0 = -logp + 0.5 * np.sum(p0 * p0, axis=1)

        with np.errstate(over="ignore", invalid="ignore"):
            q_new, p_new = q.copy(), p0.copy()
            g = grad
            p_new = p_new + 0.5 * eps[:, None] * g
            for step in range(L):
                q_new = q_new + eps[:, None] * p_new
                logp_new, g = log_density_and_grad(q_new)
                if step < L - 1:
                    p_new = p_new + eps[:, None] * g
            p_new = p_new + 0.5 * eps[:, None] * g

            h1 = -logp_new + 0.5 * np.sum(p_new * p_new, axis=1)
            delta_h = h1 - h0
        divergent = ~np.isfinite(delta_h) | (delta_h > config.divergence_threshold)
        n_divergent += int(divergent.sum())
        with np.errstate(invalid="ignore", over="ignore"):
            accept_prob = np.where(divergent, 0.0,
                                   np.exp(np.minimum(0.0, np.nan_to_num(-delta_h))))
            accept = unifs[:, it] < accept_prob
            q = np.where(accept[:, None], q_new, q)
            logp = np.where(accept, logp_new, logp)
            grad = np.where(accept[:, None], g, grad)

        if it < burn:
            m = it + 1
            eta = 1.0 / (m + config.da_t0)
            h_bar = (1 - eta) * h_bar + eta * (config.target_accept - accept_prob)
            log_eps = mu - np.sqrt(m) / config.da_gamma * h_bar
            w = m ** (-config.da_kappa)
            log_eps_bar = w * log_eps + (1 - w) * log_eps_bar
            eps = np.exp(log_eps)
            if it == burn - 1:
                eps = np.exp(log_eps_bar)  # freeze at the averaged step size
        else:
            kept.append(q.copy())
            accepted_post += int(accept.sum())
            proposals_post += C

    # merged by chain index: chain 0's draws first, then chain 1, ...
    samples = (np.stack(kept, axis=1).reshape(-1, dim) if kept
               else np.empty((0, dim)))
    rate = accepted_post / proposals_post if proposals_post else 0.0
    return HmcResult(samples=samples,
                     accept_rate=float(rate),
                     n_divergent=n_divergent,
                     final_step_sizes=eps.copy(),
                     chain_means=samples.reshape(C, -1, dim).mean(axis=1) if len(samples) else None)
