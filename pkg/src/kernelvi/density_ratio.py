"""Closed-form RKHS density-ratio estimation.

Fits r(z) = numerator-density / denominator-density from samples of both
distributions by least-squares importance fitting with an RBF kernel and
an RKHS-norm penalty. The squared loss is integrated against the
DENOMINATOR distribution, which makes the regularized problem quadratic
with the closed-form minimizer

    beta  = 1 / (lam * n_num) * ones(n_num)                 (numerator centers)
    alpha = -(1 / (lam * n_den * n_num))
            * (K_den / n_den + lam I)^{-1} K_{den,num} ones  (denominator centers)

so the fitted function is r(z) = sum_i alpha_i k(z_i^den, z)
+ sum_j beta_j k(z_j^num, z), clipped below at a small positive floor
before any logarithm is taken.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import autodiff as ad
from .autodiff import Tensor

__all__ = [
    "KernelConfig",
    "RatioModel",
    "DegenerateSamplesError",
    "FactorizationError",
    "median_bandwidth",
    "rbf_gram",
    "fit_ratio",
    "evaluate_ratio",
    "evaluate_ratio_tensor",
    "empirical_objective",
    "objective_gradients",
]

DEFAULT_CLIP = 1e-8  # largest of the searched floors; the log never sees <= 0


class DegenerateSamplesError(ValueError):
    """All pairwise distances are zero; no meaningful bandwidth exists."""


class FactorizationError(RuntimeError):
    """The SPD solve failed; the regularization is too small for float64."""


@dataclass
class KernelConfig:
    """Hyperparameters of one ratio fit.

    ``bandwidth=None`` selects the median heuristic over the union of both
    sample sets. ``lam`` is the RKHS-norm regularization coefficient, and
    ``clip`` the positive floor applied to every evaluation.
    """

    lam: float = 0.001
    clip: float = DEFAULT_CLIP
    bandwidth: float | None = None

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if self.clip <= 0:
            raise ValueError(f"clip must be positive, got {self.clip}")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")


@dataclass
class RatioModel:
    """A fitted ratio function: centers, coefficients, bandwidth, clip floor."""

    den_centers: np.ndarray  # (n_den, d)
    num_centers: np.ndarray  # (n_num, d)
    alpha: np.ndarray        # (n_den,)
    beta: np.ndarray         # (n_num,)
    bandwidth: float
    clip: float

    @property
    def dim(self) -> int:
        return self.den_centers.shape[1]


def _as_matrix(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D (n, d), got shape {arr.shape}")
    return arr


def _pairwise_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # expanded-norm identity, floored at 0 to absorb cancellation
    aa = np.sum(a * a, axis=1)[:, None]
    bb = np.sum(b * b, axis=1)[None, :]
    out = np.maximum(aa + bb - 2.0 * a @ b.T, 0.0)
    if a is b:
        np.fill_diagonal(out, 0.0)  # self-distances are exactly zero
    return out


def median_bandwidth(samples) -> float:
    """Median of all n(n-1)/2 pairwise Euclidean distances.

    Falls back to the smallest strictly positive distance when the median
    is zero (duplicated points); raises when every pair coincides.
    """
    s = _as_matrix(samples, "samples")
    n = s.shape[0]
    if n < 2:
        raise ValueError(f"median_bandwidth needs at least 2 samples, got {n}")
    d = np.sqrt(_pairwise_sq_dists(s, s))
    iu = np.triu_indices(n, k=1)
    pair = d[iu]
    med = float(np.median(pair))
    if med > 0.0:
        return med
    positive = pair[pair > 0.0]
    if positive.size == 0:
        raise DegenerateSamplesError("all samples identical; bandwidth undefined")
    return float(positive.min())


def rbf_gram(a, b, bandwidth: float) -> np.ndarray:
    """Gram matrix K[i, j] = exp(-||a_i - b_j||^2 / (2 sigma^2))."""
    a = _as_matrix(a, "a")
    b = _as_matrix(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if bandwidth <= 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    return np.exp(-_pairwise_sq_dists(a, b) / (2.0 * bandwidth * bandwidth))


def fit_ratio(num_samples, den_samples, config: KernelConfig) -> RatioModel:
    """Fit the closed-form ratio numerator/denominator from the two sample sets.

    The solve factorizes the SPD matrix K_den / n_den + lam I rather than
    inverting it. Fitting never touches the gradient tape: inputs are
    plain arrays (tensors are detached by the caller).
    """
    num = _as_matrix(num_samples, "num_samples")
    den = _as_matrix(den_samples, "den_samples")
    if num.shape[0] == 0 or den.shape[0] == 0:
        raise ValueError("fit_ratio: empty sample set")
    if num.shape[1] != den.shape[1]:
        raise ValueError(
            f"fit_ratio: dimension mismatch {num.shape[1]} vs {den.shape[1]}")
    n_num, n_den = num.shape[0], den.shape[0]
    lam = config.lam
    sigma = config.bandwidth
    if sigma is None:
        sigma = median_bandwidth(np.vstack([num, den]))

    k_den = rbf_gram(den, den, sigma)
    k_cross = rbf_gram(den, num, sigma)
    beta = np.full(n_num, 1.0 / (lam * n_num))
    system = k_den / n_den + lam * np.eye(n_den)
    try:
        factor = cho_factor(system, lower=True)
    except np.linalg.LinAlgError as err:
        raise FactorizationError(
            f"SPD factorization failed (lam={lam} too small or samples "
            f"degenerate): {err}") from err
    alpha = -cho_solve(factor, k_cross @ np.ones(n_num)) / (lam * n_den * n_num)
    return RatioModel(den_centers=den.copy(), num_centers=num.copy(),
                      alpha=alpha, beta=beta, bandwidth=float(sigma),
                      clip=config.clip)


def evaluate_ratio(model: RatioModel, points) -> np.ndarray:
    """Evaluate the fitted ratio at the given points, clipped below at the floor."""
    pts = _as_matrix(points, "points")
    if pts.shape[1] != model.dim:
        raise ValueError(f"points have dim {pts.shape[1]}, model has {model.dim}")
    raw = (rbf_gram(pts, model.den_centers, model.bandwidth) @ model.alpha
           + rbf_gram(pts, model.num_centers, model.bandwidth) @ model.beta)
    return np.maximum(raw, model.clip)


def evaluate_ratio_tensor(model: RatioModel, points: Tensor) -> Tensor:
    """Tape-aware evaluation: gradient flows through the POINT argument only.

    Centers and coefficients enter as constants, realizing the rule that
    the KL gradient ignores the fitted ratio function's own dependence on
    the variational parameters.
    """
    two_s2 = 2.0 * model.bandwidth * model.bandwidth
    k_den = ad.exp(ad.div(ad.neg(ad.pairwise_sq_dists(points, model.den_centers)), two_s2))
    k_num = ad.exp(ad.div(ad.neg(ad.pairwise_sq_dists(points, model.num_centers)), two_s2))
    raw = ad.add(ad.matmul(k_den, Tensor(model.alpha[:, None])),
                 ad.matmul(k_num, Tensor(model.beta[:, None])))
    return ad.clip_min(ad.reshape(raw, (points.shape[0],)), model.clip)


def _grams(alpha, beta, num, den, sigma):
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    num = _as_matrix(num, "num_samples")
    den = _as_matrix(den, "den_samples")
    if alpha.shape != (den.shape[0],) or beta.shape != (num.shape[0],):
        raise ValueError("coefficient lengths do not match sample counts")
    k_den = rbf_gram(den, den, sigma)
    k_cross = rbf_gram(den, num, sigma)
    k_num = rbf_gram(num, num, sigma)
    return alpha, beta, k_den, k_cross, k_num


def empirical_objective(alpha, beta, num_samples, den_samples, sigma, lam) -> float:
    """Regularized empirical squared-loss objective (constant term dropped).

    Value = 1/(2 n_den) ||K_den a + K_cross b||^2
          - 1/n_num (a' K_cross 1 + b' K_num 1)
          + lam/2 (a' K_den a + 2 a' K_cross b + b' K_num b).

    Used by tests and the brute-force oracle only.
    """
    alpha, beta, k_den, k_cross, k_num = _grams(
        alpha, beta, num_samples, den_samples, sigma)
    n_den, n_num = k_den.shape[0], k_num.shape[0]
    at_den = k_den @ alpha + k_cross @ beta          # fitted values at den points
    sq = 0.5 * float(at_den @ at_den) / n_den
    lin = float(alpha @ (k_cross @ np.ones(n_num)) + beta @ (k_num @ np.ones(n_num))) / n_num
    norm = float(alpha @ (k_den @ alpha) + 2.0 * alpha @ (k_cross @ beta)
                 + beta @ (k_num @ beta))
    return sq - lin + 0.5 * lam * norm


def objective_gradients(alpha, beta, num_samples, den_samples, sigma, lam):
    """Partial derivatives of the empirical objective w.r.t. (alpha, beta)."""
    alpha, beta, k_den, k_cross, k_num = _grams(
        alpha, beta, num_samples, den_samples, sigma)
    n_den, n_num = k_den.shape[0], k_num.shape[0]
    at_den = k_den @ alpha + k_cross @ beta
    ones = np.ones(n_num)
    g_alpha = (k_den @ at_den / n_den - k_cross @ ones / n_num
               + lam * (k_den @ alpha + k_cross @ beta))
    g_beta = (k_cross.T @ at_den / n_den - k_num @ ones / n_num
              + lam * (k_num @ beta + k_cross.T @ alpha))
    return g_alpha, g_beta
