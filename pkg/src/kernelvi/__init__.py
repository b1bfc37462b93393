"""Implicit variational inference with closed-form kernel density-ratio
KL estimates, plus the samplers, target models and verification oracles
around it."""

from .autodiff import (Tensor, backward, detach, gaussian_sample,
                       set_finite_checks, split_rng)
from .density_ratio import (KernelConfig, RatioModel, empirical_objective,
                            evaluate_ratio, evaluate_ratio_tensor, fit_ratio,
                            median_bandwidth, rbf_gram)
from .experiments import (ConfigError, ExperimentConfig, RunReport, compare,
                          export_plotdata, run)
from .models import (AmortizedDecoderModel, BlrModel, BnnRegressionModel,
                     GaussianMixtureTarget, IsotropicGaussianTarget,
                     digamma, gamma_kl)
from .oracles import (HmcConfig, analytic_gaussian_kl, brute_force_ulsif,
                      hmc_sample, quadrature_kl_1d)
from .posteriors import (AmortizedGaussianPosterior, FactorizedBnnPosterior,
                         MeanFieldGaussian, MmnnPosterior, NoiseNetPosterior,
                         PlanarFlowPosterior, mmnn_forward, planar_log_det)
from .vi import (Adam, ElboEstimate, KiviConfig, Trace, adaptive_contrast_step,
                 analytic_vi_step, elbo_step, estimate_kl, optimize)

__version__ = "0.1.0"

__all__ = [
    "Tensor", "backward", "detach", "gaussian_sample", "set_finite_checks",
    "split_rng",
    "KernelConfig", "RatioModel", "median_bandwidth", "rbf_gram", "fit_ratio",
    "evaluate_ratio", "evaluate_ratio_tensor", "empirical_objective",
    "KiviConfig", "ElboEstimate", "Trace", "estimate_kl", "elbo_step",
    "analytic_vi_step", "adaptive_contrast_step", "optimize", "Adam",
    "NoiseNetPosterior", "MmnnPosterior", "mmnn_forward", "MeanFieldGaussian",
    "PlanarFlowPosterior", "planar_log_det", "FactorizedBnnPosterior",
    "AmortizedGaussianPosterior",
    "GaussianMixtureTarget", "IsotropicGaussianTarget", "BlrModel",
    "BnnRegressionModel", "AmortizedDecoderModel", "digamma", "gamma_kl",
    "HmcConfig", "hmc_sample", "analytic_gaussian_kl", "quadrature_kl_1d",
    "brute_force_ulsif",
    "ConfigError", "ExperimentConfig", "RunReport", "run", "compare",
    "export_plotdata",
]
