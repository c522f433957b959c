"""Skew diffusion toolkit: exact-step simulation, density expansions,
Gaussian bound certificates, and convergence experiments.

The package is organized in layers.  `numerics` holds quadrature and RNG
plumbing, `model` the coefficient catalog and assumption checks,
`kernels` the closed-form skew transition family, `parametrix` the
continuous-time density expansion, `scheme` the Euler-type scheme and
its discrete expansion, and `experiments` the reporting harnesses that
the `skewdiff` command line wraps.
"""

from __future__ import annotations

from .experiments import (ExperimentSpec, OccupationReport, RateReport,
                          TwoSidedReport, occupation_time_check, slope_fit,
                          test_function, time_derivative_bound,
                          two_sided_bound_experiment, weak_error_density,
                          weak_error_functional)
from .kernels import (DriftedSkewParam, FrozenParam, drifted_skew_cdf,
                      drifted_skew_density, frozen_density,
                      frozen_density_dx, local_time_mean, sample_skew_step,
                      skew_bm_density)
from .model import (Coefficients, ConditionReport, MODEL_BUILDERS, TimeGrid,
                    ValidationReport, make_model, validate_assumptions)
from .numerics import (NumericFailure, QuadConfig, QuadratureError,
                       RngStream, beta_product_bound, gauss_legendre_panel,
                       gaussian_kernel, mittag_leffler)
from .parametrix import (BoundCertificate, ContinuousSeries, SeriesConfig,
                         SeriesResult, convolve, density_series,
                         fit_gaussian_envelope, gaussian_bound_fit,
                         kernel_H, proxy_density, time_lipschitz_check)
from .scheme import (DiscreteSeries, DiscreteSeriesConfig, MCDensityResult,
                     PathSample, SchemeSeriesResult, chain_density,
                     discrete_convolve, discrete_kernel_HN,
                     mc_density_estimate, mc_terminal_samples,
                     one_step_density, scheme_density_series, simulate_path)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # model
    "Coefficients", "TimeGrid", "ConditionReport", "ValidationReport",
    "validate_assumptions", "make_model", "MODEL_BUILDERS",
    # numerics
    "QuadConfig", "QuadratureError", "NumericFailure", "RngStream",
    "gaussian_kernel", "gauss_legendre_panel", "mittag_leffler",
    "beta_product_bound",
    # kernels
    "FrozenParam", "DriftedSkewParam", "skew_bm_density", "frozen_density",
    "frozen_density_dx", "drifted_skew_density", "drifted_skew_cdf",
    "sample_skew_step", "local_time_mean",
    # parametrix
    "SeriesConfig", "SeriesResult", "BoundCertificate", "ContinuousSeries",
    "proxy_density", "kernel_H", "convolve", "density_series",
    "fit_gaussian_envelope", "gaussian_bound_fit", "time_lipschitz_check",
    # scheme
    "PathSample", "DiscreteSeriesConfig", "SchemeSeriesResult",
    "MCDensityResult", "DiscreteSeries", "simulate_path",
    "mc_terminal_samples", "one_step_density", "chain_density",
    "discrete_kernel_HN", "discrete_convolve", "scheme_density_series",
    "mc_density_estimate",
    # experiments
    "ExperimentSpec", "RateReport", "TwoSidedReport", "OccupationReport",
    "test_function", "slope_fit", "weak_error_functional",
    "weak_error_density", "two_sided_bound_experiment",
    "occupation_time_check", "time_derivative_bound",
]
