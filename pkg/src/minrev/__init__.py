"""Minimum-reversion multivariate time series.

Each component of the series drifts toward the current cross-sectional
minimum, producing co-integrated dynamics with an extra downward drift.
The package covers exact simulation, closed-form two-population long-run
behaviour with Monte Carlo cross-checks, Gaussian maximum-likelihood
estimation with BIC model comparison, and a Poisson common-age-effect
mortality fitter that extracts the period-effect panels the time-series
model consumes.
"""

from minrev.backend import BACKEND as KERNEL_BACKEND
from minrev.backend import USING_COMPILED_KERNELS
from minrev.params import (
    ModelParams,
    SharingScheme,
    State,
    effective_spread_s,
    n_free_parameters,
    noise_covariance,
    params_from_json,
    params_to_json,
    validate_params,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "KERNEL_BACKEND",
    "USING_COMPILED_KERNELS",
    "ModelParams",
    "SharingScheme",
    "State",
    "validate_params",
    "noise_covariance",
    "effective_spread_s",
    "n_free_parameters",
    "params_to_json",
    "params_from_json",
]
