"""Exact sampling from the Bingham distribution p(x) ∝ exp(x'Ax) on the
unit sphere.

The sampler rejects from a polynomial proposal q(x) ∝ (x'(I + D/n)x)^n whose
acceptance rate stays in [e^{-1}, e^{-1/2}] for every matrix and dimension
(n grows with the square of the spectral gap).  On top of it sits a small
posterior-inference application for the rank-one model Y = x x' + noise, and
a validation layer with independent quadrature oracles.

Typical use::

    import numpy as np
    from bingham_sampler import sample_bingham, SamplerConfig

    batch = sample_bingham(np.diag([0.0, 2.0, 5.0]), 1000,
                           SamplerConfig(seed=42))
    batch.samples           # (1000, 3), unit rows
    batch.total_acceptance_rate
"""

from .cdf import MarginalCDF, build_marginal, cdf_eval, invert_cdf
from .linalg import EigenDecomposition, SymmetricMatrix, eigendecompose, \
    quadratic_form, rotate
from .matrix_io import MatrixFile, MatrixFormatError, MatrixValidationError, \
    read_matrix, write_matrix
from .moments import MomentTable, gaussian_qf_moments, log_sphere_surface, \
    sphere_qf_expectation_log
from .posterior import Observation, PosteriorSummary, build_posterior, \
    generate_synthetic, mmse_estimate, posterior_sample
from .sampler import SampleBatch, SamplerConfig, SpectrumShift, \
    conditional_diag, log_accept_ratio, sample_bingham, sample_proposal, \
    shift_spectrum
from .validation import OracleCDF, RatioReport, acceptance_rate_check, \
    angular_gaussian_worst_ratio, ks_statistic, oracle_marginal_cdf, run_suite

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # linear algebra
    "SymmetricMatrix", "EigenDecomposition", "eigendecompose",
    "quadratic_form", "rotate",
    # moments and marginal CDF
    "MomentTable", "gaussian_qf_moments", "sphere_qf_expectation_log",
    "log_sphere_surface", "MarginalCDF", "build_marginal", "cdf_eval",
    "invert_cdf",
    # sampler
    "SpectrumShift", "SamplerConfig", "SampleBatch", "shift_spectrum",
    "conditional_diag", "sample_proposal", "log_accept_ratio",
    "sample_bingham",
    # posterior application
    "Observation", "PosteriorSummary", "build_posterior",
    "generate_synthetic", "posterior_sample", "mmse_estimate",
    # validation
    "OracleCDF", "RatioReport", "oracle_marginal_cdf", "ks_statistic",
    "acceptance_rate_check", "angular_gaussian_worst_ratio", "run_suite",
    # matrix files
    "MatrixFile", "MatrixFormatError", "MatrixValidationError",
    "read_matrix", "write_matrix",
]
