"""Random feature kernel estimates with optimal importance sampling.

Submodules
----------
numerics   seeded random streams and summary statistics
kernels    closed-form gaussian and exponential kernels
features   trig and positive_exp feature representations
sampling   optimal proposals: pool resampling, rejection, grid oracle
estimators importance-sampled kernel values and the fast kernel estimator
variance   expected sample variance, its optimum, bound and audits
harness    configuration, data and the command-line interface
"""

from .estimators import build_summary, is_kernel_estimate, naive_ke, query
from .features import FeatureRepresentation
from .kernels import KernelSpec, gram, kernel_eval
from .numerics import LabeledDataset, RandomSource, summarize
from .sampling import GridOracle, GridSpec, QEstimator, build_sampler
from .variance import (
    cauchy_schwarz_bound,
    empirical_expected_variance,
    equality_check,
    optimal_analysis,
    perturbation_audit,
    theoretical_optimal_variance,
)

__version__ = "0.1.0"

__all__ = [
    "FeatureRepresentation",
    "GridOracle",
    "GridSpec",
    "KernelSpec",
    "LabeledDataset",
    "QEstimator",
    "RandomSource",
    "build_sampler",
    "build_summary",
    "cauchy_schwarz_bound",
    "empirical_expected_variance",
    "equality_check",
    "gram",
    "is_kernel_estimate",
    "kernel_eval",
    "naive_ke",
    "optimal_analysis",
    "perturbation_audit",
    "query",
    "summarize",
    "theoretical_optimal_variance",
]
