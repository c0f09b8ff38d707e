"""Kernel-value estimates and the fast kernel estimator with precomputed feature sums."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FeatureOverflowError, InvalidDimensionError
from .features import FeatureRepresentation, feature_products
from .kernels import KernelSpec, gram
from .numerics import LabeledDataset, RandomSource, as_vector, summarize
from .sampling import PsiSampler, WeightedOmegas, check_sampler_rep


@dataclass(frozen=True)
class KernelValueEstimate:
    mean: float
    standard_error: float
    k: int
    strategy: str


def weighted_products(rep: FeatureRepresentation, draws: WeightedOmegas, x1, x2) -> np.ndarray:
    """Per-draw importance-sampled integrand ``weight * phi(x1, w) * phi(x2, w)``."""
    return draws.weights * feature_products(rep, x1, x2, draws.omegas)


def is_kernel_estimate(
    rep: FeatureRepresentation,
    sampler: PsiSampler,
    x1,
    x2,
    k: int,
    source: RandomSource,
) -> KernelValueEstimate:
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    check_sampler_rep(sampler, rep)
    stats = summarize(weighted_products(rep, sampler.sample(source, k), x1, x2))
    return KernelValueEstimate(stats.mean, stats.standard_error, int(k), sampler.strategy)


@dataclass(frozen=True)
class PrecomputedSummary:
    """Feature sums ``s_j = sum_i phi(x_i, w_j) y_i`` for a fixed set of weighted omegas."""

    rep: FeatureRepresentation
    omegas: np.ndarray
    weights: np.ndarray
    sums: np.ndarray

    @property
    def k(self) -> int:
        return self.sums.shape[0]


_ROW_CHUNK = 1 << 22


def build_summary(
    rep: FeatureRepresentation, samples: WeightedOmegas, data: LabeledDataset
) -> PrecomputedSummary:
    """One pass over the dataset; costs O(k n d) once."""
    omegas = rep.check_omegas(samples.omegas)
    k = omegas.shape[0]
    if k == 0:
        raise ValueError("need at least one omega sample")
    points = data.points
    if points.shape[1] != rep.d:
        raise InvalidDimensionError(f"data dimension {points.shape[1]} does not match {rep.d}")
    try:
        rep.check_points(points)
    except FeatureOverflowError as exc:
        raise FeatureOverflowError(
            f"data point {exc.index}: {exc}", norm_ratio=exc.norm_ratio, index=exc.index
        ) from exc
    sums = np.zeros(k)
    step = max(1, _ROW_CHUNK // k)
    for start in range(0, points.shape[0], step):
        block = slice(start, start + step)
        sums += data.labels[block] @ rep.phi_matrix(points[block], omegas)
    if not np.all(np.isfinite(sums)):
        raise FeatureOverflowError("non-finite precomputed feature sum")
    return PrecomputedSummary(rep, omegas, np.asarray(samples.weights, dtype=np.float64), sums)


def query_terms(summary: PrecomputedSummary, x) -> np.ndarray:
    x = as_vector(x, summary.rep.d)
    phi = summary.rep.phi_matrix(x.reshape(1, -1), summary.omegas)[0]
    return summary.weights * phi * summary.sums


def query(summary: PrecomputedSummary, x) -> float:
    """Estimate of ``sum_i K(x, x_i) y_i`` in O(k d), independent of the dataset size.

    The sum is correctly rounded (``math.fsum``), hence independent of order.
    """
    return math.fsum(query_terms(summary, x)) / summary.k


def query_bootstrap_se(
    summary: PrecomputedSummary, x, source: RandomSource, n_boot: int = 200
) -> float:
    """Bootstrap standard error of :func:`query` over resampled omega terms."""
    terms = query_terms(summary, x)
    k = terms.size
    means = np.array([terms[source.integers(k, k)].mean() for _ in range(n_boot)])
    return float(np.std(means, ddof=1))


def naive_ke(spec: KernelSpec, data: LabeledDataset, x) -> float:
    """Exact kernel estimator ``sum_i K(x, x_i) y_i`` in linear time."""
    x = as_vector(x, data.points.shape[1])
    return math.fsum(gram(spec, x.reshape(1, -1), data.points)[0] * data.labels)
