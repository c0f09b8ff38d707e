"""Closed-form kernels used as ground truth for every randomized estimate."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidDimensionError, SizeCapError
from .numerics import as_dataset, as_vector

KERNEL_KINDS = ("gaussian", "exponential")

PSD_SIZE_CAP = 64


@dataclass(frozen=True)
class KernelSpec:
    """A kernel kind with bandwidth ``scale``.

    gaussian:    exp(-||x1 - x2||^2 / (2 scale^2))
    exponential: exp(x1 . x2 / scale^2)
    """

    kind: str = "gaussian"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {KERNEL_KINDS}")
        scale = float(self.scale)
        if not (math.isfinite(scale) and scale > 0):
            raise ValueError(f"kernel scale must be positive and finite, got {self.scale}")
        object.__setattr__(self, "scale", scale)


def kernel_eval(spec: KernelSpec, x1, x2) -> float:
    a = as_vector(x1)
    b = as_vector(x2, a.size)
    s2 = spec.scale * spec.scale
    if spec.kind == "gaussian":
        diff = a - b
        return math.exp(-float(np.dot(diff, diff)) / (2.0 * s2))
    # elementwise products commute and the summation order is fixed: exactly symmetric
    return math.exp(float(np.dot(a, b)) / s2)


def _gram_arrays(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    s2 = spec.scale * spec.scale
    if spec.kind == "gaussian":
        diff = a[:, None, :] - b[None, :, :]
        return np.exp(-np.einsum("ijk,ijk->ij", diff, diff) / (2.0 * s2))
    return np.exp(np.einsum("ik,jk->ij", a, b) / s2)


def gram(spec: KernelSpec, a, b) -> np.ndarray:
    """Matrix with entry ``(i, j) = kernel_eval(spec, a[i], b[j])``."""
    a = as_dataset(a)
    b = as_dataset(b)
    if a.shape[1] != b.shape[1]:
        raise InvalidDimensionError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return _gram_arrays(spec, a, b)


def kernel_pairs(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise kernel values ``K(a[i], b[i])`` for equal-length arrays."""
    s2 = spec.scale * spec.scale
    if spec.kind == "gaussian":
        diff = a - b
        return np.exp(-np.einsum("ij,ij->i", diff, diff) / (2.0 * s2))
    return np.exp(np.einsum("ij,ij->i", a, b) / s2)


def kernel_diagonal(spec: KernelSpec, a: np.ndarray) -> np.ndarray:
    if spec.kind == "gaussian":
        return np.ones(a.shape[0])
    return np.exp(np.einsum("ij,ij->i", a, a) / (spec.scale * spec.scale))


def psd_check(spec: KernelSpec, a) -> float:
    """Smallest eigenvalue of the Gram matrix of ``a`` with itself."""
    a = as_dataset(a)
    if a.shape[0] > PSD_SIZE_CAP:
        raise SizeCapError(f"psd_check supports at most {PSD_SIZE_CAP} points, got {a.shape[0]}")
    g = _gram_arrays(spec, a, a)
    return float(np.linalg.eigvalsh(0.5 * (g + g.T))[0])
