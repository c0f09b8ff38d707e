"""Seeded randomness, array validation and summary statistics.

Vectors are 1-D float64 arrays, datasets are 2-D ``(n, d)`` float64 arrays.
Reductions use numpy's pairwise summation or ``math.fsum``; both have a
fixed evaluation order, so results never depend on scheduling.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateWeightsError, EmptyInputError, InvalidDimensionError

_U64 = 2**64


class RandomSource:
    """Counter-based random stream addressed by ``(seed, label path)``.

    Backed by the Philox counter generator. The Philox key is a hash of the
    seed and the label path, so a substream depends only on its address and
    never on how much the parent stream has been consumed.

    >>> a = RandomSource(7).spawn("omega")
    >>> b = RandomSource(7).spawn("omega")
    >>> bool((a.normal(3) == b.normal(3)).all())
    True
    """

    def __init__(self, seed: int, path: tuple[str, ...] = ()):
        seed = int(seed)
        if not 0 <= seed < _U64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        self.path = tuple(path)
        h = hashlib.blake2b(digest_size=16)
        h.update(seed.to_bytes(8, "little"))
        for label in self.path:
            h.update(b"\x00")
            h.update(label.encode("utf-8"))
        key = np.frombuffer(h.digest(), dtype="<u8").copy()
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def spawn(self, label: str) -> "RandomSource":
        return RandomSource(self.seed, self.path + (str(label),))

    def normal(self, size) -> np.ndarray:
        return self.generator.standard_normal(size)

    def uniform(self, size, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        return self.generator.uniform(low, high, size)

    def integers(self, high: int, size) -> np.ndarray:
        return self.generator.integers(0, high, size)

    def __repr__(self) -> str:
        return f"RandomSource(seed={self.seed}, path={'/'.join(self.path)!r})"


def standard_normal_vector(source: RandomSource, d: int) -> np.ndarray:
    if d < 1:
        raise InvalidDimensionError(f"dimension must be >= 1, got {d}")
    return source.normal(int(d))


def as_vector(x, d: int | None = None) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1 or v.size == 0:
        raise InvalidDimensionError(f"expected a nonempty 1-D vector, got shape {v.shape}")
    if d is not None and v.size != d:
        raise InvalidDimensionError(f"expected dimension {d}, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector entries must be finite")
    return v


def as_dataset(points, d: int | None = None) -> np.ndarray:
    """Validate and return an ``(n, d)`` float64 array.

    A 1-D input is read as ``n`` points in one dimension.
    """
    a = np.asarray(points, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2 or a.shape[0] == 0 or a.shape[1] == 0:
        raise EmptyInputError(f"dataset must be a nonempty (n, d) array, got shape {a.shape}")
    if d is not None and a.shape[1] != d:
        raise InvalidDimensionError(f"dataset dimension {a.shape[1]} does not match {d}")
    if not np.all(np.isfinite(a)):
        raise ValueError("dataset entries must be finite")
    return a


@dataclass(frozen=True)
class LabeledDataset:
    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        points = as_dataset(self.points)
        labels = np.asarray(self.labels, dtype=np.float64).reshape(-1)
        if labels.size != points.shape[0]:
            raise InvalidDimensionError(
                f"{points.shape[0]} points but {labels.size} labels"
            )
        if not np.all(np.isfinite(labels)):
            raise ValueError("labels must be finite")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class SummaryStats:
    count: int
    mean: float
    variance: float
    standard_error: float


def summarize(values: Sequence[float]) -> SummaryStats:
    """Mean, unbiased variance and standard error of ``values``.

    Uses the corrected two-pass algorithm: the second pass subtracts the
    rounding residue of the first, which keeps large-offset inputs such as
    ``1e9 + [1, 2, 3]`` exact. Variance is NaN for a single value.
    """
    x = np.asarray(values, dtype=np.float64).reshape(-1)
    n = x.size
    if n == 0:
        raise EmptyInputError("cannot summarize an empty sequence")
    mean = float(np.sum(x) / n)
    if n == 1:
        return SummaryStats(1, mean, math.nan, math.nan)
    dev = x - mean
    resid = float(np.sum(dev))
    ss = float(np.sum(dev * dev)) - resid * resid / n
    mean += resid / n
    var = max(ss / (n - 1), 0.0)
    return SummaryStats(n, mean, var, math.sqrt(var / n))


def weighted_mean(values: Sequence[float], weights: Sequence[float]) -> float:
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if v.size != w.size:
        raise InvalidDimensionError(f"{v.size} values but {w.size} weights")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    total = math.fsum(w)
    if not total > 0:
        raise DegenerateWeightsError("weights sum to zero")
    return math.fsum(v * w) / total


def combined_stderr(*errors: float) -> float:
    """Root-sum-square of independent standard errors."""
    return math.sqrt(math.fsum(e * e for e in errors))
