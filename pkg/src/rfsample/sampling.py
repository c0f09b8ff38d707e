"""Optimal importance-sampling proposals for random feature estimates.

For datasets D1, D2 the data-driven factor is

    q_hat(w) = sqrt(mean_{x in D1} phi(x, w)^2 * mean_{x in D2} phi(x, w)^2)

and the optimal proposal has density p_Omega(w) q_hat(w) / Z with
Z = E_Omega[q_hat]. Each sampler returns draws together with importance
weights p_Omega / p_Psi = Z / q_hat(w).

Strategies
----------
naive
    Draws from the base distribution, all weights 1.
pool_resampler
    Multinomial resampling of a fixed pool of base draws with probability
    proportional to q_hat. Carries an O(1/pool_size) bias.
rejection
    Exact draws obtained by accepting base draws with probability q_hat / M,
    where M is 1.5 times the largest q_hat seen in a build pool. Draws where
    q_hat exceeds M are under-represented.
grid_oracle
    Tabulates p_Omega q_hat at the midpoints of a regular grid (at most two
    omega coordinates) and samples nodes by inverse CDF. The node set is a
    midpoint quadrature rule for the base distribution, which is spectrally
    accurate for Gaussian-weighted analytic integrands, so the reweighted
    estimates are unbiased to quadrature precision and the zero-variance
    case stays exactly zero-variance. ``jitter=True`` instead spreads each
    draw uniformly over its cell and evaluates q_hat at the jittered point.

In every strategy Z is estimated independently of the draws: from a second
pool for pool_resampler and rejection, by grid quadrature for grid_oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateQError,
    EnvelopeError,
    GridDimensionError,
    InvalidDimensionError,
    OutsideSupportError,
)
from .features import TWO_PI, FeatureRepresentation
from .numerics import RandomSource, summarize

STRATEGIES = ("naive", "pool_resampler", "rejection", "grid_oracle")
OPTIMAL_STRATEGIES = STRATEGIES[1:]

MAX_CONSECUTIVE_REJECTIONS = 10**6
ENVELOPE_FACTOR = 1.5


@dataclass(frozen=True)
class QEstimator:
    """Data-driven q_hat built from empirical samples of the two input marginals."""

    rep: FeatureRepresentation
    d1: np.ndarray
    d2: np.ndarray
    shared: bool = field(init=False)

    def __post_init__(self):
        d1 = self.rep.check_points(self.d1)
        d2 = d1 if self.d2 is self.d1 else self.rep.check_points(self.d2)
        shared = d2 is d1 or (d1.shape == d2.shape and bool(np.array_equal(d1, d2)))
        object.__setattr__(self, "d1", d1)
        object.__setattr__(self, "d2", d1 if shared else d2)
        object.__setattr__(self, "shared", shared)

    def q_hat(self, w) -> np.ndarray:
        m1 = self.rep.mean_sq_phi(self.d1, w)
        if self.shared:
            return m1
        return np.sqrt(m1 * self.rep.mean_sq_phi(self.d2, w))


def q_hat(qest: QEstimator, omega) -> float:
    return float(qest.q_hat(omega)[0])


@dataclass(frozen=True)
class WeightedOmegaSample:
    omega: np.ndarray
    weight: float


@dataclass(frozen=True)
class WeightedOmegas:
    """A batch of omegas with their importance weights."""

    omegas: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return self.weights.shape[0]

    def __getitem__(self, i) -> WeightedOmegaSample:
        return WeightedOmegaSample(self.omegas[i], float(self.weights[i]))


def normalization_estimate(
    qest: QEstimator, pool_size: int, source: RandomSource
) -> tuple[float, float]:
    """Monte Carlo estimate of E_Omega[q_hat] with its standard error."""
    if pool_size < 100:
        raise ValueError(f"pool_size must be >= 100, got {pool_size}")
    q = qest.q_hat(qest.rep.sample_omegas(source, pool_size))
    if not np.any(q > 0):
        raise DegenerateQError("q_hat vanished on every draw of the normalization pool")
    stats = summarize(q)
    return stats.mean, stats.standard_error


@dataclass(frozen=True)
class GridSpec:
    """Midpoint grid over the omega space.

    Frequency coordinates cover ``[-freq_range, freq_range]``. By default
    the range is 8 for trig and ``8 + 2 max|x| / scale`` for positive_exp,
    whose squared features concentrate around ``w = 2x / scale``. The
    default step is 0.004 with one frequency axis and 0.05 with two. The
    phase axis is split into ``phase_cells`` equal cells.
    """

    freq_range: float | None = None
    freq_step: float | None = None
    phase_cells: int = 720

    def resolve_range(self, rep: FeatureRepresentation, extent: float = 0.0) -> float:
        if self.freq_range is not None:
            return float(self.freq_range)
        if rep.kind == "positive_exp":
            return 8.0 + 2.0 * extent / rep.target.scale
        return 8.0

    def step_for(self, rep: FeatureRepresentation) -> float:
        if self.freq_step is not None:
            return float(self.freq_step)
        return 0.004 if rep.d == 1 else 0.05

    def coarsened(self, rep: FeatureRepresentation) -> "GridSpec":
        """Half-resolution grid used for quadrature error estimates."""
        return GridSpec(self.freq_range, 2.0 * self.step_for(rep), max(1, self.phase_cells // 2))

    def axes(self, rep: FeatureRepresentation, extent: float = 0.0) -> list[tuple[np.ndarray, float]]:
        if rep.omega_dim > 2:
            raise GridDimensionError(
                f"grids support at most 2 omega coordinates, {rep.name} with d={rep.d} has {rep.omega_dim}"
            )
        step = self.step_for(rep)
        half = self.resolve_range(rep, extent)
        n = int(round(2.0 * half / step))
        width = 2.0 * half / n
        freq = -half + (np.arange(n) + 0.5) * width
        axes = [(freq, width)] * rep.d
        if rep.has_phase:
            pw = TWO_PI / self.phase_cells
            axes.append(((np.arange(self.phase_cells) + 0.5) * pw, pw))
        return axes


class PsiSampler:
    """Base class for proposals; subclasses fill in :meth:`sample`."""

    strategy = "abstract"

    def __init__(self, rep: FeatureRepresentation, qest: QEstimator | None,
                 z_hat: float, z_hat_stderr: float):
        if not z_hat > 0:
            raise DegenerateQError(f"normalization estimate must be positive, got {z_hat}")
        self.rep = rep
        self.qest = qest
        self.z_hat = float(z_hat)
        self.z_hat_stderr = float(z_hat_stderr)

    def sample(self, source: RandomSource, k: int) -> WeightedOmegas:
        raise NotImplementedError

    def log_density(self, w) -> np.ndarray:
        """Log of the normalized optimal density p_Omega q_hat / z_hat."""
        w = self.rep.check_omegas(w)
        q = self.qest.q_hat(w)
        if np.any(q <= 0):
            raise OutsideSupportError("q_hat is zero: omega lies outside the proposal support")
        return self.rep.log_density(w) + np.log(q) - math.log(self.z_hat)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(rep={self.rep.name}, z_hat={self.z_hat:.6g})"


class NaiveSampler(PsiSampler):
    """The base distribution itself; every weight is 1."""

    strategy = "naive"

    def __init__(self, rep: FeatureRepresentation, qest: QEstimator | None = None):
        super().__init__(rep, qest, 1.0, 0.0)

    def sample(self, source, k):
        return WeightedOmegas(self.rep.sample_omegas(source, k), np.ones(int(k)))

    def log_density(self, w):
        return self.rep.log_density(w)


class PoolResampler(PsiSampler):
    strategy = "pool_resampler"

    def __init__(self, qest, pool, pool_q, z_hat, z_hat_stderr):
        super().__init__(qest.rep, qest, z_hat, z_hat_stderr)
        self.pool = pool
        self.pool_q = pool_q
        self.cumulative = np.cumsum(pool_q)

    def sample(self, source, k):
        u = source.uniform(int(k)) * self.cumulative[-1]
        idx = np.searchsorted(self.cumulative, u, side="right")
        idx = np.minimum(idx, self.pool.shape[0] - 1)
        # a rounding tie at the top must not land on a trailing zero-q entry
        idx = _skip_zero_mass(idx, self.pool_q)
        return WeightedOmegas(self.pool[idx], self.z_hat / self.pool_q[idx])


class RejectionSampler(PsiSampler):
    strategy = "rejection"

    def __init__(self, qest, envelope, z_hat, z_hat_stderr,
                 max_rejections=MAX_CONSECUTIVE_REJECTIONS):
        super().__init__(qest.rep, qest, z_hat, z_hat_stderr)
        if not (math.isfinite(envelope) and envelope > 0):
            raise EnvelopeError(f"rejection envelope must be finite and positive, got {envelope}")
        self.envelope = float(envelope)
        self.max_rejections = int(max_rejections)

    def sample(self, source, k):
        k = int(k)
        accepted_w, accepted_q = [], []
        got = 0
        run = 0
        rate = min(1.0, self.z_hat / self.envelope)
        while got < k:
            batch = int(min(1 << 20, max(1024, math.ceil(1.1 * (k - got) / rate))))
            prop = self.rep.sample_omegas(source, batch)
            q = self.qest.q_hat(prop)
            u = source.uniform(batch)
            hits = np.flatnonzero((u * self.envelope < q) & (q > 0))
            if hits.size == 0:
                run += batch
            else:
                longest = max(hits[0] + run,
                              int(np.max(np.diff(hits), initial=1)) - 1)
                run = batch - 1 - int(hits[-1])
                if longest >= self.max_rejections:
                    raise EnvelopeError(f"{longest} consecutive rejections")
                take = hits[: k - got]
                accepted_w.append(prop[take])
                accepted_q.append(q[take])
                got += take.size
            if run >= self.max_rejections:
                raise EnvelopeError(
                    f"more than {self.max_rejections} consecutive rejections; "
                    f"envelope {self.envelope:.6g} vs z_hat {self.z_hat:.6g}"
                )
        q = np.concatenate(accepted_q)
        return WeightedOmegas(np.concatenate(accepted_w), self.z_hat / q)


class GridOracle(PsiSampler):
    """Tabulated optimal proposal on a midpoint grid."""

    strategy = "grid_oracle"

    def __init__(self, qest: QEstimator, grid_spec: GridSpec, jitter: bool = False):
        rep = qest.rep
        extent = max(float(np.max(np.abs(qest.d1))), float(np.max(np.abs(qest.d2))))
        axes = grid_spec.axes(rep, extent)
        self.grid_spec = grid_spec
        self.jitter = jitter
        self.axis_points = [a for a, _ in axes]
        self.widths = np.array([w for _, w in axes])
        self.shape = tuple(a.size for a in self.axis_points)
        mesh = np.meshgrid(*self.axis_points, indexing="ij")
        self.nodes = np.column_stack([m.reshape(-1) for m in mesh])
        self.q_table = qest.q_hat(self.nodes)
        # discrete base distribution on the nodes
        base = np.exp(rep.log_density(self.nodes)) * float(np.prod(self.widths))
        base_total = float(np.sum(base))
        self.omega_masses = base / base_total
        unnorm = self.omega_masses * self.q_table
        total = float(np.sum(unnorm))
        if not total > 0:
            raise DegenerateQError("q_hat vanishes on every grid node")
        self.masses = unnorm / total
        self.cdf = np.cumsum(self.masses)
        self._last = int(np.flatnonzero(self.masses > 0)[-1])
        # quadrature estimate of E_Omega[q_hat]; no Monte Carlo error
        super().__init__(rep, qest, total, 0.0)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.widths))

    def sample(self, source, k):
        k = int(k)
        u = source.uniform(k) * self.cdf[-1]
        # sorted keys keep the table lookups cache-friendly; draws keep their order
        order = np.argsort(u)
        idx = np.empty(k, dtype=np.int64)
        idx[order] = np.searchsorted(self.cdf, u[order], side="right")
        idx = np.minimum(idx, self._last)
        idx = _skip_zero_mass(idx, self.masses)
        if not self.jitter:
            return WeightedOmegas(self.nodes[idx], self.z_hat / self.q_table[idx])
        offsets = (source.uniform((k, self.widths.size)) - 0.5) * self.widths
        w = self.nodes[idx] + offsets
        if self.rep.has_phase:
            w[:, -1] = np.mod(w[:, -1], TWO_PI)
        q = self.qest.q_hat(w)
        if np.any(q <= 0):
            raise OutsideSupportError("jittered draw landed where q_hat is zero")
        return WeightedOmegas(w, self.z_hat / q)

    def density_table(self) -> np.ndarray:
        """Proposal density (mass / cell volume) at each node."""
        return self.masses / self.cell_volume

    def marginal(self, axis: int) -> np.ndarray:
        m = self.masses.reshape(self.shape)
        others = tuple(i for i in range(len(self.shape)) if i != axis)
        return m.sum(axis=others) if others else m

    def cell_edges(self, axis: int) -> np.ndarray:
        pts, width = self.axis_points[axis], self.widths[axis]
        return np.concatenate([pts - 0.5 * width, [pts[-1] + 0.5 * width]])

    def quantile_bins(self, axis: int, n_bins: int = 50) -> tuple[np.ndarray, np.ndarray]:
        """Bins of roughly equal proposal mass along one coordinate.

        Returns ``(edges, masses)``; the outer edges are infinite so draws
        beyond the grid fall into the end bins.
        """
        marg = self.marginal(axis)
        cum = np.cumsum(marg)
        cuts = np.searchsorted(cum, np.arange(1, n_bins) / n_bins * cum[-1], side="left") + 1
        cuts = np.unique(cuts[(cuts > 0) & (cuts < marg.size)])
        cell_edges = self.cell_edges(axis)
        edges = np.concatenate([[-np.inf], cell_edges[cuts], [np.inf]])
        bounds = np.concatenate([[0], cuts, [marg.size]])
        masses = np.add.reduceat(marg, bounds[:-1])
        return edges, masses


def _skip_zero_mass(idx: np.ndarray, mass: np.ndarray) -> np.ndarray:
    bad = mass[idx] <= 0
    if not np.any(bad):
        return idx
    positive = np.flatnonzero(mass > 0)
    pos = np.searchsorted(positive, idx[bad], side="right") - 1
    idx = idx.copy()
    idx[bad] = positive[np.maximum(pos, 0)]
    return idx


def histogram_tv(samples: np.ndarray, edges: np.ndarray, masses: np.ndarray) -> float:
    """Total-variation distance between a sample histogram and reference bin masses."""
    counts, _ = np.histogram(samples, bins=edges)
    return 0.5 * float(np.sum(np.abs(counts / samples.size - masses / np.sum(masses))))


def build_sampler(
    qest: QEstimator,
    strategy: str,
    pool_size: int = 10**5,
    grid_spec: GridSpec | None = None,
    source: RandomSource | None = None,
    jitter: bool = False,
) -> PsiSampler:
    """Construct a proposal of the given strategy for ``qest``."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown sampler strategy {strategy!r}; expected one of {STRATEGIES}")
    if strategy == "naive":
        return NaiveSampler(qest.rep, qest)
    if strategy == "grid_oracle":
        return GridOracle(qest, grid_spec or GridSpec(), jitter=jitter)
    if source is None:
        raise ValueError(f"{strategy} needs a RandomSource")
    pool = qest.rep.sample_omegas(source.spawn("pool"), pool_size)
    pool_q = qest.q_hat(pool)
    if not np.any(pool_q > 0):
        raise DegenerateQError("q_hat vanished on every pool draw")
    z, z_se = normalization_estimate(qest, pool_size, source.spawn("z-pool"))
    if strategy == "pool_resampler":
        return PoolResampler(qest, pool, pool_q, z, z_se)
    return RejectionSampler(qest, ENVELOPE_FACTOR * float(np.max(pool_q)), z, z_se)


def sample_psi(sampler: PsiSampler, source: RandomSource) -> WeightedOmegaSample:
    return sampler.sample(source, 1)[0]


def psi_log_density(sampler: PsiSampler, omega) -> float:
    return float(sampler.log_density(omega)[0])


def check_sampler_rep(sampler: PsiSampler, rep: FeatureRepresentation) -> None:
    if sampler.rep != rep:
        raise InvalidDimensionError(
            f"sampler was built for {sampler.rep.name} (d={sampler.rep.d}), not {rep.name} (d={rep.d})"
        )
