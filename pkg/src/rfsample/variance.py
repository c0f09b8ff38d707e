"""Expected sample variance of importance-sampled kernel estimates.

The quantities compared here, for datasets D1, D2 and a representation phi:

* empirical variance: average over data pairs of the per-draw variance of
  ``weight * phi(x1, w) * phi(x2, w)`` under a proposal;
* optimal variance: ``E_Omega[q_hat]^2 - E[K(x1, x2)^2]``;
* Cauchy-Schwarz bound: ``E[K(x1, x1) K(x2, x2) - K(x1, x2)^2]``, which
  does not depend on phi and equals the optimal variance when D1 = D2.

Every value carries a standard error; comparisons use 4-SE tolerances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite_e import hermeval

from .errors import InvalidDimensionError
from .estimators import weighted_products
from .features import FeatureRepresentation
from .kernels import KernelSpec, gram, kernel_diagonal, kernel_pairs
from .numerics import RandomSource, as_dataset, combined_stderr, summarize
from .sampling import (
    GridOracle,
    GridSpec,
    PsiSampler,
    QEstimator,
    check_sampler_rep,
    normalization_estimate,
)

MAX_EXACT_PAIRS = 25_000_000
# absolute slack added to 4-SE tolerances when a stderr is exactly zero
ABS_SLACK = 1e-12


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float

    def __iter__(self):
        return iter((self.value, self.stderr))


@dataclass(frozen=True)
class PairMoments:
    """Dataset-pair averages of K^2 and of K(x1,x1) K(x2,x2).

    The diagonal product factorizes into ``mean(diag1) * mean(diag2)`` and
    is always exact. ``exact`` is true when every pair was enumerated for
    K^2; otherwise that mean comes from a fixed subsample and carries a
    standard error.
    """

    k_sq: Estimate
    diag_prod: Estimate
    gap: Estimate
    n_pairs: int
    exact: bool


def _mean_sq_gram(spec: KernelSpec, d1: np.ndarray, d2: np.ndarray) -> float:
    n1, n2 = d1.shape[0], d2.shape[0]
    step = max(1, (1 << 20) // n2)
    parts = [float(np.sum(gram(spec, d1[s:s + step], d2) ** 2)) for s in range(0, n1, step)]
    return math.fsum(parts) / (n1 * n2)


def pair_kernel_moments(spec: KernelSpec, d1, d2, max_pairs: int = MAX_EXACT_PAIRS) -> PairMoments:
    d1 = as_dataset(d1)
    d2 = as_dataset(d2, d1.shape[1])
    n1, n2 = d1.shape[0], d2.shape[0]
    diag1, diag2 = kernel_diagonal(spec, d1), kernel_diagonal(spec, d2)
    diag = Estimate(math.fsum(diag1) / n1 * (math.fsum(diag2) / n2), 0.0)
    if n1 * n2 <= max_pairs:
        k_sq = Estimate(_mean_sq_gram(spec, d1, d2), 0.0)
        return PairMoments(k_sq, diag, Estimate(diag.value - k_sq.value, 0.0), n1 * n2, True)
    # same subsample for every caller, so shared terms cancel between estimates
    src = RandomSource(0).spawn("pair-subsample")
    i = src.integers(n1, max_pairs)
    j = src.integers(n2, max_pairs)
    s = summarize(kernel_pairs(spec, d1[i], d2[j]) ** 2)
    k_sq = Estimate(s.mean, s.standard_error)
    return PairMoments(k_sq, diag, Estimate(diag.value - s.mean, s.standard_error), max_pairs, False)


def _per_pair_variances(rep, sampler, x1s, x2s, n_omega, source) -> np.ndarray:
    n_pairs = x1s.shape[0]
    out = np.empty(n_pairs)
    block = max(1, (1 << 21) // n_omega)
    for start in range(0, n_pairs, block):
        stop = min(n_pairs, start + block)
        b = stop - start
        draws = sampler.sample(source, b * n_omega)
        w = draws.omegas.reshape(b, n_omega, -1)
        wt = draws.weights.reshape(b, n_omega)
        f1 = rep.phi_broadcast(x1s[start:stop, None, :], w)
        f2 = rep.phi_broadcast(x2s[start:stop, None, :], w)
        out[start:stop] = np.var(wt * f1 * f2, axis=1, ddof=1)
    return out


def empirical_expected_variance(
    rep: FeatureRepresentation,
    sampler: PsiSampler,
    d1,
    d2,
    n_pairs: int,
    n_omega: int,
    source: RandomSource,
) -> Estimate:
    """Average over random data pairs of the per-draw variance under ``sampler``.

    Pairs are drawn uniformly with replacement from D1 x D2; each pair gets
    ``n_omega`` fresh proposal draws and its unbiased sample variance.
    """
    if n_pairs < 10:
        raise ValueError(f"n_pairs must be >= 10, got {n_pairs}")
    if n_omega < 100:
        raise ValueError(f"n_omega must be >= 100, got {n_omega}")
    check_sampler_rep(sampler, rep)
    d1 = rep.check_points(d1)
    d2 = rep.check_points(d2)
    psrc = source.spawn("pairs")
    i = psrc.integers(d1.shape[0], n_pairs)
    j = psrc.integers(d2.shape[0], n_pairs)
    v = _per_pair_variances(rep, sampler, d1[i], d2[j], n_omega, source.spawn("omega"))
    s = summarize(v)
    return Estimate(s.mean, s.standard_error)


@dataclass(frozen=True)
class OptimalAnalysis:
    """Optimal variance and Cauchy-Schwarz bound computed from shared ingredients.

    ``gap = bound - v_hat = E[K(x1,x1) K(x2,x2)] - z_hat^2``; the K^2 term
    is common to both sides and cancels, so ``gap.stderr`` is smaller than
    the root-sum-square of the two individual errors.
    """

    z_hat: Estimate
    v_hat: Estimate
    bound: Estimate
    gap: Estimate
    moments: PairMoments


def grid_normalization(qest: QEstimator, grid: GridOracle | None = None,
                       grid_spec: GridSpec | None = None) -> Estimate:
    """Quadrature estimate of E_Omega[q_hat]; the error is the change from a half-resolution grid."""
    fine = grid if grid is not None else GridOracle(qest, grid_spec or GridSpec())
    coarse = GridOracle(qest, fine.grid_spec.coarsened(qest.rep))
    return Estimate(fine.z_hat, abs(fine.z_hat - coarse.z_hat))


Z_METHODS = ("pool", "grid", "auto")


def optimal_analysis(
    qest: QEstimator,
    spec: KernelSpec,
    pool_size: int,
    source: RandomSource,
    z_method: str = "pool",
    grid: GridOracle | None = None,
    grid_spec: GridSpec | None = None,
) -> OptimalAnalysis:
    """Optimal variance, bound and their gap.

    ``z_method`` selects how E_Omega[q_hat] is estimated: ``pool`` draws
    ``pool_size`` fresh base samples, ``grid`` uses quadrature (at most two
    omega coordinates), ``auto`` picks the grid whenever it is available.
    """
    if qest.rep.target != spec:
        raise ValueError(f"representation targets {qest.rep.target}, not {spec}")
    if z_method not in Z_METHODS:
        raise ValueError(f"z_method must be one of {Z_METHODS}, got {z_method!r}")
    if z_method == "auto":
        z_method = "grid" if qest.rep.omega_dim <= 2 else "pool"
    if z_method == "grid":
        z, z_se = grid_normalization(qest, grid, grid_spec)
    else:
        z, z_se = normalization_estimate(qest, pool_size, source.spawn("z-pool"))
    mom = pair_kernel_moments(spec, qest.d1, qest.d2)
    z_sq_se = 2.0 * z * z_se
    v_hat = Estimate(z * z - mom.k_sq.value, combined_stderr(z_sq_se, mom.k_sq.stderr))
    gap = Estimate(mom.diag_prod.value - z * z, combined_stderr(z_sq_se, mom.diag_prod.stderr))
    return OptimalAnalysis(Estimate(z, z_se), v_hat, mom.gap, gap, mom)


def theoretical_optimal_variance(
    qest: QEstimator, spec: KernelSpec, pool_size: int, source: RandomSource,
    z_method: str = "pool",
) -> Estimate:
    """``z_hat^2 - E[K^2]`` with delta-method standard error."""
    if pool_size < 1000:
        raise ValueError(f"pool_size must be >= 1000, got {pool_size}")
    return optimal_analysis(qest, spec, pool_size, source, z_method).v_hat


def cauchy_schwarz_bound(spec: KernelSpec, d1, d2) -> Estimate:
    return pair_kernel_moments(spec, d1, d2).gap


@dataclass(frozen=True)
class EqualityReport:
    v_hat: float
    bound: float
    gap: float
    combined_stderr: float

    def holds(self, n_se: float = 4.0) -> bool:
        return abs(self.gap) <= n_se * self.combined_stderr + ABS_SLACK


def equality_check(
    rep: FeatureRepresentation,
    spec: KernelSpec,
    d,
    pool_size: int,
    source: RandomSource,
    z_method: str = "pool",
) -> EqualityReport:
    """Compare the optimal variance with the bound when both marginals are ``d``."""
    d = rep.check_points(d)
    a = optimal_analysis(QEstimator(rep, d, d), spec, pool_size, source, z_method)
    return EqualityReport(a.v_hat.value, a.bound.value, a.gap.value, a.gap.stderr)


# -- perturbation audit ---------------------------------------------------------


@dataclass(frozen=True)
class AuditEntry:
    direction: str
    t: float
    increase: float


@dataclass(frozen=True)
class AuditResult:
    v_optimal: float
    entries: tuple[AuditEntry, ...]

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    @property
    def min_increase(self) -> float:
        return min(e.increase for e in self.entries)


def _basis_directions(grid: GridOracle) -> list[tuple[str, np.ndarray]]:
    """Bounded low-order bumps: Hermite functions on frequency axes, Fourier modes on phase."""
    rep = grid.rep
    coords = grid.nodes
    per_axis = []
    for ax in range(rep.d):
        w = coords[:, ax]
        env = np.exp(-0.25 * w * w)
        per_axis.append([(f"he{k}(w{ax})", hermeval(w, [0] * k + [1]) * env) for k in range(1, 7)])
    if rep.has_phase:
        b = coords[:, -1]
        modes = []
        for k in range(1, 4):
            modes.append((f"cos{k}b", np.cos(k * b)))
            modes.append((f"sin{k}b", np.sin(k * b)))
        per_axis.append(modes)
    out = []
    for level in range(max(len(a) for a in per_axis)):
        for funcs in per_axis:
            if level < len(funcs):
                out.append(funcs[level])
    if len(per_axis) == 2:
        for (n1, g1) in per_axis[0][:3]:
            for (n2, g2) in per_axis[1][:3]:
                out.append((f"{n1}*{n2}", g1 * g2))
    return out


def _perturbed(m_star: np.ndarray, g: np.ndarray, t: float) -> np.ndarray:
    m = m_star * np.exp(t * g)
    return m / np.sum(m)


def _objective(base_q: np.ndarray, m: np.ndarray) -> float:
    """Grid form of E_Psi[(p_Omega q / p_Psi)^2]; the K^2 term is added by the caller."""
    live = base_q > 0
    return float(np.sum(base_q[live] ** 2 / m[live]))


def perturbation_audit(
    qest: QEstimator,
    spec: KernelSpec,
    grid_spec: GridSpec | None,
    n_directions: int,
    epsilon: float,
    source: RandomSource,
) -> AuditResult:
    """Check by quadrature that perturbing the optimal proposal never lowers the variance.

    Each direction ``g`` is a bounded function on the grid; the perturbed
    proposal is ``p_t ∝ p_opt * exp(t g)`` for ``t = ±epsilon``. The first
    half of the directions are basis bumps, the rest random mixtures of them.
    """
    if not 0 < epsilon <= 0.5:
        raise ValueError(f"epsilon must lie in (0, 0.5], got {epsilon}")
    if n_directions < 1:
        raise ValueError("need at least one direction")
    grid = GridOracle(qest, grid_spec or GridSpec())
    base_q = grid.omega_masses * grid.q_table
    m_star = grid.masses
    k_sq = pair_kernel_moments(spec, qest.d1, qest.d2).k_sq.value
    baseline = _objective(base_q, _perturbed(m_star, np.zeros_like(m_star), 0.0))

    basis = _basis_directions(grid)
    n_basis = min(len(basis), max(1, n_directions - n_directions // 2))
    directions = basis[:n_basis]
    stack = np.array([g for _, g in basis])
    for r in range(n_directions - n_basis):
        coef = source.normal(len(basis))
        directions.append((f"mix{r}", coef @ stack))

    entries = []
    for name, g in directions:
        g = g / np.max(np.abs(g))
        for t in (epsilon, -epsilon):
            v = _objective(base_q, _perturbed(m_star, g, t))
            entries.append(AuditEntry(name, t, v - baseline))
    return AuditResult(baseline - k_sq, tuple(entries))


def audit_increase(qest: QEstimator, g: np.ndarray, t: float, grid_spec: GridSpec | None = None) -> float:
    """Variance increase for one explicit direction ``g`` given on the grid nodes."""
    grid = GridOracle(qest, grid_spec or GridSpec())
    g = np.asarray(g, dtype=np.float64)
    if g.shape != grid.masses.shape:
        raise InvalidDimensionError(f"direction has shape {g.shape}, grid has {grid.masses.shape}")
    base_q = grid.omega_masses * grid.q_table
    baseline = _objective(base_q, _perturbed(grid.masses, np.zeros_like(g), 0.0))
    return _objective(base_q, _perturbed(grid.masses, g, t)) - baseline


# -- 1/k scaling ------------------------------------------------------------------


def k_sample_mse(
    rep: FeatureRepresentation,
    sampler: PsiSampler,
    spec: KernelSpec,
    d1,
    d2,
    k: int,
    n_pairs: int,
    n_reps: int,
    source: RandomSource,
) -> Estimate:
    """Mean squared error of the k-draw kernel estimate, averaged over data pairs.

    Should be close to (expected per-draw variance) / k.
    """
    check_sampler_rep(sampler, rep)
    d1 = rep.check_points(d1)
    d2 = rep.check_points(d2)
    psrc = source.spawn("pairs")
    i = psrc.integers(d1.shape[0], n_pairs)
    j = psrc.integers(d2.shape[0], n_pairs)
    exact = kernel_pairs(spec, d1[i], d2[j])
    osrc = source.spawn("omega")
    per_pair = np.empty(n_pairs)
    for p in range(n_pairs):
        draws = sampler.sample(osrc, k * n_reps)
        vals = weighted_products(rep, draws, d1[i[p]], d2[j[p]]).reshape(n_reps, k)
        per_pair[p] = np.mean((vals.mean(axis=1) - exact[p]) ** 2)
    s = summarize(per_pair)
    return Estimate(s.mean, s.standard_error)


def within(a: Estimate, b: Estimate, n_se: float = 4.0) -> bool:
    """True when two independent estimates agree within ``n_se`` combined standard errors."""
    return abs(a.value - b.value) <= n_se * combined_stderr(a.stderr, b.stderr) + ABS_SLACK


def separation(a: Estimate, b: Estimate) -> float:
    se = combined_stderr(a.stderr, b.stderr)
    diff = abs(a.value - b.value)
    if se == 0:
        return 0.0 if diff == 0 else math.inf
    return diff / se
