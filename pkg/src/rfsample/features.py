"""Random feature representations: a feature map paired with its base distribution.

Two constructions are provided.

``trig``
    phi(x, (w, b)) = sqrt(2) cos(w.x / s + b) with w ~ N(0, I) and
    b ~ Uniform[0, 2pi). Reproduces the gaussian kernel.

``positive_exp``
    phi(x, w) = exp(w.x / s - c ||x||^2 / s^2) with w ~ N(0, I), where
    c = 1 for the gaussian kernel and c = 1/2 for the exponential kernel.

Omega points are 1-D arrays; batches of them are ``(k, omega_dim)`` arrays.
For ``trig`` the last coordinate is the phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FeatureOverflowError, InvalidDimensionError, PhaseRangeError
from .kernels import KernelSpec
from .numerics import RandomSource, SummaryStats, as_dataset, as_vector, summarize

REP_KINDS = ("trig", "positive_exp")

TWO_PI = 2.0 * math.pi
SQRT2 = math.sqrt(2.0)
_LOG_NORMAL_CONST = -0.5 * math.log(2.0 * math.pi)

# omega-chunk size is chosen so chunk * n stays near this many elements
_CHUNK_ELEMENTS = 1 << 22

COMPATIBLE = {
    "trig": ("gaussian",),
    "positive_exp": ("gaussian", "exponential"),
}


@dataclass(frozen=True)
class FeatureRepresentation:
    """A feature map and base distribution that reproduce ``target`` in expectation.

    ``max_norm_ratio`` bounds ``||x|| / scale`` for positive_exp inputs;
    larger inputs raise :class:`FeatureOverflowError` instead of producing
    silently huge features.
    """

    kind: str
    target: KernelSpec
    d: int
    max_norm_ratio: float = 3.0

    def __post_init__(self):
        if self.kind not in REP_KINDS:
            raise ValueError(f"unknown representation {self.kind!r}; expected one of {REP_KINDS}")
        if self.target.kind not in COMPATIBLE[self.kind]:
            raise ValueError(
                f"representation {self.kind!r} cannot reproduce a {self.target.kind!r} kernel"
            )
        if int(self.d) < 1:
            raise InvalidDimensionError(f"dimension must be >= 1, got {self.d}")
        object.__setattr__(self, "d", int(self.d))

    @property
    def name(self) -> str:
        return f"{self.kind}/{self.target.kind}"

    @property
    def omega_dim(self) -> int:
        return self.d + 1 if self.kind == "trig" else self.d

    @property
    def has_phase(self) -> bool:
        return self.kind == "trig"

    @property
    def _sq_coef(self) -> float:
        return 1.0 if self.target.kind == "gaussian" else 0.5

    # -- validation ---------------------------------------------------------

    def check_points(self, x: np.ndarray) -> np.ndarray:
        """Validate an ``(n, d)`` batch of data points, enforcing the norm guard."""
        x = as_dataset(x, self.d)
        if self.kind == "positive_exp":
            ratios = np.sqrt(np.einsum("ij,ij->i", x, x)) / self.target.scale
            bad = np.flatnonzero(ratios > self.max_norm_ratio)
            if bad.size:
                i = int(bad[0])
                raise FeatureOverflowError(
                    f"positive_exp input {i} has ||x||/scale = {ratios[i]:.6g}, "
                    f"above the limit {self.max_norm_ratio:g}",
                    norm_ratio=float(ratios[i]),
                    index=i,
                )
        return x

    def check_omegas(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        if w.ndim == 1:
            w = w.reshape(1, -1)
        if w.ndim != 2 or w.shape[1] != self.omega_dim:
            raise InvalidDimensionError(
                f"{self.name} omegas need {self.omega_dim} coordinates, got shape {w.shape}"
            )
        if not np.all(np.isfinite(w)):
            raise ValueError("omega coordinates must be finite")
        return w

    # -- feature map --------------------------------------------------------

    def _projection(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        return x @ w[:, : self.d].T / self.target.scale

    def phi_matrix(self, x, w) -> np.ndarray:
        """Features ``phi(x_i, w_j)`` as an ``(n, k)`` matrix."""
        x = self.check_points(x)
        w = self.check_omegas(w)
        proj = self._projection(x, w)
        if self.kind == "trig":
            out = SQRT2 * np.cos(proj + np.mod(w[:, -1], TWO_PI))
        else:
            sq = np.einsum("ij,ij->i", x, x) / self.target.scale**2
            out = np.exp(proj - self._sq_coef * sq[:, None])
        if not np.all(np.isfinite(out)):
            raise FeatureOverflowError(f"non-finite {self.name} feature value")
        return out

    def phi_broadcast(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        """phi with numpy broadcasting of ``x[..., d]`` against ``w[..., omega_dim]``.

        Unlike :meth:`phi_matrix` this does not form all (point, omega)
        combinations; it is used to pair each data point with its own draws.
        """
        self.check_points(np.reshape(x, (-1, self.d)))
        proj = np.sum(x * w[..., : self.d], axis=-1) / self.target.scale
        if self.kind == "trig":
            out = SQRT2 * np.cos(proj + np.mod(w[..., -1], TWO_PI))
        else:
            sq = np.sum(x * x, axis=-1) / self.target.scale**2
            out = np.exp(proj - self._sq_coef * sq)
        if not np.all(np.isfinite(out)):
            raise FeatureOverflowError(f"non-finite {self.name} feature value")
        return out

    def mean_sq_phi(self, x, w) -> np.ndarray:
        """Dataset mean of ``phi(x, w_j)^2`` for every omega ``w_j``."""
        x = self.check_points(x)
        w = self.check_omegas(w)
        if self.kind == "trig":
            out = self._trig_mean_sq(x, w)
        else:
            out = self._pexp_mean_sq(x, w)
        if not np.all(np.isfinite(out)):
            raise FeatureOverflowError(f"non-finite {self.name} squared-feature mean")
        return out

    def _chunks(self, n: int, k: int):
        step = max(1, _CHUNK_ELEMENTS // max(n, 1))
        for start in range(0, k, step):
            yield slice(start, min(k, start + step))

    def _pexp_mean_sq(self, x, w):
        sq = np.einsum("ij,ij->i", x, x) / self.target.scale**2
        offset = 2.0 * self._sq_coef * sq
        if self.d == 1:
            u, t = x[:, 0] / self.target.scale, 2.0 * w[:, 0]
            if _taylor_nodes(u, t) * (_TAYLOR_TERMS + 40) < 40 * w.shape[0]:
                return _transform_taylor(u, t, -offset, oscillating=False).real
        out = np.empty(w.shape[0])
        for sl in self._chunks(x.shape[0], w.shape[0]):
            e = np.exp(2.0 * self._projection(x, w[sl]) - offset[:, None])
            out[sl] = e.mean(axis=0)
        return out

    def _trig_mean_sq(self, x, w):
        # 2 cos^2(a) = 1 + cos(2a), and mean cos(2 w.u + 2b) = Re(e^{2ib} mean e^{2i w.u})
        u = x / self.target.scale
        freqs = 2.0 * w[:, : self.d]
        phase2 = 2.0 * np.mod(w[:, -1], TWO_PI)
        n, k = u.shape[0], w.shape[0]
        if self.d == 1:
            uniq, inv = np.unique(freqs[:, 0], return_inverse=True)
            uniq = uniq[:, None]
        else:
            uniq, inv = np.unique(freqs, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        if self.d == 1 and _taylor_nodes(u[:, 0], uniq[:, 0]) * (_TAYLOR_TERMS + 40) < 40 * uniq.shape[0]:
            ecf = _transform_taylor(u[:, 0], uniq[:, 0])
        elif 2 * uniq.shape[0] <= k:
            ecf = np.empty(uniq.shape[0], dtype=np.complex128)
            for sl in self._chunks(n, uniq.shape[0]):
                arg = u @ uniq[sl].T
                ecf[sl] = np.cos(arg).mean(axis=0) + 1j * np.sin(arg).mean(axis=0)
        else:
            out = np.empty(k)
            for sl in self._chunks(n, k):
                arg = u @ freqs[sl].T + phase2[sl]
                out[sl] = 1.0 + np.cos(arg).mean(axis=0)
            return out
        ecf = ecf[inv]
        return 1.0 + ecf.real * np.cos(phase2) - ecf.imag * np.sin(phase2)

    # -- base distribution ----------------------------------------------------

    def sample_omegas(self, source: RandomSource, k: int) -> np.ndarray:
        k = int(k)
        freqs = source.normal((k, self.d))
        if self.kind != "trig":
            return freqs
        phase = source.uniform(k, 0.0, TWO_PI)
        phase[phase >= TWO_PI] = 0.0
        return np.column_stack([freqs, phase])

    def log_density(self, w) -> np.ndarray:
        """Exact log p_Omega for a batch of omegas."""
        w = self.check_omegas(w)
        freqs = w[:, : self.d]
        out = self.d * _LOG_NORMAL_CONST - 0.5 * np.einsum("ij,ij->i", freqs, freqs)
        if self.kind == "trig":
            phase = w[:, -1]
            if np.any((phase < 0.0) | (phase >= TWO_PI)):
                raise PhaseRangeError("phase coordinate outside [0, 2pi)")
            out = out - math.log(TWO_PI)
        return out


# Taylor evaluation of mean_u c(u) exp(s t u) with s = i or s = 1: expand around
# nodes t0 spaced so that |t - t0| * max|u| <= _TAYLOR_REACH; the truncation
# error is below _TAYLOR_REACH^M / M! relative to the sum of |terms|.
_TAYLOR_TERMS = 18
_TAYLOR_REACH = 0.1


def _taylor_nodes(u: np.ndarray, t: np.ndarray) -> int:
    umax = float(np.max(np.abs(u)))
    if umax == 0.0 or t.size == 0:
        return 1
    h = 2.0 * _TAYLOR_REACH / umax
    return int(math.floor((float(np.max(t)) - float(np.min(t))) / h)) + 2


def _transform_taylor(u: np.ndarray, t: np.ndarray, log_weight: np.ndarray | None = None,
                      oscillating: bool = True) -> np.ndarray:
    """``mean_u exp(log_weight + s t_j u)`` for 1-D data ``u`` at every ``t_j``.

    ``s`` is ``i`` when ``oscillating`` (the empirical characteristic function)
    and 1 otherwise (a weighted Laplace transform).
    """
    s = 1j if oscillating else 1.0
    lw = np.zeros(u.size) if log_weight is None else log_weight
    umax = float(np.max(np.abs(u)))
    if umax == 0.0:
        return np.full(t.shape[0], np.mean(np.exp(lw)), dtype=np.complex128)
    h = 2.0 * _TAYLOR_REACH / umax
    lo = float(np.min(t))
    nodes = lo + h * np.arange(_taylor_nodes(u, t))
    idx = np.rint((t - lo) / h).astype(np.int64)
    delta = t - nodes[idx]
    # coef[:, m] = (s u)^m / m!
    coef = np.empty((u.size, _TAYLOR_TERMS), dtype=np.complex128)
    coef[:, 0] = 1.0
    for m in range(1, _TAYLOR_TERMS):
        coef[:, m] = coef[:, m - 1] * (s * u) / m
    moments = np.empty((nodes.size, _TAYLOR_TERMS), dtype=np.complex128)
    step = max(1, _CHUNK_ELEMENTS // (4 * u.size))
    for start in range(0, nodes.size, step):
        sl = slice(start, start + step)
        moments[sl] = np.exp(s * np.outer(nodes[sl], u) + lw) @ coef / u.size
    out = moments[idx, _TAYLOR_TERMS - 1]
    for m in range(_TAYLOR_TERMS - 2, -1, -1):
        out = out * delta + moments[idx, m]
    return out


def phi(rep: FeatureRepresentation, x, omega) -> float:
    x = as_vector(x, rep.d)
    return float(rep.phi_matrix(x.reshape(1, -1), omega)[0, 0])


def omega_sample(rep: FeatureRepresentation, source: RandomSource) -> np.ndarray:
    return rep.sample_omegas(source, 1)[0]


def omega_log_density(rep: FeatureRepresentation, omega) -> float:
    return float(rep.log_density(omega)[0])


def feature_products(rep: FeatureRepresentation, x1, x2, w: np.ndarray) -> np.ndarray:
    """``phi(x1, w_j) * phi(x2, w_j)`` for each omega in the batch."""
    f = rep.phi_matrix(np.vstack([as_vector(x1, rep.d), as_vector(x2, rep.d)]), w)
    return f[0] * f[1]


def mc_kernel_check(
    rep: FeatureRepresentation, x1, x2, k: int, source: RandomSource
) -> SummaryStats:
    """Naive Monte Carlo estimate of the kernel from ``k`` base-distribution draws."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    return summarize(feature_products(rep, x1, x2, rep.sample_omegas(source, k)))
