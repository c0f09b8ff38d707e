"""Synthetic datasets and the CSV format used to exchange them.

CSV files are UTF-8 with a header ``x1,...,xd`` and one point per row.
Values are written with 17 significant digits, enough to round-trip every
float64 exactly.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from ..errors import ConfigError, InvalidDimensionError
from ..numerics import RandomSource, as_dataset
from .config import DATA_KINDS, DATA_PARAMS, DataSource, ExperimentConfig

SYNTHETIC_KINDS = DATA_KINDS[:3]


def _vector(params: dict, name: str, d: int, default: float) -> np.ndarray:
    raw = params.get(name)
    if raw is None:
        return np.full(d, default)
    try:
        v = np.array([float(t) for t in str(raw).split(",")])
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as a number list") from None
    if v.size == 1:
        return np.full(d, v[0])
    if v.size != d:
        raise ConfigError(f"{name}: expected 1 or {d} values, got {v.size}")
    return v


def _positive(params: dict, name: str, default: float) -> float:
    raw = params.get(name, default)
    try:
        v = float(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from None
    if not v > 0:
        raise ConfigError(f"{name}: must be positive, got {v}")
    return v


def generate(kind: str, d: int, n: int, params: dict, source: RandomSource) -> np.ndarray:
    """Draw ``n`` points in ``d`` dimensions.

    gaussian_blob: ``mean + sd * N(0, I)`` (defaults mean 0, sd 1)
    uniform_cube:  uniform on ``center + [-half_width, half_width]^d`` (defaults 0, 1)
    point_mass:    ``n`` copies of ``point`` (default the origin)
    """
    if kind not in SYNTHETIC_KINDS:
        raise ConfigError(f"unknown synthetic data kind {kind!r}; expected one of {SYNTHETIC_KINDS}")
    if d < 1 or n < 1:
        raise ConfigError(f"d and n must be positive, got d={d}, n={n}")
    unknown = set(params) - DATA_PARAMS[kind]
    if unknown:
        raise ConfigError(f"{kind} does not take {sorted(unknown)}")
    if kind == "gaussian_blob":
        mean = _vector(params, "mean", d, 0.0)
        return mean + _positive(params, "sd", 1.0) * source.normal((n, d))
    if kind == "uniform_cube":
        center = _vector(params, "center", d, 0.0)
        h = _positive(params, "half_width", 1.0)
        return center + source.uniform((n, d), -h, h)
    return np.tile(_vector(params, "point", d, 0.0), (n, 1))


def format_csv(points: np.ndarray) -> str:
    points = as_dataset(points)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"x{i + 1}" for i in range(points.shape[1])])
    for row in points:
        writer.writerow([format(float(v), ".17g") for v in row])
    return buf.getvalue()


def write_csv(points: np.ndarray, path) -> Path:
    path = Path(path)
    text = format_csv(points)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def read_csv(path, d: int | None = None) -> np.ndarray:
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    expected = [f"x{i + 1}" for i in range(len(header))]
    if header != expected:
        raise ConfigError(f"{path}: header must be {','.join(expected)}, got {','.join(header)}")
    body = [r for r in rows[1:] if r]
    if not body:
        raise ConfigError(f"{path}: no data rows")
    try:
        points = np.array([[float(v) for v in r] for r in body])
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if points.ndim != 2 or points.shape[1] != len(header):
        raise ConfigError(f"{path}: every row needs {len(header)} values")
    if d is not None and points.shape[1] != d:
        raise InvalidDimensionError(f"{path}: file has dimension {points.shape[1]}, config has d={d}")
    return as_dataset(points)


def gen_data(kind: str, d: int, n: int, params: dict, seed: int, out_path) -> Path:
    """Write a synthetic dataset; the stream matches the ``data`` stream of a config run."""
    points = generate(kind, d, n, params, RandomSource(seed).spawn("data1"))
    return write_csv(points, out_path)


def load_source(src: DataSource, d: int, n: int, source: RandomSource) -> np.ndarray:
    if src.kind == "csv":
        return read_csv(src.param_dict["path"], d)
    return generate(src.kind, d, n, src.param_dict, source)


def load_datasets(config: ExperimentConfig) -> tuple[np.ndarray, np.ndarray]:
    """Datasets for both marginals; the second is the same array when ``data2 = same``."""
    root = RandomSource(config.seed)
    d1 = load_source(config.data, config.d, config.n, root.spawn("data1"))
    if config.same_data:
        return d1, d1
    return d1, load_source(config.data2, config.d, config.n, root.spawn("data2"))
