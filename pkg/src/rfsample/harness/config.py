"""Flat ``key = value`` experiment configuration.

Lines starting with ``#`` and blank lines are ignored. Unknown keys are
errors, and so are values that do not parse as the key's type. Command-line
``--set key=value`` overrides are applied after the file.

Data sources are written as a kind followed by ``name=value`` parameters::

    data = gaussian_blob sd=1 mean=0
    data2 = uniform_cube half_width=0.5
    data = point_mass point=0,0
    data = csv path=points.csv

``data2 = same`` (the default) reuses the first dataset, so both input
marginals are identical.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError
from ..features import COMPATIBLE, REP_KINDS
from ..kernels import KERNEL_KINDS
from ..sampling import OPTIMAL_STRATEGIES
from ..variance import Z_METHODS

DATA_KINDS = ("gaussian_blob", "uniform_cube", "point_mass", "csv")
DATA_PARAMS = {
    "gaussian_blob": {"sd", "mean"},
    "uniform_cube": {"half_width", "center"},
    "point_mass": {"point"},
    "csv": {"path"},
}


@dataclass(frozen=True)
class DataSource:
    kind: str
    params: tuple[tuple[str, str], ...] = ()

    @classmethod
    def parse(cls, text: str, key: str = "data") -> "DataSource":
        tokens = text.split()
        if not tokens:
            raise ConfigError(f"{key}: empty data source")
        kind, rest = tokens[0], tokens[1:]
        if kind.endswith(".csv") and not rest:
            return cls("csv", (("path", kind),))
        if kind not in DATA_KINDS:
            raise ConfigError(f"{key}: unknown data kind {kind!r}; expected one of {DATA_KINDS}")
        params = []
        for tok in rest:
            name, sep, value = tok.partition("=")
            if not sep or not value:
                raise ConfigError(f"{key}: expected name=value, got {tok!r}")
            if name not in DATA_PARAMS[kind]:
                raise ConfigError(
                    f"{key}: {kind} takes {sorted(DATA_PARAMS[kind])}, not {name!r}"
                )
            params.append((name, value))
        if kind == "csv" and "path" not in dict(params):
            raise ConfigError(f"{key}: csv source needs path=...")
        return cls(kind, tuple(params))

    @property
    def param_dict(self) -> dict[str, str]:
        return dict(self.params)

    def with_param(self, name: str, value) -> "DataSource":
        p = self.param_dict
        p[name] = str(value)
        return DataSource(self.kind, tuple(sorted(p.items())))

    def __str__(self) -> str:
        return " ".join([self.kind] + [f"{k}={v}" for k, v in self.params])


@dataclass(frozen=True)
class ExperimentConfig:
    kernel: str = "gaussian"
    scale: float = 1.0
    reps: tuple[str, ...] = ("trig", "positive_exp")
    sampler: str = "grid_oracle"
    data: DataSource = field(default_factory=lambda: DataSource("gaussian_blob", (("sd", "1"),)))
    data2: DataSource | None = None
    d: int = 1
    n: int = 2000
    k: int = 10000
    n_pairs: int = 200
    n_omega: int = 10000
    pool_size: int = 100000
    check_pairs: int = 20
    mse_pairs: int = 50
    mse_reps: int = 20
    max_norm_ratio: float = 3.0
    grid_range: float | None = None
    grid_step: float | None = None
    grid_phase_cells: int = 720
    grid_jitter: bool = False
    z_method: str = "auto"
    seed: int = 1
    out: str | None = None

    @property
    def same_data(self) -> bool:
        return self.data2 is None

    def validate(self) -> "ExperimentConfig":
        if self.kernel not in KERNEL_KINDS:
            raise ConfigError(f"kernel: unknown kind {self.kernel!r}; expected one of {KERNEL_KINDS}")
        if not self.scale > 0:
            raise ConfigError(f"scale: must be positive, got {self.scale}")
        if not self.reps:
            raise ConfigError("reps: at least one representation is required")
        for name in self.reps:
            kind, _, kernel = name.partition("/")
            if kind not in REP_KINDS:
                raise ConfigError(f"reps: unknown representation {kind!r}; expected one of {REP_KINDS}")
            if kernel and kernel != self.kernel:
                raise ConfigError(
                    f"reps: {name!r} targets kernel {kernel!r} but the experiment kernel is {self.kernel!r}"
                )
            if self.kernel not in COMPATIBLE[kind]:
                raise ConfigError(f"reps: {kind!r} cannot represent a {self.kernel!r} kernel")
        if self.sampler not in OPTIMAL_STRATEGIES:
            raise ConfigError(f"sampler: expected one of {OPTIMAL_STRATEGIES}, got {self.sampler!r}")
        for key in ("d", "n", "k", "n_pairs", "n_omega", "pool_size", "check_pairs",
                    "mse_pairs", "mse_reps", "grid_phase_cells"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key}: must be positive, got {getattr(self, key)}")
        if not self.max_norm_ratio > 0:
            raise ConfigError("max_norm_ratio: must be positive")
        for key in ("grid_range", "grid_step"):
            v = getattr(self, key)
            if v is not None and not v > 0:
                raise ConfigError(f"{key}: must be positive, got {v}")
        if self.z_method not in Z_METHODS:
            raise ConfigError(f"z_method: expected one of {Z_METHODS}, got {self.z_method!r}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed: must be an unsigned 64-bit integer, got {self.seed}")
        for key, src in (("data", self.data), ("data2", self.data2)):
            if src is not None and src.kind == "csv":
                path = Path(src.param_dict["path"])
                if not path.is_file():
                    raise ConfigError(f"{key}: csv file {path} does not exist")
        return self

    def rep_kinds(self) -> list[str]:
        return [name.partition("/")[0] for name in self.reps]

    def to_dict(self) -> dict:
        """Config echo for reports; the output path is not part of the experiment."""
        out = {}
        for f in dataclasses.fields(self):
            if f.name == "out":
                continue
            v = getattr(self, f.name)
            if isinstance(v, DataSource):
                v = str(v)
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        out["data2"] = "same" if self.data2 is None else str(self.data2)
        return out


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_INTS = {"d", "n", "k", "n_pairs", "n_omega", "pool_size", "check_pairs", "mse_pairs",
         "mse_reps", "grid_phase_cells", "seed"}
_FLOATS = {"scale", "max_norm_ratio"}
_OPT_FLOATS = {"grid_range", "grid_step"}


def _convert(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in _INTS:
            return int(raw)
        if key in _FLOATS:
            return float(raw)
        if key in _OPT_FLOATS:
            return None if raw in ("auto", "") else float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None
    if key == "grid_jitter":
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"grid_jitter: expected true/false, got {raw!r}")
    if key == "reps":
        return tuple(r.strip() for r in raw.split(",") if r.strip())
    if key == "data":
        return DataSource.parse(raw, key)
    if key == "data2":
        return None if raw == "same" else DataSource.parse(raw, key)
    if key == "out":
        return raw or None
    return raw


def parse_assignments(lines, origin: str = "<config>") -> dict:
    values = {}
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        key, sep, raw = text.partition("=")
        key = key.strip()
        where = f"{origin}:{lineno}"
        if not sep:
            raise ConfigError(f"{where}: expected key = value, got {text!r}")
        if key not in _FIELDS:
            raise ConfigError(f"{where}: unknown key {key!r}")
        try:
            values[key] = _convert(key, raw)
        except ConfigError as exc:
            raise ConfigError(f"{where}: {exc}") from None
    return values


def load_config(path=None, overrides=(), **direct) -> ExperimentConfig:
    """Build a validated config from a file, ``key=value`` overrides and keyword values."""
    values = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {p} does not exist")
        values.update(parse_assignments(p.read_text(encoding="utf-8").splitlines(), str(p)))
    values.update(parse_assignments(overrides, "--set"))
    values.update({k: v for k, v in direct.items() if v is not None})
    return ExperimentConfig(**values).validate()
