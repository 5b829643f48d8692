"""Model and experiment definitions read from JSON or TOML files."""
import copy
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .filter import FilterConfig
from .linalg import sqrt_factor
from .mixture import GaussianMixture
from .model import (
    NONLINEAR_BUILTINS,
    GmmStateSpaceModel,
    MeasurementComponent,
    ProcessComponent,
    Signal,
    SplitConfig,
    build_nonlinear,
    grid_prior,
)

METHODS = ("gmmf", "kalman", "smc", "naive")


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field."""

    def __init__(self, where, message):
        self.field = where
        super().__init__(f"{where}: {message}")


def load_document(path):
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".toml":
        import tomli

        return tomli.loads(text)
    return json.loads(text)


def _matrix(value, where, shape=None):
    try:
        M = np.atleast_2d(np.asarray(value, dtype=float))
    except (TypeError, ValueError):
        raise ConfigError(where, "expected a numeric matrix") from None
    if shape is not None and M.shape != shape:
        raise ConfigError(where, f"expected shape {shape}, got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ConfigError(where, "entries must be finite")
    return M


def _factor(item, where, key, dim=None):
    """Square-root factor from either ``<key>`` (covariance) or ``<key>_sqrt``."""
    if f"{key}_sqrt" in item:
        R = _matrix(item[f"{key}_sqrt"], f"{where}.{key}_sqrt", None if dim is None else (dim, dim))
        if np.any(np.tril(R, -1) != 0.0):
            raise ConfigError(f"{where}.{key}_sqrt", "must be upper triangular")
        return R
    if key not in item:
        raise ConfigError(where, f"missing '{key}' (or '{key}_sqrt')")
    P = _matrix(item[key], f"{where}.{key}", None if dim is None else (dim, dim))
    try:
        return sqrt_factor(P)
    except ValueError as exc:
        raise ConfigError(f"{where}.{key}", str(exc)) from None


def _signal(spec, where, dim):
    if spec is None:
        return Signal.zeros(dim)
    if isinstance(spec, (int, float, list)):
        spec = {"kind": "constant", "amplitude": spec}
    try:
        sig = Signal.from_dict(spec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(where, str(exc)) from None
    if sig.dim != dim:
        raise ConfigError(f"{where}.amplitude", f"expected {dim} entries, got {sig.dim}")
    return sig


def _weight(item, where):
    try:
        return float(item["weight"])
    except KeyError:
        raise ConfigError(where, "missing 'weight'") from None
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.weight", "expected a number") from None


def parse_prior(spec, where="model.prior"):
    """Prior mixture from a component list or a ``{"grid": {...}}`` block."""
    if isinstance(spec, dict) and "grid" in spec:
        g = spec["grid"]
        try:
            return grid_prior(float(g["lo"]), float(g["hi"]), g["counts"], float(g["variance"]))
        except KeyError as exc:
            raise ConfigError(f"{where}.grid", f"missing {exc}") from None
    if not isinstance(spec, list) or not spec:
        raise ConfigError(where, "expected a nonempty list of components or a grid block")
    weights, means, roots = [], [], []
    for i, item in enumerate(spec):
        w = f"{where}[{i}]"
        weights.append(_weight(item, w))
        if "mean" not in item:
            raise ConfigError(w, "missing 'mean'")
        mean = np.atleast_1d(np.asarray(item["mean"], dtype=float))
        means.append(mean)
        roots.append(_factor(item, w, "cov", mean.size))
    if len({m.size for m in means}) != 1:
        raise ConfigError(where, "components have differing dimensions")
    total = sum(weights)
    if abs(total - 1.0) > 1e-12:
        raise ConfigError(where, f"weights sum to {total!r}, expected 1")
    return GaussianMixture(weights, np.array(means), np.array(roots))


def parse_model(spec, where="model"):
    """Build a model object from its dictionary description."""
    if not isinstance(spec, dict):
        raise ConfigError(where, "expected a table")
    kind = spec.get("type", "gmm")
    if "prior" not in spec:
        raise ConfigError(where, "missing 'prior'")
    prior = parse_prior(spec["prior"], f"{where}.prior")
    n = prior.dim
    if kind == "nonlinear":
        name = spec.get("builtin")
        if name not in NONLINEAR_BUILTINS:
            raise ConfigError(
                f"{where}.builtin", f"unknown model {name!r}; known: {sorted(NONLINEAR_BUILTINS)}"
            )
        try:
            return build_nonlinear(name, prior, spec.get("params", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}.params", str(exc)) from None
    if kind != "gmm":
        raise ConfigError(f"{where}.type", f"expected 'gmm' or 'nonlinear', got {kind!r}")
    process = []
    for j, item in enumerate(spec.get("process", [])):
        w = f"{where}.process[{j}]"
        A = _matrix(item.get("A"), f"{w}.A", (n, n))
        process.append(
            ProcessComponent(_weight(item, w), A, _factor(item, w, "Q", n),
                             _signal(item.get("offset"), f"{w}.offset", n))
        )
    measurement = []
    for k, item in enumerate(spec.get("measurement", [])):
        w = f"{where}.measurement[{k}]"
        C = _matrix(item.get("C"), f"{w}.C")
        if C.shape[1] != n:
            raise ConfigError(f"{w}.C", f"expected {n} columns, got {C.shape[1]}")
        p = C.shape[0]
        measurement.append(
            MeasurementComponent(_weight(item, w), C, _factor(item, w, "R", p),
                                 _signal(item.get("offset"), f"{w}.offset", p))
        )
    if not process:
        raise ConfigError(f"{where}.process", "need at least one component")
    if not measurement:
        raise ConfigError(f"{where}.measurement", "need at least one component")
    try:
        return GmmStateSpaceModel(prior, process, measurement)
    except ValueError as exc:
        raise ConfigError(where, str(exc)) from None


def parse_filter(spec, where="filter"):
    spec = dict(spec or {})
    split = spec.pop("split", None)
    try:
        if split is not None:
            split = SplitConfig(**split)
        return FilterConfig(split=split, **spec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(where, str(exc)) from None


@dataclass
class GridSpec:
    """Where and how densities are exported.

    ``lo``/``hi`` fix the range per state dimension; otherwise the range is
    the truth trajectory widened by three prior standard deviations
    (mirrored about zero when ``symmetric``).
    """

    points: int = 400
    points_2d: int = 60
    snapshots: list = field(default_factory=list)
    kinds: list = field(default_factory=lambda: ["predicted", "filtered"])
    lo: Optional[list] = None
    hi: Optional[list] = None
    symmetric: bool = False


@dataclass
class ExperimentConfig:
    name: str
    model: dict
    steps: int = 100
    seed: int = 0
    methods: list = field(default_factory=lambda: ["gmmf"])
    filter: dict = field(default_factory=dict)
    truth_prior: Optional[list] = None
    smc_particles: int = 10_000
    grid: GridSpec = field(default_factory=GridSpec)
    out: str = "out"

    def __post_init__(self):
        if not isinstance(self.steps, int) or self.steps < 1:
            raise ConfigError("steps", f"must be an integer >= 1, got {self.steps!r}")
        if not isinstance(self.seed, int):
            raise ConfigError("seed", f"must be an integer, got {self.seed!r}")
        self.methods = list(self.methods)
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ConfigError("methods", f"unknown methods {bad}; choose from {list(METHODS)}")
        if not isinstance(self.smc_particles, int) or self.smc_particles < 2:
            raise ConfigError("smc_particles", "must be an integer >= 2")
        if isinstance(self.grid, dict):
            try:
                self.grid = GridSpec(**self.grid)
            except TypeError as exc:
                raise ConfigError("grid", str(exc)) from None
        for key in ("lo", "hi"):
            val = getattr(self.grid, key)
            if val is not None and not np.all(np.isfinite(np.asarray(val, dtype=float))):
                raise ConfigError(f"grid.{key}", "bounds must be finite")

    @classmethod
    def from_dict(cls, data, base_dir=None):
        data = copy.deepcopy(data)
        if not isinstance(data, dict):
            raise ConfigError("<root>", "expected a table")
        if "name" not in data:
            raise ConfigError("name", "missing")
        model = data.get("model")
        if isinstance(model, str):
            path = Path(model)
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            try:
                data["model"] = load_document(path)
            except OSError as exc:
                raise ConfigError("model", f"cannot read model file: {exc}") from None
        elif model is None:
            raise ConfigError("model", "missing")
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown field")
        return cls(**data)

    def to_dict(self):
        return asdict(self)

    def build_model(self):
        return parse_model(self.model)

    def build_filter(self):
        return parse_filter(self.filter)

    def build_truth_prior(self):
        if self.truth_prior is None:
            return None
        return parse_prior(self.truth_prior, "truth_prior")
