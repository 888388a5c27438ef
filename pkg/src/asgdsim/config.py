"""Run/grid configuration: a flat, typed key-value file format.

Configs are a flat TOML subset (scalars and homogeneous arrays only, no
tables). Unknown keys are hard errors: a typo in a sweep must fail loudly,
not silently corrupt a week of simulations.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields, replace

if sys.version_info >= (3, 11):  # pragma: no cover
    import tomllib as toml_reader
else:
    import tomli as toml_reader

from .datasets import Dataset, find_mnist, synthetic_blobs, synthetic_image_task
from .numkit import RngStream
from .objectives import (LogisticObjective, MlpObjective, Objective,
                         synthetic_quadratic)
from .optimizer import VARIANTS, LrSchedule


class ConfigError(ValueError):
    """Invalid, unknown, or ill-typed configuration key."""


@dataclass(frozen=True)
class RunConfig:
    """Everything one simulation run needs; defaults follow the MNIST-scale
    experimental tables (lr 0.01, momentum 0.5, batch 64, 5 epochs)."""

    # objective / data
    objective: str = "quadratic"         # quadratic | perturbed_quadratic | logistic | mlp
    dim: int = 10                        # quadratic family only
    n_train: int = 256
    spectrum: tuple = (0.1, 5.0)         # tiled/interpolated to dim
    center_spread: float = 1.0
    init_scale: float = 1.0              # initial-point spread (quadratic family)
    eps: float = 0.5                     # sinusoidal amplitude (perturbed_quadratic)
    hidden: int = 128                    # mlp only
    dataset: str = "synthetic_image"     # synthetic_image | blobs | mnist
    classes: int = 10
    features: int = 784
    separation: float = 0.45
    mnist_dir: str = ""
    test_rows: int = 2000
    # algorithm
    variant: str = "asgd"
    rho: float = 1.0
    momentum: float = 0.0
    lr: float = 0.01
    lr_schedule: str = "constant"        # constant | inverse_sqrt | theorem_constant
    lr_mu: float = 1.0
    lr_lipschitz: float = 1.0
    # system
    workers: int = 1
    delay_variance: float = 0.1
    compute_lo: float = 0.9
    compute_hi: float = 1.1
    budget_mode: str = "shared"          # shared | per_worker
    # run length / bookkeeping
    batch_size: int = 64
    epochs: float = 5.0
    budget: int = 0                      # explicit PS-update budget; overrides epochs
    seed: int = 0
    sample_period: int = 10              # F; 0 disables full-gradient sampling
    out: str = ""

    def __post_init__(self):
        if self.objective not in ("quadratic", "perturbed_quadratic", "logistic", "mlp"):
            raise ConfigError(f"objective: unknown kind {self.objective!r}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant: expected one of {VARIANTS}, got {self.variant!r}")
        if not 0.0 < self.rho <= 1.0:
            raise ConfigError(f"rho: must be in (0, 1], got {self.rho}")
        if self.workers < 1:
            raise ConfigError(f"workers: must be >= 1, got {self.workers}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size: must be >= 1, got {self.batch_size}")
        if self.budget < 0:
            raise ConfigError("budget: must be non-negative")
        if self.budget == 0 and self.epochs <= 0:
            raise ConfigError("epochs: must be positive when budget is not set")
        if self.delay_variance < 0:
            raise ConfigError("delay_variance: must be non-negative")
        if not 0 <= self.compute_lo <= self.compute_hi:
            raise ConfigError("compute_lo/compute_hi: need 0 <= lo <= hi")
        if self.budget_mode not in ("shared", "per_worker"):
            raise ConfigError(f"budget_mode: unknown mode {self.budget_mode!r}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum: must be in [0, 1)")
        if self.sample_period < 0:
            raise ConfigError("sample_period: must be non-negative")
        if self.lr_schedule not in ("constant", "inverse_sqrt", "theorem_constant"):
            raise ConfigError(f"lr_schedule: unknown kind {self.lr_schedule!r}")
        if self.seed < 0:
            raise ConfigError("seed: must be non-negative")

    def total_budget(self, n_samples: int) -> int:
        """PS updates for the run: explicit budget, else epochs * n / batch."""
        if self.budget > 0:
            return self.budget
        b = int(round(self.epochs * n_samples / self.batch_size))
        if b < 1:
            raise ConfigError("epochs/batch_size give an empty update budget")
        return b

    def schedule(self) -> LrSchedule:
        if self.lr_schedule == "constant":
            return LrSchedule(kind="constant", base=self.lr)
        horizon = self.budget if self.lr_schedule == "theorem_constant" else 0
        return LrSchedule(kind=self.lr_schedule, rho=self.rho, mu=self.lr_mu,
                          lipschitz=self.lr_lipschitz, horizon=horizon)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, value, target):
    if target == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected integer, got {value!r}")
        return value
    if target == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected number, got {value!r}")
        return float(value)
    if target == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected string, got {value!r}")
        return value
    if target == "tuple":
        if not isinstance(value, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{key}: expected an array of numbers, got {value!r}")
        return tuple(float(v) for v in value)
    raise ConfigError(f"{key}: unsupported field type {target}")  # pragma: no cover


def _parse_flat_toml(text: str, source: str):
    try:
        data = toml_reader.loads(text)
    except toml_reader.TOMLDecodeError as e:
        raise ConfigError(f"{source}: {e}") from e
    for key, value in data.items():
        if isinstance(value, dict):
            raise ConfigError(f"{source}: nested table {key!r} not allowed; "
                              "configs are flat key = value files")
    return data


def parse_run_config(text: str, source: str = "<config>") -> RunConfig:
    data = _parse_flat_toml(text, source)
    kwargs = {}
    for key, value in data.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}: unknown key {key!r}")
        kwargs[key] = _coerce(key, value, _FIELD_TYPES[key])
    return RunConfig(**kwargs)


def load_run_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_run_config(f.read(), source=path)


def _toml_value(v) -> str:
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, tuple):
        return "[" + ", ".join(repr(x) for x in v) + "]"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_run_config(cfg: RunConfig) -> str:
    lines = [f"{f.name} = {_toml_value(getattr(cfg, f.name))}" for f in fields(RunConfig)]
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class GridSpec:
    """A base config plus named axes (cartesian product) and per-cell seeds."""

    base: RunConfig
    axes: dict = field(default_factory=dict)   # field name -> list of values
    seeds_per_cell: int = 1

    def __post_init__(self):
        if self.seeds_per_cell < 1:
            raise ConfigError("seeds_per_cell: must be >= 1")
        for name, values in self.axes.items():
            if name not in _FIELD_TYPES:
                raise ConfigError(f"axis_{name}: unknown config key {name!r}")
            if not values:
                raise ConfigError(f"axis_{name}: empty axis")

    def cells(self) -> list[RunConfig]:
        configs = [self.base]
        for name, values in self.axes.items():
            nxt = []
            for cfg in configs:
                for v in values:
                    target = _FIELD_TYPES[name]
                    nxt.append(replace(cfg, **{name: _coerce(name, v, target)}))
            configs = nxt
        return configs


def parse_grid_spec(text: str, source: str = "<grid>") -> GridSpec:
    data = _parse_flat_toml(text, source)
    axes: dict = {}
    seeds = 1
    base_kwargs = {}
    for key, value in data.items():
        if key == "seeds_per_cell":
            seeds = _coerce(key, value, "int")
        elif key.startswith("axis_"):
            name = key[len("axis_"):]
            if name not in _FIELD_TYPES:
                raise ConfigError(f"{source}: unknown axis key {key!r}")
            if not isinstance(value, list):
                raise ConfigError(f"{source}: {key} must be an array")
            axes[name] = value
        elif key in _FIELD_TYPES:
            base_kwargs[key] = _coerce(key, value, _FIELD_TYPES[key])
        else:
            raise ConfigError(f"{source}: unknown key {key!r}")
    return GridSpec(base=RunConfig(**base_kwargs), axes=axes, seeds_per_cell=seeds)


def load_grid_spec(path: str) -> GridSpec:
    with open(path, "r", encoding="utf-8") as f:
        return parse_grid_spec(f.read(), source=path)


def build_dataset(cfg: RunConfig, rows: int, seed_offset: int = 0) -> Dataset:
    if cfg.dataset == "mnist":
        data = find_mnist(cfg.mnist_dir or None)
        if data is None:
            raise ConfigError("dataset = 'mnist' but no IDX files found "
                              "(set mnist_dir or $ASGDSIM_MNIST_DIR)")
        take = min(rows, data.n) if rows > 0 else data.n
        import numpy as np
        return data.subset(np.arange(take))
    if cfg.dataset == "blobs":
        return synthetic_blobs(cfg.classes, rows, cfg.features, cfg.separation,
                               cfg.seed + seed_offset)
    if cfg.dataset == "synthetic_image":
        return synthetic_image_task(rows, cfg.seed + seed_offset,
                                    classes=cfg.classes, p=cfg.features,
                                    separation=cfg.separation)
    raise ConfigError(f"dataset: unknown source {cfg.dataset!r}")


def build_objective(cfg: RunConfig) -> tuple[Objective, Dataset | None]:
    """Construct the objective (and test split for classifiers) from a config.

    Classifier train/test data derive from disjoint deterministic seeds, so
    every variant sharing a config seed sees identical data.
    """
    if cfg.objective == "quadratic":
        return synthetic_quadratic(cfg.dim, cfg.n_train, cfg.spectrum, cfg.seed,
                                   cfg.center_spread, init_scale=cfg.init_scale), None
    if cfg.objective == "perturbed_quadratic":
        return synthetic_quadratic(cfg.dim, cfg.n_train, cfg.spectrum, cfg.seed,
                                   cfg.center_spread, eps=cfg.eps,
                                   init_scale=cfg.init_scale), None
    if cfg.objective == "logistic":
        train = build_dataset(cfg, cfg.n_train)
        test = build_dataset(cfg, cfg.test_rows, seed_offset=982_451_653)
        return LogisticObjective(train), test
    if cfg.objective == "mlp":
        if cfg.dataset == "mnist":
            data = build_dataset(cfg, cfg.n_train + cfg.test_rows)
            import numpy as np
            train = data.subset(np.arange(cfg.n_train))
            test = data.subset(np.arange(cfg.n_train, data.n))
        else:
            train = build_dataset(cfg, cfg.n_train)
            test = build_dataset(cfg, cfg.test_rows, seed_offset=982_451_653)
        return MlpObjective(train, hidden=cfg.hidden), test
    raise ConfigError(f"objective: unknown kind {cfg.objective!r}")  # pragma: no cover


def derive_cell_seed(base_seed: int, cell_index: int, repeat_index: int) -> int:
    """Deterministic per-(cell, repeat) seed, independent of execution order."""
    import numpy as np
    ss = np.random.SeedSequence(entropy=base_seed,
                                spawn_key=(cell_index, repeat_index))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)
