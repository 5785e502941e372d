"""Flat ``key = value`` run configuration."""
from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .minimize import OptimizerConfig

SEED_KINDS = ("constant", "perturbation", "sphere_map", "file")
EXPERIMENTS = ("minimize", "glue", "verify", "chern", "scan")


class ConfigError(ValueError):
    pass


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.replace(";", ",").split(",") if v.strip())


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "auto", "none") else float(text)


@dataclass
class RunConfig:
    """All keys accepted in a config file, with their defaults.

    Seeds: ``constant`` (J0), ``perturbation`` (rotation by ``eps sin(2 pi mode x1)``),
    ``sphere_map`` (six plane degrees in the order 12,13,14,23,24,34) or ``file``
    (a snapshot given by ``seed_file``).
    """

    n: int = 16
    metric: str = "flat"
    seed: str = "perturbation"
    eps: float = 0.1
    mode: int = 1
    degrees: tuple = (0, 0, 0, 0, 0, 0)
    seed_file: str = ""
    experiment: str = "minimize"
    output: str = "bhacs_out"
    # optimizer
    max_iters: int = 5000
    grad_tol: float = 1e-8
    initial_step: float | None = None
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    checkpoint_every: int = 100
    rng_seed: int = 0
    preconditioner: str = "sobolev"
    # glue
    glue_j: int = 3
    glue_scale: float = 0.4
    glue_center: tuple = ()
    glue_eps0: float = 1.0
    glue_closeness: float = 0.5
    # scan and weak residuals
    radii: tuple = (0.125, 0.25)
    scan_eps0: float = 1.0
    scan_stride: int = 0
    weak_tests: int = 32

    _parsers = {
        "degrees": _ints,
        "glue_center": _ints,
        "radii": _floats,
        "initial_step": _opt_float,
    }

    def __post_init__(self):
        if self.n < 8:
            raise ConfigError("n must be at least 8")
        if self.seed not in SEED_KINDS:
            raise ConfigError(f"seed must be one of {SEED_KINDS}, got {self.seed!r}")
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.seed == "file" and not self.seed_file:
            raise ConfigError("seed = file needs seed_file")
        if len(self.degrees) != 6:
            raise ConfigError("degrees needs six integers")
        if self.glue_center and len(self.glue_center) != 4:
            raise ConfigError("glue_center needs four grid indices")
        try:
            self.optimizer()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
            try:
                values[key] = cls._convert(key, known[key], value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {value!r}") from exc
        try:
            return cls(**values)
        except ConfigError as exc:
            raise ConfigError(f"{source}: {exc}") from exc

    @classmethod
    def _convert(cls, key, f, value: str):
        if key in cls._parsers:
            return cls._parsers[key](value)
        default = f.default
        if isinstance(default, bool):
            return value.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        return value

    @classmethod
    def load(cls, path) -> "RunConfig":
        p = Path(path)
        return cls.from_text(p.read_text(), str(p))

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif v is None:
                v = "auto"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def optimizer(self) -> OptimizerConfig:
        return OptimizerConfig(self.max_iters, self.grad_tol, self.initial_step, self.armijo_c,
                               self.armijo_shrink, self.checkpoint_every, self.rng_seed,
                               self.preconditioner)

    def center(self) -> tuple:
        return tuple(self.glue_center) if self.glue_center else (self.n // 2,) * 4


def build_seed(cfg: RunConfig) -> np.ndarray:
    from .geometry import Grid
    from .snapshot import parse_metric_spec, read_snapshot
    from .topology import perturbation_seed, sphere_map_seed

    grid = Grid(cfg.n)
    metric = parse_metric_spec(cfg.metric)
    if cfg.seed == "constant":
        from .acs import J0, constant_field
        from .geometry import from_frame

        return constant_field(from_frame(J0, metric), cfg.n)
    if cfg.seed == "perturbation":
        return perturbation_seed(grid, cfg.eps, cfg.mode, metric).values
    if cfg.seed == "sphere_map":
        return sphere_map_seed(cfg.degrees, grid, metric).values
    snap = read_snapshot(cfg.seed_file)
    if snap.n != cfg.n:
        raise ConfigError(f"seed_file has n={snap.n} but config n={cfg.n}")
    return snap.J
