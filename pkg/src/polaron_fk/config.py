"""Key-value experiment configs.

One ``key = value`` per line, ``#`` starts a comment. Lists are comma
separated. Unknown keys and malformed values are rejected with the line number.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from typing import List, Optional


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    subcommand: str = ""
    # model
    model: str = "confined"          # confined | froehlich
    g: float = 0.2
    modes: int = 4
    L: List[float] = field(default_factory=lambda: [3.141592653589793, 3.141592653589793])
    B: float = 0.0                    # magnetic field of the symmetric gauge A = (B/2)(-x2, x1)
    V0: float = 0.0                   # constant potential
    domain: str = "box"               # box | full (tail and moment runs)
    # numerics
    n: int = 16
    N_max: int = 2
    t: float = 0.5
    s: float = 0.25
    t_grid: List[float] = field(default_factory=lambda: [0.5, 1.0, 2.0, 4.0])
    dt: float = 1e-3
    dt_ladder: List[float] = field(default_factory=lambda: [1e-2, 1e-3, 1e-4])
    paths: int = 10000
    sigma: float = 2.0
    sigmas: List[float] = field(default_factory=lambda: [2.0, 3.0, 5.5])
    p: float = 1.0
    x: List[float] = field(default_factory=lambda: [1.5, 1.4])
    r_grid: List[float] = field(default_factory=lambda: [0.25, 0.5, 0.75, 1.0, 1.5, 2.0])
    E_grid: List[float] = field(default_factory=lambda: [1.0, 4.0, 16.0])
    samples: int = 200
    kind: str = "U"                   # moment kind: U | u | W
    abs_limit: Optional[float] = None
    extra_budget: float = 0.0
    green_modes: int = 400
    # run control
    seed: int = 0
    workers: int = 1
    chunk: int = 2048
    out: str = "results"

    def echo(self, exclude=("workers", "out")) -> dict:
        """Config as a plain dict; run-control keys that cannot change results are left out."""
        d = dataclasses.asdict(self)
        for k in exclude:
            d.pop(k, None)
        return d


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _convert(name: str, raw: str):
    typ = str(_FIELDS[name].type)
    raw = raw.strip()
    if typ.startswith("List"):
        return [float(v) for v in raw.split(",") if v.strip()]
    if typ.startswith("Optional"):
        return None if raw.lower() in ("", "none") else float(raw)
    if typ == "int":
        return int(raw)
    if typ == "float":
        return float(raw)
    return raw


def parse_config(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            out[key] = _convert(key, raw)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    return out


def build_config(values: dict) -> ExperimentConfig:
    unknown = set(values) - set(_FIELDS)
    if unknown:
        raise ConfigError(f"unknown keys: {sorted(unknown)}")
    cfg = ExperimentConfig(**values)
    if cfg.paths < 1 or cfg.dt <= 0 or cfg.workers < 1 or cfg.n < 2 or cfg.N_max < 0 or cfg.modes < 1:
        raise ConfigError("paths, workers, modes >= 1; dt > 0; n >= 2; N_max >= 0 required")
    if cfg.model not in ("confined", "froehlich"):
        raise ConfigError(f"unknown model {cfg.model!r}")
    if cfg.domain not in ("box", "full"):
        raise ConfigError(f"unknown domain {cfg.domain!r}")
    if len(cfg.L) != 2 or len(cfg.x) < 2:
        raise ConfigError("L needs two side lengths and x at least two coordinates")
    return cfg


def load_config(path: Optional[str], overrides: Optional[dict] = None) -> ExperimentConfig:
    values = {}
    if path:
        with open(path) as fh:
            values = parse_config(fh.read())
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_config(values)
