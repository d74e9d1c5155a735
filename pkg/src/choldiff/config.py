"""Run configuration: strict YAML parsing into a validated RunConfig.

Unknown keys are always errors (reported with their full key path);
defaults are recorded so output files can echo the exact effective
configuration.
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np
import yaml

from .models import MODEL_REGISTRY


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending key path."""


@dataclass
class SimulateConfig:
    """Synthetic-data generation settings (cmd_simulate)."""

    theta: list = None
    sigma: list = None
    rho: list = None  # strictly-lower correlations, row-major
    c_entries: list = None  # alternative to (sigma, rho): lower-tri rows
    x0: list = None
    n_obs: int = 500
    obs_spacing: float = 1.0
    fine_delta: float = 0.01
    seed: int = 0
    write_fine_path: bool = False


@dataclass
class RunConfig:
    """Validated batch-run settings for simulate/fit commands."""

    model: str = "mv_cir"
    dim: int = 3
    m: int = 20
    sweeps: int = 110_000
    warmup: int = 10_000
    thin: int = 10
    seed: int = 0
    method: str = "A"
    method_b_drift: str = "linear"
    block_size: int = None
    sv_regime: str = None  # exact-vol | latent-vol (bivariate_heston only)
    input: str = None
    output_dir: str = "."
    theta0: list = None
    sigma0: list = None
    rho0: list = None
    c0_free: list = None  # SV free entries (C11, C21, C22, C43)
    priors: dict = field(default_factory=dict)
    scales: dict = field(default_factory=dict)
    default_scale: float = 0.1
    adapt: bool = True
    adapt_target: float = 0.25
    fix_C: bool = False
    check_interval: int = 1000
    progress_every: int = 0
    acf_max_lag: int = 100
    simulate: SimulateConfig = field(default_factory=SimulateConfig)

    def __post_init__(self):
        if self.model not in MODEL_REGISTRY:
            raise ConfigError(
                f"model: unknown model {self.model!r}; "
                f"registered: {sorted(MODEL_REGISTRY)}"
            )
        if self.m < 0:
            raise ConfigError("m: must be >= 0")
        if not self.sweeps > self.warmup >= 0:
            raise ConfigError("sweeps/warmup: need sweeps > warmup >= 0")
        if self.thin < 1:
            raise ConfigError("thin: must be >= 1")
        if self.method not in ("A", "B"):
            raise ConfigError("method: must be 'A' or 'B'")
        if self.method_b_drift not in ("zero", "linear"):
            raise ConfigError("method_b_drift: must be 'zero' or 'linear'")
        if self.sv_regime is not None:
            if self.model != "bivariate_heston":
                raise ConfigError("sv_regime: only valid for model bivariate_heston")
            if self.sv_regime not in ("exact-vol", "latent-vol"):
                raise ConfigError("sv_regime: must be 'exact-vol' or 'latent-vol'")
        if self.model == "bivariate_heston":
            if self.dim != 4:
                raise ConfigError("dim: bivariate_heston is 4-dimensional")
            if self.sv_regime is None:
                raise ConfigError("sv_regime: required for model bivariate_heston")
        for name, value in self.scales.items():
            if not value > 0.0:
                raise ConfigError(f"scales.{name}: must be positive")
        if not self.default_scale > 0.0:
            raise ConfigError("default_scale: must be positive")

    def as_dict(self) -> dict:
        return asdict(self)


_SCALAR_TYPES = {
    int: (int,),
    float: (int, float),
    str: (str,),
    bool: (bool,),
}


def _convert(value, target, path):
    if value is None:
        return None
    if target in (list, dict):
        if not isinstance(value, target):
            raise ConfigError(f"{path}: expected {target.__name__}")
        return value
    allowed = _SCALAR_TYPES[target]
    if isinstance(value, bool) and target is not bool:
        raise ConfigError(f"{path}: expected {target.__name__}, got bool")
    if not isinstance(value, allowed):
        raise ConfigError(
            f"{path}: expected {target.__name__}, got {type(value).__name__}"
        )
    return target(value)


_RUN_SCHEMA = {
    "model": str, "dim": int, "m": int, "sweeps": int, "warmup": int,
    "thin": int, "seed": int, "method": str, "method_b_drift": str,
    "block_size": int, "sv_regime": str, "input": str, "output_dir": str,
    "theta0": list, "sigma0": list, "rho0": list, "c0_free": list,
    "priors": dict, "scales": dict, "default_scale": float, "adapt": bool,
    "adapt_target": float, "fix_C": bool, "check_interval": int,
    "progress_every": int, "acf_max_lag": int,
}

_SIM_SCHEMA = {
    "theta": list, "sigma": list, "rho": list, "c_entries": list, "x0": list,
    "n_obs": int, "obs_spacing": float, "fine_delta": float, "seed": int,
    "write_fine_path": bool,
}


def _parse_section(raw: dict, schema: dict, prefix: str) -> dict:
    out = {}
    for key, value in raw.items():
        path = f"{prefix}{key}"
        if key not in schema:
            raise ConfigError(f"unknown configuration key {path!r}")
        out[key] = _convert(value, schema[key], path)
    return out


def parse_config(text: str) -> RunConfig:
    """Parse YAML text into a validated :class:`RunConfig`.

    Every unknown key is an error; messages carry the full key path.
    """
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"configuration is not valid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a mapping")
    sim_raw = raw.pop("simulate", None)
    kwargs = _parse_section(raw, _RUN_SCHEMA, "")
    if sim_raw is not None:
        if not isinstance(sim_raw, dict):
            raise ConfigError("simulate: must be a mapping")
        kwargs["simulate"] = SimulateConfig(
            **_parse_section(sim_raw, _SIM_SCHEMA, "simulate.")
        )
    try:
        return RunConfig(**kwargs)
    except TypeError as exc:  # pragma: no cover - schema guards this
        raise ConfigError(str(exc)) from exc


def load_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def strict_lower_from_flat(flat, d: int) -> np.ndarray:
    """Row-major strictly-lower entries (e.g. rho21, rho31, rho32) to a matrix."""
    flat = np.asarray(flat, dtype=float)
    expected = d * (d - 1) // 2
    if flat.shape != (expected,):
        raise ConfigError(
            f"expected {expected} strictly-lower entries for dimension {d}, "
            f"got {flat.shape[0]}"
        )
    out = np.zeros((d, d))
    pos = 0
    for i in range(d):
        for j in range(i):
            out[i, j] = flat[pos]
            pos += 1
    return out
