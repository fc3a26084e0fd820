"""Run configuration: dataclass defaults < config file < command-line flags.

Config files are flat `key = value` lines (# comments allowed), keys matching
the RunConfig field names. Anything unknown or untypable is a ConfigError,
which the CLI maps to exit code 1.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .policy import PolicyParams


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    k: int = 100
    strategy: str = "seed"
    policy: str = "scale_sensitive"
    mvdf: bool = False
    rrc_iterations: int = 0
    select: str = "argmax"
    seed: int = 0
    jobs: int = 1
    tsplib_rounding: bool = False
    # evolution settings
    generator: str = "mock"
    population_size: int = 20
    generations: int = 105
    offspring_per_operator: bool = False
    # surrogate policy constants
    policy_w1: float = 4.0
    policy_w2: float = -1.0
    policy_w3: float = 0.05
    policy_w4: float = 0.05
    policy_sigma1: float = 0.1
    policy_sigma2: float = 0.5
    policy_w5: float = 2.0

    def policy_params(self) -> PolicyParams:
        return PolicyParams(
            w1=self.policy_w1,
            w2=self.policy_w2,
            w3=self.policy_w3,
            w4=self.policy_w4,
            sigma1=self.policy_sigma1,
            sigma2=self.policy_sigma2,
            w5=self.policy_w5,
        )

    def validate(self) -> None:
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.rrc_iterations < 0:
            raise ConfigError("rrc_iterations must be >= 0")
        if self.select not in ("argmax", "sample"):
            raise ConfigError("select must be argmax or sample")
        if self.generator not in ("mock", "llm"):
            raise ConfigError("generator must be mock or llm")
        if self.population_size < 1:
            raise ConfigError("population_size must be >= 1")
        if self.generations < 0:
            raise ConfigError("generations must be >= 0")
        if self.policy_sigma1 <= 0 or self.policy_sigma2 <= 0:
            raise ConfigError("policy sigmas must be positive")


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    typ = _FIELD_TYPES[key]
    if typ == "bool":
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if typ == "int":
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
    if typ == "float":
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    return raw.strip()


def load_config_file(path) -> dict:
    """Parse a flat key=value file into typed overrides."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    overrides: dict = {}
    for line_no, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{line_no}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{line_no}: unknown config key {key!r}")
        overrides[key] = _coerce(key, value)
    return overrides


def build_config(config_path=None, **flag_overrides) -> RunConfig:
    """Defaults, then the config file, then explicit flags (None means unset)."""
    cfg = RunConfig()
    layers = []
    if config_path:
        layers.append(load_config_file(config_path))
    layers.append({k: v for k, v in flag_overrides.items() if v is not None})
    for layer in layers:
        for key, value in layer.items():
            if key not in _FIELD_TYPES:
                raise ConfigError(f"unknown config key {key!r}")
            setattr(cfg, key, value)
    cfg.validate()
    return cfg
