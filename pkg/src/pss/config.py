"""Run configuration: JSON file plus command-line overrides, validation, and
a canonical content hash.

The hash covers every field that affects results (the output directory is
excluded) and is computed over the sorted-key canonical serialization, so it
is stable across key order and across platforms.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields

from . import jsonio
from .distill import MkdConfig
from .errors import ConfigError
from .noise import KINDS, SCOPES

# JSON/flag key -> attribute (lambda is a Python keyword)
_KEY_TO_ATTR = {"lambda": "lam"}
_ATTR_TO_KEY = {v: k for k, v in _KEY_TO_ATTR.items()}


@dataclass
class RunConfig:
    data: str = ""
    out: str = ""
    hidden_dim: int = 64
    pe_dim: int = 64
    refiner_hidden: int = 16
    lr_ct: float = 5e-5
    lr_pt: float = 5e-4
    lr_student: float = 5e-4
    lam: float = 0.9
    beta: float = 0.9
    rho: float = 2.0
    final_relu: bool = True
    kd_reverse_kl: bool = False
    mkd_mask: str = "all"
    pooling: str = "mean"
    use_ct: bool = True
    use_pt: bool = True
    use_sup: bool = True
    use_tar: bool = True
    use_lgpi: bool = True
    noise_kind: str = "none"
    noise_ratio: float = 0.0
    noise_scope: str = "all"
    seed: int = 1
    max_epochs: int = 200
    patience: int = 10

    def validate(self) -> None:
        def require(cond: bool, key: str, msg: str) -> None:
            if not cond:
                raise ConfigError(f"config key '{key}': {msg}")

        require(bool(self.data), "data", "missing data path")
        require(self.hidden_dim >= 1, "hidden_dim", "must be >= 1")
        require(self.pe_dim >= 1, "pe_dim", "must be >= 1")
        require(self.refiner_hidden >= 1, "refiner_hidden", "must be >= 1")
        for key in ("lr_ct", "lr_pt", "lr_student"):
            require(getattr(self, key) > 0, key, "must be > 0")
        require(0.0 <= self.lam <= 1.0, "lambda", f"must be in [0,1], got {self.lam}")
        require(0.0 <= self.beta <= 1.0, "beta", f"must be in [0,1], got {self.beta}")
        require(self.rho > 0, "rho", f"must be > 0, got {self.rho}")
        require(self.mkd_mask in ("all", "train"), "mkd_mask",
                f"must be all|train, got {self.mkd_mask!r}")
        require(self.pooling in ("mean", "root"), "pooling", f"must be mean|root, got {self.pooling!r}")
        require(self.noise_kind == "none" or self.noise_kind in KINDS,
                "noise_kind", f"must be none|{'|'.join(KINDS)}, got {self.noise_kind!r}")
        require(0.0 <= self.noise_ratio <= 1.0, "noise_ratio", f"must be in [0,1], got {self.noise_ratio}")
        require(self.noise_scope in SCOPES, "noise_scope", f"must be all|test, got {self.noise_scope!r}")
        require(self.max_epochs >= 0, "max_epochs", "must be >= 0")
        require(self.patience >= 1, "patience", "must be >= 1")
        require(self.seed >= 0, "seed", "must be >= 0")

    def mkd(self) -> MkdConfig:
        return MkdConfig(lam=self.lam, beta=self.beta, rho=self.rho,
                         use_ct=self.use_ct, use_pt=self.use_pt,
                         use_sup=self.use_sup, use_tar=self.use_tar,
                         use_lgpi=self.use_lgpi)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            out[_ATTR_TO_KEY.get(f.name, f.name)] = getattr(self, f.name)
        return out

    def config_hash(self) -> str:
        hashed = {k: v for k, v in self.to_dict().items() if k != "out"}
        return jsonio.canonical_hash(hashed)

    def replace(self, **updates) -> "RunConfig":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(updates)
        cfg = RunConfig(**d)
        cfg.validate()
        return cfg


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, attr: str, value):
    current = getattr(RunConfig(), attr)
    if isinstance(current, bool):
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise ConfigError(f"config key '{key}': expected true/false, got {value!r}")
    if isinstance(current, int) and not isinstance(current, bool):
        if isinstance(value, bool) or not isinstance(value, (int, str)):
            raise ConfigError(f"config key '{key}': expected integer, got {value!r}")
        try:
            return int(value)
        except ValueError as e:
            raise ConfigError(f"config key '{key}': expected integer, got {value!r}") from e
    if isinstance(current, float):
        if isinstance(value, bool) or not isinstance(value, (int, float, str)):
            raise ConfigError(f"config key '{key}': expected number, got {value!r}")
        try:
            return float(value)
        except ValueError as e:
            raise ConfigError(f"config key '{key}': expected number, got {value!r}") from e
    if isinstance(value, str):
        return value
    raise ConfigError(f"config key '{key}': expected string, got {value!r}")


def parse_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Config file, then explicit overrides, then the PSS_SEED variable.

    Unknown keys are rejected by name; every value is range-checked.
    """
    cfg = RunConfig()
    layers = []
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: not valid JSON: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        layers.append(loaded)
    if overrides:
        layers.append(overrides)
    for layer in layers:
        for key, value in layer.items():
            attr = _KEY_TO_ATTR.get(key, key)
            if attr not in _FIELD_TYPES:
                raise ConfigError(f"unknown config key '{key}'")
            setattr(cfg, attr, _coerce(key, attr, value))
    env_seed = os.environ.get("PSS_SEED")
    if env_seed is not None:
        try:
            cfg.seed = int(env_seed)
        except ValueError as e:
            raise ConfigError(f"PSS_SEED must be an integer, got {env_seed!r}") from e
    cfg.validate()
    return cfg


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(jsonio.dumps(cfg.to_dict(), sort_keys=True) + "\n")
