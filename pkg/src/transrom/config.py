"""Experiment configuration: a flat TOML document, one experiment per file.

The registry produces fully-populated configs for both the paper-scale and
desk-scale profiles; files in configs/ are the serialized paper defaults.
Serialization round-trips exactly (floats are written with shortest exact
repr), which the registry-fidelity tests rely on.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - py310 fallback
    import tomli as tomllib

from .errors import ConfigError


@dataclass
class ExperimentConfig:
    experiment: str
    scale: str = "desk"
    out_dir: str = ""
    seed: int = 0
    nx_offline: int = 100
    nx_online: list = field(default_factory=list)  # empty -> [nx_offline]
    dt_rule: str = "dx"
    t_train: float = 1.0
    t_end: float = 1.0
    snapshot_stride: int = 1
    mu_train: list = field(default_factory=list)  # rows of parameter vectors
    mu_test: list = field(default_factory=list)
    n_test_random: int = 0  # drawn from the parameter box with the seed
    r_values: list = field(default_factory=lambda: [10])
    modes: list = field(default_factory=lambda: ["lp-galerkin", "pod", "learning"])
    epochs: int = 30
    learning_rate: float = 1e-3
    lr_decay: float = 1.0
    batch_size: int = 4096
    basis_hidden: list = field(default_factory=lambda: [25, 25, 25, 25])
    coeff_hidden: list = field(default_factory=lambda: [25, 25, 25])
    variant: str = ""  # per-experiment switch (e.g. smooth-profile window)
    threads: int = 1
    figures: bool = True

    def resolved_nx_online(self) -> list:
        return list(self.nx_online) if self.nx_online else [self.nx_offline]

    def validate(self) -> None:
        if self.t_train > self.t_end + 1e-12:
            raise ConfigError(f"t_train {self.t_train} exceeds t_end {self.t_end}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if not self.r_values:
            raise ConfigError("r_values must not be empty")
        if self.scale not in ("paper", "desk"):
            raise ConfigError(f"unknown scale {self.scale!r}")


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int,)):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise ConfigError(f"cannot serialize {type(v).__name__} to TOML")


def dumps_config(cfg: ExperimentConfig) -> str:
    lines = ["[experiment]"]
    for key, value in asdict(cfg).items():
        lines.append(f"{key} = {_toml_value(value)}")
    return "\n".join(lines) + "\n"


def loads_config(text: str) -> ExperimentConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    table = doc.get("experiment", doc)
    known = {f for f in ExperimentConfig.__dataclass_fields__}
    unknown = set(table) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "experiment" not in table:
        raise ConfigError("config is missing the experiment id")
    cfg = ExperimentConfig(**table)
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    return loads_config(path.read_text())


def save_config(path, cfg: ExperimentConfig) -> None:
    Path(path).write_text(dumps_config(cfg))


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(dumps_config(cfg).encode()).hexdigest()[:16]
