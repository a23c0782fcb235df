"""Experiment configuration files (TOML).

Example::

    [experiment]
    name = "sim1"                 # sim1 | sim2 | sim3 | custom_csv
    variants = ["conventional", "armed"]
    k = 10
    output_dir = "results/sim1"
    random_z = false              # add <variant>_random_z rows for random-effects variants
    holdout_clusters = []         # nonempty: also run the unseen-cluster evaluation
    replicates = 1                # seeds for the unseen-cluster evaluation
    grid_resolution = 101         # decision grids, 2-feature data only
    grid_bounds = [-1.5, 1.5]
    input = ""                    # CSV path, custom_csv only
    n_jobs = 1

    [data]                        # SpiralConfig fields; defaults follow `name`
    seed = 0

    [train]                       # TrainConfig fields
    epochs = 50
"""

from __future__ import annotations

import dataclasses
import json
import re
import sys
from dataclasses import dataclass, field

from .errors import ConfigError
from .model import VARIANTS
from .simgen import SIMULATIONS, SpiralConfig
from .trainer import TrainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXPERIMENTS = (*SIMULATIONS, "custom_csv")


@dataclass
class ExperimentConfig:
    experiment: str = "sim1"
    variants: list = field(default_factory=lambda: ["conventional", "armed"])
    k: int = 10
    output_dir: str = "results"
    random_z: bool = False
    holdout_clusters: list = field(default_factory=list)
    replicates: int = 1
    grid_resolution: int = 101
    grid_bounds: list = field(default_factory=lambda: [-1.5, 1.5])
    input: str = ""
    n_jobs: int = 1
    data: SpiralConfig = field(default_factory=SpiralConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def to_dict(self):
        return dataclasses.asdict(self)


_EXPERIMENT_KEYS = {
    "name": str, "variants": list, "k": int, "output_dir": str, "random_z": bool,
    "holdout_clusters": list, "replicates": int, "grid_resolution": int,
    "grid_bounds": list, "input": str, "n_jobs": int,
}


def _line_of(text, section, key=None):
    current = None
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        m = re.match(r"\[([^\]]+)\]", stripped)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return lineno
            continue
        if current == section and key is not None and re.match(rf"{re.escape(key)}\s*=", stripped):
            return lineno
    return 0


def _err(path, text, section, key, message):
    line = _line_of(text, section, key)
    where = f"{path}:{line}" if line else str(path)
    return ConfigError(f"{where}: {message}")


def _typed(value, expected, path, text, section, key):
    if expected is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if expected is int and isinstance(value, bool):
        raise _err(path, text, section, key, f"'{key}' must be an integer")
    if not isinstance(value, expected):
        raise _err(path, text, section, key, f"'{key}' must be of type {expected.__name__}")
    return value


def _dataclass_section(cls, values, path, text, section, base=None):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = dict(base or {})
    for key, value in values.items():
        if key not in fields:
            raise _err(path, text, section, key, f"unknown key '{key}' in [{section}]")
        default = getattr(cls(), key)
        kwargs[key] = _typed(value, type(default), path, text, section, key)
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise _err(path, text, section, None, str(exc)) from None


def parse_config(text, path="<config>"):
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for section in raw:
        if section not in ("experiment", "data", "train"):
            raise _err(path, text, section, None, f"unknown section [{section}]")
    exp = raw.get("experiment", {})
    kwargs = {}
    for key, value in exp.items():
        if key not in _EXPERIMENT_KEYS:
            raise _err(path, text, "experiment", key, f"unknown key '{key}' in [experiment]")
        kwargs[key] = _typed(value, _EXPERIMENT_KEYS[key], path, text, "experiment", key)
    name = kwargs.pop("name", "sim1")
    if name not in EXPERIMENTS:
        raise _err(path, text, "experiment", "name", f"experiment must be one of {EXPERIMENTS}")
    if name == "custom_csv" and not kwargs.get("input"):
        raise _err(path, text, "experiment", "name", "custom_csv needs an 'input' path")
    variants = kwargs.get("variants", ["conventional", "armed"])
    if not variants:
        raise _err(path, text, "experiment", "variants", "variants must be nonempty")
    for v in variants:
        if v not in VARIANTS:
            raise _err(path, text, "experiment", "variants", f"unknown variant {v!r}")
    if kwargs.get("k", 10) < 2:
        raise _err(path, text, "experiment", "k", "k must be at least 2")
    sim_defaults = SIMULATIONS.get(name, {})
    data = _dataclass_section(SpiralConfig, raw.get("data", {}), path, text, "data",
                              base={**dataclasses.asdict(SpiralConfig()), **sim_defaults})
    train = _dataclass_section(TrainConfig, raw.get("train", {}), path, text, "train")
    return ExperimentConfig(experiment=name, data=data, train=train, **kwargs)


def load_config(path):
    """Parse a TOML config, or the config echoed inside a run manifest (``.json``)."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    if str(path).endswith(".json"):
        try:
            text = json.loads(text)["config_text"]
        except (ValueError, KeyError, TypeError):
            raise ConfigError(f"{path}: not a run manifest") from None
    return parse_config(text, path), text
