"""YAML run configurations.

A config holds the grid, the order s, a damping spec, a seed, an output
directory and one block of parameters for the chosen experiment.  Unknown
keys are rejected with their dotted path so typos fail loudly.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigurationError

EXPERIMENTS = ("simulate", "resolvent-sweep", "spectral-constant", "uncertainty-sweep", "thickness", "fit")

# defaults per experiment block; None means "derive at run time"
EXPERIMENT_DEFAULTS = {
    "simulate": {
        "T": 40.0, "dt": None, "dt_out": 0.1, "window": None,
        "data": {"kind": "broadband", "width": None, "center": 0.0, "carrier": 4.0, "packet_width": 2.0},
        "smooth": 0,
    },
    "resolvent-sweep": {
        "lambdas": {"lo": -20.0, "hi": 20.0, "num": 81}, "refine": 0, "tol": 1e-8,
        "eps": 0.5, "cube_len": 2.0, "predict": True,
    },
    "spectral-constant": {"eps": 0.5, "radii": [2.0, 4.0, 8.0, 16.0], "tol": 1e-10},
    "uncertainty-sweep": {"eps": 0.5, "order": None, "lambdas": {"lo": 0.0, "hi": 30.0, "num": 31}, "tol": 1e-8},
    "thickness": {"eps": 0.5, "cube_len": 4.0, "gcc_window": None},
    "fit": {"trace": None, "window": None},
}

TOP_KEYS = ("experiment", "grid", "s", "damping", "seed", "out", "params")
GRID_KEYS = ("d", "n", "box_len")


def _merge(defaults, given, path):
    out = copy.deepcopy(defaults)
    if given is None:
        return out
    if not isinstance(given, dict):
        raise ConfigurationError(f"{path} must be a mapping", path)
    for key, val in given.items():
        sub = f"{path}.{key}"
        if key not in defaults:
            raise ConfigurationError(f"unknown key {sub}", sub)
        if isinstance(defaults[key], dict):
            out[key] = _merge(defaults[key], val, sub)
        else:
            out[key] = val
    return out


def _number(value, path, kind=float, positive=False):
    try:
        if isinstance(value, bool):
            raise TypeError
        v = kind(value)
        if kind is int and v != value:
            raise ValueError
    except (TypeError, ValueError):
        raise ConfigurationError(f"{path} must be {'an integer' if kind is int else 'a number'}", path) from None
    if positive and not v > 0:
        raise ConfigurationError(f"{path} must be > 0", path)
    return v


@dataclass
class RunConfig:
    experiment: str
    grid: dict = field(default_factory=lambda: {"d": 1, "n": 512, "box_len": 16.0})
    s: float = 2.0
    damping: dict = field(default_factory=lambda: {"family": "uniform", "level": 1.0})
    seed: int = 0
    out: str = "out"
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict, experiment: str | None = None) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigurationError("config must be a mapping", "<root>")
        for key in data:
            if key not in TOP_KEYS:
                raise ConfigurationError(f"unknown key {key}", key)
        exp = experiment or data.get("experiment")
        if exp not in EXPERIMENTS:
            raise ConfigurationError(f"experiment must be one of {EXPERIMENTS}, got {exp!r}", "experiment")
        if data.get("experiment") not in (None, exp):
            raise ConfigurationError(f"config is for {data['experiment']!r}, not {exp!r}", "experiment")
        grid = data.get("grid", {"d": 1, "n": 512, "box_len": 16.0})
        if not isinstance(grid, dict):
            raise ConfigurationError("grid must be a mapping", "grid")
        for key in grid:
            if key not in GRID_KEYS:
                raise ConfigurationError(f"unknown key grid.{key}", f"grid.{key}")
        grid = {"d": _number(grid.get("d", 1), "grid.d", int),
                "n": _number(grid.get("n", 512), "grid.n", int),
                "box_len": _number(grid.get("box_len", 16.0), "grid.box_len", float, True)}
        damping = data.get("damping", {"family": "uniform", "level": 1.0})
        if not isinstance(damping, dict) or "family" not in damping:
            raise ConfigurationError("damping needs a family", "damping.family")
        params = _merge(EXPERIMENT_DEFAULTS[exp], data.get("params"), "params")
        return cls(experiment=exp, grid=grid, s=_number(data.get("s", 2.0), "s", float, True),
                   damping=dict(damping), seed=_number(data.get("seed", 0), "seed", int),
                   out=str(data.get("out", "out")), params=params)

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "grid": dict(self.grid), "s": self.s,
                "damping": copy.deepcopy(self.damping), "seed": self.seed, "out": self.out,
                "params": copy.deepcopy(self.params)}

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def hash(self) -> str:
        """sha256 of the canonical JSON form, excluding the output directory."""
        d = self.to_dict()
        d.pop("out")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def loads(text: str, experiment: str | None = None) -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config is not valid YAML: {exc}", "<root>") from None
    return RunConfig.from_dict(data or {}, experiment)


def load(path, experiment: str | None = None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file {path} not found", "--config")
    return loads(path.read_text(), experiment)
