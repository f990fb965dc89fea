"""Experiment configuration: one JSON document per run, command-line flags override it."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .model import ModelError, PotentialSpec

OUTPUT_ENV = "HNLAB_OUTPUT_DIR"
COMMANDS = ("spectrum", "flow", "bands", "lyapunov", "curve", "theorem", "stats-poisson", "stats-ldp",
            "stats-radius", "stats-gaps", "stats-vconv", "figure1", "figure2", "verify-all")


class ConfigError(ValueError):
    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


@dataclass
class Thresholds:
    """Every finite-N tolerance and pass fraction used by the suites."""

    tau_re: float = 1e-8
    pair_tol: float = 1e-6
    oracle_tol: float = 1e-6
    closed_form_tol: float = 1e-9
    gamma_mc_tol: float = 1e-3
    gamma_thouless_tol: float = 0.01
    consistency_tol: float = 0.02
    edge_match_tol: float = 1e-8
    ks_coefficient: float = 1.63
    seed_pass_fraction: float = 0.95


@dataclass
class ExperimentConfig:
    command: str = "spectrum"
    potential: dict = field(default_factory=lambda: {"kind": "uniform", "lo": 0.0, "hi": 4.0})
    N: int = 70
    N_list: list = field(default_factory=lambda: [40, 70, 100, 140])
    g: float = 0.0
    g_max: Optional[float] = None
    E: Optional[float] = None
    E_range: list = field(default_factory=lambda: [-3.0, 7.0])
    E_points: int = 101
    region: list = field(default_factory=lambda: [-3.0, 7.0, -1.0, 1.0])
    resolution: list = field(default_factory=lambda: [96, 32])
    epsilon: float = 0.1
    c_edge: float = 0.05
    seed: int = 0
    n_seeds: int = 20
    n_steps: int = 100_000
    n_reps: int = 32
    window: Optional[float] = None
    delta_points: int = 25
    initial_step: float = 0.01
    scale: str = "full"
    output_dir: Optional[str] = None
    thresholds: Thresholds = field(default_factory=Thresholds)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}", "command")
        if isinstance(self.thresholds, dict):
            self.thresholds = _build(Thresholds, self.thresholds, "thresholds.")
        if self.scale not in ("full", "quick"):
            raise ConfigError("scale must be 'full' or 'quick'", "scale")
        if self.N < 3:
            raise ConfigError("N must be >= 3", "N")
        try:
            self.spec
        except ModelError as exc:
            raise ConfigError(str(exc), "potential") from exc

    @property
    def spec(self) -> PotentialSpec:
        return PotentialSpec.from_dict(self.potential)

    def out_dir(self) -> Path:
        d = self.output_dir or os.environ.get(OUTPUT_ENV) or "hnlab-out"
        return Path(d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return _build(cls, data, "")

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def with_overrides(self, overrides: dict) -> "ExperimentConfig":
        d = self.to_dict()
        for k, v in overrides.items():
            if v is None:
                continue
            if k.startswith("thresholds."):
                sub = k.split(".", 1)[1]
                if sub not in d["thresholds"]:
                    raise ConfigError(f"unknown key {k!r}", k)
                d["thresholds"][sub] = v
            elif k not in d:
                raise ConfigError(f"unknown key {k!r}", k)
            else:
                d[k] = v
        return ExperimentConfig.from_dict(d)


def _build(cls, data: dict, prefix: str):
    if not isinstance(data, dict):
        raise ConfigError(f"expected an object for {prefix or 'config'}")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"unknown key {prefix + key!r}", prefix + key)
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"bad value in {prefix or 'config'}: {exc}") from exc


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(data)
