"""Pipeline configuration: one TOML file with per-stage sections.

Every tunable of the pipeline is surfaced here with its default. Referenced
input files must exist at load time; stage outputs are resolved against
``output_dir`` and checked by the consuming subcommand.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import InputError, ValidationError
from .routing import RoutingParams


@dataclass
class Stage0Params:
    space_eps_m: float = 150.0
    time_eps_s: int = 900
    dwell_floor_s: int = 900
    blend_eta: float = 0.60
    min_distinct_locations: int = 8
    tz_offset_s: int = 0


@dataclass
class Stage1Params:
    alpha: float = 0.7
    learning_rate: float = 0.2
    n_iter: int = 800
    training_data: str = ""
    n_train: int = 4000


@dataclass
class Stage3Params:
    backend: str = "fallback"  # "fallback" | "remote"
    endpoint: str = ""
    model: str = "gpt-4o-mini"
    temperature: float = 0.8
    max_tokens: int = 2048
    retry_cap: int = 3
    attempt_budget: int = 3
    api_key_env: str = "TOURSYNTH_API_KEY"
    timeout_s: float = 30.0
    backoff_base_s: float = 0.5
    concurrency: int = 1

    def __post_init__(self):
        if self.backend not in ("fallback", "remote"):
            raise ValidationError(f"unknown backend {self.backend!r}")
        if self.backend == "remote" and not self.endpoint:
            raise ValidationError("remote backend requires an endpoint URL")


@dataclass
class PipelineConfig:
    seed: int = 42
    output_dir: str = "out"
    staypoints: str = ""
    pings: str = ""
    poi_catalog: str = ""
    marginals: str = ""
    centroids: str = ""
    distance_matrix: str = ""
    n_agents: int = 100
    stage0: Stage0Params = field(default_factory=Stage0Params)
    stage1: Stage1Params = field(default_factory=Stage1Params)
    stage2: RoutingParams = field(default_factory=RoutingParams)
    stage3: Stage3Params = field(default_factory=Stage3Params)

    def out_path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    def require_input(self, name: str) -> str:
        path = getattr(self, name)
        if not path:
            raise InputError(f"config does not set required input {name!r}")
        if not os.path.exists(path):
            raise InputError(f"{name} file not found: {path}")
        return path

    def require_output(self, name: str) -> str:
        path = self.out_path(name)
        if not os.path.exists(path):
            raise InputError(
                f"missing upstream file {path}; run the producing stage first"
            )
        return path


def _apply(obj, section: dict, path: str) -> None:
    for key, value in section.items():
        if not hasattr(obj, key):
            raise InputError(f"{path}: unknown config key {key!r} in [{type(obj).__name__}]")
        setattr(obj, key, value)


def load_config(path: str) -> PipelineConfig:
    """Parse and validate the TOML config; input files must exist."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise InputError(f"config {path} is not valid TOML: {exc}") from exc

    cfg = PipelineConfig()
    for key in ("seed", "output_dir", "n_agents"):
        if key in raw:
            setattr(cfg, key, raw[key])
    _apply_inputs(cfg, raw.get("inputs", {}), path)
    try:
        if "stage0" in raw:
            _apply(cfg.stage0, raw["stage0"], path)
        if "stage1" in raw:
            _apply(cfg.stage1, raw["stage1"], path)
        if "stage2" in raw:
            params = {**_dataclass_dict(cfg.stage2), **raw["stage2"]}
            cfg.stage2 = RoutingParams(**params)
        if "stage3" in raw:
            _apply(cfg.stage3, raw["stage3"], path)
            cfg.stage3.__post_init__()
    except TypeError as exc:
        raise InputError(f"{path}: bad stage parameters: {exc}") from exc

    for name in ("staypoints", "pings", "poi_catalog", "marginals", "centroids", "distance_matrix"):
        p = getattr(cfg, name)
        if p and not os.path.exists(p):
            raise InputError(f"{path}: {name} file not found: {p}")
    return cfg


def _apply_inputs(cfg: PipelineConfig, inputs: dict, path: str) -> None:
    known = ("staypoints", "pings", "poi_catalog", "marginals", "centroids", "distance_matrix")
    for key, value in inputs.items():
        if key not in known:
            raise InputError(f"{path}: unknown input key {key!r}")
        setattr(cfg, key, value)


def _dataclass_dict(obj) -> dict:
    return {f: getattr(obj, f) for f in obj.__dataclass_fields__}
