"""Run configuration: one YAML document covering gait, model, data,
training, simulation, and service options.

Desk-scale values are the defaults. `FULL_SCALE` documents the
full-scale preset (window of 80 states at 200 Hz, 400 Hz control, latent
size 64 with hidden layers of 256, one million gradient steps); it is
provided for reference and is far beyond a laptop training budget.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields

import yaml

from .errors import GaitspaceError
from .oracle import GaitParams
from .sim import SimConfig
from .vae import ModelConfig


class InvalidConfig(GaitspaceError):
    """Configuration file failed validation."""


# Full-scale reference values. Keys mirror the RunConfig sections.
FULL_SCALE = {
    "model": {
        "window_len": 80,
        "future_len": 4,
        "contact_steps": 3,
        "latent_dim": 64,
        "hidden": 256,
        "f_c": 400.0,
        "f_enc": 200.0,
        "beta": 1.0,
        "gamma": 0.5,
    },
    "training": {"steps": 1_000_000, "batch_size": 64, "learning_rate": 1e-3},
    "gait": {
        "swing_duration": 0.5,
        "full_stance_duration": 0.075,
        "step_height": 0.10,
    },
}


@dataclass
class DataConfig:
    """Dataset synthesis options."""

    n_trajectories: int = 30
    duration_s: float = 10.0
    vx_range: tuple = (-0.4, 0.4)
    vy_range: tuple = (-0.2, 0.2)
    wz_range: tuple = (-0.3, 0.3)
    # gait-timing sweep; the closed loop can only command what the
    # decoder has seen, so these cover the operating window
    swing_range: tuple = (0.11, 0.55)
    stance_range: tuple = (0.0, 0.12)
    height_range: tuple = (0.0, 0.14)

    @property
    def gait_ranges(self):
        return {"swing": tuple(self.swing_range),
                "stance": tuple(self.stance_range),
                "height": tuple(self.height_range)}

    @property
    def twist_range(self):
        return (tuple(self.vx_range), tuple(self.vy_range),
                tuple(self.wz_range))


@dataclass
class TrainingConfig:
    steps: int = 5000
    batch_size: int = 64
    learning_rate: float = 1e-3
    holdout_fraction: float = 0.1


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8765
    telemetry_hz: float = 20.0


@dataclass
class RunConfig:
    gait: GaitParams = field(default_factory=GaitParams)
    model: ModelConfig = field(default_factory=ModelConfig)
    data: DataConfig = field(default_factory=DataConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)


_SECTIONS = {
    "gait": GaitParams,
    "model": ModelConfig,
    "data": DataConfig,
    "training": TrainingConfig,
    "sim": SimConfig,
    "service": ServiceConfig,
}


def _build_section(cls, mapping, section: str):
    if not isinstance(mapping, dict):
        raise InvalidConfig(f"section '{section}' must be a mapping")
    allowed = {f.name for f in fields(cls)}
    unknown = set(mapping) - allowed
    if unknown:
        raise InvalidConfig(
            f"unknown keys in section '{section}': {sorted(unknown)}"
        )
    coerced = {}
    for f in fields(cls):
        if f.name not in mapping:
            continue
        value = mapping[f.name]
        if isinstance(value, list):
            value = tuple(value)
        coerced[f.name] = value
    try:
        return cls(**coerced)
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(f"section '{section}': {exc}")


def load_config(path) -> RunConfig:
    """Parses and validates a YAML run configuration.

    Missing sections fall back to desk-scale defaults; unknown sections
    or keys are rejected.
    """
    with open(path) as f:
        doc = yaml.safe_load(f)
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise InvalidConfig("top level must be a mapping")
    unknown = set(doc) - set(_SECTIONS)
    if unknown:
        raise InvalidConfig(f"unknown sections: {sorted(unknown)}")
    parts = {
        name: _build_section(cls, doc[name], name)
        for name, cls in _SECTIONS.items() if name in doc
    }
    return RunConfig(**parts)


def default_config() -> RunConfig:
    return RunConfig()


def dump_config(config: RunConfig) -> str:
    """YAML text for a RunConfig; loadable by `load_config`."""
    doc = {}
    for name in _SECTIONS:
        section = dataclasses.asdict(getattr(config, name))
        doc[name] = {
            k: (list(v) if isinstance(v, tuple) else v)
            for k, v in section.items()
        }
    return yaml.safe_dump(doc, sort_keys=False)
