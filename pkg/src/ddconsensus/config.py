"""Experiment configuration models.

One pydantic model tree serves three ingestion paths: YAML config files for
the CLI, JSON bodies for the service, and direct construction in tests.
Matrix-valued fields are plain nested lists so configs stay hand-writable.
"""
from __future__ import annotations

from typing import Literal, Optional

import numpy as np
from pydantic import AliasChoices, BaseModel, Field, field_validator, model_validator

from .errors import ConfigError

Matrix = list[list[float]]


class PlantSpec(BaseModel):
    a: Matrix
    b: Matrix


class GraphSpec(BaseModel):
    adjacency: Optional[Matrix] = None
    edges: Optional[list[tuple[int, int, float]]] = None
    n_nodes: Optional[int] = None
    undirected_followers: bool = True

    @model_validator(mode="after")
    def _one_source(self):
        if self.adjacency is None and self.edges is None:
            raise ValueError("graph needs either an adjacency matrix or an edge list")
        if self.edges is not None and self.n_nodes is None:
            raise ValueError("edge-list graphs must state n_nodes")
        return self


class DataParams(BaseModel):
    seed: int
    # sample count; "T" accepted as an alias. Default: 3(n+p); noisy mode 12(n+p)
    horizon: Optional[int] = Field(default=None,
                                   validation_alias=AliasChoices("horizon", "T"))
    input_scale: float = 1.0
    noise_fill: float = Field(default=0.8, gt=0.0, le=1.0)


class NoiseBoundSpec(BaseModel):
    """Explicit prior blocks, or scalar scales expanded to the data size."""

    n11: Optional[Matrix] = None
    n12: Optional[Matrix] = None
    n22: Optional[Matrix] = None
    n11_scale: float = 0.1
    n22_scale: float = -1.0


class WeightSpec(BaseModel):
    q: Optional[Matrix] = None                  # one weight for every agent
    q_per_agent: Optional[list[Matrix]] = None  # overrides q follower-wise
    r_tilde: Optional[Matrix] = None
    q_tilde: Optional[Matrix] = None
    delta: Optional[float] = None


class Tolerances(BaseModel):
    consensus: float = 1e-3


class ExperimentConfig(BaseModel):
    mode: Literal["noiseless", "noisy", "leader-only"]
    fixture: Optional[Literal["sec6"]] = None
    plant: Optional[PlantSpec] = None
    graph: Optional[GraphSpec] = None
    data: DataParams
    noise: Optional[NoiseBoundSpec] = None
    weights: WeightSpec = Field(default_factory=WeightSpec)
    horizon: int = Field(default=500, ge=1)
    tolerances: Tolerances = Field(default_factory=Tolerances)
    invertible_b: bool = True
    out_dir: str = "out"

    @field_validator("out_dir")
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("out_dir must be nonempty")
        return v

    @model_validator(mode="after")
    def _mode_requirements(self):
        if self.fixture is None:
            if self.plant is None:
                raise ValueError("plant matrices required unless a fixture is named")
            if self.graph is None:
                raise ValueError("graph required unless a fixture is named")
        return self


def load_config(path) -> ExperimentConfig:
    """Parse a YAML config file into an ExperimentConfig.

    Raises ConfigError with the pydantic field diagnostics attached.
    """
    import yaml

    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config parse error in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping, got {type(raw).__name__}")
    return parse_config(raw)


def parse_config(raw: dict) -> ExperimentConfig:
    from pydantic import ValidationError

    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        fields = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors())
        raise ConfigError(f"invalid config: {fields}") from exc


def matrix(m: Matrix) -> np.ndarray:
    return np.array(m, dtype=float)
