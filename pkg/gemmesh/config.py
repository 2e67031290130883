"""Validated run configuration (JSON files with a version field)."""
import json
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from gemmesh.constants import (
    CONFIG_VERSION,
    DEFAULT_BATCH_SIZE,
    DEFAULT_DISTANCE_SCALE,
    DEFAULT_LEARNING_RATE,
    DEFAULT_POOL_RATIOS,
    DEFAULT_RADIUS_EDGE_FACTOR,
    DEFAULT_RADIUS_FACTORS,
    DEFAULT_SPLIT,
    FULL_SCALE_WIDTHS,
)
from gemmesh.errors import ConfigInvalidError

ConvKind = Literal["gem", "isotropic", "attention", "pointnet"]
Target = Literal["wss", "pressure"]


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelConfig(StrictModel):
    """Network architecture.

    `widths` are per-order multiplicities for gem models; gauge-free models use
    width * (2 * max_order + 1) plain channels so feature sizes match.
    """

    conv_kind: ConvKind = "gem"
    levels: int = Field(3, ge=1, le=3)
    widths: list[int] = Field(default_factory=lambda: [8, 12, 16])
    max_order: int = Field(2, ge=0)
    blocks_per_level: int = Field(1, ge=0)
    time_steps: int = Field(1, ge=1)
    seed: int = 0
    target: Target = "wss"
    boundary_condition: bool = True
    nonlinearity: bool = True
    nonlinearity_samples: Optional[int] = Field(None, ge=1)
    fourier_order: Optional[int] = Field(None, ge=0)
    radius_mm: Optional[float] = Field(None, gt=0)
    radius_edge_factor: float = Field(DEFAULT_RADIUS_EDGE_FACTOR, gt=0)
    pool_ratios: list[float] = Field(default_factory=lambda: list(DEFAULT_POOL_RATIOS))
    radius_factors: list[float] = Field(default_factory=lambda: list(DEFAULT_RADIUS_FACTORS))
    distance_scale_mm: float = Field(DEFAULT_DISTANCE_SCALE, gt=0)
    pointnet_hidden: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def check_levels(self) -> "ModelConfig":
        for name in ("widths", "pool_ratios", "radius_factors"):
            if len(getattr(self, name)) < self.levels:
                raise ValueError(f"{name} needs at least {self.levels} entries")
        if any(w < 1 for w in self.widths):
            raise ValueError(f"widths must be positive, got {self.widths}")
        ratios = self.pool_ratios[: self.levels]
        if ratios[0] != 1.0 or any(b >= a for a, b in zip(ratios, ratios[1:])):
            raise ValueError(f"pool_ratios must start at 1.0 and strictly decrease, got {ratios}")
        factors = self.radius_factors[: self.levels]
        if factors[0] <= 0 or any(b <= a for a, b in zip(factors, factors[1:])):
            raise ValueError(f"radius_factors must be positive and increasing, got {factors}")
        return self

    @property
    def out_components(self) -> int:
        return 3 if self.target == "wss" else 1

    @classmethod
    def full_scale(cls, **overrides) -> "ModelConfig":
        return cls(widths=list(FULL_SCALE_WIDTHS), **overrides)


class TrainConfig(StrictModel):
    epochs: int = Field(100, ge=0)
    batch_size: int = Field(DEFAULT_BATCH_SIZE, ge=1)
    learning_rate: float = Field(DEFAULT_LEARNING_RATE, ge=0)
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = Field(1e-8, gt=0)
    split: tuple[float, float, float] = DEFAULT_SPLIT
    seed: int = 0
    augment_rotations: bool = False
    train_size: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def check_split(self) -> "TrainConfig":
        if any(f < 0 for f in self.split) or abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must be non-negative and sum to 1, got {self.split}")
        return self


class RunConfig(StrictModel):
    version: Literal[CONFIG_VERSION]
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)


def _invalid(error: ValidationError) -> ConfigInvalidError:
    details = "; ".join(
        f"{'.'.join(str(p) for p in e['loc']) or 'config'}: {e['msg']}" for e in error.errors()
    )
    return ConfigInvalidError(details)


def parse_model_config(data: Union[dict, ModelConfig]) -> ModelConfig:
    if isinstance(data, ModelConfig):
        return data
    try:
        return ModelConfig.model_validate(data)
    except ValidationError as e:
        raise _invalid(e) from e


def parse_run_config(data: dict) -> RunConfig:
    """Validate a config dictionary.

    Raises:
        ConfigInvalidError: Missing or unsupported version, unknown keys or bad values.
    """
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise _invalid(e) from e


def load_run_config(path: Union[str, Path]) -> RunConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigInvalidError(f"cannot read config {path}: {e}") from e
    return parse_run_config(data)
