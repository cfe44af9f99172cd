"""Utility helpers for configuration loading and deterministic RNG."""
from __future__ import annotations

import hashlib
import json
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field, ValidationError, root_validator, validator

from .errors import ConfigError

CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"
DEFAULT_CONFIG_PATH = CONFIG_DIR / "experiment_config.json"
STRATEGIES = ("fedavg", "fedgan", "fligan")
GAN_STRATEGIES = ("fedgan", "fligan")
DEFAULT_REPEATS = 3


class MixtureConfig(BaseModel):
    n_rows: int = Field(6000, gt=0)
    n_classes: int = Field(3, gt=1)
    n_continuous: int = Field(6, ge=0)
    n_categorical: int = Field(2, ge=0)
    n_categories: int = Field(4, gt=1)
    class_weights: Optional[List[float]] = None
    separation: float = Field(2.5, gt=0)
    seed: int = 0

    @validator("class_weights")
    def _weights_match_classes(cls, value, values):
        if value is not None:
            if len(value) != values.get("n_classes"):
                raise ValueError("class_weights must have one entry per class")
            if any(w <= 0 for w in value):
                raise ValueError("class_weights must be positive")
        return value


class DatasetConfig(BaseModel):
    name: str = "dataset"
    path: Optional[str] = None
    schema_name: Optional[str] = None
    column_names: Optional[List[str]] = None
    categorical_cols: List[str] = Field(default_factory=list)
    continuous_cols: List[str] = Field(default_factory=list)
    target_col: Optional[str] = None
    mixture: Optional[MixtureConfig] = None
    test_fraction: float = Field(0.2, gt=0.0, lt=1.0)

    @root_validator(skip_on_failure=True)
    def _source_declared(cls, values):
        if values.get("path") is None and values.get("mixture") is None:
            raise ValueError("dataset needs either a file path or a mixture generator")
        if values.get("path") is not None and values.get("schema_name") is None:
            if values.get("target_col") is None:
                raise ValueError("file datasets need schema_name or an inline schema with target_col")
        return values


class GanConfig(BaseModel):
    noise_dim: int = Field(64, gt=0)
    gen_hidden: List[int] = Field(default_factory=lambda: [128, 128])
    disc_hidden: List[int] = Field(default_factory=lambda: [128, 128])
    lambda_gp: float = Field(10.0, gt=0)
    n_critic: int = Field(5, gt=0)
    batch_size: int = Field(64, gt=0)
    learning_rate: float = Field(1e-4, gt=0)
    adam_beta1: float = Field(0.0, ge=0.0, lt=1.0)
    adam_beta2: float = Field(0.9, ge=0.0, lt=1.0)

    @validator("gen_hidden", "disc_hidden", each_item=True)
    def _positive_width(cls, value):
        if value <= 0:
            raise ValueError("layer widths must be positive")
        return value


class ClassifierConfig(BaseModel):
    hidden: List[int] = Field(default_factory=lambda: [64, 64])
    rounds: int = Field(10, ge=0)
    local_epochs: int = Field(2, gt=0)
    batch_size: int = Field(64, gt=0)
    learning_rate: float = Field(1e-3, gt=0)

    @validator("hidden", each_item=True)
    def _positive_width(cls, value):
        if value <= 0:
            raise ValueError("layer widths must be positive")
        return value


class GroupingConfig(BaseModel):
    eps: float = Field(0.5, gt=0)
    min_pts: int = Field(1, ge=1)
    r_init: int = Field(3, gt=0)
    e_init: int = Field(60, gt=0)
    alpha_r: float = Field(0.5, gt=0.0, le=1.0)
    alpha_e: float = Field(0.5, gt=0.0, le=1.0)


class FedGanConfig(BaseModel):
    rounds: int = Field(5, gt=0)
    epochs: int = Field(60, gt=0)


class AugmentationConfig(BaseModel):
    delta: int = Field(2, gt=0)
    step_fraction: float = Field(0.01, gt=0.0, le=1.0)
    max_steps: int = Field(30, gt=0)


class EfficacyConfig(BaseModel):
    n_estimators: int = Field(100, gt=0)
    max_depth: Optional[int] = Field(None, gt=0)
    bootstrap: bool = True
    max_features: str = Field("sqrt", regex="^(sqrt|log2)$")
    n_jobs: Optional[int] = None


class ExperimentConfig(BaseModel):
    name: str = "experiment"
    dataset: DatasetConfig
    n_nodes: int = Field(8, gt=0)
    alphas: List[float] = Field(default_factory=lambda: [0.05, 1.0, 1.5, 2.0])
    seeds: Optional[List[int]] = None
    repeats: Optional[int] = Field(None, gt=0)
    base_seed: int = 0
    strategies: List[str] = Field(default_factory=lambda: list(STRATEGIES))
    gan: GanConfig = Field(default_factory=GanConfig)
    classifier: ClassifierConfig = Field(default_factory=ClassifierConfig)
    grouping: GroupingConfig = Field(default_factory=GroupingConfig)
    fedgan: FedGanConfig = Field(default_factory=FedGanConfig)
    augmentation: AugmentationConfig = Field(default_factory=AugmentationConfig)
    efficacy: EfficacyConfig = Field(default_factory=EfficacyConfig)
    efficacy_enabled: bool = True
    output_dir: str = "runs"
    database_url: Optional[str] = None
    max_workers: int = Field(1, gt=0)

    @validator("alphas")
    def _positive_alphas(cls, value):
        if not value or any(a <= 0 for a in value):
            raise ValueError("alphas must be a non-empty list of positive numbers")
        return value

    @validator("strategies")
    def _known_strategies(cls, value):
        if not value:
            raise ValueError("at least one strategy is required")
        unknown = [s for s in value if s not in STRATEGIES]
        if unknown:
            raise ValueError(f"unknown strategies {unknown}; choose from {list(STRATEGIES)}")
        return value

    @root_validator(skip_on_failure=True)
    def _seeds_match_repeats(cls, values):
        seeds, repeats = values.get("seeds"), values.get("repeats")
        if seeds and repeats is not None and repeats != len(seeds):
            raise ValueError(f"repeats={repeats} disagrees with the {len(seeds)} explicit seeds")
        return values

    def seed_list(self) -> List[int]:
        if self.seeds:
            return list(self.seeds)
        return [self.base_seed + i for i in range(self.repeats or DEFAULT_REPEATS)]

    def hash(self) -> str:
        hasher = hashlib.sha256()
        hasher.update(self.json(sort_keys=True).encode("utf-8"))
        return hasher.hexdigest()


def _load_json(path: Path) -> Dict:
    with path.open("r", encoding="utf-8") as f:
        return json.load(f)


def parse_experiment_config(payload: Dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.parse_obj(payload)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


@lru_cache(maxsize=4)
def load_experiment_config(path: Optional[Path] = None) -> ExperimentConfig:
    config_path = Path(path) if path is not None else DEFAULT_CONFIG_PATH
    if not config_path.exists():
        raise ConfigError(f"config file not found: {config_path}")
    try:
        payload = _load_json(config_path)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{config_path}: {exc}") from exc
    return parse_experiment_config(payload)


def with_overrides(cfg: ExperimentConfig, **updates: Any) -> ExperimentConfig:
    """Return a re-validated copy with top-level fields replaced (``None`` values are ignored)."""
    payload = json.loads(cfg.json())
    payload.update({key: value for key, value in updates.items() if value is not None})
    return parse_experiment_config(payload)


def rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def derive_seed(seed: int, *keys: object) -> int:
    """Stable child seed for a (seed, keys...) path, independent of call order."""
    payload = json.dumps([int(seed), *[str(k) for k in keys]]).encode("utf-8")
    digest = hashlib.sha256(payload).digest()
    return int.from_bytes(digest[:8], "big") & 0x7FFF_FFFF_FFFF_FFFF


__all__ = [
    "STRATEGIES",
    "GAN_STRATEGIES",
    "MixtureConfig",
    "DatasetConfig",
    "GanConfig",
    "ClassifierConfig",
    "GroupingConfig",
    "FedGanConfig",
    "AugmentationConfig",
    "EfficacyConfig",
    "ExperimentConfig",
    "parse_experiment_config",
    "load_experiment_config",
    "with_overrides",
    "rng",
    "derive_seed",
]
