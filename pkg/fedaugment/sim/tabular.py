"""Tabular dataset loading, stratified splitting and Dirichlet node partitioning."""
from __future__ import annotations

import json
import logging
import math
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from scipy.stats import entropy

from .errors import ContractError, ParseError, SchemaError
from .states import ClassDistribution, Dataset, NodePartition, TableSchema
from .utils import CONFIG_DIR, DatasetConfig, MixtureConfig, rng

logger = logging.getLogger(__name__)

ROUNDING_TOLERANCE = 1e-9


class DatasetDescriptor(BaseModel):
    rows: str
    categorical: int = Field(..., ge=0)
    continuous: int = Field(..., ge=0)
    total: int = Field(..., gt=0)
    target_col: Optional[str] = None
    column_names: Optional[List[str]] = None
    categorical_cols: Optional[List[str]] = None
    continuous_cols: Optional[List[str]] = None


class DatasetRegistry(BaseModel):
    datasets: Dict[str, DatasetDescriptor]


@lru_cache(maxsize=1)
def load_registry(path: Optional[Path] = None) -> DatasetRegistry:
    registry_path = path or (CONFIG_DIR / "datasets_config.json")
    with registry_path.open("r", encoding="utf-8") as f:
        return DatasetRegistry.parse_obj(json.load(f))


def load_schema(name: str) -> TableSchema:
    registry = load_registry()
    descriptor = registry.datasets.get(name)
    if descriptor is None:
        raise SchemaError(f"unknown dataset {name!r}; registered: {sorted(registry.datasets)}")
    if descriptor.column_names is None or descriptor.target_col is None:
        raise SchemaError(f"dataset {name!r} has no registered column layout; declare the schema inline")
    return TableSchema.build(
        descriptor.categorical_cols or [],
        descriptor.continuous_cols or [],
        descriptor.target_col,
        descriptor.column_names,
    )


def schema_from_config(cfg: DatasetConfig) -> TableSchema:
    if cfg.mixture is not None and cfg.path is None:
        return mixture_schema(cfg.mixture)
    if cfg.schema_name is not None:
        return load_schema(cfg.schema_name)
    return TableSchema.build(cfg.categorical_cols, cfg.continuous_cols, cfg.target_col, cfg.column_names)


def load_dataset(path: Path | str, schema: TableSchema) -> Dataset:
    """Read a comma-separated file; rows with empty cells are dropped and counted."""
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    frame.columns = [str(col).strip() for col in frame.columns]
    missing = [col for col in schema.column_names if col not in frame.columns]
    extra = [col for col in frame.columns if col not in schema.column_names]
    if missing or extra:
        raise SchemaError(f"{path}: missing columns {missing}, unexpected columns {extra}")

    frame = frame[list(schema.column_names)].apply(lambda col: col.str.strip())
    empty = (frame == "").any(axis=1)
    dropped = int(empty.sum())
    if dropped:
        logger.warning("%s: dropped %d rows with empty cells", path, dropped)
    frame = frame.loc[~empty].copy()

    for col in schema.continuous_cols:
        parsed = pd.to_numeric(frame[col], errors="coerce")
        bad = parsed.isna()
        if bad.any():
            first = bad.idxmax()
            raise ParseError(row=int(first) + 1, column=col, value=frame.at[first, col])
        frame[col] = parsed.astype(float)

    return Dataset(schema, frame.reset_index(drop=True), dropped_rows=dropped)


def load_configured_dataset(cfg: DatasetConfig) -> Dataset:
    if cfg.path is not None:
        return load_dataset(Path(cfg.path), schema_from_config(cfg))
    assert cfg.mixture is not None
    return make_mixture_dataset(cfg.mixture)


def split_train_test(data: Dataset, test_fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    """Stratified split; each class contributes floor(test_fraction * size) test rows."""
    if len(data) == 0:
        raise ContractError("cannot split an empty dataset")
    if not 0.0 < test_fraction < 1.0:
        raise ContractError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    gen = rng(seed)
    labels = data.labels()
    train_idx: List[int] = []
    test_idx: List[int] = []
    for label in sorted(set(labels)):
        idx = np.flatnonzero(labels == label)
        if len(idx) == 1:
            logger.warning("class %r has a single row; keeping it in the training split", label)
            train_idx.extend(idx.tolist())
            continue
        n_test = math.floor(test_fraction * len(idx) + ROUNDING_TOLERANCE)
        shuffled = gen.permutation(idx)
        test_idx.extend(shuffled[:n_test].tolist())
        train_idx.extend(shuffled[n_test:].tolist())
    return data.subset(sorted(train_idx)), data.subset(sorted(test_idx))


def apportion(weights: Sequence[float], total: int) -> np.ndarray:
    """Largest-remainder rounding of ``total`` items over ``weights``; ties go to the lower index."""
    weights = np.asarray(weights, dtype=float)
    if total == 0 or weights.sum() <= 0:
        return np.zeros(len(weights), dtype=int)
    raw = weights / weights.sum() * total
    base = np.floor(raw).astype(int)
    remainder = total - int(base.sum())
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:remainder]] += 1
    return base


def dirichlet_partition(data: Dataset, n_nodes: int, alpha: float, seed: int) -> List[NodePartition]:
    """Per-class Dirichlet(alpha) allocation of rows over nodes."""
    if len(data) == 0:
        raise ContractError("cannot partition an empty dataset")
    if n_nodes < 1:
        raise ContractError("n_nodes must be at least 1")
    if alpha <= 0:
        raise ContractError("alpha must be positive")
    gen = rng(seed)
    labels = data.labels()
    assignment = np.zeros(len(data), dtype=int)
    for label in sorted(set(labels)):
        idx = np.flatnonzero(labels == label)
        proportions = gen.dirichlet(np.full(n_nodes, float(alpha)))
        if not np.all(np.isfinite(proportions)) or proportions.sum() <= 0:
            proportions = np.eye(n_nodes)[gen.integers(n_nodes)]
        counts = apportion(proportions, len(idx))
        shuffled = gen.permutation(idx)
        for node_id, chunk in enumerate(np.split(shuffled, np.cumsum(counts)[:-1])):
            assignment[chunk] = node_id
    return [NodePartition(node_id, data.subset(np.flatnonzero(assignment == node_id))) for node_id in range(n_nodes)]


def class_distribution(part: NodePartition) -> ClassDistribution:
    if len(part.data) == 0:
        return ClassDistribution(node_id=part.node_id, counts={})
    counts = pd.Series(part.data.labels()).value_counts()
    return ClassDistribution(
        node_id=part.node_id,
        counts={str(label): int(counts[label]) for label in sorted(counts.index)},
    )


def class_share_entropy(part: NodePartition) -> float:
    dist = class_distribution(part)
    if dist.total == 0:
        return 0.0
    return float(entropy(list(dist.counts.values())))


def mixture_schema(cfg: MixtureConfig) -> TableSchema:
    continuous = [f"x{i}" for i in range(cfg.n_continuous)]
    categorical = [f"cat{j}" for j in range(cfg.n_categorical)]
    return TableSchema.build(categorical, continuous, "label", [*continuous, *categorical, "label"])


def _sample_from_distribution(gen: np.random.Generator, dist: Dict[str, float], size: int) -> np.ndarray:
    choices = list(dist.keys())
    probs = np.array([dist[k] for k in choices], dtype=float)
    probs = probs / probs.sum()
    return gen.choice(choices, size=size, p=probs)


def make_mixture_dataset(cfg: MixtureConfig) -> Dataset:
    """Gaussian class mixture with class-dependent categorical columns."""
    gen = rng(cfg.seed)
    schema = mixture_schema(cfg)
    class_names = [f"c{k}" for k in range(cfg.n_classes)]
    weights = cfg.class_weights or [1.0] * cfg.n_classes
    sizes = apportion(weights, cfg.n_rows)

    frames = []
    for name, size in zip(class_names, sizes):
        centre = gen.normal(0.0, cfg.separation, size=cfg.n_continuous)
        scale = gen.uniform(0.6, 1.4, size=cfg.n_continuous)
        columns: Dict[str, np.ndarray] = {
            f"x{i}": gen.normal(centre[i], scale[i], size=size) for i in range(cfg.n_continuous)
        }
        for j in range(cfg.n_categorical):
            shares = gen.dirichlet(np.full(cfg.n_categories, 0.7))
            dist = {f"v{v}": float(p) for v, p in enumerate(shares)}
            columns[f"cat{j}"] = _sample_from_distribution(gen, dist, size)
        columns["label"] = np.full(size, name, dtype=object)
        frames.append(pd.DataFrame(columns))

    frame = pd.concat(frames, ignore_index=True)
    frame = frame.iloc[gen.permutation(len(frame))].reset_index(drop=True)
    for col in schema.categorical_cols:
        frame[col] = frame[col].astype(object)
    return Dataset(schema, frame[list(schema.column_names)])


__all__ = [
    "DatasetDescriptor",
    "load_registry",
    "load_schema",
    "schema_from_config",
    "load_dataset",
    "load_configured_dataset",
    "split_train_test",
    "apportion",
    "dirichlet_partition",
    "class_distribution",
    "class_share_entropy",
    "mixture_schema",
    "make_mixture_dataset",
]
