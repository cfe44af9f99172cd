"""Core dataclasses and message types for the federated simulator."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from .errors import ContractError, SchemaError

CATEGORICAL = "categorical"
CONTINUOUS = "continuous"
LABEL = "label"


@dataclass(frozen=True)
class TableSchema:
    """Column roles of a tabular dataset. The target column is categorical."""

    column_names: Tuple[str, ...]
    categorical_cols: Tuple[str, ...]
    continuous_cols: Tuple[str, ...]
    target_col: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "column_names", tuple(self.column_names))
        object.__setattr__(self, "categorical_cols", tuple(self.categorical_cols))
        object.__setattr__(self, "continuous_cols", tuple(self.continuous_cols))
        cat, cont, target = set(self.categorical_cols), set(self.continuous_cols), {self.target_col}
        if cat & cont or target & (cat | cont):
            raise SchemaError("categorical, continuous and target columns must be disjoint")
        if len(set(self.column_names)) != len(self.column_names):
            raise SchemaError("duplicate column names")
        if cat | cont | target != set(self.column_names):
            missing = set(self.column_names) - (cat | cont | target)
            extra = (cat | cont | target) - set(self.column_names)
            raise SchemaError(f"column roles do not cover the table: unassigned={sorted(missing)} unknown={sorted(extra)}")

    @classmethod
    def build(
        cls,
        categorical_cols: Sequence[str],
        continuous_cols: Sequence[str],
        target_col: str,
        column_names: Optional[Sequence[str]] = None,
    ) -> "TableSchema":
        names = column_names or [*categorical_cols, *continuous_cols, target_col]
        return cls(tuple(names), tuple(categorical_cols), tuple(continuous_cols), target_col)


@dataclass
class Dataset:
    """Typed rows: text for categorical columns, floats for continuous ones."""

    schema: TableSchema
    frame: pd.DataFrame
    dropped_rows: int = 0

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def rows(self) -> List[Dict[str, object]]:
        return self.frame.to_dict("records")

    def labels(self) -> np.ndarray:
        return self.frame[self.schema.target_col].to_numpy(dtype=object)

    def subset(self, index: Sequence[int]) -> "Dataset":
        return Dataset(self.schema, self.frame.iloc[list(index)].reset_index(drop=True))

    @classmethod
    def empty(cls, schema: TableSchema) -> "Dataset":
        frame = pd.DataFrame({col: pd.Series(dtype=float if col in schema.continuous_cols else object) for col in schema.column_names})
        return cls(schema, frame)

    @classmethod
    def concat(cls, schema: TableSchema, parts: Iterable["Dataset"]) -> "Dataset":
        frames = [part.frame for part in parts if len(part)]
        if not frames:
            return cls.empty(schema)
        return cls(schema, pd.concat(frames, ignore_index=True)[list(schema.column_names)])


@dataclass
class NodePartition:
    node_id: int
    data: Dataset


class ClassDistribution(BaseModel):
    """Per-node label counts as sent to the server."""

    node_id: int
    counts: Dict[str, int] = Field(default_factory=dict)

    class Config:
        allow_mutation = False

    @property
    def total(self) -> int:
        return int(sum(self.counts.values()))

    def count(self, label: str) -> int:
        return int(self.counts.get(label, 0))


@dataclass(frozen=True)
class ColumnBlock:
    name: str
    kind: str
    start: int
    width: int

    @property
    def stop(self) -> int:
        return self.start + self.width


@dataclass
class EncodedMatrix:
    """Numeric view of a Dataset under the global encoding."""

    rows: np.ndarray
    layout: Tuple[ColumnBlock, ...]
    labels: np.ndarray

    @property
    def width(self) -> int:
        return int(sum(block.width for block in self.layout))

    def __len__(self) -> int:
        return int(self.rows.shape[0])

    def restrict(self, label_index: int) -> "EncodedMatrix":
        mask = self.labels == label_index
        return EncodedMatrix(self.rows[mask], self.layout, self.labels[mask])


@dataclass(frozen=True)
class WeightSet:
    """Ordered named tensors; the unit exchanged between nodes and server."""

    entries: Tuple[Tuple[str, np.ndarray], ...]

    def __post_init__(self) -> None:
        frozen = []
        for name, tensor in self.entries:
            array = np.array(tensor, dtype=np.float64, copy=True)
            array.setflags(write=False)
            frozen.append((str(name), array))
        object.__setattr__(self, "entries", tuple(frozen))

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, np.ndarray]) -> "WeightSet":
        return cls(tuple(mapping.items()))

    def __iter__(self) -> Iterator[Tuple[str, np.ndarray]]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(name for name, _ in self.entries)

    @property
    def shapes(self) -> Tuple[Tuple[int, ...], ...]:
        return tuple(tensor.shape for _, tensor in self.entries)

    def as_dict(self) -> Dict[str, np.ndarray]:
        return dict(self.entries)

    def same_layout(self, other: "WeightSet") -> bool:
        return self.names == other.names and self.shapes == other.shapes

    def require_layout(self, other: "WeightSet") -> None:
        if not self.same_layout(other):
            raise ContractError(
                f"weight layouts differ: {list(zip(self.names, self.shapes))} vs {list(zip(other.names, other.shapes))}"
            )

    def equals(self, other: "WeightSet") -> bool:
        return self.same_layout(other) and all(
            np.array_equal(a, b) for (_, a), (_, b) in zip(self.entries, other.entries)
        )


@dataclass(frozen=True)
class GanPair:
    generator: WeightSet
    discriminator: WeightSet


@dataclass
class TrainStats:
    critic_loss: Optional[float] = None
    generator_loss: Optional[float] = None
    generator_steps: int = 0
    critic_steps: int = 0


@dataclass(frozen=True)
class NodeGroup:
    label: str
    member_node_ids: Tuple[int, ...]
    volume: int
    group_index: int = 0


@dataclass(frozen=True)
class TrainingSchedule:
    group_index: int
    rounds: int
    epochs: int


@dataclass
class RoundLog:
    """One federated aggregation event."""

    phase: str
    round_index: int
    participants: List[int]
    sample_counts: List[int]
    aggregate_loss: Optional[float]
    seconds: float
    label: Optional[str] = None
    group_index: Optional[int] = None


@dataclass
class StepQuota:
    quotas: Dict[Tuple[int, str], int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return int(sum(self.quotas.values()))

    def get(self, node_id: int, label: str) -> int:
        return int(self.quotas.get((node_id, label), 0))


@dataclass
class StepRecord:
    step: int
    synthetic_rows: int
    accuracy: float
    quota_rows: int = 0
    class_spread: Dict[int, int] = field(default_factory=dict)


@dataclass
class AugmentationHistory:
    records: List[StepRecord] = field(default_factory=list)
    best_step: int = 0
    best_accuracy: float = float("-inf")

    @property
    def steps(self) -> List[int]:
        return [record.step for record in self.records]

    @property
    def best_synthetic_rows(self) -> int:
        for record in self.records:
            if record.step == self.best_step:
                return record.synthetic_rows
        return 0


@dataclass
class EfficacyReport:
    real_data_accuracy: float
    synthetic_data_accuracy: float
    gap: float
    classifier_descriptor: str
    dataset_descriptor: str
    degenerate: bool = False
    source: str = ""


@dataclass
class MetricsRecord:
    strategy: str
    alpha: float
    seed: int
    accuracy: float
    wall_clock_seconds: float
    synthetic_rows_added: int = 0
    steps_taken: int = 0
    real_rows: int = 0
    dataset: str = ""


__all__ = [
    "CATEGORICAL",
    "CONTINUOUS",
    "LABEL",
    "TableSchema",
    "Dataset",
    "NodePartition",
    "ClassDistribution",
    "ColumnBlock",
    "EncodedMatrix",
    "WeightSet",
    "GanPair",
    "TrainStats",
    "NodeGroup",
    "TrainingSchedule",
    "RoundLog",
    "StepQuota",
    "StepRecord",
    "AugmentationHistory",
    "EfficacyReport",
    "MetricsRecord",
]
