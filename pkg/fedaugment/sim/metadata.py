"""Federated encoding: nodes share category/range metadata, the server merges a global dictionary."""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, validator

from .errors import ContractError, EncodingError
from .states import (
    CATEGORICAL,
    CONTINUOUS,
    LABEL,
    ClassDistribution,
    ColumnBlock,
    Dataset,
    EncodedMatrix,
    NodePartition,
    TableSchema,
)
from .tabular import class_distribution

logger = logging.getLogger(__name__)

LABEL_BLOCK = "__label__"


class LocalMetadata(BaseModel):
    """What a node reveals about its table: category sets, numeric ranges, label counts."""

    node_id: int
    column_names: List[str]
    categorical_cols: List[str]
    continuous_cols: List[str]
    target_col: str
    categories: Dict[str, List[str]] = Field(default_factory=dict)
    ranges: Dict[str, Tuple[float, float]] = Field(default_factory=dict)
    class_dist: ClassDistribution

    class Config:
        allow_mutation = False

    @validator("ranges")
    def _ordered_ranges(cls, value):
        for col, (lo, hi) in value.items():
            if lo > hi:
                raise ValueError(f"range of {col!r} has min > max")
        return value


class GlobalMetadata(BaseModel):
    """Federation-wide vocabularies and ranges used by every node for encoding."""

    column_names: List[str]
    categorical_cols: List[str]
    continuous_cols: List[str]
    target_col: str
    vocab: Dict[str, List[str]]
    global_ranges: Dict[str, Tuple[float, float]]
    class_labels: List[str]
    per_node_class_dist: List[ClassDistribution]
    degenerate: List[str] = Field(default_factory=list)

    class Config:
        allow_mutation = False

    @property
    def table(self) -> TableSchema:
        return TableSchema.build(self.categorical_cols, self.continuous_cols, self.target_col, self.column_names)

    def layout(self) -> Tuple[ColumnBlock, ...]:
        blocks = []
        start = 0
        for col in self.column_names:
            if col in self.categorical_cols:
                width = len(self.vocab.get(col, []))
                blocks.append(ColumnBlock(col, CATEGORICAL, start, width))
            elif col in self.continuous_cols:
                width = 1
                blocks.append(ColumnBlock(col, CONTINUOUS, start, width))
            else:
                continue
            start += width
        return tuple(blocks)

    @property
    def feature_width(self) -> int:
        return int(sum(len(self.vocab.get(col, [])) for col in self.categorical_cols) + len(self.continuous_cols))

    def label_index(self, label: str) -> int:
        try:
            return self.class_labels.index(label)
        except ValueError as exc:
            raise EncodingError(self.target_col, label) from exc


def collect_local_metadata(part: NodePartition, schema: TableSchema) -> LocalMetadata:
    frame = part.data.frame
    categories: Dict[str, List[str]] = {}
    ranges: Dict[str, Tuple[float, float]] = {}
    if len(frame):
        for col in schema.categorical_cols:
            categories[col] = sorted({str(v) for v in frame[col]})
        for col in schema.continuous_cols:
            ranges[col] = (float(frame[col].min()), float(frame[col].max()))
    return LocalMetadata(
        node_id=part.node_id,
        column_names=list(schema.column_names),
        categorical_cols=list(schema.categorical_cols),
        continuous_cols=list(schema.continuous_cols),
        target_col=schema.target_col,
        categories=categories,
        ranges=ranges,
        class_dist=class_distribution(part),
    )


def merge_metadata(locals_: Sequence[LocalMetadata]) -> GlobalMetadata:
    """Order-independent reduction of node metadata into the global dictionary."""
    if not locals_:
        raise ContractError("merge_metadata needs at least one node's metadata")
    first = locals_[0]
    signature = (first.column_names, first.categorical_cols, first.continuous_cols, first.target_col)
    for meta in locals_[1:]:
        if (meta.column_names, meta.categorical_cols, meta.continuous_cols, meta.target_col) != signature:
            raise ContractError(f"node {meta.node_id} reports a different table schema")

    vocab = {
        col: sorted(set().union(*(meta.categories.get(col, []) for meta in locals_)))
        for col in first.categorical_cols
    }

    global_ranges: Dict[str, Tuple[float, float]] = {}
    degenerate: List[str] = []
    for col in first.continuous_cols:
        observed = [meta.ranges[col] for meta in locals_ if col in meta.ranges]
        if observed:
            lo, hi = min(r[0] for r in observed), max(r[1] for r in observed)
        else:
            lo = hi = 0.0
        global_ranges[col] = (lo, hi)
        if lo == hi:
            degenerate.append(col)
    if degenerate:
        logger.warning("continuous columns with a single global value encode to 0: %s", degenerate)

    by_node: Dict[int, ClassDistribution] = {}
    for meta in locals_:
        known = by_node.get(meta.class_dist.node_id)
        if known is not None and known.counts != meta.class_dist.counts:
            raise ContractError(f"node {meta.class_dist.node_id} sent conflicting class distributions")
        by_node[meta.class_dist.node_id] = meta.class_dist

    class_labels = sorted(set().union(*(dist.counts for dist in by_node.values())))
    return GlobalMetadata(
        column_names=list(first.column_names),
        categorical_cols=list(first.categorical_cols),
        continuous_cols=list(first.continuous_cols),
        target_col=first.target_col,
        vocab=vocab,
        global_ranges=global_ranges,
        class_labels=class_labels,
        per_node_class_dist=[by_node[node_id] for node_id in sorted(by_node)],
        degenerate=degenerate,
    )


def encode(data: Dataset, gm: GlobalMetadata, handle_unknown: str = "error") -> EncodedMatrix:
    """One-hot categorical blocks, continuous columns scaled to [-1, 1].

    With ``handle_unknown="ignore"`` unseen categories encode as an all-zero block and rows
    with an unseen label are dropped; both are counted in the log.
    """
    if handle_unknown not in ("error", "ignore"):
        raise ContractError(f"handle_unknown must be 'error' or 'ignore', got {handle_unknown!r}")
    frame = data.frame
    label_codes = pd.Categorical(frame[gm.target_col].astype(str), categories=gm.class_labels).codes.astype(int)
    unknown_labels = label_codes < 0
    if unknown_labels.any():
        if handle_unknown == "error":
            raise EncodingError(gm.target_col, str(frame[gm.target_col].iloc[int(np.argmax(unknown_labels))]))
        logger.warning("dropping %d rows whose label is unknown to the federation", int(unknown_labels.sum()))
        frame = frame.loc[~unknown_labels]
        label_codes = label_codes[~unknown_labels]

    layout = gm.layout()
    rows = np.zeros((len(frame), gm.feature_width), dtype=np.float64)
    for block in layout:
        values = frame[block.name]
        if block.kind == CATEGORICAL:
            codes = pd.Categorical(values.astype(str), categories=gm.vocab[block.name]).codes.astype(int)
            unknown = codes < 0
            if unknown.any():
                if handle_unknown == "error":
                    raise EncodingError(block.name, str(values.iloc[int(np.argmax(unknown))]))
                logger.warning("column %r: %d values outside the global vocabulary", block.name, int(unknown.sum()))
            hit = np.flatnonzero(~unknown)
            rows[hit, block.start + codes[hit]] = 1.0
        else:
            lo, hi = gm.global_ranges[block.name]
            if hi > lo:
                rows[:, block.start] = 2.0 * (values.to_numpy(dtype=float) - lo) / (hi - lo) - 1.0
    return EncodedMatrix(rows=rows, layout=layout, labels=label_codes)


def decode(m: EncodedMatrix, gm: GlobalMetadata) -> Dataset:
    """Inverse of ``encode``: argmax per categorical block, inverse scaling clipped to the range."""
    layout = gm.layout()
    if m.rows.ndim != 2 or m.rows.shape[1] != gm.feature_width:
        raise ContractError(f"matrix width {m.rows.shape} does not match global layout width {gm.feature_width}")
    columns: Dict[str, np.ndarray] = {}
    for block in layout:
        chunk = m.rows[:, block.start:block.stop]
        if block.kind == CATEGORICAL:
            if block.width == 0:
                raise ContractError(f"column {block.name!r} has an empty vocabulary")
            vocab = np.asarray(gm.vocab[block.name], dtype=object)
            columns[block.name] = vocab[np.argmax(chunk, axis=1)] if len(chunk) else np.empty(0, dtype=object)
        else:
            lo, hi = gm.global_ranges[block.name]
            values = lo + (chunk[:, 0] + 1.0) / 2.0 * (hi - lo)
            columns[block.name] = np.clip(values, lo, hi)
    labels = np.asarray(gm.class_labels, dtype=object)
    columns[gm.target_col] = labels[m.labels] if len(m.labels) else np.empty(0, dtype=object)
    frame = pd.DataFrame({col: columns[col] for col in gm.column_names})
    for col in gm.continuous_cols:
        frame[col] = frame[col].astype(float)
    return Dataset(gm.table, frame)


def append_label_block(m: EncodedMatrix, n_classes: int) -> EncodedMatrix:
    """Append the class label as a trailing one-hot block (joint-generator training)."""
    onehot = np.zeros((len(m), n_classes), dtype=np.float64)
    onehot[np.arange(len(m)), m.labels] = 1.0
    layout = m.layout + (ColumnBlock(LABEL_BLOCK, LABEL, m.width, n_classes),)
    return EncodedMatrix(np.hstack([m.rows, onehot]), layout, m.labels.copy())


def split_label_block(rows: np.ndarray, gm: GlobalMetadata) -> Tuple[np.ndarray, np.ndarray]:
    width = gm.feature_width
    return rows[:, :width], np.argmax(rows[:, width:], axis=1)


def save_metadata(gm: GlobalMetadata, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(gm.json(indent=2), encoding="utf-8")
    return path


def load_metadata(path: Path) -> GlobalMetadata:
    return GlobalMetadata.parse_file(path)


__all__ = [
    "LABEL_BLOCK",
    "LocalMetadata",
    "GlobalMetadata",
    "collect_local_metadata",
    "merge_metadata",
    "encode",
    "decode",
    "append_label_block",
    "split_label_block",
    "save_metadata",
    "load_metadata",
]
