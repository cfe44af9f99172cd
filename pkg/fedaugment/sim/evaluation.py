"""Accuracy, train-on-synthetic efficacy checks and wall-clock timing."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict
from typing import Any, Callable, Iterable, Optional, Protocol, Sequence, Tuple, TypeVar

import numpy as np
import pandas as pd
import torch
from sklearn.ensemble import RandomForestClassifier

from .errors import ContractError
from .metadata import GlobalMetadata, encode
from .networks import DTYPE, classifier_from_weights
from .states import Dataset, EfficacyReport, EncodedMatrix, MetricsRecord, WeightSet
from .tabular import apportion
from .utils import EfficacyConfig, derive_seed

logger = logging.getLogger(__name__)

T = TypeVar("T")

AVERAGED_COLUMNS = ["accuracy", "wall_clock_seconds", "synthetic_rows_added", "steps_taken", "real_rows"]


class SupportsSampling(Protocol):
    def covers(self, label: str) -> bool: ...

    def sample(self, label: str, n: int, gm: GlobalMetadata, seed: int) -> Dataset: ...


def accuracy(model: WeightSet, test: EncodedMatrix) -> float:
    """Share of rows whose argmax logit matches the label (ties resolve to the lowest class)."""
    if len(test) == 0:
        raise ContractError("accuracy needs a non-empty test set")
    net = classifier_from_weights(model)
    if net.body[0].in_features != test.width:
        raise ContractError(f"model expects {net.body[0].in_features} features, test rows have {test.width}")
    with torch.no_grad():
        logits = net(torch.tensor(test.rows, dtype=DTYPE)).numpy()
    return float(np.mean(np.argmax(logits, axis=1) == test.labels))


def _forest(cfg: EfficacyConfig, seed: int) -> RandomForestClassifier:
    return RandomForestClassifier(
        n_estimators=cfg.n_estimators,
        max_depth=cfg.max_depth,
        bootstrap=cfg.bootstrap,
        max_features=cfg.max_features,
        n_jobs=cfg.n_jobs,
        random_state=seed % (2**32),
    )


def _forest_accuracy(train: EncodedMatrix, test: EncodedMatrix, cfg: EfficacyConfig, seed: int) -> float:
    forest = _forest(cfg, seed).fit(train.rows, train.labels)
    return float(forest.score(test.rows, test.labels))


def ml_efficacy(
    real_train: Dataset,
    real_test: Dataset,
    synth_train: Dataset,
    gm: GlobalMetadata,
    seed: int,
    cfg: Optional[EfficacyConfig] = None,
    source: str = "",
) -> EfficacyReport:
    """Fit the same forest on real and on synthetic rows; score both on the real test split."""
    cfg = cfg or EfficacyConfig()
    if len(synth_train) == 0:
        raise ContractError("synthetic training set is empty")
    if synth_train.schema.column_names != real_train.schema.column_names:
        raise ContractError("synthetic and real training sets use different schemas")

    test_m = encode(real_test, gm, handle_unknown="ignore")
    if len(test_m) == 0:
        raise ContractError("no test row carries a label known to the federation")
    real_m = encode(real_train, gm, handle_unknown="ignore")
    synth_m = encode(synth_train, gm)

    degenerate = len(np.unique(synth_m.labels)) < 2
    if degenerate:
        logger.warning("synthetic training set holds a single class; the forest predicts a constant")

    real_acc = _forest_accuracy(real_m, test_m, cfg, seed)
    synth_acc = _forest_accuracy(synth_m, test_m, cfg, seed)
    descriptor = (
        f"RandomForestClassifier(n_estimators={cfg.n_estimators}, max_depth={cfg.max_depth}, "
        f"bootstrap={cfg.bootstrap}, max_features={cfg.max_features!r}, random_state={seed % (2**32)})"
    )
    logger.info("efficacy %s: real=%.4f synthetic=%.4f", source or "-", real_acc, synth_acc)
    return EfficacyReport(
        real_data_accuracy=real_acc,
        synthetic_data_accuracy=synth_acc,
        gap=real_acc - synth_acc,
        classifier_descriptor=descriptor,
        dataset_descriptor=f"real_train={len(real_m)} synthetic_train={len(synth_m)} test={len(test_m)}",
        degenerate=degenerate,
        source=source,
    )


def synthesize_efficacy_set(bank: SupportsSampling, real_train: Dataset, gm: GlobalMetadata, seed: int) -> Dataset:
    """Synthetic training set as large as ``real_train`` with the same class proportions."""
    counts = pd.Series(real_train.labels()).value_counts()
    labels = [label for label in gm.class_labels if bank.covers(label)]
    missing = [label for label in gm.class_labels if label not in labels and counts.get(label, 0)]
    if missing:
        logger.warning("no generator for labels %s; efficacy set omits them", missing)
    sizes = apportion([int(counts.get(label, 0)) for label in labels], len(real_train))
    parts = [
        bank.sample(label, int(size), gm, derive_seed(seed, "efficacy", label))
        for label, size in zip(labels, sizes)
        if size > 0
    ]
    return Dataset.concat(gm.table, parts)


def timed(work: Callable[..., T], *args: Any, **kwargs: Any) -> Tuple[T, float]:
    start = time.perf_counter()
    result = work(*args, **kwargs)
    return result, max(0.0, time.perf_counter() - start)


def records_frame(records: Iterable[MetricsRecord]) -> pd.DataFrame:
    return pd.DataFrame([asdict(record) for record in records])


def average_records(records: Sequence[MetricsRecord]) -> pd.DataFrame:
    """Per-(dataset, strategy, alpha) means over seeds."""
    df = records_frame(records)
    if df.empty:
        return pd.DataFrame(columns=["dataset", "strategy", "alpha", "n_seeds", *AVERAGED_COLUMNS])
    grouped = df.groupby(["dataset", "strategy", "alpha"], sort=True)
    summary = grouped[AVERAGED_COLUMNS].mean()
    summary.insert(0, "n_seeds", grouped.size())
    return summary.reset_index()


__all__ = [
    "SupportsSampling",
    "accuracy",
    "ml_efficacy",
    "synthesize_efficacy_set",
    "timed",
    "records_frame",
    "average_records",
]
