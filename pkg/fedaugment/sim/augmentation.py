"""Step-by-step synthetic augmentation with patience-based stopping."""
from __future__ import annotations

import logging
import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .errors import ContractError
from .evaluation import SupportsSampling
from .federation import train_federated_classifier
from .metadata import GlobalMetadata
from .states import (
    AugmentationHistory,
    ClassDistribution,
    Dataset,
    NodePartition,
    RoundLog,
    StepQuota,
    StepRecord,
    WeightSet,
)
from .tabular import class_distribution
from .utils import ClassifierConfig, derive_seed

logger = logging.getLogger(__name__)

ClassifierTrainer = Callable[
    [Sequence[Dataset], GlobalMetadata, ClassifierConfig, Dataset, int],
    Tuple[WeightSet, float, List[RoundLog]],
]

STEP_TOLERANCE = 1e-9


def compute_step_quota(
    dists: Sequence[ClassDistribution],
    step_fraction: float,
    labels: Optional[Sequence[str]] = None,
) -> StepQuota:
    """Rows each node should add per class this step.

    The step size is ``ceil(step_fraction * N_max)`` where ``N_max`` is the largest local
    class count anywhere; a node fills each class toward its own largest class, never past it.
    """
    if not 0.0 < step_fraction <= 1.0:
        raise ContractError(f"step_fraction must lie in (0, 1], got {step_fraction}")
    classes = sorted(labels) if labels is not None else sorted({label for dist in dists for label in dist.counts})
    n_max = max((dist.count(label) for dist in dists for label in classes), default=0)
    if n_max == 0:
        return StepQuota()
    step_size = max(1, math.ceil(step_fraction * n_max - STEP_TOLERANCE))

    quotas: Dict[Tuple[int, str], int] = {}
    for dist in dists:
        local_max = max(dist.count(label) for label in classes)
        for label in classes:
            deficit = local_max - dist.count(label)
            if deficit > 0:
                quotas[(dist.node_id, label)] = min(step_size, deficit)
    return StepQuota(quotas)


def class_spread(counts: Dict[str, int], labels: Sequence[str]) -> int:
    values = [counts.get(label, 0) for label in labels]
    if not values or max(values) == 0:
        return 0
    return max(values) - min(values)


def run_fligan(
    partitions: Sequence[NodePartition],
    gm: GlobalMetadata,
    bank: SupportsSampling,
    ccfg: ClassifierConfig,
    delta: int,
    step_fraction: float,
    max_steps: int,
    test: Dataset,
    seed: int,
    trainer: ClassifierTrainer = train_federated_classifier,
    round_logs: Optional[List[RoundLog]] = None,
) -> Tuple[WeightSet, AugmentationHistory]:
    """Add synthetic rows step by step until accuracy stalls for ``delta`` steps.

    Step 0 is the real-data baseline; steps 1..max_steps each add one quota of
    generated rows (accumulating) and retrain the classifier from scratch.
    """
    if delta < 1 or max_steps < 1:
        raise ContractError("delta and max_steps must be positive")
    order = sorted(part.node_id for part in partitions)
    real = {part.node_id: part.data for part in partitions}
    synthetic: Dict[int, List[Dataset]] = {node_id: [] for node_id in order}
    counts = {part.node_id: dict(class_distribution(part).counts) for part in partitions}
    uncovered = [label for label in gm.class_labels if not bank.covers(label)]
    if uncovered:
        logger.warning("labels without a generator receive no synthetic rows: %s", uncovered)

    def train() -> Tuple[WeightSet, float]:
        node_data = [Dataset.concat(gm.table, [real[node_id], *synthetic[node_id]]) for node_id in order]
        weights, acc, logs = trainer(node_data, gm, ccfg, test, seed)
        if round_logs is not None:
            round_logs.extend(logs)
        return weights, acc

    def spreads() -> Dict[int, int]:
        return {node_id: class_spread(counts[node_id], gm.class_labels) for node_id in order}

    best_weights, baseline = train()
    history = AugmentationHistory(records=[StepRecord(0, 0, baseline, 0, spreads())], best_step=0, best_accuracy=baseline)
    logger.info("augmentation step 0 (real data only): accuracy %.4f", baseline)

    added_total = 0
    stale = 0
    for step in range(1, max_steps + 1):
        dists = [ClassDistribution(node_id=node_id, counts=counts[node_id]) for node_id in order]
        quota = compute_step_quota(dists, step_fraction, gm.class_labels)
        added = 0
        for (node_id, label), rows in sorted(quota.quotas.items()):
            if label in uncovered:
                continue
            generated = bank.sample(label, rows, gm, derive_seed(seed, "augment", step, node_id, label))
            synthetic[node_id].append(generated)
            counts[node_id][label] = counts[node_id].get(label, 0) + len(generated)
            added += len(generated)
        added_total += added

        weights, acc = train()
        history.records.append(StepRecord(step, added_total, acc, added, spreads()))
        logger.info("augmentation step %d: +%d rows (total %d), accuracy %.4f", step, added, added_total, acc)

        if acc > history.best_accuracy:
            history.best_step, history.best_accuracy, best_weights = step, acc, weights
            stale = 0
        else:
            stale += 1
        if stale >= delta:
            logger.info("no improvement for %d steps; stopping at step %d", delta, step)
            break
        if added == 0:
            logger.info("every node is balanced; stopping at step %d", step)
            break

    return best_weights, history


__all__ = ["ClassifierTrainer", "compute_step_quota", "class_spread", "run_fligan"]
