"""Per-label node grouping by data volume and decayed training budgets."""
from __future__ import annotations

import logging
import math
from typing import Dict, List, Sequence, Tuple

import numpy as np
from sklearn.cluster import DBSCAN

from .errors import ContractError
from .states import ClassDistribution, NodeGroup, TrainingSchedule
from .utils import GroupingConfig

logger = logging.getLogger(__name__)

NOISE = -1
CEIL_TOLERANCE = 1e-9


def dbscan_1d(points: Sequence[float], eps: float, min_pts: int) -> List[int]:
    """DBSCAN on the real line.

    Points are visited in ascending order and cluster ids follow first appearance in that
    order; ``-1`` marks noise (impossible when ``min_pts == 1``). Neighbourhoods are closed
    balls of radius ``eps`` that include the point itself.
    """
    if eps <= 0:
        raise ContractError("eps must be positive")
    if min_pts < 1:
        raise ContractError("min_pts must be at least 1")
    if len(points) == 0:
        return []
    values = np.asarray(points, dtype=float)
    order = np.argsort(values, kind="stable")
    raw = DBSCAN(eps=eps, min_samples=min_pts, metric="euclidean").fit_predict(values[order].reshape(-1, 1))

    relabel: Dict[int, int] = {}
    assignment = [NOISE] * len(values)
    for position, cluster in zip(order, raw):
        if cluster == NOISE:
            continue
        if cluster not in relabel:
            relabel[cluster] = len(relabel)
        assignment[int(position)] = relabel[cluster]
    return assignment


def group_nodes(
    label: str,
    dists: Sequence[ClassDistribution],
    eps: float = 0.5,
    min_pts: int = 1,
) -> List[NodeGroup]:
    """Cluster data-holding nodes on log(1 + count), richest group first."""
    holders = [(dist.node_id, dist.count(label)) for dist in sorted(dists, key=lambda d: d.node_id)]
    holders = [(node_id, count) for node_id, count in holders if count > 0]
    if not holders:
        return []
    clusters = dbscan_1d([math.log1p(count) for _, count in holders], eps, min_pts)

    members: Dict[Tuple[str, int], List[Tuple[int, int]]] = {}
    for (node_id, count), cluster in zip(holders, clusters):
        # noise nodes still train, each as its own group
        key = ("noise", node_id) if cluster == NOISE else ("cluster", cluster)
        members.setdefault(key, []).append((node_id, count))

    groups = [
        (tuple(sorted(node_id for node_id, _ in entries)), int(sum(count for _, count in entries)))
        for entries in members.values()
    ]
    groups.sort(key=lambda g: (-g[1], g[0][0]))
    return [NodeGroup(label=label, member_node_ids=ids, volume=volume, group_index=idx) for idx, (ids, volume) in enumerate(groups)]


def _decayed(initial: int, rate: float, index: int) -> int:
    return max(1, math.ceil(round(initial * rate**index, 9) - CEIL_TOLERANCE))


def schedule(
    r_init: int,
    e_init: int,
    alpha_r: float,
    alpha_e: float,
    group_index: int,
) -> TrainingSchedule:
    if group_index < 0:
        raise ContractError("group_index must be non-negative")
    return TrainingSchedule(
        group_index=group_index,
        rounds=_decayed(r_init, alpha_r, group_index),
        epochs=_decayed(e_init, alpha_e, group_index),
    )


def plan_label_groups(
    label: str,
    dists: Sequence[ClassDistribution],
    cfg: GroupingConfig,
) -> List[Tuple[NodeGroup, TrainingSchedule]]:
    groups = group_nodes(label, dists, cfg.eps, cfg.min_pts)
    plan = [(group, schedule(cfg.r_init, cfg.e_init, cfg.alpha_r, cfg.alpha_e, group.group_index)) for group in groups]
    for group, sched in plan:
        logger.info(
            "label %s group %d: nodes=%s volume=%d rounds=%d epochs=%d",
            label, group.group_index, list(group.member_node_ids), group.volume, sched.rounds, sched.epochs,
        )
    return plan


__all__ = ["NOISE", "dbscan_1d", "group_nodes", "schedule", "plan_label_groups"]
