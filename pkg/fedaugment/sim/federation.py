"""Federated coordination: FedAvg, classwise GAN training, the joint FedGAN baseline and the classifier."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from torch import nn

from .errors import ContractError
from .evaluation import accuracy, timed
from .grouping import plan_label_groups
from .metadata import LABEL_BLOCK, GlobalMetadata, append_label_block, decode, encode, split_label_block
from .networks import (
    DTYPE,
    Classifier,
    classifier_from_weights,
    init_scaled_uniform,
    seeded_generator,
    weights_from_module,
)
from .states import (
    LABEL,
    ColumnBlock,
    Dataset,
    EncodedMatrix,
    GanPair,
    NodePartition,
    RoundLog,
    WeightSet,
)
from .transport import Envelope, InProcessTransport, run_round
from .utils import ClassifierConfig, GanConfig, GroupingConfig, derive_seed
from .wgan import generate_rows, init_gan, load_weights, sample, save_weights, train_local

logger = logging.getLogger(__name__)

GAN_PHASE = "gan"
FEDGAN_PHASE = "fedgan"
CLASSIFIER_PHASE = "classifier"
REJECTION_ATTEMPTS = 50


def fedavg_aggregate(weights: Sequence[WeightSet], counts: Sequence[int]) -> WeightSet:
    """Count-weighted mean of every named tensor."""
    if not weights:
        raise ContractError("fedavg_aggregate needs at least one weight set")
    if len(weights) != len(counts):
        raise ContractError(f"{len(weights)} weight sets but {len(counts)} counts")
    if any(count <= 0 for count in counts):
        raise ContractError("sample counts must be positive")
    reference = weights[0]
    for other in weights[1:]:
        reference.require_layout(other)
    total = float(sum(counts))
    shares = np.array([count / total for count in counts], dtype=np.float64)
    merged = []
    for position, name in enumerate(reference.names):
        stacked = np.stack([w.entries[position][1] for w in weights])
        merged.append((name, np.tensordot(shares, stacked, axes=1)))
    return WeightSet(tuple(merged))


@dataclass
class GeneratorBank:
    """One classwise generator per label."""

    generators: Dict[str, WeightSet] = field(default_factory=dict)

    @property
    def labels(self) -> List[str]:
        return sorted(self.generators)

    def covers(self, label: str) -> bool:
        return label in self.generators

    def __len__(self) -> int:
        return len(self.generators)

    def sample(self, label: str, n: int, gm: GlobalMetadata, seed: int) -> Dataset:
        if label not in self.generators:
            raise ContractError(f"no generator for label {label!r}")
        return sample(self.generators[label], n, label, gm, seed)


@dataclass
class JointGenerator:
    """Single generator over features plus a trailing label block."""

    generator: WeightSet
    class_labels: List[str]

    def covers(self, label: str) -> bool:
        return label in self.class_labels

    def sample(self, label: str, n: int, gm: GlobalMetadata, seed: int) -> Dataset:
        """Rejection sampling on the generated label; may return fewer than ``n`` rows."""
        target = gm.label_index(label)
        if n <= 0:
            return Dataset.empty(gm.table)
        layout = joint_layout(gm)
        batch = max(64, 2 * n * len(self.class_labels))
        kept: List[np.ndarray] = []
        found = 0
        for attempt in range(REJECTION_ATTEMPTS):
            features, labels = split_label_block(generate_rows(self.generator, batch, layout, derive_seed(seed, attempt)), gm)
            hits = features[labels == target][: n - found]
            kept.append(hits)
            found += len(hits)
            if found >= n:
                break
        if found < n:
            logger.warning("joint generator yielded %d of %d rows for label %r", found, n, label)
        rows = np.vstack(kept) if kept else np.zeros((0, gm.feature_width))
        return decode(EncodedMatrix(rows, gm.layout(), np.full(len(rows), target, dtype=int)), gm)


Sampler = Union[GeneratorBank, JointGenerator]


def joint_layout(gm: GlobalMetadata) -> Tuple[ColumnBlock, ...]:
    return gm.layout() + (ColumnBlock(LABEL_BLOCK, LABEL, gm.feature_width, len(gm.class_labels)),)


def _weighted_loss(replies: Sequence[Envelope]) -> Optional[float]:
    pairs = [(loss, count) for _, count, loss in (r.payload for r in replies) if loss is not None]
    if not pairs:
        return None
    return float(sum(loss * count for loss, count in pairs) / sum(count for _, count in pairs))


def _aggregate_pairs(replies: Sequence[Envelope]) -> GanPair:
    pairs = [reply.payload[0] for reply in replies]
    counts = [reply.payload[1] for reply in replies]
    return GanPair(
        generator=fedavg_aggregate([pair.generator for pair in pairs], counts),
        discriminator=fedavg_aggregate([pair.discriminator for pair in pairs], counts),
    )


def _round_log(phase: str, round_index: int, replies: Sequence[Envelope], seconds: float, **extra) -> RoundLog:
    return RoundLog(
        phase=phase,
        round_index=round_index,
        participants=[reply.sender for reply in replies],
        sample_counts=[int(reply.payload[1]) for reply in replies],
        aggregate_loss=_weighted_loss(replies),
        seconds=seconds,
        **extra,
    )


def train_federated_gan(
    partitions: Sequence[NodePartition],
    gm: GlobalMetadata,
    r_init: int,
    e_init: int,
    alpha_r: float,
    alpha_e: float,
    cfg: GanConfig,
    seed: int,
    eps: float = 0.5,
    min_pts: int = 1,
    max_workers: int = 1,
) -> Tuple[GeneratorBank, List[RoundLog]]:
    """Classwise federated WGAN-GP with volume-based node groups.

    For every label the global pair is carried from the richest group to the poorest;
    each group trains for its decayed number of rounds and local epochs.
    """
    grouping = GroupingConfig(eps=eps, min_pts=min_pts, r_init=r_init, e_init=e_init, alpha_r=alpha_r, alpha_e=alpha_e)
    encoded = {part.node_id: encode(part.data, gm) for part in partitions}
    transport = InProcessTransport(encoded)
    bank = GeneratorBank()
    logs: List[RoundLog] = []

    for label in gm.class_labels:
        label_index = gm.label_index(label)
        plan = [
            (group, sched)
            for group, sched in plan_label_groups(label, gm.per_node_class_dist, grouping)
            if all(node_id in encoded for node_id in group.member_node_ids)
        ]
        if not plan:
            logger.warning("label %r has no data-holding node; no generator trained", label)
            continue
        pair = init_gan(cfg, gm.feature_width, derive_seed(seed, "init", label))

        for group, sched in plan:
            for round_index in range(sched.rounds):

                def local_update(node_id: int, payload: GanPair):
                    rows = encoded[node_id].restrict(label_index)
                    node_seed = derive_seed(seed, "gan", label, group.group_index, round_index, node_id)
                    trained, stats = train_local(payload, rows, sched.epochs, cfg, node_seed)
                    return trained, len(rows), stats.critic_loss

                replies, seconds = timed(
                    run_round, transport, round_index, pair, list(group.member_node_ids), local_update, max_workers
                )
                pair = _aggregate_pairs(replies)
                logs.append(
                    _round_log(GAN_PHASE, round_index, replies, seconds, label=label, group_index=group.group_index)
                )
            logger.debug("label %r group %d done after %d rounds", label, group.group_index, sched.rounds)

        bank.generators[label] = pair.generator
    logger.info("generator bank covers %d of %d labels", len(bank), len(gm.class_labels))
    return bank, logs


def train_fedgan_baseline(
    partitions: Sequence[NodePartition],
    gm: GlobalMetadata,
    rounds: int,
    epochs: int,
    cfg: GanConfig,
    seed: int,
    max_workers: int = 1,
) -> Tuple[JointGenerator, List[RoundLog]]:
    """One GAN over every node's full data, label appended as a one-hot block."""
    holders = [part for part in partitions if len(part.data)]
    if not holders:
        raise ContractError("FedGAN needs at least one non-empty partition")
    n_classes = len(gm.class_labels)
    encoded = {part.node_id: append_label_block(encode(part.data, gm), n_classes) for part in holders}
    transport = InProcessTransport(encoded)
    members = sorted(encoded)
    pair = init_gan(cfg, gm.feature_width + n_classes, derive_seed(seed, "fedgan-init"))
    logs: List[RoundLog] = []

    for round_index in range(rounds):

        def local_update(node_id: int, payload: GanPair):
            rows = encoded[node_id]
            trained, stats = train_local(payload, rows, epochs, cfg, derive_seed(seed, "fedgan", round_index, node_id))
            return trained, len(rows), stats.critic_loss

        replies, seconds = timed(run_round, transport, round_index, pair, members, local_update, max_workers)
        pair = _aggregate_pairs(replies)
        logs.append(_round_log(FEDGAN_PHASE, round_index, replies, seconds))
    return JointGenerator(pair.generator, list(gm.class_labels)), logs


def _train_classifier_local(
    weights: WeightSet,
    data: EncodedMatrix,
    ccfg: ClassifierConfig,
    seed: int,
) -> Tuple[WeightSet, float]:
    net = classifier_from_weights(weights)
    optimiser = torch.optim.Adam(net.parameters(), lr=ccfg.learning_rate)
    loss_fn = nn.CrossEntropyLoss()
    gen = seeded_generator(seed)
    x = torch.tensor(data.rows, dtype=DTYPE)
    y = torch.tensor(data.labels, dtype=torch.long)
    n = len(data)
    loss = torch.zeros((), dtype=DTYPE)
    for _ in range(ccfg.local_epochs):
        order = torch.randperm(n, generator=gen)
        for start in range(0, n, ccfg.batch_size):
            batch = order[start:start + ccfg.batch_size]
            loss = loss_fn(net(x[batch]), y[batch])
            optimiser.zero_grad()
            loss.backward()
            optimiser.step()
    return weights_from_module(net), float(loss.detach())


def init_classifier(gm: GlobalMetadata, ccfg: ClassifierConfig, seed: int) -> WeightSet:
    net = Classifier(gm.feature_width, ccfg.hidden, len(gm.class_labels))
    return weights_from_module(init_scaled_uniform(net, seeded_generator(derive_seed(seed, "classifier-init"))))


def train_federated_classifier(
    node_datasets: Sequence[Dataset],
    gm: GlobalMetadata,
    ccfg: ClassifierConfig,
    test: Dataset,
    seed: int,
    same_seed_per_node: bool = False,
    max_workers: int = 1,
) -> Tuple[WeightSet, float, List[RoundLog]]:
    """FedAvg over an MLP classifier; node ``i`` holds ``node_datasets[i]``."""
    encoded = {node_id: encode(data, gm) for node_id, data in enumerate(node_datasets) if len(data)}
    if not encoded:
        raise ContractError("federated classifier needs at least one node with data")
    test_m = encode(test, gm, handle_unknown="ignore")
    transport = InProcessTransport(encoded)
    members = sorted(encoded)
    weights = init_classifier(gm, ccfg, seed)
    logs: List[RoundLog] = []

    for round_index in range(ccfg.rounds):

        def local_update(node_id: int, payload: WeightSet):
            keys = (round_index,) if same_seed_per_node else (round_index, node_id)
            trained, loss = _train_classifier_local(payload, encoded[node_id], ccfg, derive_seed(seed, "classifier", *keys))
            return trained, len(encoded[node_id]), loss

        replies, seconds = timed(run_round, transport, round_index, weights, members, local_update, max_workers)
        weights = fedavg_aggregate([r.payload[0] for r in replies], [r.payload[1] for r in replies])
        logs.append(_round_log(CLASSIFIER_PHASE, round_index, replies, seconds))

    score = accuracy(weights, test_m)
    logger.debug("federated classifier: %d rounds, %d nodes, accuracy %.4f", ccfg.rounds, len(members), score)
    return weights, score, logs


def save_bank(bank: Sampler, directory: Path, extra: Optional[Dict[str, object]] = None) -> Path:
    """One ``.npz`` per generator plus ``index.json`` describing the bank."""
    directory.mkdir(parents=True, exist_ok=True)
    index: Dict[str, object] = dict(extra or {})
    if isinstance(bank, JointGenerator):
        save_weights(bank.generator, directory / "joint_generator.npz")
        index.update(kind="joint", class_labels=list(bank.class_labels), file="joint_generator.npz")
    else:
        files = {}
        for position, label in enumerate(bank.labels):
            name = f"generator_{position}.npz"
            save_weights(bank.generators[label], directory / name)
            files[label] = name
        index.update(kind="classwise", files=files)
    index_path = directory / "index.json"
    index_path.write_text(json.dumps(index, indent=2, sort_keys=True), encoding="utf-8")
    return index_path


def load_bank(directory: Path) -> Tuple[Sampler, Dict[str, object]]:
    index_path = directory / "index.json"
    if not index_path.exists():
        raise ContractError(f"{directory} holds no generator index")
    index = json.loads(index_path.read_text(encoding="utf-8"))
    if index.get("kind") == "joint":
        return JointGenerator(load_weights(directory / index["file"]), list(index["class_labels"])), index
    bank = GeneratorBank({label: load_weights(directory / name) for label, name in index["files"].items()})
    return bank, index


__all__ = [
    "GAN_PHASE",
    "FEDGAN_PHASE",
    "CLASSIFIER_PHASE",
    "fedavg_aggregate",
    "GeneratorBank",
    "JointGenerator",
    "Sampler",
    "joint_layout",
    "train_federated_gan",
    "train_fedgan_baseline",
    "init_classifier",
    "train_federated_classifier",
    "save_bank",
    "load_bank",
]
