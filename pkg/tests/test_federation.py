from __future__ import annotations

import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from fedaugment.sim import federation as federation_module
from fedaugment.sim.errors import ContractError
from fedaugment.sim.federation import (
    CLASSIFIER_PHASE,
    FEDGAN_PHASE,
    GAN_PHASE,
    GeneratorBank,
    JointGenerator,
    fedavg_aggregate,
    init_classifier,
    load_bank,
    save_bank,
    train_fedgan_baseline,
    train_federated_classifier,
    train_federated_gan,
)
from fedaugment.sim.grouping import plan_label_groups
from fedaugment.sim.metadata import collect_local_metadata, merge_metadata
from fedaugment.sim.states import Dataset, NodePartition, TrainStats, WeightSet
from fedaugment.sim.tabular import dirichlet_partition, split_train_test
from fedaugment.sim.utils import ClassifierConfig, GroupingConfig


def _ws(*arrays):
    return WeightSet(tuple((f"t{i}", np.asarray(a, dtype=float)) for i, a in enumerate(arrays)))


def test_fedavg_weights_by_count():
    merged = fedavg_aggregate([_ws([0.0, 0.0], [[1.0]]), _ws([4.0, 8.0], [[5.0]])], [3, 1])
    np.testing.assert_allclose(merged.as_dict()["t0"], [1.0, 2.0])
    np.testing.assert_allclose(merged.as_dict()["t1"], [[2.0]])


def test_fedavg_single_input_is_identity():
    only = _ws([1.5, -2.0])
    assert fedavg_aggregate([only], [7]).equals(only)


@settings(max_examples=100, deadline=None)
@given(
    values=st.lists(
        st.lists(st.floats(min_value=-100, max_value=100, allow_nan=False), min_size=3, max_size=3),
        min_size=1,
        max_size=6,
    ),
    data=st.data(),
)
def test_fedavg_matches_brute_force(values, data):
    counts = data.draw(st.lists(st.integers(min_value=1, max_value=1000), min_size=len(values), max_size=len(values)))
    sets = [_ws(v) for v in values]
    merged = fedavg_aggregate(sets, counts).as_dict()["t0"]
    total = sum(counts)
    expected = [sum(c * v[i] for c, v in zip(counts, values)) / total for i in range(3)]
    np.testing.assert_allclose(merged, expected, rtol=1e-12, atol=1e-12)

    order = data.draw(st.permutations(range(len(values))))
    shuffled = fedavg_aggregate([sets[i] for i in order], [counts[i] for i in order]).as_dict()["t0"]
    np.testing.assert_allclose(shuffled, merged, rtol=1e-12, atol=1e-12)

    scaled = fedavg_aggregate(sets, [c * 3 for c in counts]).as_dict()["t0"]
    np.testing.assert_allclose(scaled, merged, rtol=1e-12, atol=1e-12)


def test_fedavg_rejects_bad_input():
    with pytest.raises(ContractError):
        fedavg_aggregate([], [])
    with pytest.raises(ContractError):
        fedavg_aggregate([_ws([1.0]), _ws([1.0, 2.0])], [1, 1])
    with pytest.raises(ContractError):
        fedavg_aggregate([_ws([1.0])], [0])
    with pytest.raises(ContractError):
        fedavg_aggregate([_ws([1.0])], [1, 2])


def _single_label_federation(toy_schema, sizes):
    gen = np.random.default_rng(0)
    parts = []
    for node_id, size in enumerate(sizes):
        frame = pd.DataFrame(
            {
                "x": gen.normal(0.0, 1.0, size),
                "colour": gen.choice(["red", "blue"], size).astype(object),
                "y": gen.normal(1.0, 1.0, size),
                "label": np.array(["a"] * size, dtype=object),
            }
        )
        parts.append(NodePartition(node_id, Dataset(toy_schema, frame[list(toy_schema.column_names)])))
    gm = merge_metadata([collect_local_metadata(part, toy_schema) for part in parts])
    return parts, gm


def test_single_node_gan_runs_r_init_rounds(toy_schema, tiny_gan):
    parts, gm = _single_label_federation(toy_schema, [30])
    bank, logs = train_federated_gan(parts, gm, 2, 1, 0.5, 0.5, tiny_gan, seed=0)
    assert len(logs) == 2
    assert [log.round_index for log in logs] == [0, 1]
    assert all(log.phase == GAN_PHASE and log.participants == [0] for log in logs)
    assert bank.labels == ["a"]


def test_gan_rounds_follow_group_schedule(toy_schema, tiny_gan):
    parts, gm = _single_label_federation(toy_schema, [100, 90, 5])
    _, logs = train_federated_gan(parts, gm, 3, 1, 0.5, 0.5, tiny_gan, seed=0)
    assert len(logs) == 5
    assert [log.group_index for log in logs] == [0, 0, 0, 1, 1]
    assert logs[0].participants == [0, 1]
    assert logs[0].sample_counts == [100, 90]
    assert logs[-1].participants == [2]


def test_generator_bank_covers_present_labels(federation, tiny_gan):
    partitions, gm = federation
    bank, logs = train_federated_gan(partitions, gm, 1, 1, 0.5, 0.5, tiny_gan, seed=1)
    assert bank.labels == sorted(gm.class_labels)
    assert {log.label for log in logs} == set(gm.class_labels)
    rows = bank.sample(gm.class_labels[0], 10, gm, seed=2)
    assert len(rows) == 10
    with pytest.raises(ContractError):
        GeneratorBank().sample("a", 1, gm, 0)


def test_gan_training_is_deterministic(federation, tiny_gan):
    partitions, gm = federation
    first, _ = train_federated_gan(partitions, gm, 1, 1, 0.5, 0.5, tiny_gan, seed=4)
    second, _ = train_federated_gan(partitions, gm, 1, 1, 0.5, 0.5, tiny_gan, seed=4, max_workers=2)
    for label in first.labels:
        assert first.generators[label].equals(second.generators[label])


def test_fedgan_baseline_rounds_and_sampling(federation, tiny_gan):
    partitions, gm = federation
    joint, logs = train_fedgan_baseline(partitions, gm, 2, 1, tiny_gan, seed=0)
    assert isinstance(joint, JointGenerator)
    assert len(logs) == 2
    assert all(log.phase == FEDGAN_PHASE for log in logs)
    assert logs[0].participants == sorted(p.node_id for p in partitions if len(p.data))
    label = gm.class_labels[0]
    rows = joint.sample(label, 8, gm, seed=3)
    assert len(rows) <= 8
    assert set(rows.labels()) <= {label}
    assert joint.covers(label)
    assert not joint.covers("missing")


def test_bank_persists(tmp_path, federation, tiny_gan):
    partitions, gm = federation
    bank, _ = train_federated_gan(partitions, gm, 1, 1, 0.5, 0.5, tiny_gan, seed=1)
    save_bank(bank, tmp_path / "bank", extra={"strategy": "fligan"})
    loaded, index = load_bank(tmp_path / "bank")
    assert index["strategy"] == "fligan"
    assert loaded.labels == bank.labels
    for label in bank.labels:
        assert loaded.generators[label].equals(bank.generators[label])

    joint, _ = train_fedgan_baseline(partitions, gm, 1, 1, tiny_gan, seed=0)
    save_bank(joint, tmp_path / "joint")
    restored, index = load_bank(tmp_path / "joint")
    assert index["kind"] == "joint"
    assert restored.generator.equals(joint.generator)
    with pytest.raises(ContractError):
        load_bank(tmp_path / "nothing")


def _blob_split(blobs):
    return split_train_test(blobs, 0.25, seed=0)


def test_classifier_with_zero_rounds_keeps_initial_weights(blobs):
    train, test = _blob_split(blobs)
    parts = dirichlet_partition(train, 2, 1.0, seed=0)
    gm = merge_metadata([collect_local_metadata(p, blobs.schema) for p in parts])
    ccfg = ClassifierConfig(hidden=[4], rounds=0)
    weights, acc, logs = train_federated_classifier([p.data for p in parts], gm, ccfg, test, seed=0)
    assert logs == []
    assert weights.equals(init_classifier(gm, ccfg, 0))
    assert 0.0 <= acc <= 1.0


def test_classifier_separates_blobs(blobs):
    train, test = _blob_split(blobs)
    parts = dirichlet_partition(train, 3, 1.0, seed=1)
    gm = merge_metadata([collect_local_metadata(p, blobs.schema) for p in parts])
    ccfg = ClassifierConfig(hidden=[16], rounds=10, local_epochs=5, batch_size=16, learning_rate=0.01)
    _, acc, logs = train_federated_classifier([p.data for p in parts], gm, ccfg, test, seed=0)
    assert acc >= 0.95
    assert len(logs) == 10
    assert all(log.phase == CLASSIFIER_PHASE for log in logs)


def test_replicated_nodes_match_centralised_training(blobs):
    train, test = _blob_split(blobs)
    gm = merge_metadata([collect_local_metadata(NodePartition(0, train), blobs.schema)])
    ccfg = ClassifierConfig(hidden=[8], rounds=3, local_epochs=1, batch_size=16)
    single, _, _ = train_federated_classifier([train], gm, ccfg, test, seed=5, same_seed_per_node=True)
    replicated, _, _ = train_federated_classifier([train] * 3, gm, ccfg, test, seed=5, same_seed_per_node=True)
    for (_, a), (_, b) in zip(single, replicated):
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)


def test_classifier_is_deterministic_across_workers(federation):
    partitions, gm = federation
    train = Dataset.concat(gm.table, [p.data for p in partitions])
    ccfg = ClassifierConfig(hidden=[8], rounds=2, local_epochs=1, batch_size=32)
    a, acc_a, _ = train_federated_classifier([p.data for p in partitions], gm, ccfg, train, seed=2)
    b, acc_b, _ = train_federated_classifier([p.data for p in partitions], gm, ccfg, train, seed=2, max_workers=2)
    assert a.equals(b)
    assert acc_a == acc_b


def _two_label_federation(toy_schema, layout):
    parts = []
    for node_id, counts in enumerate(layout):
        labels = [label for label, n in counts.items() for _ in range(n)]
        frame = pd.DataFrame(
            {
                "x": np.linspace(-1.0, 1.0, len(labels)),
                "colour": np.array(["red"] * len(labels), dtype=object),
                "y": np.zeros(len(labels)),
                "label": np.array(labels, dtype=object),
            }
        )
        parts.append(NodePartition(node_id, Dataset(toy_schema, frame[list(toy_schema.column_names)])))
    return parts, merge_metadata([collect_local_metadata(part, toy_schema) for part in parts])


def test_training_events_sum_decayed_rounds_over_labels_and_groups(toy_schema, tiny_gan, monkeypatch):
    parts, gm = _two_label_federation(toy_schema, [{"a": 100, "b": 5}, {"a": 90, "b": 40}, {"a": 5, "b": 45}])
    calls = []

    def counting_train_local(pair, rows, epochs, cfg, seed):
        calls.append(epochs)
        return pair, TrainStats(critic_loss=0.0)

    monkeypatch.setattr(federation_module, "train_local", counting_train_local)
    grouping = GroupingConfig(r_init=3, e_init=8, alpha_r=0.5, alpha_e=0.5)
    _, logs = train_federated_gan(parts, gm, 3, 8, 0.5, 0.5, tiny_gan, seed=0)

    expected_events = 0
    expected_calls = []
    for label in gm.class_labels:
        plan = plan_label_groups(label, gm.per_node_class_dist, grouping)
        assert len(plan) == 2
        for group, sched in plan:
            assert sched.rounds == math.ceil(3 * 0.5**group.group_index)
            expected_events += sched.rounds
            expected_calls += [sched.epochs] * (sched.rounds * len(group.member_node_ids))
            group_logs = [log for log in logs if log.label == label and log.group_index == group.group_index]
            assert len(group_logs) == sched.rounds
            assert all(log.participants == sorted(group.member_node_ids) for log in group_logs)
    assert expected_events == 10
    assert len(logs) == expected_events
    assert calls == expected_calls
