from __future__ import annotations

import json

import pandas as pd
import pytest
from sqlmodel import Session as DBSession

from fedaugment.db import crud
from fedaugment.db.connection import get_engine
from fedaugment.sim.engine import (
    augment_from_bank,
    cell_key,
    efficacy_from_bank,
    grouping_outcome,
    load_run,
    run_experiment,
    run_matrix,
    train_bank,
)
from fedaugment.sim.errors import ConfigError, ContractError
from fedaugment.sim.evaluation import records_frame
from fedaugment.sim.federation import CLASSIFIER_PHASE, GAN_PHASE, GeneratorBank, JointGenerator, load_bank
from fedaugment.sim.states import RoundLog
from fedaugment.sim.utils import GroupingConfig


@pytest.fixture(autouse=True)
def _no_database_env(monkeypatch):
    monkeypatch.delenv("DATABASE_URL", raising=False)


def test_run_experiment_writes_every_artifact(tiny_config, tmp_path):
    result = run_experiment(tiny_config)
    out = result.out_dir
    assert out == tmp_path / "runs"
    assert (out / "config_snapshot.json").exists()
    assert (out / "metadata" / "a1_s0.json").exists()
    assert [r.strategy for r in result.records] == ["fedavg", "fedgan", "fligan"]

    results = pd.read_csv(out / "results.csv")
    assert len(results) == 3
    assert {"strategy", "alpha", "seed", "accuracy", "wall_clock_seconds"} <= set(results.columns)
    summary = pd.read_csv(out / "results_summary.csv")
    assert len(summary) == 3
    assert (summary.n_seeds == 1).all()

    for strategy in ("fedavg", "fedgan", "fligan"):
        assert (out / "cells" / f"{cell_key(strategy, 1.0, 0)}.json").exists()
    assert (out / "models" / "fligan_a1_s0" / "index.json").exists()
    assert (out / "models" / "fedgan_a1_s0" / "joint_generator.npz").exists()
    assert not (out / "models" / "fedavg_a1_s0").exists()

    fedavg = result.records[0]
    assert fedavg.synthetic_rows_added == 0
    assert fedavg.steps_taken == 0
    for record in result.records[1:]:
        history = result.histories[cell_key(record.strategy, 1.0, 0)]
        assert record.accuracy == history.best_accuracy
        assert record.steps_taken == history.best_step
        assert history.steps[0] == 0
        assert len(history.steps) <= tiny_config.augmentation.max_steps + 1
    assert {report.source for report in result.efficacy} <= {"fedgan", "fligan"}


def test_run_log_database(tiny_config):
    result = run_experiment(tiny_config)
    engine = get_engine(f"sqlite:///{result.out_dir}/runlog.db")
    with DBSession(engine) as db:
        experiment = crud.get_experiment(db, 1)
        assert experiment.status == "finished"
        assert experiment.config_hash == tiny_config.hash()
        runs = crud.list_runs(db, experiment.id)
        assert [run.strategy for run in runs] == ["fedavg", "fedgan", "fligan"]
        fedavg_logs = crud.list_round_logs(db, runs[0].id)
        assert len(fedavg_logs) == tiny_config.classifier.rounds
        assert {entry.phase for entry in crud.list_round_logs(db, runs[2].id)} == {"gan", "classifier"}
        actions = [entry.action for entry in crud.list_audit(db, experiment.id)]
        assert actions[0] == "experiment_started"
        assert actions[-1] == "experiment_finished"
        assert "grouping" in actions


def test_rerun_writes_timestamped_directory(tiny_config):
    first = run_experiment(tiny_config)
    second = run_experiment(tiny_config)
    assert second.out_dir.parent == first.out_dir
    assert second.out_dir.name.startswith("run-")
    assert (second.out_dir / "results.csv").exists()


def _round_log_rows(out_dir):
    engine = get_engine(f"sqlite:///{out_dir}/runlog.db")
    rows = []
    with DBSession(engine) as db:
        for run in crud.list_runs(db, 1):
            for entry in crud.list_round_logs(db, run.id):
                rows.append(
                    (run.strategy, entry.phase, entry.label, entry.group_index, entry.round_index,
                     entry.participants_json, entry.sample_counts_json, entry.aggregate_loss)
                )
    return rows


def test_runs_are_deterministic(tiny_config, tmp_path):
    first = run_experiment(tiny_config, tmp_path / "a")
    second = run_experiment(tiny_config, tmp_path / "b")
    pd.testing.assert_frame_equal(
        records_frame(first.records).drop(columns=["wall_clock_seconds"]),
        records_frame(second.records).drop(columns=["wall_clock_seconds"]),
    )
    assert first.histories == second.histories
    assert _round_log_rows(first.out_dir) == _round_log_rows(second.out_dir)
    assert [r.accuracy for r in run_matrix(tiny_config, tmp_path / "c")] == [r.accuracy for r in first.records]


def test_seeds_average_into_one_summary_row(tiny_config):
    cfg = tiny_config.copy(update={"strategies": ["fedavg"], "seeds": [0, 1, 2]})
    result = run_experiment(cfg)
    assert len(result.records) == 3
    assert len(result.summary) == 1
    assert result.summary.iloc[0].n_seeds == 3


def test_load_run_reads_cell_files(tiny_config):
    result = run_experiment(tiny_config)
    records, histories, reports = load_run(result.out_dir)
    assert sorted(r.strategy for r in records) == ["fedavg", "fedgan", "fligan"]
    assert set(histories) == {"fedgan_a1_s0", "fligan_a1_s0"}
    assert histories["fligan_a1_s0"].best_step == result.histories["fligan_a1_s0"].best_step
    assert len(reports) == len(result.efficacy)


def test_bank_commands(tiny_config, tmp_path):
    bank_dir = train_bank(tiny_config, "fligan", 1.0, 0, tmp_path / "gan")
    sampler, index = load_bank(bank_dir)
    assert isinstance(sampler, GeneratorBank)
    assert index["strategy"] == "fligan"

    result = augment_from_bank(tiny_config, bank_dir, tmp_path / "aug")
    assert result.record.strategy == "fligan"
    assert result.history.steps[0] == 0
    cell = json.loads((tmp_path / "aug" / "cells" / "fligan_a1_s0.json").read_text(encoding="utf-8"))
    assert cell["record"]["accuracy"] == result.record.accuracy

    report = efficacy_from_bank(tiny_config, bank_dir)
    assert 0.0 <= report.synthetic_data_accuracy <= 1.0

    joint_dir = train_bank(tiny_config, "fedgan", 1.0, 0, tmp_path / "joint")
    assert isinstance(load_bank(joint_dir)[0], JointGenerator)


def test_bank_from_another_federation_is_rejected(tiny_config, tmp_path):
    bank_dir = train_bank(tiny_config, "fligan", 1.0, 0, tmp_path / "gan")
    other = tiny_config.copy(update={"n_nodes": 4})
    with pytest.raises(ContractError):
        augment_from_bank(other, bank_dir, tmp_path / "aug")


def test_fedavg_has_no_bank(tiny_config, tmp_path):
    with pytest.raises(ConfigError):
        train_bank(tiny_config, "fedavg", 1.0, 0, tmp_path)


def test_grouping_outcome_reports_volume_and_schedule():
    logs = [
        RoundLog(GAN_PHASE, 0, [0, 1], [100, 90], 0.1, 0.0, label="a", group_index=0),
        RoundLog(GAN_PHASE, 1, [0, 1], [100, 90], 0.1, 0.0, label="a", group_index=0),
        RoundLog(GAN_PHASE, 0, [2], [5], 0.1, 0.0, label="a", group_index=1),
        RoundLog(CLASSIFIER_PHASE, 0, [0, 1, 2], [10, 10, 10], 0.1, 0.0),
    ]
    outcome = grouping_outcome(logs, GroupingConfig(r_init=2, e_init=60))
    assert outcome == {
        "a": [
            {"group": 0, "nodes": [0, 1], "volume": 190, "rounds": 2, "epochs": 60},
            {"group": 1, "nodes": [2], "volume": 5, "rounds": 1, "epochs": 30},
        ]
    }


def test_grouping_audit_carries_schedules(tiny_config):
    result = run_experiment(tiny_config.copy(update={"strategies": ["fligan"]}))
    engine = get_engine(f"sqlite:///{result.out_dir}/runlog.db")
    with DBSession(engine) as db:
        entries = [entry for entry in crud.list_audit(db, 1) if entry.action == "grouping"]
    assert len(entries) == 1
    groups = entries[0].payload_json["groups"]
    assert groups
    for label_groups in groups.values():
        for group in label_groups:
            assert {"group", "nodes", "volume", "rounds", "epochs"} <= set(group)
            assert group["volume"] > 0
