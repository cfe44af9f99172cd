"""CRUD helpers for the run log."""
from __future__ import annotations

from dataclasses import asdict
from typing import Any, Dict, Iterable, List, Optional

from sqlmodel import Session as DBSession, select

from ..sim.states import MetricsRecord, RoundLog
from .models import Audit, Experiment, RoundLogEntry, RunRecord


def create_experiment(db: DBSession, name: str, settings: Dict[str, Any], config_hash: str, out_dir: str) -> Experiment:
    experiment = Experiment(name=name, config_hash=config_hash, out_dir=out_dir, settings_json=settings)
    db.add(experiment)
    db.commit()
    db.refresh(experiment)
    db.add(Audit(experiment_id=experiment.id, action="experiment_started", payload_json={"out_dir": out_dir}))
    db.commit()
    return experiment


def get_experiment(db: DBSession, experiment_id: int) -> Optional[Experiment]:
    return db.get(Experiment, experiment_id)


def finish_experiment(db: DBSession, experiment: Experiment, status: str = "finished") -> None:
    experiment.status = status
    db.add(experiment)
    db.add(Audit(experiment_id=experiment.id, action=f"experiment_{status}", payload_json={}))
    db.commit()


def record_run(
    db: DBSession,
    experiment_id: int,
    record: MetricsRecord,
    history: Optional[Dict[str, Any]] = None,
) -> RunRecord:
    run = RunRecord(experiment_id=experiment_id, history_json=history or {}, **asdict(record))
    db.add(run)
    db.commit()
    db.refresh(run)
    return run


def record_round_logs(db: DBSession, experiment_id: int, run_id: Optional[int], logs: Iterable[RoundLog]) -> int:
    written = 0
    for log in logs:
        db.add(
            RoundLogEntry(
                experiment_id=experiment_id,
                run_id=run_id,
                phase=log.phase,
                label=log.label,
                group_index=log.group_index,
                round_index=log.round_index,
                participants_json=list(log.participants),
                sample_counts_json=list(log.sample_counts),
                aggregate_loss=log.aggregate_loss,
                seconds=log.seconds,
            )
        )
        written += 1
    db.commit()
    return written


def list_runs(db: DBSession, experiment_id: int) -> List[RunRecord]:
    return list(db.exec(select(RunRecord).where(RunRecord.experiment_id == experiment_id).order_by(RunRecord.id)))


def list_round_logs(db: DBSession, run_id: int) -> List[RoundLogEntry]:
    return list(db.exec(select(RoundLogEntry).where(RoundLogEntry.run_id == run_id).order_by(RoundLogEntry.id)))


def list_audit(db: DBSession, experiment_id: int) -> List[Audit]:
    return list(db.exec(select(Audit).where(Audit.experiment_id == experiment_id).order_by(Audit.id)))


def log_audit(db: DBSession, experiment_id: int, action: str, payload: Dict[str, Any]) -> None:
    db.add(Audit(experiment_id=experiment_id, action=action, payload_json=payload))
    db.commit()


__all__ = [
    "create_experiment",
    "get_experiment",
    "finish_experiment",
    "record_run",
    "record_round_logs",
    "list_runs",
    "list_round_logs",
    "list_audit",
    "log_audit",
]
