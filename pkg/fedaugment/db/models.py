"""SQLModel tables for the experiment run log."""
from __future__ import annotations

import datetime as dt
from typing import Any, Dict, List, Optional

from sqlalchemy import Column, DateTime, JSON
from sqlmodel import Field, SQLModel


def _now() -> dt.datetime:
    return dt.datetime.now(dt.timezone.utc)


class Experiment(SQLModel, table=True):
    id: Optional[int] = Field(default=None, primary_key=True)
    name: str = Field(index=True)
    config_hash: str = Field(index=True)
    out_dir: str
    created_at: dt.datetime = Field(sa_column=Column(DateTime(timezone=True), default=_now))
    settings_json: Dict[str, Any] = Field(default_factory=dict, sa_column=Column(JSON, nullable=False))
    status: str = Field(default="running")


class RunRecord(SQLModel, table=True):
    id: Optional[int] = Field(default=None, primary_key=True)
    experiment_id: int = Field(index=True, foreign_key="experiment.id")
    dataset: str
    strategy: str = Field(index=True)
    alpha: float
    seed: int
    accuracy: float
    wall_clock_seconds: float
    synthetic_rows_added: int = Field(default=0)
    steps_taken: int = Field(default=0)
    real_rows: int = Field(default=0)
    history_json: Dict[str, Any] = Field(default_factory=dict, sa_column=Column(JSON, nullable=False))


class RoundLogEntry(SQLModel, table=True):
    id: Optional[int] = Field(default=None, primary_key=True)
    experiment_id: int = Field(index=True, foreign_key="experiment.id")
    run_id: Optional[int] = Field(default=None, index=True, foreign_key="runrecord.id")
    phase: str
    label: Optional[str] = None
    group_index: Optional[int] = None
    round_index: int
    participants_json: List[int] = Field(default_factory=list, sa_column=Column(JSON, nullable=False))
    sample_counts_json: List[int] = Field(default_factory=list, sa_column=Column(JSON, nullable=False))
    aggregate_loss: Optional[float] = None
    seconds: float = Field(default=0.0)


class Audit(SQLModel, table=True):
    id: Optional[int] = Field(default=None, primary_key=True)
    experiment_id: int = Field(index=True, foreign_key="experiment.id")
    action: str
    payload_json: Dict[str, Any] = Field(default_factory=dict, sa_column=Column(JSON, nullable=False))
    ts: dt.datetime = Field(sa_column=Column(DateTime(timezone=True), default=_now))


__all__ = ["Experiment", "RunRecord", "RoundLogEntry", "Audit"]
