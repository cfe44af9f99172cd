"""Database connection utilities."""
from __future__ import annotations

import os
from functools import lru_cache
from pathlib import Path
from typing import Optional

from sqlmodel import SQLModel, create_engine

DEFAULT_SQLITE_URL = "sqlite:///fedaugment_runs.db"


def resolve_database_url(db_url: Optional[str] = None, out_dir: Optional[Path] = None) -> str:
    """Explicit URL, then ``DATABASE_URL``, then a run log inside ``out_dir``."""
    if db_url:
        return db_url
    env_url = os.getenv("DATABASE_URL")
    if env_url:
        return env_url
    if out_dir is not None:
        return f"sqlite:///{Path(out_dir) / 'runlog.db'}"
    return DEFAULT_SQLITE_URL


def _create_engine(url: str):
    connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    return create_engine(url, echo=False, connect_args=connect_args)


@lru_cache(maxsize=8)
def get_engine(db_url: str):
    engine = _create_engine(db_url)
    SQLModel.metadata.create_all(engine)
    return engine


__all__ = ["get_engine", "resolve_database_url", "DEFAULT_SQLITE_URL"]
