"""Run ledger tables and engine helpers."""

from __future__ import annotations

from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Generator

from sqlalchemy.engine import Engine, make_url
from sqlmodel import Field, Session, SQLModel, create_engine


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


class RunRecord(SQLModel, table=True):
    id: int | None = Field(default=None, primary_key=True)
    run_id: str = Field(index=True)
    command: str = Field(default="run")
    config_hash: str = Field(index=True)
    summary_hash: str
    master_seed: int
    n_tx: int
    hidden_sizes: str
    rrc_ablation: bool = Field(default=False)
    p_false: float
    d_intra_worst_ppm: float | None = Field(default=None)
    d_inter_worst_ppm: float | None = Field(default=None)
    identifiable: bool | None = Field(default=None)
    train_seconds: float = Field(default=0.0)
    output_dir: str
    created_at: datetime = Field(default_factory=_utcnow, index=True)


class SweepPointRecord(SQLModel, table=True):
    id: int | None = Field(default=None, primary_key=True)
    sweep_id: str = Field(index=True)
    variable: str
    value: str
    run_id: str | None = Field(default=None)
    p_false: float | None = Field(default=None)
    error: str | None = Field(default=None)
    created_at: datetime = Field(default_factory=_utcnow)


class Database:
    """Lightweight database wrapper."""

    def __init__(self, url: str) -> None:
        self.url = url
        self._engine: Engine | None = None

    def connect(self) -> None:
        """Initialise the engine, creating the SQLite parent directory if needed."""
        if self._engine:
            return

        url = make_url(self.url)
        if url.get_backend_name() == "sqlite":
            database = url.database
            if database and database != ":memory:":
                Path(database).expanduser().resolve().parent.mkdir(
                    parents=True, exist_ok=True
                )

        self._engine = create_engine(self.url, echo=False)

    def init_models(self) -> None:
        """Create tables if they do not exist."""
        if not self._engine:
            raise RuntimeError("Database engine is not initialised")
        SQLModel.metadata.create_all(self._engine)

    @contextmanager
    def session(self) -> Generator[Session, None, None]:
        """Return a session context."""
        if not self._engine:
            raise RuntimeError("Database engine is not initialised")

        with Session(self._engine, expire_on_commit=False) as session:
            yield session


__all__ = ["Database", "RunRecord", "SweepPointRecord"]
