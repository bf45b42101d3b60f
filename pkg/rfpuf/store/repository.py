"""High-level ledger operations."""

from __future__ import annotations

from typing import List, Optional

from sqlmodel import select

from .db import Database, RunRecord, SweepPointRecord


class Repository:
    """CRUD utilities wrapping a SQLModel session."""

    def __init__(self, session) -> None:
        self.session = session

    def add_run(self, record: RunRecord) -> RunRecord:
        self.session.add(record)
        self.session.commit()
        self.session.refresh(record)
        return record

    def add_sweep_point(self, record: SweepPointRecord) -> SweepPointRecord:
        self.session.add(record)
        self.session.commit()
        self.session.refresh(record)
        return record

    def list_runs(self, limit: int = 20, config_hash: Optional[str] = None) -> List[RunRecord]:
        """Most recent runs first, optionally only those of one configuration."""
        stmt = select(RunRecord)
        if config_hash:
            stmt = stmt.where(RunRecord.config_hash == config_hash)
        stmt = stmt.order_by(RunRecord.created_at.desc(), RunRecord.id.desc()).limit(limit)
        return list(self.session.exec(stmt).all())

    def list_sweep(self, sweep_id: str) -> List[SweepPointRecord]:
        stmt = (
            select(SweepPointRecord)
            .where(SweepPointRecord.sweep_id == sweep_id)
            .order_by(SweepPointRecord.id)
        )
        return list(self.session.exec(stmt).all())


class RunLedger:
    """Opens the ledger database on first use and records runs and sweep points."""

    def __init__(self, url: str) -> None:
        self.db = Database(url)
        self._ready = False

    def _ensure(self) -> None:
        if not self._ready:
            self.db.connect()
            self.db.init_models()
            self._ready = True

    def record_run(self, record: RunRecord) -> RunRecord:
        self._ensure()
        with self.db.session() as session:
            return Repository(session).add_run(record)

    def record_sweep_point(self, record: SweepPointRecord) -> SweepPointRecord:
        self._ensure()
        with self.db.session() as session:
            return Repository(session).add_sweep_point(record)

    def recent_runs(self, limit: int = 20, config_hash: Optional[str] = None) -> List[RunRecord]:
        self._ensure()
        with self.db.session() as session:
            return Repository(session).list_runs(limit=limit, config_hash=config_hash)

    def sweep_points(self, sweep_id: str) -> List[SweepPointRecord]:
        self._ensure()
        with self.db.session() as session:
            return Repository(session).list_sweep(sweep_id)


__all__ = ["Repository", "RunLedger"]
