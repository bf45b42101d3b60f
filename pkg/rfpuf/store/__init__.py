"""Run ledger persistence."""

from .db import Database, RunRecord, SweepPointRecord
from .repository import Repository, RunLedger

__all__ = ["Database", "Repository", "RunLedger", "RunRecord", "SweepPointRecord"]
