"""Tests for the run ledger."""

from rfpuf.store.db import Database, RunRecord, SweepPointRecord
from rfpuf.store.repository import Repository, RunLedger


def _record(run_id, config_hash="abc", p_false=0.1):
    return RunRecord(
        run_id=run_id,
        config_hash=config_hash,
        summary_hash=f"sum-{run_id}",
        master_seed=1,
        n_tx=3,
        hidden_sizes="50",
        p_false=p_false,
        output_dir="runs/x",
    )


def test_add_and_list_runs(tmp_path):
    """Test runs are stored and listed newest first."""
    db = Database(f"sqlite:///{tmp_path / 'ledger.db'}")
    db.connect()
    db.init_models()

    with db.session() as session:
        repo = Repository(session)
        repo.add_run(_record("r1"))
        repo.add_run(_record("r2"))

        runs = repo.list_runs()
        assert [run.run_id for run in runs] == ["r2", "r1"]
        assert runs[0].id is not None


def test_filter_by_config_hash(tmp_path):
    """Test runs can be narrowed to one configuration."""
    ledger = RunLedger(f"sqlite:///{tmp_path / 'ledger.db'}")
    ledger.record_run(_record("r1", config_hash="aaa"))
    ledger.record_run(_record("r2", config_hash="bbb"))
    ledger.record_run(_record("r3", config_hash="aaa"))

    runs = ledger.recent_runs(config_hash="aaa")
    assert sorted(run.run_id for run in runs) == ["r1", "r3"]
    assert len(ledger.recent_runs(limit=1)) == 1


def test_sweep_points_in_order(tmp_path):
    """Test sweep points come back in insertion order for their sweep only."""
    ledger = RunLedger(f"sqlite:///{tmp_path / 'nested' / 'ledger.db'}")
    ledger.record_sweep_point(SweepPointRecord(sweep_id="s", variable="n_tx", value="10", run_id="r1", p_false=0.2))
    ledger.record_sweep_point(SweepPointRecord(sweep_id="other", variable="n_tx", value="5"))
    ledger.record_sweep_point(SweepPointRecord(sweep_id="s", variable="n_tx", value="0", error="invalid"))

    points = ledger.sweep_points("s")
    assert [p.value for p in points] == ["10", "0"]
    assert points[1].error == "invalid"
    assert (tmp_path / "nested").is_dir()
