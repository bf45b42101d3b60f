"""Tests for the command-line entrypoint."""

import json

import pytest

from rfpuf.cli import EXIT_ACCEPTANCE, EXIT_CONFIG, EXIT_OK, EXIT_PIPELINE, main, parse_sweep_values
from rfpuf.config import load_settings

SMALL_DOCUMENT = """
master_seed = 11

[population]
n_tx = 3

[frame]
n_symbols = 256

[receiver]
fft_size = 1024

[training]
hidden_sizes = [8]
epochs = 20
batch_size = 8
frames_per_device_train = 5

[evaluation]
frames_per_device_eval = 3

[acceptance]
max_p_false = 1.0
"""

CLONE_DOCUMENT = SMALL_DOCUMENT.replace(
    "[frame]",
    "cfo_sigma_hz = 0.0\ngain_imbalance_sigma_db = 0.0\nphase_imbalance_sigma_deg = 0.0\n"
    "dc_offset_sigma = 0.0\npa_sat_sigma = 0.0\n\n[frame]",
).replace("max_p_false = 1.0", "max_p_false = 0.0")


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    """Isolated working directory with a private ledger."""
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("RFPUF_LEDGER_URL", f"sqlite:///{tmp_path / 'ledger.db'}")
    monkeypatch.delenv("RFPUF_CONFIG", raising=False)
    monkeypatch.delenv("RFPUF_OUTPUT_DIR", raising=False)
    monkeypatch.delenv("RFPUF_WORKERS", raising=False)
    load_settings.cache_clear()
    config = tmp_path / "small.toml"
    config.write_text(SMALL_DOCUMENT)
    yield tmp_path
    load_settings.cache_clear()


def _json_out(capsys):
    return json.loads(capsys.readouterr().out)


class TestParseSweepValues:
    """Tests for parse_sweep_values."""

    def test_types(self):
        """Test values convert to the variable's type."""
        assert parse_sweep_values("n_tx", "10, 25,50") == [10, 25, 50]
        assert parse_sweep_values("ebn0_sigma_db", "2.5,10") == [2.5, 10.0]
        assert parse_sweep_values("rrc_ablation", "false,True,1") == [False, True, True]

    def test_invalid(self):
        """Test empty lists and bad booleans raise."""
        with pytest.raises(ValueError):
            parse_sweep_values("n_tx", " , ")
        with pytest.raises(ValueError):
            parse_sweep_values("rrc_ablation", "maybe")


class TestMain:
    """End-to-end tests for main."""

    def test_run_json(self, workspace, capsys):
        """Test run prints a JSON summary and writes the run directory."""
        code = main(["run", "--config", "small.toml", "--out", "out", "-o", "json", "--check"])
        assert code == EXIT_OK
        payload = _json_out(capsys)
        assert payload["n_tx"] == 3
        assert 0.0 <= payload["p_false"] <= 1.0
        assert (workspace / "out" / "summary.json").exists()
        assert (workspace / ".tmp" / "rfpuf.log").exists()

    def test_seed_flag_changes_run(self, workspace, capsys):
        """Test --seed overrides the document's master seed."""
        main(["run", "--config", "small.toml", "--out", "a", "-o", "json"])
        first = _json_out(capsys)
        main(["run", "--config", "small.toml", "--out", "b", "-o", "json", "--seed", "99"])
        second = _json_out(capsys)
        assert first["master_seed"] == 11
        assert second["master_seed"] == 99

    def test_acceptance_failure(self, workspace, capsys):
        """Test --check exits 3 when identical devices cannot be told apart."""
        (workspace / "clones.toml").write_text(CLONE_DOCUMENT)
        code = main(["run", "--config", "clones.toml", "--out", "clones", "--check", "-q"])
        assert code == EXIT_ACCEPTANCE
        assert "Acceptance check failed" in capsys.readouterr().err

    def test_split_commands(self, workspace, capsys):
        """Test gen, train, eval and report chain on one directory."""
        base = ["--config", "small.toml", "--out", "split", "-o", "json"]
        assert main(["gen", *base]) == EXIT_OK
        assert _json_out(capsys)["train_rows"] == 15
        assert main(["train", *base]) == EXIT_OK
        assert _json_out(capsys)["epochs"] == 20
        assert main(["eval", *base]) == EXIT_OK
        evaluated = _json_out(capsys)
        assert main(["report", *base]) == EXIT_OK
        reported = _json_out(capsys)
        assert reported["p_false"] == evaluated["p_false"]
        assert reported["n_evaluations"] == 9

    def test_sweep(self, workspace, capsys):
        """Test sweep prints one record per value."""
        code = main(["sweep", "--config", "small.toml", "--out", "sw", "-o", "json",
                     "--variable", "hidden_width", "--values", "4,8"])
        assert code == EXIT_OK
        records = _json_out(capsys)
        assert [r["value"] for r in records] == [4, 8]
        assert (workspace / "sw" / "sweep.csv").exists()

    def test_sweep_bad_values(self, workspace):
        """Test unparseable sweep values are a configuration error."""
        code = main(["sweep", "--config", "small.toml", "--variable", "n_tx", "--values", "ten"])
        assert code == EXIT_CONFIG

    def test_history(self, workspace, capsys):
        """Test history lists recorded runs."""
        main(["run", "--config", "small.toml", "--out", "h", "-q"])
        capsys.readouterr()
        assert main(["history", "-o", "json"]) == EXIT_OK
        rows = _json_out(capsys)
        assert len(rows) == 1
        assert rows[0]["n_tx"] == 3

    def test_history_without_ledger(self, workspace, monkeypatch, capsys):
        """Test history with the ledger disabled warns and succeeds."""
        monkeypatch.setenv("RFPUF_LEDGER_URL", "")
        load_settings.cache_clear()
        assert main(["history"]) == EXIT_OK
        assert "ledger disabled" in capsys.readouterr().err

    def test_invalid_document(self, workspace):
        """Test an invalid experiment document exits 1."""
        (workspace / "bad.toml").write_text("[population]\nn_tx = -1\n")
        assert main(["run", "--config", "bad.toml"]) == EXIT_CONFIG

    def test_missing_document(self, workspace):
        """Test a missing experiment document exits 1."""
        assert main(["run", "--config", "missing.toml"]) == EXIT_CONFIG

    def test_eval_without_dataset(self, workspace):
        """Test evaluating an empty directory exits 2."""
        assert main(["eval", "--config", "small.toml", "--out", "empty"]) == EXIT_PIPELINE

    def test_invalid_settings(self, workspace, monkeypatch):
        """Test a bad environment value exits 1."""
        monkeypatch.setenv("RFPUF_WORKERS", "-3")
        load_settings.cache_clear()
        assert main(["run", "--config", "small.toml"]) == EXIT_CONFIG
