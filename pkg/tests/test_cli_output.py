"""Tests for CLI output formatting."""

import io
import json

import pandas as pd

from rfpuf.cli_output import CLIOutput, OutputFormat, _format_value


class TestCLIOutput:
    """Tests for CLIOutput class."""

    def test_text_result(self):
        """Test text output aligns keys and formats floats."""
        stream = io.StringIO()
        output = CLIOutput(format=OutputFormat.TEXT, stream=stream)

        output.result({"p_false": 0.0123456789, "n_tx": 50})

        content = stream.getvalue()
        assert "p_false  0.0123457" in content
        assert "n_tx" in content and "50" in content

    def test_json_result(self):
        """Test JSON output is parseable."""
        stream = io.StringIO()
        output = CLIOutput(format=OutputFormat.JSON, stream=stream)

        output.result({"p_false": 0.5, "identifiable": True})

        data = json.loads(stream.getvalue())
        assert data == {"identifiable": True, "p_false": 0.5}

    def test_json_table(self):
        """Test tables become JSON records."""
        stream = io.StringIO()
        output = CLIOutput(format=OutputFormat.JSON, stream=stream)

        output.table(pd.DataFrame({"value": [10, 50], "p_false": [0.2, 0.1]}))

        records = json.loads(stream.getvalue())
        assert records[1] == {"value": 50, "p_false": 0.1}

    def test_text_table_has_title(self):
        """Test text tables print their title."""
        stream = io.StringIO()
        output = CLIOutput(format=OutputFormat.TEXT, stream=stream)

        output.table(pd.DataFrame({"value": [1]}), title="Sweep over n_tx")

        assert stream.getvalue().startswith("Sweep over n_tx")

    def test_status_suppressed_in_json_mode(self):
        """Test status messages are suppressed in JSON mode."""
        stream = io.StringIO()
        output = CLIOutput(format=OutputFormat.JSON, stream=stream)

        output.status("Processing...")

        assert stream.getvalue() == ""

    def test_status_suppressed_when_quiet(self):
        """Test quiet mode drops status and info lines."""
        stream = io.StringIO()
        output = CLIOutput(format=OutputFormat.TEXT, quiet=True, stream=stream)

        output.status("Generating")
        output.info("done")

        assert stream.getvalue() == ""

    def test_status_shown_in_text_mode(self):
        """Test status messages are shown in text mode."""
        stream = io.StringIO()
        output = CLIOutput(format=OutputFormat.TEXT, stream=stream)

        output.status("Processing...")

        assert "Processing..." in stream.getvalue()

    def test_error_goes_to_stderr(self, capsys):
        """Test errors never pollute stdout."""
        stream = io.StringIO()
        output = CLIOutput(format=OutputFormat.JSON, stream=stream)

        output.error("bad config")

        assert stream.getvalue() == ""
        assert json.loads(capsys.readouterr().err) == {"error": "bad config"}

    def test_debug_only_when_verbose(self, capsys):
        """Test debug output requires verbose mode."""
        CLIOutput(format=OutputFormat.TEXT).debug("hidden")
        CLIOutput(format=OutputFormat.TEXT, verbose=True).debug("shown")

        err = capsys.readouterr().err
        assert "hidden" not in err
        assert "shown" in err


def test_format_value():
    """Test value formatting."""
    assert _format_value(0.000123456) == "0.000123456"
    assert _format_value(1234567.0) == "1.23457e+06"
    assert _format_value({"b": 1, "a": 2}) == '{"a": 2, "b": 1}'
    assert _format_value(None) == "None"
