"""Terminal output for the rfpuf CLI.

Results are plain dicts (run summaries, reports) or DataFrames (sweeps,
ledger rows) rendered as aligned text, JSON or a rich table. Progress lines
go to the result stream; warnings, errors and debug lines always go to stderr
so piped JSON stays parseable.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional

import pandas as pd


class OutputFormat(Enum):
    """Supported output formats."""

    TEXT = "text"
    JSON = "json"
    RICH = "rich"


@dataclass(frozen=True)
class _Level:
    icon: str
    style: str
    to_stderr: bool
    # dropped under --quiet and in JSON mode
    chatter: bool


_LEVELS: Dict[str, _Level] = {
    "status": _Level("⏳", "dim", to_stderr=False, chatter=True),
    "info": _Level("ℹ️ ", "blue", to_stderr=False, chatter=True),
    "warning": _Level("⚠️ ", "yellow", to_stderr=True, chatter=False),
    "error": _Level("❌", "red", to_stderr=True, chatter=False),
    "debug": _Level("🔍", "magenta", to_stderr=True, chatter=False),
}


class CLIOutput:
    """Formats results and progress messages for one CLI invocation."""

    def __init__(
        self,
        format: OutputFormat = OutputFormat.TEXT,
        verbose: bool = False,
        quiet: bool = False,
        stream: Any = None,
    ) -> None:
        self.format = format
        self.verbose = verbose
        self.quiet = quiet
        self.stream = stream or sys.stdout
        self._console: Optional[Any] = None
        if format == OutputFormat.RICH:
            self._console = _rich_console(self.stream)
            if self._console is None:
                self.format = OutputFormat.TEXT
                self.warning("'rich' is not installed; using text output")

    @property
    def _rich(self) -> bool:
        return self.format == OutputFormat.RICH and self._console is not None

    def result(self, payload: Dict[str, Any], title: str = "Result") -> None:
        """Print a result mapping."""
        if self.format == OutputFormat.JSON:
            self._emit(json.dumps(payload, indent=2, sort_keys=True, default=str))
        elif self._rich:
            self._rich_table(title, ["Key", "Value"], ([k, v] for k, v in payload.items()))
        else:
            width = max((len(str(key)) for key in payload), default=0)
            for key, value in payload.items():
                self._emit(f"{str(key).ljust(width)}  {_format_value(value)}")

    def table(self, frame: pd.DataFrame, title: str = "") -> None:
        """Print a DataFrame: JSON records, a rich table or pandas' text layout."""
        if self.format == OutputFormat.JSON:
            self._emit(frame.to_json(orient="records", indent=2))
        elif self._rich:
            self._rich_table(title or None, list(frame.columns), frame.itertuples(index=False))
        else:
            if title:
                self._emit(title)
            self._emit(frame.to_string(index=False))

    def status(self, message: str) -> None:
        self._message("status", message)

    def info(self, message: str) -> None:
        self._message("info", message)

    def warning(self, message: str) -> None:
        self._message("warning", message)

    def error(self, message: str) -> None:
        self._message("error", message)

    def debug(self, message: str, data: Any = None) -> None:
        """Verbose-only diagnostics, optionally with an attached value."""
        if self.verbose:
            self._message("debug", message, data)

    def _message(self, kind: str, message: str, data: Any = None) -> None:
        level = _LEVELS[kind]
        if level.chatter and (self.quiet or self.format == OutputFormat.JSON):
            return
        target = sys.stderr if level.to_stderr else self.stream

        if self.format == OutputFormat.JSON:
            record: Dict[str, Any] = {kind: message}
            if data is not None:
                record["data"] = data
            print(json.dumps(record, default=str), file=target)
        elif self._rich and not level.to_stderr:
            self._console.print(f"[{level.style}]{level.icon} {message}[/{level.style}]")
        else:
            print(f"{level.icon} {message}", file=target)
            if data is not None:
                print(f"   {data}", file=target)

    def _emit(self, text: str) -> None:
        print(text, file=self.stream)

    def _rich_table(self, title: Optional[str], columns: list, rows: Any) -> None:
        from rich.table import Table

        table = Table(title=title)
        for column in columns:
            table.add_column(str(column))
        for row in rows:
            table.add_row(*(_format_value(value) for value in row))
        self._console.print(table)


def _rich_console(stream: Any) -> Optional[Any]:
    try:
        from rich.console import Console
    except ImportError:
        return None
    return Console(file=stream)


def _format_value(value: Any) -> str:
    """Floats get 6 significant digits; everything else prints as-is."""
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, dict):
        return json.dumps(value, sort_keys=True, default=str)
    return str(value)
