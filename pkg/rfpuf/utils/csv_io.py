"""CSV helpers with fixed column orders.

Every tabular artifact has a column tuple declared next to the code that
produces it. Writers enforce that order and readers reject files whose header
differs, so a schema change is always a visible ``SCHEMA_VERSION`` bump.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Optional, Sequence

import pandas as pd

SCHEMA_VERSION = 1


def write_table(frame: pd.DataFrame, path: Path, columns: Sequence[str]) -> Path:
    """Write ``frame`` with exactly ``columns`` in order.

    Floats are written in their shortest round-trip form, so equal values
    always produce equal bytes.
    """
    missing = [name for name in columns if name not in frame.columns]
    if missing:
        raise ValueError(f"{path.name}: missing columns {missing}")
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.loc[:, list(columns)].to_csv(path, index=False, lineterminator="\n")
    return path


def read_table(
    path: Path,
    columns: Sequence[str],
    dtypes: Optional[Dict[str, str]] = None,
) -> pd.DataFrame:
    """Read a CSV written by ``write_table`` and check its header."""
    if not path.exists():
        raise FileNotFoundError(f"{path} does not exist")
    frame = pd.read_csv(path, dtype=dtypes, float_precision="round_trip")
    if list(frame.columns) != list(columns):
        raise ValueError(
            f"{path.name}: expected columns {list(columns)}, found {list(frame.columns)}"
        )
    return frame


__all__ = ["SCHEMA_VERSION", "read_table", "write_table"]
