"""File utilities for result tables and JSON documents.

Result tables are pandas DataFrames. CSV output is a single file with a
header row; parquet output goes through pyarrow. JSON documents are written
atomically so an interrupted run never leaves a half-written summary.
"""

import json
from pathlib import Path
from typing import Any

import pandas as pd


def save_table(df: pd.DataFrame, output_path: str | Path, format: str = "csv") -> Path:
    """
    Save a DataFrame to disk in the specified format.

    Args:
        df: The table to save.
        output_path: Destination file. Parent directories are created.
            The suffix is replaced to match ``format``.
        format: "csv" or "parquet". Defaults to "csv".

    Returns:
        The path that was written.

    Raises:
        ValueError: If an unsupported format is specified.

    Example:
        >>> save_table(metrics_df, "runs/maple/metrics.csv")
        >>> save_table(features_df, "runs/maple/features", format="parquet")
    """
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    if format == "csv":
        output_path = output_path.with_suffix(".csv")
        df.to_csv(output_path, index=False)
    elif format == "parquet":
        output_path = output_path.with_suffix(".parquet")
        df.to_parquet(output_path, engine="pyarrow", index=False)
    else:
        raise ValueError(f"Unsupported format: {format}. Supported formats: csv, parquet")
    return output_path


def append_rows(rows: list[dict[str, Any]], output_path: str | Path) -> None:
    """Append rows to a CSV file, writing the header only when the file is new."""
    if not rows:
        return
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    exists = output_path.exists() and output_path.stat().st_size > 0
    pd.DataFrame(rows).to_csv(output_path, mode="a", header=not exists, index=False)


def write_json(path: str | Path, data: dict[str, Any]) -> None:
    """Write JSON atomically via a temporary sibling file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as f:
        json.dump(data, f, indent=2, sort_keys=False)
    tmp.replace(path)


def read_json(path: str | Path) -> dict[str, Any]:
    """
    Read a JSON document.

    Raises:
        FileNotFoundError: If the file does not exist.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    with open(path) as f:
        return json.load(f)
