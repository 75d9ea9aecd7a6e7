"""
CSV and JSON files read and written by the command-line runs.

Series files have the header `time,value`, one row per sample, numbers with 17
significant digits (lossless for float64) and LF line endings, so the same
run always writes byte-identical files.
"""

import logging
from pathlib import Path as FilePath

import pandas as pd
from pydantic import BaseModel, ValidationError

from src.core.errors import ConfigError
from src.models.estimation import Dataset
from src.models.simulation import Path

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["time", "value"]
FLOAT_FORMAT = "%.17g"


class StorageError(ConfigError):
    """A file could not be read or does not have the expected layout."""

    pass


def path_to_frame(path: Path) -> pd.DataFrame:
    """The simulated values as a `time,value` frame (initial endpoint first)."""
    return pd.DataFrame({"time": path.times, "value": path.values})


def write_series_csv(frame: pd.DataFrame, target: FilePath) -> FilePath:
    target = FilePath(target)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(
            target,
            columns=CSV_COLUMNS,
            index=False,
            float_format=FLOAT_FORMAT,
            lineterminator="\n",
        )
    except OSError as e:
        raise StorageError(f"cannot write {target}: {e.strerror or e}") from e
    return target


def write_path_csv(path: Path, target: FilePath) -> FilePath:
    return write_series_csv(path_to_frame(path), target)


def read_dataset_csv(source: FilePath) -> Dataset:
    """
    Load observations from a `time,value` CSV file.

    Raises:
        StorageError: missing file, wrong header (reported as line 1),
            non-numeric cells, or observations that violate Dataset rules
    """
    source = FilePath(source)
    if not source.is_file():
        raise StorageError(f"data file not found: {source}")
    try:
        frame = pd.read_csv(source, dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise StorageError(f"{source}: cannot parse CSV ({e})") from e

    header = [str(c).strip() for c in frame.columns]
    if header != CSV_COLUMNS:
        raise StorageError(
            f"{source}, line 1: expected header 'time,value', got '{','.join(header)}'"
        )

    numeric = frame.apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce"))
    bad = numeric.isna().any(axis=1)
    if bad.any():
        # +2: one for the header, one for 1-based numbering
        line = int(bad.to_numpy().nonzero()[0][0]) + 2
        raise StorageError(f"{source}, line {line}: non-numeric value")

    try:
        data = Dataset(times=numeric["time"].to_numpy(), values=numeric["value"].to_numpy())
    except ValidationError as e:
        raise StorageError(f"{source}: invalid observations ({e.errors()[0]['msg']})") from e
    logger.info(f"Loaded {len(data)} observations from {source}")
    return data


def write_json(document: BaseModel, target: FilePath) -> FilePath:
    """Write a pydantic model as indented JSON with a trailing newline."""
    target = FilePath(target)
    text = document.model_dump_json(indent=2)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text + "\n", encoding="utf-8", newline="\n")
    except OSError as e:
        raise StorageError(f"cannot write {target}: {e.strerror or e}") from e
    return target
