"""
CSV and JSON artifact writers and readers.

Every artifact carries the schema version: CSV files start with a
`# schema_version: N` comment line, JSON objects carry a `schema_version` key.
Floats go to CSV with 17 significant digits and to JSON with Python's shortest
round-trip repr, so values read back are bit-identical to the ones written.
"""

import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np

from .errors import UsageError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SCHEMA_PREFIX = "# schema_version:"

PathLike = Union[str, Path]


def format_cell(value: Any) -> str:
    """Render one CSV cell."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, ".17g")
    return str(value)


def jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays and tuples to JSON types; non-finite floats become None."""
    if isinstance(value, Mapping):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def write_json(path: PathLike, data: Mapping[str, Any]) -> Path:
    """Write a JSON object with sorted keys and a schema_version."""
    path = Path(path)
    payload = dict(jsonable(data))
    payload["schema_version"] = SCHEMA_VERSION
    text = json.dumps(payload, indent=2, sort_keys=True, allow_nan=False, ensure_ascii=False)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        f.write(text + "\n")
    logger.info(f"Wrote {path}")
    return path


def read_json(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise UsageError(f"artifact not found: {path}") from e
    except json.JSONDecodeError as e:
        raise UsageError(f"malformed JSON in {path}: {e.msg} (line {e.lineno})") from e
    if not isinstance(data, dict):
        raise UsageError(f"expected a JSON object in {path}")
    return data


def write_csv(path: PathLike, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
    """Write a versioned CSV table with `\\n` line endings."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as f:
        f.write(f"{SCHEMA_PREFIX} {SCHEMA_VERSION}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(v) for v in row])
    logger.info(f"Wrote {path} ({len(rows)} rows)")
    return path


def write_records(path: PathLike, records: Sequence[Mapping[str, Any]]) -> Path:
    """Write dict rows; the header is the key order of the first record."""
    if not records:
        raise UsageError(f"no rows to write to {path}")
    header = list(records[0].keys())
    return write_csv(path, header, [[r[k] for k in header] for r in records])


def read_csv(path: PathLike) -> Tuple[List[str], List[List[str]]]:
    """
    Read a versioned CSV table as (header, raw string rows).

    Raises:
        UsageError: missing file or unsupported schema version
    """
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8", newline="") as f:
            first = f.readline().rstrip("\n")
            if not first.startswith(SCHEMA_PREFIX):
                raise UsageError(f"{path} has no schema_version line")
            version = int(first[len(SCHEMA_PREFIX):].strip())
            if version != SCHEMA_VERSION:
                raise UsageError(f"{path} has schema_version {version}, expected {SCHEMA_VERSION}")
            reader = csv.reader(f)
            header = next(reader)
            rows = [row for row in reader if row]
    except FileNotFoundError as e:
        raise UsageError(f"artifact not found: {path}") from e
    return header, rows


def read_matrix(path: PathLike, skip_columns: int = 1) -> np.ndarray:
    """Numeric columns of a CSV table after the first skip_columns, as an (rows, cols) array."""
    header, rows = read_csv(path)
    width = len(header) - skip_columns
    if not rows:
        return np.empty((0, width))
    return np.array([[float(cell) for cell in row[skip_columns:]] for row in rows], dtype=float)
