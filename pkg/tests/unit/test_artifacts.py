"""
Unit tests for CSV and JSON artifacts.
"""

import json
import math

import numpy as np
import pytest

from discrete_cbo.artifacts import (
    SCHEMA_VERSION,
    format_cell,
    jsonable,
    read_csv,
    read_json,
    read_matrix,
    write_csv,
    write_json,
    write_records,
)
from discrete_cbo.errors import UsageError


class TestCells:
    """Tests for value formatting."""

    def test_float_precision(self):
        """Floats keep 17 significant digits and read back exactly."""
        value = 0.1 + 0.2
        assert float(format_cell(value)) == value
        assert format_cell(np.float64(1.5)) == "1.5"

    def test_special_values(self):
        """None, booleans and non-finite floats have fixed spellings."""
        assert format_cell(None) == ""
        assert format_cell(True) == "true"
        assert format_cell(np.bool_(False)) == "false"
        assert format_cell(math.inf) == "inf"
        assert format_cell(-math.inf) == "-inf"
        assert format_cell(math.nan) == "nan"
        assert format_cell(np.int64(7)) == "7"

    def test_jsonable(self):
        """numpy values become plain JSON types; non-finite floats become None."""
        data = jsonable({"a": np.array([1.0, np.nan]), "b": (np.int32(2), np.bool_(True)), 3: math.inf})
        assert data == {"a": [1.0, None], "b": [2, True], "3": None}


class TestJson:
    """Tests for JSON artifacts."""

    def test_sorted_with_version(self, temp_dir):
        """Keys are sorted and schema_version is added."""
        path = write_json(temp_dir / "a.json", {"z": 1, "a": 0.1})
        text = path.read_text(encoding="utf-8")
        assert text.index('"a"') < text.index('"schema_version"') < text.index('"z"')
        assert read_json(path) == {"a": 0.1, "schema_version": SCHEMA_VERSION, "z": 1}
        assert "\r" not in text

    def test_missing(self, temp_dir):
        """A missing file is a usage error."""
        with pytest.raises(UsageError):
            read_json(temp_dir / "none.json")

    def test_malformed(self, temp_dir):
        """Broken JSON is a usage error."""
        path = temp_dir / "bad.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(UsageError, match="malformed"):
            read_json(path)

    def test_non_object(self, temp_dir):
        """Top-level arrays are rejected."""
        path = temp_dir / "list.json"
        path.write_text(json.dumps([1, 2]), encoding="utf-8")
        with pytest.raises(UsageError):
            read_json(path)


class TestCsv:
    """Tests for CSV artifacts."""

    def test_layout(self, temp_dir):
        """Schema comment, header, rows and \\n endings."""
        path = write_csv(temp_dir / "t.csv", ["step", "x"], [[0, 1.25], [1, None]])
        raw = path.read_bytes()
        assert raw.startswith(b"# schema_version: 1\nstep,x\n")
        assert b"\r\n" not in raw
        header, rows = read_csv(path)
        assert header == ["step", "x"]
        assert rows == [["0", "1.25"], ["1", ""]]

    def test_plain_readers_skip_schema_line(self, temp_dir):
        """Generic CSV readers that drop '#' lines see the header first."""
        import csv

        path = write_csv(temp_dir / "t.csv", ["step", "x"], [[0, 1.25], [1, 2.5]])
        with path.open(encoding="utf-8") as f:
            records = list(csv.DictReader(line for line in f if not line.startswith("#")))
        assert records == [{"step": "0", "x": "1.25"}, {"step": "1", "x": "2.5"}]
        data = np.loadtxt(path, delimiter=",", skiprows=2)
        np.testing.assert_array_equal(data, [[0.0, 1.25], [1.0, 2.5]])

    def test_records(self, temp_dir):
        """Dict rows keep the first record's key order."""
        path = write_records(temp_dir / "r.csv", [{"b": 1, "a": 2.0}, {"b": 3, "a": 4.0}])
        header, _ = read_csv(path)
        assert header == ["b", "a"]
        with pytest.raises(UsageError):
            write_records(temp_dir / "empty.csv", [])

    def test_matrix_exact(self, temp_dir, rng):
        """Numeric columns read back bit-identically."""
        values = rng.normal(size=(4, 3))
        write_csv(temp_dir / "m.csv", ["i", "a", "b", "c"], [[i, *row] for i, row in enumerate(values)])
        np.testing.assert_array_equal(read_matrix(temp_dir / "m.csv"), values)

    def test_version_checked(self, temp_dir):
        """A different schema version is rejected."""
        path = temp_dir / "old.csv"
        path.write_text("# schema_version: 0\nx\n1\n", encoding="utf-8")
        with pytest.raises(UsageError, match="schema_version 0"):
            read_csv(path)

    def test_version_line_required(self, temp_dir):
        """Tables without the version line are rejected."""
        path = temp_dir / "plain.csv"
        path.write_text("x\n1\n", encoding="utf-8")
        with pytest.raises(UsageError):
            read_csv(path)
