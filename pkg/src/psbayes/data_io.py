"""Ingestion of subject-level trial data and emission of results.

Input format is a UTF-8 CSV with header ``z,s,y,cell``: arm (0 control,
1 active), intercurrent-event flag, outcome flag, covariate-cell label.
The event/outcome fields accept configurable missing tokens (default "NA"
or empty).  Validation is strict and fatal with row-numbered messages;
silent coercion would corrupt counts downstream.

Results are emitted as a single versioned JSON document written atomically
(temporary file + rename), so a crashed run never leaves a truncated
document behind.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .model import CellCounts

HEADER = ("z", "s", "y", "cell")


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class SubjectRecord:
    """One randomized subject at a fixed analysis horizon."""

    z: int
    s: int | None
    y: int | None
    cell: str

    def __post_init__(self):
        if self.z not in (0, 1):
            raise DataError(f"arm must be 0 or 1, got {self.z!r}")
        for name, v in (("s", self.s), ("y", self.y)):
            if v is not None and v not in (0, 1):
                raise DataError(f"{name} must be 0, 1 or missing, got {v!r}")
        if not self.cell:
            raise DataError("covariate cell label must be non-empty")

    @property
    def m(self) -> int:
        """Missingness indicator: 1 when the (event, outcome) pair is incomplete."""
        return 1 if self.s is None or self.y is None else 0


@dataclass(frozen=True)
class CsvSchema:
    """Parsing configuration for the subject-level CSV."""

    missing_tokens: tuple[str, ...] = ("NA", "")
    known_cells: tuple[str, ...] | None = None


def _parse_binary(token: str, column: str, row: int, schema: CsvSchema, allow_missing: bool):
    token = token.strip()
    if allow_missing and token in schema.missing_tokens:
        return None
    if token == "0":
        return 0
    if token == "1":
        return 1
    raise DataError(f"row {row}: column {column!r} must be 0 or 1"
                    + (" or a missing token" if allow_missing else "") + f", got {token!r}")


def parse_dataset(path, schema: CsvSchema | None = None) -> list[SubjectRecord]:
    """Read and strictly validate a subject-level CSV."""
    schema = schema or CsvSchema()
    path = Path(path)
    records: list[SubjectRecord] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty; expected header {','.join(HEADER)}") from None
        if tuple(h.strip() for h in header) != HEADER:
            raise DataError(f"{path}: expected header {','.join(HEADER)}, got {','.join(header)}")
        for i, row in enumerate(reader, start=2):
            if not row or all(not f.strip() for f in row):
                continue
            if len(row) != 4:
                raise DataError(f"row {i}: expected 4 fields, got {len(row)}")
            z = _parse_binary(row[0], "z", i, schema, allow_missing=False)
            s = _parse_binary(row[1], "s", i, schema, allow_missing=True)
            y = _parse_binary(row[2], "y", i, schema, allow_missing=True)
            cell = row[3].strip()
            if not cell:
                raise DataError(f"row {i}: covariate cell label is empty")
            if schema.known_cells is not None and cell not in schema.known_cells:
                raise DataError(f"row {i}: unknown covariate cell {cell!r}")
            records.append(SubjectRecord(z=z, s=s, y=y, cell=cell))
    if not records:
        raise DataError(f"{path}: no data rows")
    return records


def write_dataset(records: Iterable[SubjectRecord], path) -> None:
    """Write records in the canonical CSV format (deterministic bytes)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        for r in records:
            writer.writerow([r.z, "NA" if r.s is None else r.s, "NA" if r.y is None else r.y, r.cell])


def aggregate(records: Iterable[SubjectRecord]) -> dict[str, CellCounts]:
    """Sufficient counts per covariate cell (complete cases plus bookkeeping)."""
    n: dict[str, np.ndarray] = {}
    miss: dict[str, np.ndarray] = {}
    for r in records:
        if r.cell not in n:
            n[r.cell] = np.zeros((2, 2, 2), dtype=np.int64)
            miss[r.cell] = np.zeros(2, dtype=np.int64)
        if r.m:
            miss[r.cell][r.z] += 1
        else:
            n[r.cell][r.z, r.s, r.y] += 1
    return {
        cell: CellCounts(n=n[cell], n_missing=miss[cell])
        for cell in sorted(n)
    }


# ---------------------------------------------------------------------------
# Summary table
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SummaryRow:
    cell: str
    arm: str  # "control" or "active"
    n_randomized: int
    n_available: int
    n_events: int
    n_outcomes: int

    def to_dict(self) -> dict:
        return {
            "cell": self.cell,
            "arm": self.arm,
            "n_randomized": self.n_randomized,
            "n_available": self.n_available,
            "n_events": self.n_events,
            "n_outcomes": self.n_outcomes,
        }


def summarize(counts_by_cell: Mapping[str, CellCounts]) -> list[SummaryRow]:
    """Per cell and arm: randomized / available / events / outcomes."""
    rows = []
    for cell in sorted(counts_by_cell):
        c = counts_by_cell[cell]
        for z, arm in ((1, "active"), (0, "control")):
            rows.append(
                SummaryRow(
                    cell=cell,
                    arm=arm,
                    n_randomized=int(c.n_randomized[z]),
                    n_available=c.n_available(z),
                    n_events=c.n_events(z),
                    n_outcomes=c.n_outcomes(z),
                )
            )
    return rows


def render_summary(rows: list[SummaryRow]) -> str:
    """Aligned plain-text table of the summary rows."""
    headers = ["cell", "arm", "randomized", "available", "events", "outcomes"]
    table = [headers] + [
        [r.cell, r.arm, str(r.n_randomized), str(r.n_available), str(r.n_events), str(r.n_outcomes)]
        for r in rows
    ]
    widths = [max(len(line[i]) for line in table) for i in range(len(headers))]
    lines = []
    for j, line in enumerate(table):
        lines.append("  ".join(f"{v:<{w}}" if i < 2 else f"{v:>{w}}" for i, (v, w) in enumerate(zip(line, widths))))
        if j == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Result document
# ---------------------------------------------------------------------------


def _jsonable(obj):
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None  # JSON has no inf/nan
    return obj


def emit_results(document: Mapping, path) -> dict:
    """Serialize a result document to JSON, written atomically.

    Objects providing ``to_dict`` are serialized through it.  Returns the
    plain-dict form that was written.
    """
    doc = _jsonable(document)
    path = Path(path)
    text = json.dumps(doc, indent=2)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return doc
