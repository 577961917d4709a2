"""
Trace CSV and manifest sidecar files.
"""
from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Any, Iterable

from ..solver import IterationRecord

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ("k", "phi", "merit", "envelope", "D_step", "residual_norm", "tau", "wall_ns")
MANIFEST_SUFFIX = ".manifest.json"


class TraceFormatError(Exception):
    """Raised when a trace CSV does not carry the expected header."""


def _format(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, int) and not isinstance(value, bool):
        return str(value)
    return "%.17g" % float(value)


def manifest_path_for(trace_path: Path | str) -> Path:
    trace_path = Path(trace_path)
    return trace_path.with_name(trace_path.stem + MANIFEST_SUFFIX)


def write_trace_csv(path: Path | str, records: Iterable[IterationRecord]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(TRACE_COLUMNS)
        for record in records:
            row = record.as_row()
            writer.writerow([_format(row[column]) for column in TRACE_COLUMNS])
    logger.info("Trace written to %s", path)
    return path


def read_trace_csv(path: Path | str) -> list[dict[str, float | int | None]]:
    """Rows of a trace file with numeric values; empty cells become None."""
    path = Path(path)
    with path.open(newline="") as handle:
        reader = csv.DictReader(handle)
        if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
            raise TraceFormatError(f"{path}: expected header {','.join(TRACE_COLUMNS)}, got {reader.fieldnames}")
        rows = []
        for raw in reader:
            row: dict[str, float | int | None] = {}
            for column in TRACE_COLUMNS:
                cell = raw[column]
                if cell == "":
                    row[column] = None
                elif column in ("k", "wall_ns"):
                    row[column] = int(cell)
                else:
                    row[column] = float(cell)
            rows.append(row)
    return rows


def write_manifest(path: Path | str, manifest: dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def read_manifest(path: Path | str) -> dict[str, Any]:
    return json.loads(Path(path).read_text())
