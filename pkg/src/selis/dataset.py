"""CSV loading and data fingerprints."""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import SelisError

__all__ = ["DataLoadError", "Dataset", "load_dataset", "parse_rows", "fingerprint"]


class DataLoadError(SelisError, ValueError):
    """The data file is missing, malformed or lacks the requested columns."""


@dataclass(frozen=True, eq=False)
class Dataset:
    values: np.ndarray
    columns: tuple[str, ...]
    path: str | None = None

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]


def parse_rows(spec: str | None):
    """Parse a ``START:STOP`` data-row slice (0-based, header excluded)."""
    if spec is None:
        return None
    parts = spec.split(":")
    if len(parts) != 2:
        raise DataLoadError(f"row filter must look like START:STOP, got {spec!r}")
    try:
        bounds = [int(p) if p.strip() else None for p in parts]
    except ValueError:
        raise DataLoadError(f"row filter must look like START:STOP, got {spec!r}") from None
    return slice(*bounds)


def load_dataset(path, columns=None, log_transform: bool = False, rows: slice | str | None = None) -> Dataset:
    """Read a numeric CSV whose first row holds column names.

    ``columns`` selects (and orders) columns by name; ``rows`` keeps a slice of
    the data rows; ``log_transform`` takes the natural log of every selected
    value.  Errors name the file, row (1-based, counting the header) and
    column at fault.
    """
    path = str(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            records = list(csv.reader(fh))
    except OSError as exc:
        raise DataLoadError(f"cannot read data file {path}: {exc.strerror or exc}") from None
    except UnicodeDecodeError:
        raise DataLoadError(f"data file {path} is not valid UTF-8") from None
    records = [r for r in records if r and any(cell.strip() for cell in r)]
    if not records:
        raise DataLoadError(f"data file {path} is empty")
    header = [h.strip() for h in records[0]]
    if len(set(header)) != len(header):
        raise DataLoadError(f"data file {path} has duplicate column names")

    if columns is None:
        names = header
    else:
        names = [c.strip() for c in (columns.split(",") if isinstance(columns, str) else columns)]
        if len(set(names)) != len(names):
            raise DataLoadError(f"selected columns are not distinct: {','.join(names)}")
        missing = [c for c in names if c not in header]
        if missing:
            raise DataLoadError(f"column(s) {', '.join(missing)} not found in {path}; available: {', '.join(header)}")
    index = [header.index(c) for c in names]

    body = list(enumerate(records[1:], start=2))
    if isinstance(rows, str):
        rows = parse_rows(rows)
    if rows is not None:
        body = body[rows]
    values = np.empty((len(body), len(index)))
    for out_row, (line, record) in enumerate(body):
        if len(record) != len(header):
            raise DataLoadError(f"{path}: row {line} has {len(record)} fields, expected {len(header)}")
        for out_col, (src, name) in enumerate(zip(index, names)):
            cell = record[src].strip()
            try:
                value = float(cell)
            except ValueError:
                raise DataLoadError(f"{path}: non-numeric value {cell!r} at row {line}, column {name!r}") from None
            if not math.isfinite(value):
                raise DataLoadError(f"{path}: non-finite value at row {line}, column {name!r}")
            if log_transform:
                if value <= 0.0:
                    raise DataLoadError(f"{path}: cannot log-transform {cell} at row {line}, column {name!r}")
                value = math.log(value)
            values[out_row, out_col] = value
    if values.shape[0] == 0:
        raise DataLoadError(f"data file {path} has no data rows")
    return Dataset(values, tuple(names), path)


def fingerprint(data: Dataset) -> dict:
    """Row/column counts, column names and a 64-bit content hash."""
    h = hashlib.blake2b(digest_size=8)
    h.update("\x1f".join(data.columns).encode("utf-8"))
    h.update(np.ascontiguousarray(data.values, dtype="<f8").tobytes())
    return {"rows": data.n, "cols": data.k, "columns": list(data.columns), "hash": h.hexdigest()}
