"""CSV and key=value files: simulation logs, identification datasets and results.

Every file may start with ``# key=value`` comment lines carrying run metadata,
followed by one header row and rectangular numeric rows. Readers are strict:
ragged or non-numeric rows raise DataError naming the file line.
"""

from __future__ import annotations

import csv
import math
from typing import Iterable, Optional, Sequence

import numpy as np

from .ident import DATA_COLUMNS, Dataset, IdentResult
from .simulator import LOG_COLUMNS, Metrics, SimLog


class DataError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_value(text: str):
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _write_table(path, header: dict, columns: Sequence[str], rows: np.ndarray, fmt: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for key, value in header.items():
            fh.write(f"# {key}={format_value(value)}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(fmt % x for x in row) + "\n")


def read_table(path, columns: Optional[Sequence[str]] = None) -> tuple[dict, list[str], np.ndarray, int]:
    """Parse a commented CSV into (header, column names, float array, file line of the first row)."""
    header = {}
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        lines = fh.read().splitlines()
    n = 0
    while n < len(lines) and lines[n].startswith("#"):
        key, sep, value = lines[n][1:].strip().partition("=")
        if sep:
            header[key.strip()] = parse_value(value.strip())
        n += 1
    if n == len(lines):
        raise DataError(f"{path} has no header row")
    names = [c.strip() for c in next(csv.reader([lines[n]]))]
    if columns is not None and tuple(names) != tuple(columns):
        raise DataError(f"expected columns {','.join(columns)}, got {','.join(names)}", n + 1)
    rows = []
    for number, fields in enumerate(csv.reader(lines[n + 1 :]), start=n + 2):
        if len(fields) != len(names):
            raise DataError(f"row has {len(fields)} fields, expected {len(names)}", number)
        try:
            values = [float(f) for f in fields]
        except ValueError:
            raise DataError(f"non-numeric field in {fields!r}", number) from None
        if not all(math.isfinite(v) for v in values):
            raise DataError("non-finite value", number)
        rows.append(values)
    data = np.array(rows, dtype=float).reshape(len(rows), len(names))
    return header, names, data, n + 2


def write_simlog(path, log: SimLog) -> None:
    """Exported columns at 9 significant digits; ``flags`` as an integer."""
    table = log.table()
    flags = LOG_COLUMNS.index("flags")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for key, value in log.header.items():
            fh.write(f"# {key}={format_value(value)}\n")
        fh.write(",".join(LOG_COLUMNS) + "\n")
        for row in table:
            cells = ["%.9g" % x for x in row]
            cells[flags] = str(int(row[flags]))
            fh.write(",".join(cells) + "\n")


def read_simlog(path) -> tuple[dict, np.ndarray]:
    header, _, data, _ = read_table(path, LOG_COLUMNS)
    return header, data


def write_metrics(path, metrics: Metrics, extra: Optional[dict] = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in (extra or {}).items():
            fh.write(f"{key}={format_value(value)}\n")
        fh.write(metrics.as_text())


def write_dataset(path, data: Dataset) -> None:
    """Lossless (17 significant digit) dataset CSV with rate, mode and metadata as comments."""
    header = {"rate": float(data.rate), "mode": data.mode}
    header.update(data.meta)
    table = np.column_stack([data.t, data.inputs, data.outputs]) + 0.0  # no "-0" cells
    _write_table(path, header, DATA_COLUMNS, table, "%.17g")


def read_dataset(path, mode: Optional[str] = None) -> Dataset:
    """Strict dataset reader.

    The sample rate comes from the ``rate`` comment when present, otherwise
    from the time column, which must be uniformly spaced either way. The mode
    comes from ``mode`` (or the argument), else manual when T_h is all zero.
    """
    header, _, table, first_line = read_table(path, DATA_COLUMNS)
    if table.shape[0] < 2:
        raise DataError(f"{path} needs at least two samples")
    t = table[:, 0]
    rate = header.get("rate")
    if not isinstance(rate, (int, float)) or rate <= 0:
        rate = 1.0 / float(np.mean(np.diff(t)))
    expected = t[0] + np.arange(len(t)) / rate
    bad = np.flatnonzero(np.abs(t - expected) > 1e-6 / rate + 1e-9 * np.abs(t))
    if bad.size:
        first = int(bad[0])
        raise DataError(f"time stamp {t[first]!r} breaks the {rate:g} Hz grid", first + first_line)
    mode = mode or header.get("mode")
    if mode is None:
        mode = "manual" if np.all(table[:, 4] == 0.0) else "haptic"
    meta = {k: v for k, v in header.items() if k not in ("rate", "mode")}
    try:
        data = Dataset(float(rate), table[:, 1:5], table[:, 5:7], str(mode), meta)
        data.validate()
    except ValueError as exc:
        raise DataError(str(exc)) from None
    return data


def write_ident_result(path, result: IdentResult, extra: Optional[dict] = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in (extra or {}).items():
            fh.write(f"{key}={format_value(value)}\n")
        fh.write(result.as_text())


def write_residuals(path, result: IdentResult, rate: float) -> None:
    t = np.arange(result.residuals.shape[0]) / rate
    _write_table(path, {}, ("t", "res_T_d", "res_phi"), np.column_stack([t, result.residuals]), "%.9g")


def write_trace(path, log: SimLog, header: Optional[dict] = None) -> None:
    """Plot data: lateral error and torques against time."""
    cols = ("t", "lateral_error", "T_d", "T_h")
    _write_table(path, header or {}, cols, np.column_stack([log[c] for c in cols]), "%.9g")


def write_rows(path, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Mixed-type summary table."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([("%.9g" % v) if isinstance(v, float) else format_value(v) for v in row])
