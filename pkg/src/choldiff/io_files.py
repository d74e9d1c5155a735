"""CSV and JSON readers/writers for observations, samples and diagnostics.

CSV files are UTF-8 with '.' decimals and shortest round-trip float
formatting (Python ``repr``); headers are optional on input and always
written on output.
"""
from __future__ import annotations

import csv
import json

import numpy as np

from .diagnostics import Diagnostics
from .models import ObservationSet

DIAGNOSTICS_SCHEMA_VERSION = 1


class DataFormatError(ValueError):
    """Malformed input file; the message carries the row number."""


def _fmt(x: float) -> str:
    return repr(float(x))


def _is_number(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def load_observations(path: str, expected_d: int = None,
                      has_time_column: bool = None) -> ObservationSet:
    """Read an observation CSV into an :class:`ObservationSet`.

    The first column is time when the file has ``expected_d + 1`` columns
    (or when ``has_time_column`` forces the choice); otherwise rows are
    taken to be equally spaced at unit intervals starting from 0.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    rows = [row for row in rows if row and any(cell.strip() for cell in row)]
    if not rows:
        raise DataFormatError(f"{path}: file contains no data rows")
    start = 0
    if not all(_is_number(cell) for cell in rows[0]):
        start = 1  # header row
        if len(rows) == 1:
            raise DataFormatError(f"{path}: header only, no data rows")
    width = len(rows[start])
    data = np.empty((len(rows) - start, width))
    for r, row in enumerate(rows[start:], start=start + 1):
        if len(row) != width:
            raise DataFormatError(
                f"{path}: row {r} has {len(row)} columns, expected {width}"
            )
        for c, cell in enumerate(row):
            try:
                data[r - start - 1, c] = float(cell)
            except ValueError:
                raise DataFormatError(
                    f"{path}: non-numeric value {cell!r} at row {r}, column {c + 1}"
                ) from None

    if has_time_column is None:
        if expected_d is None:
            has_time_column = False
        else:
            if width == expected_d:
                has_time_column = False
            elif width == expected_d + 1:
                has_time_column = True
            else:
                raise DataFormatError(
                    f"{path}: found {width} columns, expected {expected_d} "
                    f"(or {expected_d + 1} with a leading time column)"
                )
    if has_time_column:
        times = data[:, 0]
        values = data[:, 1:]
        bad = np.flatnonzero(np.diff(times) <= 0.0)
        if bad.size:
            raise DataFormatError(
                f"{path}: time column is not strictly increasing at row "
                f"{int(bad[0]) + start + 2}"
            )
    else:
        times = np.arange(data.shape[0], dtype=float)
        values = data
    if expected_d is not None and values.shape[1] != expected_d:
        raise DataFormatError(
            f"{path}: found {values.shape[1]} component columns, expected {expected_d}"
        )
    return ObservationSet(times, values)


def write_observations(path: str, obs: ObservationSet,
                       include_time: bool = True, header: list = None):
    """Write observations as CSV; inverse of :func:`load_observations`."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        if header is None:
            header = [f"x{i + 1}" for i in range(obs.d_obs)]
        if include_time:
            writer.writerow(["time"] + list(header))
            for t, row in zip(obs.times, obs.values):
                writer.writerow([_fmt(t)] + [_fmt(v) for v in row])
        else:
            writer.writerow(list(header))
            for row in obs.values:
                writer.writerow([_fmt(v) for v in row])


class SampleWriter:
    """Incremental (crash-safe) CSV writer for sample records.

    Rows are flushed as written, so an interrupted run leaves a valid
    prefix of the output.
    """

    def __init__(self, path: str, fieldnames: list):
        self.path = path
        self.fieldnames = list(fieldnames)
        self._fh = open(path, "w", encoding="utf-8", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(self.fieldnames)
        self._fh.flush()

    def write(self, record: dict):
        self._writer.writerow([
            _fmt(record[name]) if isinstance(record[name], float)
            else record[name]
            for name in self.fieldnames
        ])
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def load_samples(path: str) -> tuple[list, np.ndarray]:
    """Read a samples CSV back as (column names, float matrix)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        raise DataFormatError(f"{path}: file contains no data rows")
    names = rows[0]
    if len(rows) == 1:
        raise DataFormatError(f"{path}: header only, no sample rows")
    data = np.array([[float(cell) for cell in row] for row in rows[1:]])
    return names, data


def write_diagnostics(path: str, diag: Diagnostics, config_dict: dict,
                      extra: dict = None):
    """Write diagnostics JSON: acceptance, ACF, IACT, summaries, config echo."""
    payload = {
        "schema_version": DIAGNOSTICS_SCHEMA_VERSION,
        "config": config_dict,
        "acceptance": {
            name: {"accepted": acc, "attempted": att,
                   "rate": (acc / att if att else 0.0)}
            for name, (acc, att) in diag.acceptance.items()
        },
        "domain_rejects": dict(diag.acceptance_domain_rejects),
        "acf": {name: np.asarray(a, dtype=float).tolist()
                for name, a in diag.acf.items()},
        "iact": {name: float(v) for name, v in diag.iact.items()},
        "summaries": {name: {k: float(v) for k, v in s.items()}
                      for name, s in diag.summaries.items()},
    }
    if extra:
        payload.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_acf_table(path: str, acfs: dict, extra_columns: dict = None):
    """Long-format ACF table: parameter, lag, acf (plot-ready).

    ``extra_columns`` adds constant columns (e.g. the augmentation level
    m) so tables from several runs can be concatenated.
    """
    extra_columns = extra_columns or {}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(extra_columns) + ["parameter", "lag", "acf"])
        prefix = [extra_columns[k] for k in extra_columns]
        for name, acf in acfs.items():
            for lag, value in enumerate(np.asarray(acf, dtype=float)):
                writer.writerow(prefix + [name, lag, _fmt(value)])
