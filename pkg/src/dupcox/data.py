"""Counting-process survival data: schema, in-memory cohort, loading, validation.

A cohort is a sequence of (entry, exit] intervals, one or more per subject,
with an event indicator at the interval end, named exposure and covariate
columns, and optional baseline-stratification labels.  Time units are opaque
reals; no calendar parsing happens here.
"""

from __future__ import annotations

import csv
import hashlib
import io
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ParseError, SchemaError, ValidationError


@dataclass(frozen=True)
class Schema:
    """Column mapping for a delimited cohort file.

    ``entry_column=None`` means all intervals start at time 0 (right-censored
    data without left truncation).
    """

    id_column: str
    exit_column: str
    event_column: str
    exposure_columns: tuple[str, ...]
    covariate_columns: tuple[str, ...] = ()
    strata_columns: tuple[str, ...] = ()
    entry_column: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "exposure_columns", tuple(self.exposure_columns))
        object.__setattr__(self, "covariate_columns", tuple(self.covariate_columns))
        object.__setattr__(self, "strata_columns", tuple(self.strata_columns))
        names = self.all_columns()
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"schema column names are not pairwise distinct: {dupes}")
        if len(self.exposure_columns) < 2:
            raise SchemaError(
                "at least two exposure columns are required for a comparison, "
                f"got {list(self.exposure_columns)}"
            )

    def all_columns(self) -> list[str]:
        names = [self.id_column]
        if self.entry_column is not None:
            names.append(self.entry_column)
        names += [self.exit_column, self.event_column]
        names += list(self.exposure_columns)
        names += list(self.covariate_columns)
        names += list(self.strata_columns)
        return names


@dataclass(frozen=True)
class CohortRow:
    """One counting-process interval (entry, exit] for one subject."""

    subject_id: str
    entry_time: float
    exit_time: float
    event: bool
    exposure_values: dict[str, float]
    covariate_values: dict[str, float]
    strata_values: dict[str, str]


@dataclass(frozen=True)
class Dataset:
    """Immutable cohort backed by column arrays.

    Rows preserve input order.  ``strata`` holds string labels; exposures and
    covariates are float columns aligned with ``schema``.
    """

    schema: Schema
    subject_ids: np.ndarray  # object, shape (n,)
    entry: np.ndarray        # float, shape (n,)
    exit: np.ndarray         # float, shape (n,)
    event: np.ndarray        # bool, shape (n,)
    exposures: np.ndarray    # float, shape (n, n_exposures)
    covariates: np.ndarray   # float, shape (n, n_covariates)
    strata: np.ndarray       # object, shape (n, n_strata)
    n_rejected_missing: int = field(default=0, compare=False)

    def __post_init__(self):
        n = len(self.subject_ids)
        for name in ("entry", "exit", "event"):
            if len(getattr(self, name)) != n:
                raise ValidationError(f"column '{name}' has length != {n}")
        for name in ("exposures", "covariates", "strata"):
            arr = getattr(self, name)
            if arr.shape[0] != n:
                raise ValidationError(f"column block '{name}' has {arr.shape[0]} rows != {n}")
        if self.exposures.shape[1] != len(self.schema.exposure_columns):
            raise ValidationError("exposure block width does not match schema")
        if self.covariates.shape[1] != len(self.schema.covariate_columns):
            raise ValidationError("covariate block width does not match schema")
        if self.strata.shape[1] != len(self.schema.strata_columns):
            raise ValidationError("strata block width does not match schema")

    def __len__(self) -> int:
        return len(self.subject_ids)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.schema == other.schema
            and np.array_equal(self.subject_ids, other.subject_ids)
            and np.array_equal(self.entry, other.entry)
            and np.array_equal(self.exit, other.exit)
            and np.array_equal(self.event, other.event)
            and np.array_equal(self.exposures, other.exposures)
            and np.array_equal(self.covariates, other.covariates)
            and np.array_equal(self.strata, other.strata)
        )

    @classmethod
    def from_rows(cls, rows: Iterable[CohortRow], schema: Schema,
                  n_rejected_missing: int = 0) -> "Dataset":
        rows = list(rows)
        n = len(rows)
        ids = np.array([r.subject_id for r in rows], dtype=object)
        entry = np.array([r.entry_time for r in rows], dtype=float)
        exit_ = np.array([r.exit_time for r in rows], dtype=float)
        event = np.array([r.event for r in rows], dtype=bool)
        expo = np.empty((n, len(schema.exposure_columns)), dtype=float)
        cov = np.empty((n, len(schema.covariate_columns)), dtype=float)
        strat = np.empty((n, len(schema.strata_columns)), dtype=object)
        for i, r in enumerate(rows):
            for j, name in enumerate(schema.exposure_columns):
                expo[i, j] = r.exposure_values[name]
            for j, name in enumerate(schema.covariate_columns):
                cov[i, j] = r.covariate_values[name]
            for j, name in enumerate(schema.strata_columns):
                strat[i, j] = r.strata_values[name]
        return cls(schema, ids, entry, exit_, event, expo, cov, strat,
                   n_rejected_missing=n_rejected_missing)

    @property
    def rows(self) -> tuple[CohortRow, ...]:
        out = []
        s = self.schema
        for i in range(len(self)):
            out.append(CohortRow(
                subject_id=self.subject_ids[i],
                entry_time=float(self.entry[i]),
                exit_time=float(self.exit[i]),
                event=bool(self.event[i]),
                exposure_values={c: float(self.exposures[i, j])
                                 for j, c in enumerate(s.exposure_columns)},
                covariate_values={c: float(self.covariates[i, j])
                                  for j, c in enumerate(s.covariate_columns)},
                strata_values={c: self.strata[i, j]
                               for j, c in enumerate(s.strata_columns)},
            ))
        return tuple(out)

    def exposure(self, name: str) -> np.ndarray:
        j = self.schema.exposure_columns.index(name)
        return self.exposures[:, j]

    def strata_keys(self) -> np.ndarray:
        """Per-row composite stratum label from the original strata columns."""
        if self.strata.shape[1] == 0:
            return np.array(["" for _ in range(len(self))], dtype=object)
        keys = np.empty(len(self), dtype=object)
        for i in range(len(self)):
            keys[i] = "|".join(str(v) for v in self.strata[i])
        return keys

    def fingerprint(self) -> str:
        """SHA-256 of the canonical serialization (stable across load cycles)."""
        return hashlib.sha256(_serialize(self).encode("utf-8")).hexdigest()


def _parse_float(cell: str, row: int, column: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise ParseError(
            f"cannot parse value {cell!r} in column '{column}' at data row {row}",
            row=row, column=column,
        ) from None


def load_dataset(path: str | Path, schema: Schema) -> Dataset:
    """Load a delimited cohort file into a :class:`Dataset`.

    The delimiter (comma or tab) is auto-detected from the header line.  The
    event column must contain only ``0`` or ``1``.  Rows with a missing
    exposure or covariate cell are rejected (counted, warned about), not
    imputed.

    Raises
    ------
    SchemaError
        If a schema column is absent from the header.
    ParseError
        If a cell cannot be parsed; the error names the data row and column.
    ValidationError
        If a row has ``entry_time >= exit_time``; the error names the subject.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header_line = fh.readline()
        if header_line == "":
            raise SchemaError(f"{path}: file is empty, expected a header row")
        delimiter = "\t" if "\t" in header_line else ","
        header = next(csv.reader([header_line], delimiter=delimiter))
        header = [h.strip() for h in header]
        positions = {}
        for name in schema.all_columns():
            if name not in header:
                raise SchemaError(f"{path}: column '{name}' not found in header {header}")
            positions[name] = header.index(name)

        rows: list[CohortRow] = []
        n_rejected = 0
        reader = csv.reader(fh, delimiter=delimiter)

        def cell(record, name):
            return record[positions[name]].strip()

        for row_idx, record in enumerate(reader, start=1):
            if not record or all(field.strip() == "" for field in record):
                continue
            if len(record) < len(header):
                raise ParseError(
                    f"data row {row_idx} has {len(record)} fields, expected {len(header)}",
                    row=row_idx,
                )
            values: dict[str, float] = {}
            missing = False
            for name in schema.exposure_columns + schema.covariate_columns:
                raw = cell(record, name)
                if raw == "":
                    missing = True
                    break
                values[name] = _parse_float(raw, row_idx, name)
            if missing:
                n_rejected += 1
                continue

            subject_id = cell(record, schema.id_column)
            if subject_id == "":
                raise ParseError(f"empty subject id at data row {row_idx}",
                                 row=row_idx, column=schema.id_column)
            entry = 0.0
            if schema.entry_column is not None:
                entry = _parse_float(cell(record, schema.entry_column),
                                     row_idx, schema.entry_column)
            exit_ = _parse_float(cell(record, schema.exit_column), row_idx, schema.exit_column)
            raw_event = cell(record, schema.event_column)
            if raw_event not in ("0", "1"):
                raise ParseError(
                    f"event column must be 0 or 1, got {raw_event!r} at data row {row_idx}",
                    row=row_idx, column=schema.event_column,
                )
            if entry >= exit_:
                raise ValidationError(
                    f"subject {subject_id!r}: entry time {entry} is not before "
                    f"exit time {exit_} (data row {row_idx})"
                )
            rows.append(CohortRow(
                subject_id=subject_id,
                entry_time=entry,
                exit_time=exit_,
                event=raw_event == "1",
                exposure_values={k: values[k] for k in schema.exposure_columns},
                covariate_values={k: values[k] for k in schema.covariate_columns},
                strata_values={k: cell(record, k) for k in schema.strata_columns},
            ))

    if n_rejected:
        warnings.warn(
            f"{path}: rejected {n_rejected} row(s) with missing exposure/covariate values",
            stacklevel=2,
        )
    return Dataset.from_rows(rows, schema, n_rejected_missing=n_rejected)


def _serialize(dataset: Dataset) -> str:
    """Canonical CSV text for a dataset (used by save and fingerprint)."""
    s = dataset.schema
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(s.all_columns())
    for i in range(len(dataset)):
        record = [dataset.subject_ids[i]]
        if s.entry_column is not None:
            record.append(repr(float(dataset.entry[i])))
        record.append(repr(float(dataset.exit[i])))
        record.append("1" if dataset.event[i] else "0")
        record += [repr(float(v)) for v in dataset.exposures[i]]
        record += [repr(float(v)) for v in dataset.covariates[i]]
        record += [str(v) for v in dataset.strata[i]]
        writer.writerow(record)
    return buf.getvalue()


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write a dataset back to CSV so that a reload reproduces it exactly."""
    Path(path).write_text(_serialize(dataset), encoding="utf-8")


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    offenders: tuple = ()


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[CheckResult, ...]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def validate(dataset: Dataset) -> ValidationReport:
    """Run structural checks on a dataset and report findings.

    Pure (never mutates the dataset) and report-style: fatal conditions are
    surfaced later by the fit, not raised here.  Checks: interval ordering,
    within-subject interval overlap, event count per stratum, and constant
    (zero-variance) exposure/covariate columns.
    """
    checks: list[CheckResult] = []

    bad_order = [dataset.subject_ids[i] for i in np.nonzero(dataset.entry >= dataset.exit)[0]]
    checks.append(CheckResult(
        "interval_ordering", not bad_order,
        "every interval satisfies entry < exit" if not bad_order
        else f"{len(bad_order)} interval(s) with entry >= exit",
        tuple(bad_order),
    ))

    overlapping: list[str] = []
    order = np.lexsort((dataset.entry, dataset.subject_ids.astype(str)))
    prev_id, prev_exit = None, -np.inf
    for i in order:
        sid = dataset.subject_ids[i]
        if sid == prev_id and dataset.entry[i] < prev_exit:
            if sid not in overlapping:
                overlapping.append(sid)
        if sid == prev_id:
            prev_exit = max(prev_exit, dataset.exit[i])
        else:
            prev_id, prev_exit = sid, dataset.exit[i]
    checks.append(CheckResult(
        "subject_overlap", not overlapping,
        "no overlapping intervals within a subject" if not overlapping
        else f"overlapping intervals for {len(overlapping)} subject(s)",
        tuple(overlapping),
    ))

    keys = dataset.strata_keys()
    silent: list[str] = []
    for key in dict.fromkeys(keys):  # preserve first-seen order
        if not dataset.event[keys == key].any():
            silent.append(key)
    checks.append(CheckResult(
        "stratum_events", not silent,
        "every stratum contains at least one event" if not silent
        else f"{len(silent)} non-informative stratum/strata (no events)",
        tuple(silent),
    ))

    constant: list[str] = []
    names = dataset.schema.exposure_columns + dataset.schema.covariate_columns
    blocks = np.hstack([dataset.exposures, dataset.covariates]) if len(dataset) else None
    if blocks is not None and len(dataset) > 0:
        for j, name in enumerate(names):
            if np.ptp(blocks[:, j]) == 0.0:
                constant.append(name)
    checks.append(CheckResult(
        "constant_columns", not constant,
        "no constant exposure/covariate columns" if not constant
        else f"constant column(s): {', '.join(constant)}",
        tuple(constant),
    ))

    return ValidationReport(tuple(checks))
