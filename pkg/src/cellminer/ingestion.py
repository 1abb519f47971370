"""Loading, validation and cleaning of per-cell telemetry time series.

Input format is a CSV file with header ``cell_id,timestamp,<var1>,...``
(empty field = missing) plus an INI-style schema file declaring, per
variable, its role (CP, KPI, PM or ENG) and kind (numeric or categorical),
and the sampling interval of the timestamp grid:

    [dataset]
    sampling_interval = 3600

    [variables]
    tilt_angle = CP, numeric
    rrc_setup_success_rate = KPI, numeric
"""

from __future__ import annotations

import configparser
import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

from .errors import DataError, SchemaError

ROLES = ("CP", "KPI", "PM", "ENG")
KINDS = ("numeric", "categorical")

Scalar = Union[float, str]


@dataclass(frozen=True)
class VariableDescriptor:
    """One column of the telemetry table: a named variable with role and kind."""

    name: str
    role: str
    kind: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise SchemaError(f"variable {self.name!r}: unknown role {self.role!r}")
        if self.kind not in KINDS:
            raise SchemaError(f"variable {self.name!r}: unknown kind {self.kind!r}")


@dataclass
class CellRecord:
    """Values observed for one cell at one timestamp; absent key = missing."""

    cell_id: str
    timestamp: int
    values: dict[str, Scalar] = field(default_factory=dict)


@dataclass
class Dataset:
    schema: list[VariableDescriptor]
    records: list[CellRecord]
    sampling_interval: int

    def descriptor(self, name: str) -> VariableDescriptor:
        for d in self.schema:
            if d.name == name:
                return d
        raise SchemaError(f"unknown variable {name!r}")

    def variables(self, role: Optional[str] = None) -> list[str]:
        return [d.name for d in self.schema if role is None or d.role == role]

    def cells(self) -> list[str]:
        return sorted({r.cell_id for r in self.records})

    def series(self, cell_id: str, variable: str) -> "ValueSeries":
        """Observed (timestamp, value) points for one cell/variable, time-ordered."""
        self.descriptor(variable)
        points = tuple(
            (r.timestamp, r.values[variable])
            for r in self.records
            if r.cell_id == cell_id and variable in r.values
        )
        return ValueSeries(cell_id=cell_id, variable=variable, points=points)

    def validate(self) -> None:
        """Check uniqueness, monotonicity and grid alignment invariants."""
        names = [d.name for d in self.schema]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate variable names in schema")
        known = set(names)
        seen: set[tuple[str, int]] = set()
        first_ts: dict[str, int] = {}
        for rec in self.records:
            key = (rec.cell_id, rec.timestamp)
            if key in seen:
                raise DataError(f"duplicate record for cell {rec.cell_id!r} at t={rec.timestamp}")
            seen.add(key)
            unknown = set(rec.values) - known
            if unknown:
                raise SchemaError(f"record {key} has unknown variables {sorted(unknown)}")
            t0 = first_ts.setdefault(rec.cell_id, rec.timestamp)
            if (rec.timestamp - t0) % self.sampling_interval != 0:
                raise DataError(
                    f"cell {rec.cell_id!r}: t={rec.timestamp} off the "
                    f"{self.sampling_interval}s grid anchored at {t0}"
                )

    def sorted_copy(self) -> "Dataset":
        records = sorted(self.records, key=lambda r: (r.cell_id, r.timestamp))
        return Dataset(
            schema=list(self.schema),
            records=[CellRecord(r.cell_id, r.timestamp, dict(r.values)) for r in records],
            sampling_interval=self.sampling_interval,
        )


@dataclass(frozen=True)
class ValueSeries:
    """Time-ordered observed points of one variable in one cell."""

    cell_id: str
    variable: str
    points: tuple[tuple[int, Scalar], ...]


def load_schema(path: Union[str, Path]) -> tuple[list[VariableDescriptor], int]:
    parser = configparser.ConfigParser()
    read = parser.read(str(path))
    if not read:
        raise SchemaError(f"schema file not found: {path}")
    if not parser.has_section("variables"):
        raise SchemaError(f"schema file {path} lacks a [variables] section")
    try:
        interval = parser.getint("dataset", "sampling_interval", fallback=1)
    except ValueError as exc:
        raise SchemaError(f"bad sampling_interval in {path}: {exc}") from exc
    if interval <= 0:
        raise SchemaError("sampling_interval must be a positive number of seconds")
    descriptors = []
    for name, spec in parser.items("variables"):
        parts = [p.strip() for p in spec.split(",")]
        if len(parts) != 2:
            raise SchemaError(f"variable {name!r}: expected 'role, kind', got {spec!r}")
        descriptors.append(VariableDescriptor(name=name, role=parts[0], kind=parts[1]))
    return descriptors, interval


def _parse_scalar(text: str, descriptor: VariableDescriptor, where: str) -> Scalar:
    if descriptor.kind == "categorical":
        return text
    try:
        value = float(text)
    except ValueError as exc:
        raise DataError(f"{where}: unparseable numeric value {text!r} "
                        f"for variable {descriptor.name!r}") from exc
    if not math.isfinite(value):
        raise DataError(f"{where}: non-finite value {text!r} for variable {descriptor.name!r}")
    return value


def load_dataset(path: Union[str, Path], schema_path: Union[str, Path]) -> Dataset:
    """Load a CSV telemetry file against a schema file.

    Records come back sorted by (cell_id, timestamp). Empty CSV fields become
    absent values. Duplicate (cell_id, timestamp) rows, columns not declared
    in the schema, unparseable scalars and off-grid timestamps are errors.
    """
    schema, interval = load_schema(schema_path)
    by_name = {d.name: d for d in schema}

    records: list[CellRecord] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row") from None
        if header[:2] != ["cell_id", "timestamp"]:
            raise SchemaError(f"{path}: header must start with cell_id,timestamp")
        var_columns = header[2:]
        unknown = [c for c in var_columns if c not in by_name]
        if unknown:
            raise SchemaError(f"{path}: columns {unknown} not declared in schema")

        for lineno, row in enumerate(reader, start=2):
            if not row or all(f == "" for f in row):
                continue
            where = f"{path}:{lineno}"
            if len(row) != len(header):
                raise DataError(f"{where}: expected {len(header)} fields, got {len(row)}")
            cell_id = row[0]
            try:
                timestamp = int(row[1])
            except ValueError as exc:
                raise DataError(f"{where}: bad timestamp {row[1]!r}") from exc
            values: dict[str, Scalar] = {}
            for name, text in zip(var_columns, row[2:]):
                if text == "":
                    continue
                values[name] = _parse_scalar(text, by_name[name], where)
            records.append(CellRecord(cell_id, timestamp, values))

    ds = Dataset(schema=schema, records=records, sampling_interval=interval).sorted_copy()
    ds.validate()
    return ds


def save_dataset(ds: Dataset, path: Union[str, Path]) -> None:
    """Write the canonical CSV form (sorted records, repr-rendered floats)."""
    ds = ds.sorted_copy()
    names = [d.name for d in ds.schema]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cell_id", "timestamp"] + names)
        for rec in ds.records:
            row = [rec.cell_id, str(rec.timestamp)]
            for name in names:
                if name in rec.values:
                    v = rec.values[name]
                    row.append(repr(v) if isinstance(v, float) else str(v))
                else:
                    row.append("")
            writer.writerow(row)


def save_schema(schema: Iterable[VariableDescriptor], interval: int,
                path: Union[str, Path]) -> None:
    parser = configparser.ConfigParser()
    parser["dataset"] = {"sampling_interval": str(interval)}
    parser["variables"] = {d.name: f"{d.role}, {d.kind}" for d in schema}
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)


def dataset_to_dict(ds: Dataset) -> dict:
    ds = ds.sorted_copy()
    return {
        "sampling_interval": ds.sampling_interval,
        "schema": [{"name": d.name, "role": d.role, "kind": d.kind} for d in ds.schema],
        "records": [
            {
                "cell_id": r.cell_id,
                "timestamp": r.timestamp,
                "values": {k: r.values[k] for k in sorted(r.values)},
            }
            for r in ds.records
        ],
    }


def dataset_from_dict(payload: dict) -> Dataset:
    schema = [VariableDescriptor(**d) for d in payload["schema"]]
    records = [
        CellRecord(r["cell_id"], int(r["timestamp"]), dict(r["values"]))
        for r in payload["records"]
    ]
    ds = Dataset(schema=schema, records=records,
                 sampling_interval=int(payload["sampling_interval"]))
    ds.validate()
    return ds


def save_dataset_json(ds: Dataset, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dataset_to_dict(ds), fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def load_dataset_json(path: Union[str, Path]) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        return dataset_from_dict(json.load(fh))


@dataclass(frozen=True)
class FilterResult:
    dataset: Dataset
    dropped_variables: tuple[str, ...]
    duplicates_removed: int


def filter_redundant(ds: Dataset) -> FilterResult:
    """Drop zero-information variables and exact duplicate records.

    A variable is redundant when its observed values are constant across the
    whole dataset (this includes variables never observed at all). Duplicate
    records are byte-identical (cell_id, timestamp, values) repeats; the first
    occurrence is kept. Idempotent.
    """
    observed: dict[str, set[Scalar]] = {d.name: set() for d in ds.schema}
    for rec in ds.records:
        for name, value in rec.values.items():
            observed[name].add(value)
    dropped = tuple(sorted(name for name, vals in observed.items() if len(vals) <= 1))
    drop_set = set(dropped)

    kept_schema = [d for d in ds.schema if d.name not in drop_set]
    seen: set[tuple[str, int, tuple]] = set()
    kept_records: list[CellRecord] = []
    duplicates = 0
    for rec in ds.records:
        values = {k: v for k, v in rec.values.items() if k not in drop_set}
        key = (rec.cell_id, rec.timestamp, tuple(sorted(values.items())))
        if key in seen:
            duplicates += 1
            continue
        seen.add(key)
        kept_records.append(CellRecord(rec.cell_id, rec.timestamp, values))

    out = Dataset(schema=kept_schema, records=kept_records,
                  sampling_interval=ds.sampling_interval)
    return FilterResult(dataset=out, dropped_variables=dropped,
                        duplicates_removed=duplicates)


@dataclass(frozen=True)
class GapReport:
    cell_id: str
    variable: str
    start: int
    end: int
    length: int


@dataclass(frozen=True)
class FillResult:
    dataset: Dataset
    filled: tuple[GapReport, ...]
    unfilled: tuple[GapReport, ...]


def fill_gaps(ds: Dataset, max_gap: int) -> FillResult:
    """Complete short runs of missing samples on the per-cell uniform grid.

    A gap is a maximal run of missing grid slots flanked by observed values on
    both sides. Numeric gaps of length <= max_gap are filled by linear
    interpolation between the flanking observations, categorical ones by the
    previous observed label. Longer gaps are reported and left missing.
    Leading/trailing missing runs have no flank pair and are never touched.
    Observed values are never altered.
    """
    if max_gap < 0:
        raise ValueError("max_gap must be >= 0")
    ds = ds.sorted_copy()
    if max_gap == 0 or not ds.records:
        return FillResult(dataset=ds, filled=(), unfilled=())

    interval = ds.sampling_interval
    by_key: dict[tuple[str, int], CellRecord] = {
        (r.cell_id, r.timestamp): r for r in ds.records
    }
    cell_ts: dict[str, list[int]] = {}
    for rec in ds.records:
        cell_ts.setdefault(rec.cell_id, []).append(rec.timestamp)

    filled: list[GapReport] = []
    unfilled: list[GapReport] = []
    for cell in sorted(cell_ts):
        ts_list = cell_ts[cell]
        grid = list(range(min(ts_list), max(ts_list) + 1, interval))
        for desc in ds.schema:
            obs = [
                (t, by_key[(cell, t)].values[desc.name])
                for t in grid
                if (cell, t) in by_key and desc.name in by_key[(cell, t)].values
            ]
            if len(obs) < 2:
                continue
            for (t_left, v_left), (t_right, v_right) in zip(obs, obs[1:]):
                length = (t_right - t_left) // interval - 1
                if length <= 0:
                    continue
                report = GapReport(cell, desc.name, t_left + interval,
                                   t_right - interval, length)
                if length > max_gap:
                    unfilled.append(report)
                    continue
                for step in range(1, length + 1):
                    t = t_left + step * interval
                    rec = by_key.get((cell, t))
                    if rec is None:
                        rec = CellRecord(cell, t, {})
                        by_key[(cell, t)] = rec
                        ds.records.append(rec)
                    if desc.kind == "numeric":
                        frac = step / (length + 1)
                        rec.values[desc.name] = (1 - frac) * float(v_left) + frac * float(v_right)
                    else:
                        rec.values[desc.name] = v_left
                filled.append(report)

    out = ds.sorted_copy()
    return FillResult(dataset=out, filled=tuple(filled), unfilled=tuple(unfilled))
