"""Mapping raw KPI/CP series onto discrete quality levels.

Numeric variables use ordered breakpoints b_1 < ... < b_{n-1} defining the
half-open intervals [b_i, b_{i+1}) with b_0 = -inf and b_n = +inf; values in
the same interval are treated as equivalent for user experience. Categorical
and small-integer variables map each distinct raw value to its own level.

Quantization config file (INI):

    [quantization]
    rrc_setup_success_rate = breakpoints 90 95 99 | labels very_low low degraded normal
    downlink_traffic = auto 4
    transecr = identity
"""

from __future__ import annotations

import configparser
import math
from bisect import bisect_right
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, DataError, SchemaError
from .ingestion import Dataset, Scalar, ValueSeries

DEFAULT_N_LEVELS = 4
DEFAULT_LABELS_4 = ("very_low", "low", "normal", "high")


@dataclass(frozen=True)
class LevelScheme:
    """Per-variable rule mapping raw values to level indices 0..n-1.

    Exactly one of `breakpoints` (numeric variables) or `mapping` (categorical
    variables, raw label -> level index) is set. `ordered` marks whether the
    level indices carry a meaningful order (needed for direction-of-change
    items).
    """

    labels: tuple[str, ...]
    breakpoints: Optional[tuple[float, ...]] = None
    mapping: Optional[Mapping[str, int]] = None
    ordered: bool = True

    def __post_init__(self) -> None:
        if len(self.labels) < 2:
            raise ConfigError("a level scheme needs at least 2 levels")
        if len(set(self.labels)) != len(self.labels):
            raise ConfigError(f"duplicate level labels: {self.labels}")
        if (self.breakpoints is None) == (self.mapping is None):
            raise ConfigError("exactly one of breakpoints/mapping must be given")
        if self.breakpoints is not None:
            if len(self.breakpoints) != len(self.labels) - 1:
                raise ConfigError("need exactly one more label than breakpoints")
            if any(b2 <= b1 for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])):
                raise ConfigError(f"breakpoints not strictly increasing: {self.breakpoints}")
        else:
            assert self.mapping is not None
            if set(self.mapping.values()) != set(range(len(self.labels))):
                raise ConfigError("categorical mapping must cover levels 0..n-1")

    @property
    def n_levels(self) -> int:
        return len(self.labels)

    def level_of(self, value: Scalar) -> int:
        if self.breakpoints is not None:
            v = float(value)
            if math.isnan(v):
                raise DataError("cannot quantize NaN")
            return bisect_right(self.breakpoints, v)
        assert self.mapping is not None
        key = str(value)
        if key not in self.mapping:
            raise DataError(f"value {key!r} not covered by categorical scheme")
        return self.mapping[key]

    def label_of(self, level: int) -> str:
        return self.labels[level]


QuantizationScheme = Dict[str, LevelScheme]


@dataclass(frozen=True)
class LevelSeries:
    """Quantized (timestamp, level index) points of one variable in one cell."""

    cell_id: str
    variable: str
    points: tuple[tuple[int, int], ...]


def quantize_kpi(series: ValueSeries, scheme: LevelScheme) -> LevelSeries:
    """Quantize a numeric series; total and deterministic over finite values."""
    if scheme.breakpoints is None:
        raise SchemaError(f"variable {series.variable!r} needs a numeric breakpoint scheme")
    points = []
    for t, v in series.points:
        if not isinstance(v, float) or not math.isfinite(v):
            raise DataError(f"{series.variable!r}@{t}: non-finite or non-numeric value {v!r}")
        points.append((t, scheme.level_of(v)))
    return LevelSeries(series.cell_id, series.variable, tuple(points))


def fit_quantile_scheme(ds: Dataset, variable: str, n_levels: int = DEFAULT_N_LEVELS,
                        labels: Optional[Sequence[str]] = None) -> LevelScheme:
    """Fit breakpoints at the 1/n .. (n-1)/n empirical quantiles.

    Each level then receives approximately equal mass. Deterministic for a
    fixed dataset; linear interpolation between order statistics.
    """
    if n_levels < 2:
        raise ConfigError("n_levels must be >= 2")
    desc = ds.descriptor(variable)
    if desc.kind != "numeric":
        raise SchemaError(f"{variable!r} is categorical; quantile fitting needs numbers")
    values = np.array(
        [r.values[variable] for r in ds.records if variable in r.values], dtype=float
    )
    if len(np.unique(values)) < n_levels:
        raise DataError(
            f"{variable!r}: {len(np.unique(values))} distinct values, "
            f"need at least {n_levels}"
        )
    qs = np.arange(1, n_levels) / n_levels
    breaks = tuple(float(b) for b in np.quantile(values, qs))
    if any(b2 <= b1 for b1, b2 in zip(breaks, breaks[1:])):
        raise DataError(f"{variable!r}: tied quantiles {breaks}, distribution too discrete")
    if labels is None:
        labels = DEFAULT_LABELS_4 if n_levels == 4 else tuple(
            f"level_{i}" for i in range(n_levels)
        )
    return LevelScheme(labels=tuple(labels), breakpoints=breaks)


def fit_identity_scheme(values: Sequence[Scalar], ordered: Optional[bool] = None) -> LevelScheme:
    """One level per distinct observed value; the raw value names the level.

    Integer-valued numerics get numerically ordered levels; string values get
    lexicographic label order and are marked unordered unless stated.
    """
    distinct = sorted(set(values), key=lambda v: (0, float(v)) if isinstance(v, float) else (1, str(v)))
    if len(distinct) < 2:
        raise DataError(f"need at least 2 distinct values, got {distinct}")
    numeric = all(isinstance(v, float) for v in distinct)
    if numeric and not all(float(v).is_integer() for v in distinct):
        raise DataError("identity levels need integer-valued data; supply a breakpoint scheme")
    if ordered is None:
        ordered = numeric
    labels = tuple(
        str(int(v)) if isinstance(v, float) else str(v) for v in distinct
    )
    mapping = {label: i for i, label in enumerate(labels)}
    return LevelScheme(labels=labels, mapping=mapping, ordered=ordered)


def discretize_cp(series: ValueSeries, scheme: Optional[LevelScheme] = None,
                  max_auto_levels: int = 20) -> LevelSeries:
    """Discretize a configuration-parameter series.

    With a supplied scheme the mapping is applied directly (breakpoints for
    continuous CPs, explicit label maps for categorical ones). Without one,
    categorical and integer-valued CPs map each distinct raw setting to its
    own level, e.g. settings {2, 4} become levels "2" and "4". Continuous CPs
    without a scheme are an error.
    """
    if scheme is None:
        raw = [v for _, v in series.points]
        if not raw:
            return LevelSeries(series.cell_id, series.variable, ())
        try:
            scheme = fit_identity_scheme(raw)
        except DataError as exc:
            raise SchemaError(
                f"CP {series.variable!r}: {exc}; continuous CPs need an explicit scheme"
            ) from exc
        if scheme.n_levels > max_auto_levels:
            raise SchemaError(
                f"CP {series.variable!r}: {scheme.n_levels} distinct settings exceed "
                f"the auto-level cap {max_auto_levels}; supply a breakpoint scheme"
            )
    points = []
    for t, v in series.points:
        key: Scalar = v
        if scheme.mapping is not None and isinstance(v, float):
            key = str(int(v)) if float(v).is_integer() else str(v)
        points.append((t, scheme.level_of(key)))
    return LevelSeries(series.cell_id, series.variable, tuple(points))


INCREASE = "increase"
DECREASE = "decrease"


def delta_items(series: LevelSeries, scheme: LevelScheme) -> tuple[tuple[int, str], ...]:
    """Direction-of-change items: one per timestamp where the level moved.

    Compares each point against the previous observed point of the series.
    Requires an ordered level set; categorical CPs without an order are
    rejected.
    """
    if not scheme.ordered:
        raise DataError(
            f"{series.variable!r}: levels are unordered, direction items are undefined"
        )
    out = []
    for (_, prev), (t, cur) in zip(series.points, series.points[1:]):
        if cur > prev:
            out.append((t, INCREASE))
        elif cur < prev:
            out.append((t, DECREASE))
    return tuple(out)


# --- config file handling ----------------------------------------------------

AUTO = "auto"
IDENTITY = "identity"


@dataclass(frozen=True)
class QuantizationRequest:
    """Parsed per-variable directive from the quantization config file."""

    mode: str  # "explicit" | "auto" | "identity"
    scheme: Optional[LevelScheme] = None
    n_levels: int = DEFAULT_N_LEVELS


def _parse_request(variable: str, spec: str) -> QuantizationRequest:
    head, *rest = spec.split()
    if head == AUTO:
        if len(rest) != 1 or not rest[0].isdigit():
            raise ConfigError(f"{variable}: expected 'auto <n_levels>', got {spec!r}")
        return QuantizationRequest(mode=AUTO, n_levels=int(rest[0]))
    if head == IDENTITY:
        return QuantizationRequest(mode=IDENTITY)
    if head == "breakpoints":
        parts = spec.split("|")
        if len(parts) != 2 or not parts[1].split()[:1] == ["labels"]:
            raise ConfigError(
                f"{variable}: expected 'breakpoints ... | labels ...', got {spec!r}"
            )
        try:
            breaks = tuple(float(tok) for tok in parts[0].split()[1:])
        except ValueError as exc:
            raise ConfigError(f"{variable}: bad breakpoint in {spec!r}") from exc
        labels = tuple(parts[1].split()[1:])
        return QuantizationRequest(
            mode="explicit", scheme=LevelScheme(labels=labels, breakpoints=breaks)
        )
    raise ConfigError(f"{variable}: unknown quantization directive {spec!r}")


def load_quantization_config(path: Union[str, Path]) -> dict[str, QuantizationRequest]:
    parser = configparser.ConfigParser()
    if not parser.read(str(path)):
        raise ConfigError(f"quantization config not found: {path}")
    if not parser.has_section("quantization"):
        raise ConfigError(f"{path} lacks a [quantization] section")
    return {name: _parse_request(name, spec) for name, spec in parser.items("quantization")}


def resolve_schemes(ds: Dataset,
                    requests: Optional[dict[str, QuantizationRequest]] = None,
                    default_n_levels: int = DEFAULT_N_LEVELS) -> QuantizationScheme:
    """Produce a complete scheme for every CP, KPI and PM variable.

    Explicit config entries win; otherwise numeric variables fall back to
    quantile fitting and categorical or integer-valued CPs to dataset-wide
    identity levels. Identity levels are fitted over the whole dataset so the
    level set is consistent across cells.
    """
    requests = requests or {}
    schemes: QuantizationScheme = {}
    for desc in ds.schema:
        if desc.role == "ENG":
            continue
        req = requests.get(desc.name)
        observed = [r.values[desc.name] for r in ds.records if desc.name in r.values]
        if not observed:
            continue
        if req is not None and req.mode == "explicit":
            schemes[desc.name] = req.scheme  # type: ignore[assignment]
            continue
        if req is not None and req.mode == IDENTITY:
            schemes[desc.name] = fit_identity_scheme(observed)
            continue
        n = req.n_levels if req is not None else default_n_levels
        if desc.kind == "categorical":
            schemes[desc.name] = fit_identity_scheme(observed, ordered=False)
        elif desc.role == "CP" and req is None and all(
            isinstance(v, float) and float(v).is_integer() for v in observed
        ) and len(set(observed)) <= 20:
            schemes[desc.name] = fit_identity_scheme(observed)
        else:
            schemes[desc.name] = fit_quantile_scheme(ds, desc.name, n_levels=n)
    return schemes


def schemes_to_dict(schemes: QuantizationScheme) -> dict:
    out = {}
    for name in sorted(schemes):
        s = schemes[name]
        entry: dict = {"labels": list(s.labels), "ordered": s.ordered}
        if s.breakpoints is not None:
            entry["breakpoints"] = list(s.breakpoints)
        else:
            assert s.mapping is not None
            entry["mapping"] = {k: s.mapping[k] for k in sorted(s.mapping)}
        out[name] = entry
    return out


def schemes_from_dict(payload: dict) -> QuantizationScheme:
    schemes: QuantizationScheme = {}
    for name, entry in payload.items():
        schemes[name] = LevelScheme(
            labels=tuple(entry["labels"]),
            breakpoints=tuple(entry["breakpoints"]) if "breakpoints" in entry else None,
            mapping=dict(entry["mapping"]) if "mapping" in entry else None,
            ordered=bool(entry.get("ordered", True)),
        )
    return schemes
