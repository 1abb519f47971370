"""Construction of the transaction database mined for rules.

One transaction per (cell, timestamp) holding the level items observed then:
configuration-parameter levels, KPI levels, optional direction-of-change
items for CPs, optional one-step lagged KPI levels, and (for the rule
extension stage) environment levels from selected PM variables. Levels of
one variable are mutually exclusive within a transaction; the level-sum
metric identities rely on that.

Items render as ``<variable> →<level>`` (lagged and delta items qualify the
variable as ``var[t-1]`` / ``var[delta]`` so renders stay unambiguous).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .cluster import CellClustering
from .errors import DataError, SchemaError
from .ingestion import Dataset
from .quantize import (
    LevelSeries,
    QuantizationScheme,
    delta_items,
    discretize_cp,
    quantize_kpi,
)

CP_LEVEL = "CP_LEVEL"
CP_DELTA = "CP_DELTA"
KPI_LEVEL = "KPI_LEVEL"
KPI_LAG_LEVEL = "KPI_LAG_LEVEL"
ENV_LEVEL = "ENV_LEVEL"

TAGS = (CP_LEVEL, CP_DELTA, KPI_LEVEL, KPI_LAG_LEVEL, ENV_LEVEL)
ANTECEDENT_TAGS = frozenset({CP_LEVEL, CP_DELTA, KPI_LAG_LEVEL, ENV_LEVEL})

_QUALIFIERS = {KPI_LAG_LEVEL: "[t-1]", CP_DELTA: "[delta]"}
_ARROW = " →"


@dataclass(frozen=True, order=True)
class Item:
    variable: str
    level: str
    tag: str

    def render(self) -> str:
        return f"{self.variable}{_QUALIFIERS.get(self.tag, '')}{_ARROW}{self.level}"


def parse_item(text: str, role_of: dict[str, str]) -> Item:
    """Parse a rendered item back, resolving the tag from the variable role."""
    if _ARROW not in text:
        raise DataError(f"not a rendered item: {text!r}")
    head, level = text.rsplit(_ARROW, 1)
    if head.endswith("[t-1]"):
        return Item(head[: -len("[t-1]")], level, KPI_LAG_LEVEL)
    if head.endswith("[delta]"):
        return Item(head[: -len("[delta]")], level, CP_DELTA)
    role = role_of.get(head)
    if role == "CP":
        return Item(head, level, CP_LEVEL)
    if role == "KPI":
        return Item(head, level, KPI_LEVEL)
    if role == "PM":
        return Item(head, level, ENV_LEVEL)
    raise DataError(f"cannot resolve role of variable {head!r} in item {text!r}")


@dataclass(frozen=True)
class Transaction:
    item_ids: frozenset[int]
    cell_id: str
    timestamp: int


@dataclass
class TransactionDB:
    items: list[Item] = field(default_factory=list)
    transactions: list[Transaction] = field(default_factory=list)
    _ids: dict[Item, int] = field(default_factory=dict, repr=False)

    @property
    def n_all(self) -> int:
        return len(self.transactions)

    def intern(self, item: Item) -> int:
        item_id = self._ids.get(item)
        if item_id is None:
            item_id = len(self.items)
            self.items.append(item)
            self._ids[item] = item_id
        return item_id

    def id_of(self, item: Item) -> Optional[int]:
        return self._ids.get(item)

    def add(self, items: Sequence[Item], cell_id: str = "", timestamp: int = 0) -> None:
        """Append a transaction, enforcing per-(variable, tag) level exclusivity."""
        keys = [(i.variable, i.tag) for i in items]
        if len(set(keys)) != len(keys):
            raise DataError(
                f"transaction ({cell_id!r}, {timestamp}) holds two levels of one variable"
            )
        ids = frozenset(self.intern(i) for i in items)
        self.transactions.append(Transaction(ids, cell_id, timestamp))

    def ids_for(self, items: Iterable[Item]) -> Optional[frozenset[int]]:
        """Ids of the given items, or None if any item never occurs here."""
        out = set()
        for item in items:
            item_id = self._ids.get(item)
            if item_id is None:
                return None
            out.add(item_id)
        return frozenset(out)

    def count(self, item_ids: frozenset[int]) -> int:
        return sum(1 for t in self.transactions if item_ids <= t.item_ids)

    def count_items(self, items: Iterable[Item]) -> int:
        ids = self.ids_for(items)
        return 0 if ids is None else self.count(ids)

    def postings(self) -> dict[int, set[int]]:
        table: dict[int, set[int]] = {i: set() for i in range(len(self.items))}
        for idx, t in enumerate(self.transactions):
            for item_id in t.item_ids:
                table[item_id].add(idx)
        return table

    def render_transaction(self, t: Transaction) -> str:
        return " | ".join(sorted(self.items[i].render() for i in t.item_ids))

    def dump(self, path: Union[str, Path]) -> None:
        """One line per transaction: ``cell,timestamp<TAB>item | item | ...``."""
        with open(path, "w", encoding="utf-8") as fh:
            for t in self.transactions:
                fh.write(f"{t.cell_id},{t.timestamp}\t{self.render_transaction(t)}\n")


def load_dump(path: Union[str, Path], role_of: dict[str, str]) -> TransactionDB:
    db = TransactionDB()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            prov, _, body = line.partition("\t")
            cell, _, ts = prov.partition(",")
            items = [parse_item(tok, role_of) for tok in body.split(" | ") if tok]
            db.add(items, cell_id=cell, timestamp=int(ts))
    return db


def _level_points(series: LevelSeries) -> dict[int, int]:
    return dict(series.points)


def build_transactions(ds: Dataset, clustering: CellClustering, cluster_id: int,
                       schemes: QuantizationScheme, *, include_lag: bool = True,
                       include_delta: bool = True,
                       env_vars: Sequence[str] = ()) -> TransactionDB:
    """Quantize one cluster's records into a transaction database.

    Emits one transaction per (cell, timestamp) that has at least one observed
    CP or KPI value. Lag items carry the KPI level of the immediately
    preceding grid slot when that slot was observed; delta items mark a CP
    level change versus the previous observed sample. Environment items for
    the given PM variables are attached to existing transactions only.
    """
    if not (0 <= cluster_id < len(clustering.clusters)):
        raise DataError(f"unknown cluster {cluster_id}")
    cp_vars = ds.variables("CP")
    kpi_vars = ds.variables("KPI")
    for name in list(cp_vars) + list(kpi_vars) + list(env_vars):
        if name not in schemes:
            raise SchemaError(f"no quantization scheme for variable {name!r}")
    for name in env_vars:
        if ds.descriptor(name).role != "PM":
            raise SchemaError(f"environment variable {name!r} is not a PM variable")

    db = TransactionDB()
    interval = ds.sampling_interval
    for cell in sorted(clustering.clusters[cluster_id]):
        cp_levels: dict[str, dict[int, int]] = {}
        cp_deltas: dict[str, dict[int, str]] = {}
        for v in cp_vars:
            series = discretize_cp(ds.series(cell, v), schemes[v])
            cp_levels[v] = _level_points(series)
            if include_delta and schemes[v].ordered:
                cp_deltas[v] = dict(delta_items(series, schemes[v]))
        kpi_levels: dict[str, dict[int, int]] = {}
        for v in kpi_vars:
            kpi_levels[v] = _level_points(quantize_kpi(ds.series(cell, v), schemes[v]))
        env_levels: dict[str, dict[int, int]] = {}
        for v in env_vars:
            desc = ds.descriptor(v)
            series = ds.series(cell, v)
            if desc.kind == "categorical":
                env_levels[v] = _level_points(discretize_cp(series, schemes[v]))
            else:
                env_levels[v] = _level_points(quantize_kpi(series, schemes[v]))

        timestamps = sorted(
            {t for pts in cp_levels.values() for t in pts}
            | {t for pts in kpi_levels.values() for t in pts}
        )
        for t in timestamps:
            items: list[Item] = []
            for v in cp_vars:
                level = cp_levels[v].get(t)
                if level is not None:
                    items.append(Item(v, schemes[v].label_of(level), CP_LEVEL))
                direction = cp_deltas.get(v, {}).get(t)
                if direction is not None:
                    items.append(Item(v, direction, CP_DELTA))
            for v in kpi_vars:
                level = kpi_levels[v].get(t)
                if level is not None:
                    items.append(Item(v, schemes[v].label_of(level), KPI_LEVEL))
                if include_lag:
                    prev = kpi_levels[v].get(t - interval)
                    if prev is not None:
                        items.append(Item(v, schemes[v].label_of(prev), KPI_LAG_LEVEL))
            if not any(i.tag in (CP_LEVEL, KPI_LEVEL) for i in items):
                continue
            for v in env_vars:
                level = env_levels[v].get(t)
                if level is not None:
                    items.append(Item(v, schemes[v].label_of(level), ENV_LEVEL))
            db.add(items, cell_id=cell, timestamp=t)
    return db
