"""Frequent-itemset mining and multi-level rule generation.

The engine is FP-growth: two passes over the data (item frequency count,
then tree insertion in descending-frequency item order) followed by
recursive conditional-tree growth. Rule metrics follow the transaction-count
definitions

    support(B -> A)    = N_AB / N_all
    confidence(B -> A) = N_AB / N_B          (B is the antecedent)
    lift(B -> A)       = N_AB * N_all / (N_A * N_B)

and the variable-level aggregates decompose exactly into level-pair metrics;
`aggregate_variable_pair` verifies those three identities numerically.
"""

from __future__ import annotations

import math
from collections import Counter
from itertools import chain
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

from .errors import DataError, IdentityCheckError
from .transactions import ANTECEDENT_TAGS, CP_LEVEL, KPI_LEVEL, Item, TransactionDB

IDENTITY_TOLERANCE = 1e-12


def min_count_for(min_support: float, n_all: int) -> int:
    """Smallest transaction count satisfying the support fraction.

    The small slack absorbs binary-representation noise in products like
    0.05 * 10000 so decimal thresholds mean what they say.
    """
    if not 0.0 < min_support <= 1.0:
        raise ValueError(f"min_support must be in (0, 1], got {min_support}")
    return max(1, math.ceil(min_support * n_all - 1e-9))


@dataclass(frozen=True)
class FrequentItemset:
    item_ids: tuple[int, ...]  # sorted ascending
    count: int


class _Tree:
    """Flat-array FP-tree.

    Nodes live in parallel item/count/prefix lists; the edge map is a single
    dict keyed by parent_index * width + item. Creating a node is then three
    list appends and one dict store, with no per-node object or per-parent
    child-dict allocation - the build pass is the hottest loop in the miner.
    The prefix list doubles as the conditional-pattern-base registry.
    """

    __slots__ = ("width", "child_of", "items", "counts", "prefixes")

    def __init__(self, width: int) -> None:
        self.width = max(width, 1)
        self.child_of: dict[int, int] = {}
        self.items: list[int] = [-1]
        self.counts: list[int] = [0]
        self.prefixes: list[tuple[int, ...]] = [()]

    def insert(self, path: Sequence[int], count: int) -> None:
        get = self.child_of.get
        child_of = self.child_of
        items = self.items
        counts = self.counts
        prefixes = self.prefixes
        width = self.width
        tpath = tuple(path)
        node = 0
        depth = 0
        for item in tpath:
            key = node * width + item
            child = get(key)
            if child is None:
                child = len(items)
                child_of[key] = child
                items.append(item)
                counts.append(count)
                prefixes.append(tpath[:depth])
            else:
                counts[child] += count
            node = child
            depth += 1

    def pattern_bases(self, keys: Iterable[int]) -> dict[int, list[tuple[int, tuple[int, ...]]]]:
        bases: dict[int, list[tuple[int, tuple[int, ...]]]] = {i: [] for i in keys}
        items = self.items
        counts = self.counts
        prefixes = self.prefixes
        for idx in range(1, len(items)):
            prefix = prefixes[idx]
            if prefix:
                bases[items[idx]].append((counts[idx], prefix))
        return bases


def _grow(tree: _Tree, totals: dict[int, int], min_count: int,
          suffix: tuple[int, ...], out: list[tuple[tuple[int, ...], int]]) -> None:
    """Recursive conditional-tree growth over frequency ranks.

    Paths arrive sorted by the global descending-frequency rank; filtering a
    prefix preserves that order, so conditional trees inherit a consistent
    insertion order without re-sorting.
    """
    bases = tree.pattern_bases(totals)
    for item in sorted(totals, key=lambda i: (totals[i], i)):
        out.append((suffix + (item,), totals[item]))
        base = bases[item]
        if not base:
            continue
        # unit-count prefixes (the bulk, deep in the tree) are batched into a
        # single C-level Counter pass; only multi-count nodes need the loop
        unit_prefixes: list[tuple[int, ...]] = []
        weighted: dict[int, int] = {}
        get = weighted.get
        for count, prefix in base:
            if count == 1:
                unit_prefixes.append(prefix)
            else:
                for i in prefix:
                    weighted[i] = get(i, 0) + count
        units = Counter(chain.from_iterable(unit_prefixes))
        if weighted:
            units.update(weighted)
        conditional = {i: c for i, c in units.items() if c >= min_count}
        if not conditional:
            continue
        ctree = _Tree(tree.width)
        for count, prefix in base:
            path = [i for i in prefix if i in conditional]
            if path:
                ctree.insert(path, count)
        _grow(ctree, conditional, min_count, suffix + (item,), out)


def mine_frequent(db: TransactionDB, min_support: float) -> list[FrequentItemset]:
    """All itemsets contained in at least ceil(min_support * N_all) transactions."""
    min_count = min_count_for(min_support, max(db.n_all, 1))
    if db.n_all == 0:
        return []

    counts: dict[int, int] = {}
    for t in db.transactions:
        for i in t.item_ids:
            counts[i] = counts.get(i, 0) + 1
    # rank 0 = most frequent; ties broken by item id for determinism
    ranked = sorted(
        (i for i, c in counts.items() if c >= min_count),
        key=lambda i: (-counts[i], i),
    )
    ranks = [-1] * len(db.items)
    for r, item in enumerate(ranked):
        ranks[item] = r

    tree = _Tree(len(ranked))
    for t in db.transactions:
        path = sorted(r for i in t.item_ids if (r := ranks[i]) >= 0)
        if path:
            tree.insert(path, 1)

    totals = {r: counts[item] for r, item in enumerate(ranked)}
    found: list[tuple[tuple[int, ...], int]] = []
    _grow(tree, totals, min_count, (), found)
    out = [
        FrequentItemset(item_ids=tuple(sorted(ranked[r] for r in rank_tuple)),
                        count=count)
        for rank_tuple, count in found
    ]
    out.sort(key=lambda fs: (len(fs.item_ids), fs.item_ids))
    return out


@dataclass(frozen=True)
class RuleMetrics:
    """Counts and derived metrics; None marks an undefined ratio, never 0 or inf."""

    support: float
    confidence: Optional[float]
    lift: Optional[float]
    n_joint: int        # transactions containing antecedent and consequent
    n_antecedent: int
    n_consequent: int
    n_total: int


def _metrics_from_counts(n_joint: int, n_antecedent: int, n_consequent: int,
                         n_total: int) -> RuleMetrics:
    support = n_joint / n_total
    confidence = n_joint / n_antecedent if n_antecedent else None
    lift = (
        n_joint * n_total / (n_antecedent * n_consequent)
        if n_antecedent and n_consequent
        else None
    )
    return RuleMetrics(support, confidence, lift, n_joint, n_antecedent,
                       n_consequent, n_total)


def rule_metrics(db: TransactionDB, antecedent: Iterable[Item],
                 consequent: Iterable[Item]) -> RuleMetrics:
    """Metrics of antecedent => consequent counted over the full database."""
    ante = frozenset(antecedent)
    cons = frozenset(consequent)
    if not ante or not cons:
        raise ValueError("antecedent and consequent must be non-empty")
    if ante & cons:
        raise ValueError("antecedent and consequent must be disjoint")
    if db.n_all == 0:
        raise DataError("empty transaction database")
    return _metrics_from_counts(
        n_joint=db.count_items(ante | cons),
        n_antecedent=db.count_items(ante),
        n_consequent=db.count_items(cons),
        n_total=db.n_all,
    )


@dataclass(frozen=True)
class Rule:
    antecedent: frozenset[Item]
    consequent: frozenset[Item]
    metrics: RuleMetrics
    cluster_id: Optional[int] = None

    def identity(self) -> tuple[frozenset[Item], frozenset[Item]]:
        return (self.antecedent, self.consequent)

    def render(self) -> str:
        lhs = " & ".join(sorted(i.render() for i in self.antecedent))
        rhs = " & ".join(sorted(i.render() for i in self.consequent))
        return f"{lhs} => {rhs}"


def generate_rules(itemsets: Sequence[FrequentItemset], db: TransactionDB,
                   min_confidence: float, min_lift: float,
                   cluster_id: Optional[int] = None) -> list[Rule]:
    """Turn frequent itemsets into (non-KPI antecedent => KPI consequent) rules.

    Each itemset mixing at least one KPI level with at least one antecedent
    item yields exactly one rule; its parts are themselves frequent, so all
    counts come from the mined set.
    """
    counts = {frozenset(fs.item_ids): fs.count for fs in itemsets}
    rules = []
    for fs in itemsets:
        cons_ids = frozenset(i for i in fs.item_ids if db.items[i].tag == KPI_LEVEL)
        ante_ids = frozenset(fs.item_ids) - cons_ids
        if not cons_ids or not ante_ids:
            continue
        n_b = counts.get(ante_ids)
        n_a = counts.get(cons_ids)
        if n_b is None:
            n_b = db.count(ante_ids)
        if n_a is None:
            n_a = db.count(cons_ids)
        metrics = _metrics_from_counts(fs.count, n_b, n_a, db.n_all)
        assert metrics.confidence is not None and metrics.lift is not None
        if metrics.confidence >= min_confidence and metrics.lift >= min_lift:
            rules.append(Rule(
                antecedent=frozenset(db.items[i] for i in ante_ids),
                consequent=frozenset(db.items[i] for i in cons_ids),
                metrics=metrics,
                cluster_id=cluster_id,
            ))
    return rules


def sort_filter_rules(rules: Sequence[Rule],
                      ordering: Optional[Callable[[Rule], tuple]] = None) -> list[Rule]:
    """Canonical rule order: support, confidence, lift descending; render as tie-break."""
    if ordering is None:
        def ordering(rule: Rule) -> tuple:
            m = rule.metrics
            return (
                -m.support,
                -(m.confidence if m.confidence is not None else -1.0),
                -(m.lift if m.lift is not None else -1.0),
                rule.render(),
            )
    return sorted(rules, key=ordering)


@dataclass(frozen=True)
class VariablePairAggregate:
    """Variable-level metrics of one (CP variable => KPI variable) pair plus
    the per-level metric matrix they decompose into."""

    kpi_variable: str
    cp_variable: str
    kpi_levels: tuple[str, ...]
    cp_levels: tuple[str, ...]
    metrics: RuleMetrics
    level_metrics: tuple[tuple[RuleMetrics, ...], ...]  # [kpi level][cp level]

    def to_dict(self) -> dict:
        def metrics_dict(m: RuleMetrics) -> dict:
            return {
                "support": m.support,
                "confidence": m.confidence,
                "lift": m.lift,
                "n_joint": m.n_joint,
                "n_antecedent": m.n_antecedent,
                "n_consequent": m.n_consequent,
                "n_total": m.n_total,
            }

        return {
            "kpi_variable": self.kpi_variable,
            "cp_variable": self.cp_variable,
            "kpi_levels": list(self.kpi_levels),
            "cp_levels": list(self.cp_levels),
            "aggregate": metrics_dict(self.metrics),
            "level_matrix": [
                [metrics_dict(cell) for cell in row] for row in self.level_metrics
            ],
        }


def aggregate_variable_pair(db: TransactionDB, kpi_variable: str, cp_variable: str,
                            *, antecedent_tag: str = CP_LEVEL,
                            check_identities: bool = True) -> VariablePairAggregate:
    """Aggregate (CP variable => KPI variable) metrics over all level pairs.

    Counts every transaction holding any level of the KPI (N_A), any level of
    the CP (N_B) and both (N_AB); level exclusivity makes those the exact sums
    of the per-level counts, which is what the three decomposition identities
    assert. With check_identities the identities are verified to 1e-12 and a
    violation raises IdentityCheckError.
    """
    if antecedent_tag not in ANTECEDENT_TAGS:
        raise ValueError(f"not an antecedent tag: {antecedent_tag}")
    kpi_levels = [i.level for i in db.items
                  if i.variable == kpi_variable and i.tag == KPI_LEVEL]
    cp_levels = [i.level for i in db.items
                 if i.variable == cp_variable and i.tag == antecedent_tag]
    if not kpi_levels:
        raise DataError(f"KPI variable {kpi_variable!r} absent from the item dictionary")
    if not cp_levels:
        raise DataError(f"CP variable {cp_variable!r} absent from the item dictionary")

    kpi_index = {level: n for n, level in enumerate(kpi_levels)}
    cp_index = {level: n for n, level in enumerate(cp_levels)}
    n_kpi = [0] * len(kpi_levels)
    n_cp = [0] * len(cp_levels)
    n_pair = [[0] * len(cp_levels) for _ in kpi_levels]
    n_a = n_b = n_ab = 0

    for t in db.transactions:
        a_level = b_level = None
        for item_id in t.item_ids:
            item = db.items[item_id]
            if item.variable == kpi_variable and item.tag == KPI_LEVEL:
                if a_level is not None:
                    raise DataError(
                        f"transaction ({t.cell_id!r}, {t.timestamp}) holds two levels "
                        f"of {kpi_variable!r}; level exclusivity corrupted"
                    )
                a_level = item.level
            elif item.variable == cp_variable and item.tag == antecedent_tag:
                if b_level is not None:
                    raise DataError(
                        f"transaction ({t.cell_id!r}, {t.timestamp}) holds two levels "
                        f"of {cp_variable!r}; level exclusivity corrupted"
                    )
                b_level = item.level
        if a_level is not None:
            n_a += 1
            n_kpi[kpi_index[a_level]] += 1
        if b_level is not None:
            n_b += 1
            n_cp[cp_index[b_level]] += 1
        if a_level is not None and b_level is not None:
            n_ab += 1
            n_pair[kpi_index[a_level]][cp_index[b_level]] += 1

    if n_a == 0 or n_b == 0:
        raise DataError(
            f"aggregate of {cp_variable!r} => {kpi_variable!r} undefined: a variable "
            f"occurs in zero transactions"
        )

    n_all = db.n_all
    aggregate = _metrics_from_counts(n_ab, n_b, n_a, n_all)
    matrix = tuple(
        tuple(
            _metrics_from_counts(n_pair[l][k], n_cp[k], n_kpi[l], n_all)
            for k in range(len(cp_levels))
        )
        for l in range(len(kpi_levels))
    )
    result = VariablePairAggregate(
        kpi_variable=kpi_variable,
        cp_variable=cp_variable,
        kpi_levels=tuple(kpi_levels),
        cp_levels=tuple(cp_levels),
        metrics=aggregate,
        level_metrics=matrix,
    )
    if check_identities:
        verify_aggregate_identities(result)
    return result


def verify_aggregate_identities(agg: VariablePairAggregate,
                                tolerance: float = IDENTITY_TOLERANCE) -> None:
    """Assert the three level-sum decompositions of support/confidence/lift."""
    matrix = agg.level_metrics
    support_sum = sum(cell.support for row in matrix for cell in row)
    if abs(agg.metrics.support - support_sum) > tolerance:
        raise IdentityCheckError(
            f"support identity violated: {agg.metrics.support} vs {support_sum}"
        )

    n_b = agg.metrics.n_antecedent
    confidence_sum = 0.0
    for k in range(len(agg.cp_levels)):
        n_bk = matrix[0][k].n_antecedent
        if n_bk == 0:
            continue
        inner = sum(
            matrix[l][k].confidence or 0.0 for l in range(len(agg.kpi_levels))
        )
        confidence_sum += (n_bk / n_b) * inner
    assert agg.metrics.confidence is not None
    if abs(agg.metrics.confidence - confidence_sum) > tolerance:
        raise IdentityCheckError(
            f"confidence identity violated: {agg.metrics.confidence} vs {confidence_sum}"
        )

    n_a = agg.metrics.n_consequent
    lift_sum = 0.0
    for l in range(len(agg.kpi_levels)):
        for k in range(len(agg.cp_levels)):
            cell = matrix[l][k]
            if cell.n_antecedent == 0 or cell.n_consequent == 0:
                continue
            weight = (cell.n_consequent * cell.n_antecedent) / (n_a * n_b)
            assert cell.lift is not None
            lift_sum += weight * cell.lift
    assert agg.metrics.lift is not None
    if abs(agg.metrics.lift - lift_sum) > tolerance:
        raise IdentityCheckError(
            f"lift identity violated: {agg.metrics.lift} vs {lift_sum}"
        )
