"""Extension of mined rules with selected environment (PM) features.

Stage three scores PM variables against a target KPI on the quantized level
domain, then grows each rule's antecedent with level items of the selected
variables. Candidate supersets are generated level-wise and pruned by
anti-monotonicity: a superset is only counted once all of its sub-candidates
met the support threshold. Extensions that do not sharpen the base rule's
confidence by the configured margin are dropped; base rules are always kept.
"""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, NamedTuple, Sequence

from .errors import ConfigError, DataError, SchemaError
from .ingestion import Dataset
from .miner import Rule, RuleMetrics, _metrics_from_counts, min_count_for
from .quantize import (
    LevelScheme,
    QuantizationScheme,
    discretize_cp,
    fit_identity_scheme,
    fit_quantile_scheme,
    quantize_kpi,
)
from .transactions import ENV_LEVEL, Item, TransactionDB

MUTUAL_INFORMATION = "mutual_information"
CHI_SQUARE = "chi_square"


def mutual_information(pairs: Sequence[tuple[int, int]]) -> float:
    """Empirical mutual information (nats) of a paired discrete sample."""
    n = len(pairs)
    if n == 0:
        return 0.0
    joint = Counter(pairs)
    px = Counter(x for x, _ in pairs)
    py = Counter(y for _, y in pairs)
    mi = 0.0
    for (x, y), c in joint.items():
        mi += (c / n) * math.log(c * n / (px[x] * py[y]))
    return max(mi, 0.0)


def chi_square(pairs: Sequence[tuple[int, int]]) -> float:
    """Chi-square statistic of the level contingency table."""
    n = len(pairs)
    if n == 0:
        return 0.0
    joint = Counter(pairs)
    px = Counter(x for x, _ in pairs)
    py = Counter(y for _, y in pairs)
    stat = 0.0
    for x, cx in px.items():
        for y, cy in py.items():
            expected = cx * cy / n
            observed = joint.get((x, y), 0)
            stat += (observed - expected) ** 2 / expected
    return stat


_SCORERS = {MUTUAL_INFORMATION: mutual_information, CHI_SQUARE: chi_square}


@dataclass(frozen=True)
class EnvFeatureRanking:
    scores: tuple[tuple[str, float], ...]  # (PM variable, score), non-increasing
    selected: tuple[str, ...]


def pm_scheme(ds: Dataset, variable: str,
               schemes: QuantizationScheme) -> LevelScheme:
    if variable in schemes:
        return schemes[variable]
    observed = [r.values[variable] for r in ds.records if variable in r.values]
    if ds.descriptor(variable).kind == "categorical":
        return fit_identity_scheme(observed, ordered=False)
    return fit_quantile_scheme(ds, variable)


def select_env_features(ds: Dataset, cells: Iterable[str], target_kpi: str,
                        m: int, schemes: QuantizationScheme,
                        method: str = MUTUAL_INFORMATION) -> EnvFeatureRanking:
    """Rank PM variables by dependence with the target KPI's level series.

    Scores are computed over aligned (cell, timestamp) pairs within the given
    cells, on the quantized levels. Ties break by variable name; asking for
    more features than exist returns them all with a warning.
    """
    if m < 1:
        raise ConfigError("m must be >= 1")
    if method not in _SCORERS:
        raise ConfigError(f"unknown feature selection method {method!r}")
    if target_kpi not in schemes:
        raise SchemaError(f"target KPI {target_kpi!r} has no quantization scheme")
    pm_vars = ds.variables("PM")
    if not pm_vars:
        raise DataError("no PM variables in the schema")
    if m > len(pm_vars):
        warnings.warn(f"asked for {m} environment features, only {len(pm_vars)} PM "
                      f"variables exist; returning all")
        m = len(pm_vars)

    cells = sorted(cells)
    kpi_levels: dict[tuple[str, int], int] = {}
    for cell in cells:
        series = quantize_kpi(ds.series(cell, target_kpi), schemes[target_kpi])
        for t, level in series.points:
            kpi_levels[(cell, t)] = level

    scorer = _SCORERS[method]
    scored: list[tuple[str, float]] = []
    for variable in pm_vars:
        scheme = pm_scheme(ds, variable, schemes)
        pairs: list[tuple[int, int]] = []
        for cell in cells:
            series = ds.series(cell, variable)
            if ds.descriptor(variable).kind == "categorical":
                levels = discretize_cp(series, scheme)
            else:
                levels = quantize_kpi(series, scheme)
            for t, level in levels.points:
                kpi_level = kpi_levels.get((cell, t))
                if kpi_level is not None:
                    pairs.append((level, kpi_level))
        scored.append((variable, scorer(pairs)))

    scored.sort(key=lambda sv: (-sv[1], sv[0]))
    return EnvFeatureRanking(
        scores=tuple(scored),
        selected=tuple(name for name, _ in scored[:m]),
    )


@dataclass(frozen=True)
class ExtendedRule:
    base: Rule
    env_items: frozenset[Item]
    metrics: RuleMetrics

    def as_rule(self) -> Rule:
        return Rule(
            antecedent=self.base.antecedent | self.env_items,
            consequent=self.base.consequent,
            metrics=self.metrics,
            cluster_id=self.base.cluster_id,
        )

    def render(self) -> str:
        return self.as_rule().render()


class ExtensionOutcome(NamedTuple):
    base_rules: list[Rule]
    extensions: list[ExtendedRule]


def extend_rules(rules: Sequence[Rule], env_db: TransactionDB, min_support: float,
                 *, max_env_items: int = 2,
                 confidence_margin: float = 0.0) -> ExtensionOutcome:
    """Grow rule antecedents with environment level items.

    Candidates add 1..max_env_items ENV items (at most one level per
    environment variable) to a rule. Generation is level-wise with subset
    pruning, so a superset is only counted when every sub-candidate met
    min_support; survivors get full metrics over env_db. Extensions whose
    confidence does not exceed the base rule's by more than
    confidence_margin are discarded.
    """
    min_count = min_count_for(min_support, max(env_db.n_all, 1))
    postings = env_db.postings()
    env_ids = sorted(
        i for i, item in enumerate(env_db.items) if item.tag == ENV_LEVEL
    )
    outcome = ExtensionOutcome(base_rules=list(rules), extensions=[])
    if not env_ids or max_env_items < 1:
        return outcome

    for rule in rules:
        rule_vars = {i.variable for i in rule.antecedent | rule.consequent}
        collisions = [
            env_db.items[e].variable for e in env_ids
            if env_db.items[e].variable in rule_vars
        ]
        if collisions:
            raise DataError(
                f"environment variables {sorted(set(collisions))} collide with "
                f"variables of rule {rule.render()!r}"
            )
        base_ids = env_db.ids_for(rule.antecedent | rule.consequent)
        if base_ids is None:
            continue
        base_txns = _intersect(postings, base_ids)

        # level 1 candidates
        survivors: dict[frozenset[int], set[int]] = {}
        for e in env_ids:
            txns = base_txns & postings[e]
            if len(txns) >= min_count:
                survivors[frozenset((e,))] = txns
        frontier = survivors
        all_survivors = dict(survivors)
        size = 1
        while frontier and size < max_env_items:
            nxt: dict[frozenset[int], set[int]] = {}
            for combo, txns in frontier.items():
                top = max(combo)
                combo_vars = {env_db.items[e].variable for e in combo}
                for e in env_ids:
                    if e <= top or env_db.items[e].variable in combo_vars:
                        continue
                    candidate = combo | {e}
                    if any(
                        frozenset(sub) not in all_survivors
                        for sub in combinations(candidate, size)
                    ):
                        continue
                    extended_txns = txns & postings[e]
                    if len(extended_txns) >= min_count:
                        nxt[frozenset(candidate)] = extended_txns
            all_survivors.update(nxt)
            frontier = nxt
            size += 1

        base_conf = rule.metrics.confidence or 0.0
        for combo, txns in sorted(all_survivors.items(), key=lambda kv: sorted(kv[0])):
            env_items = frozenset(env_db.items[e] for e in combo)
            ante = rule.antecedent | env_items
            ante_ids = env_db.ids_for(ante)
            cons_ids = env_db.ids_for(rule.consequent)
            assert ante_ids is not None and cons_ids is not None
            metrics = _metrics_from_counts(
                n_joint=len(txns),
                n_antecedent=len(_intersect(postings, ante_ids)),
                n_consequent=len(_intersect(postings, cons_ids)),
                n_total=env_db.n_all,
            )
            if metrics.confidence is not None and metrics.confidence > base_conf + confidence_margin:
                outcome.extensions.append(
                    ExtendedRule(base=rule, env_items=env_items, metrics=metrics)
                )
    return outcome


def _intersect(postings: dict[int, set[int]], ids: frozenset[int]) -> set[int]:
    ordered = sorted(ids, key=lambda i: len(postings[i]))
    if not ordered:
        return set()
    result = set(postings[ordered[0]])
    for i in ordered[1:]:
        result &= postings[i]
        if not result:
            break
    return result
