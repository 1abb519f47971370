"""Evaluation protocols: precision against expert labels, noise robustness
via containment depth, and a synthetic generator with planted rules that
serves as the verification oracle for the whole pipeline.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, DataError
from .ingestion import CellRecord, Dataset, VariableDescriptor
from .miner import Rule
from .quantize import DEFAULT_LABELS_4, LevelScheme, QuantizationScheme
from .transactions import CP_LEVEL, KPI_LEVEL, Item, parse_item

CORRECT = "correct"
INCORRECT = "incorrect"


@dataclass(frozen=True)
class LabeledRule:
    antecedent: frozenset[Item]
    consequent: frozenset[Item]
    verdict: str

    def __post_init__(self) -> None:
        if self.verdict not in (CORRECT, INCORRECT):
            raise DataError(f"verdict must be correct/incorrect, got {self.verdict!r}")


@dataclass(frozen=True)
class LabelSet:
    rules: tuple[LabeledRule, ...]

    def __post_init__(self) -> None:
        keys = [(r.antecedent, r.consequent) for r in self.rules]
        if len(set(keys)) != len(keys):
            raise DataError("duplicate (antecedent, consequent) pair in label set")

    @classmethod
    def load(cls, path: Union[str, Path], role_of: dict[str, str]) -> "LabelSet":
        """Read `antecedent_items;consequent_items;verdict` lines; multiple
        items within a field are joined by ' & ' and rendered as in rule output."""
        rules = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split(";")
                if len(parts) != 3:
                    raise DataError(f"{path}:{lineno}: expected 3 ';'-separated fields")
                ante = frozenset(
                    parse_item(tok.strip(), role_of) for tok in parts[0].split(" & ")
                )
                cons = frozenset(
                    parse_item(tok.strip(), role_of) for tok in parts[1].split(" & ")
                )
                rules.append(LabeledRule(ante, cons, parts[2].strip()))
        return cls(rules=tuple(rules))


@dataclass(frozen=True)
class PrecisionReport:
    precision: Optional[float]  # None when no mined rule is covered by labels
    n_scored: int
    n_correct: int
    n_incorrect: int
    unlabeled: tuple[str, ...]  # rendered mined rules outside the label set
    verdicts: tuple[tuple[str, str], ...]  # (rendered rule, verdict)


def precision_against_labels(rules: Sequence[Rule], labels: LabelSet) -> PrecisionReport:
    """Fraction of label-covered mined rules judged correct.

    Mined rules absent from the label set are reported separately and do not
    enter the ratio; with zero covered rules the precision is undefined
    (None).
    """
    if not labels.rules:
        raise ValueError("label set is empty")
    verdict_of = {(r.antecedent, r.consequent): r.verdict for r in labels.rules}
    n_correct = n_incorrect = 0
    unlabeled: list[str] = []
    verdicts: list[tuple[str, str]] = []
    for rule in rules:
        verdict = verdict_of.get(rule.identity())
        if verdict is None:
            unlabeled.append(rule.render())
            continue
        verdicts.append((rule.render(), verdict))
        if verdict == CORRECT:
            n_correct += 1
        else:
            n_incorrect += 1
    scored = n_correct + n_incorrect
    precision = n_correct / scored if scored else None
    return PrecisionReport(
        precision=precision,
        n_scored=scored,
        n_correct=n_correct,
        n_incorrect=n_incorrect,
        unlabeled=tuple(unlabeled),
        verdicts=tuple(verdicts),
    )


def inject_noise(ds: Dataset, fraction: float = 0.2, amplitude_ratio: float = 0.1,
                 seed: int = 0) -> Dataset:
    """Perturb a random share of each KPI variable's observations.

    For each numeric KPI variable with standard deviation sigma, a seeded
    sample of round(fraction * n) observations (without replacement,
    stratified per variable) receives additive noise drawn uniformly from
    [-amplitude_ratio * sigma, +amplitude_ratio * sigma]. Other variables are
    untouched; constant KPI series are skipped with a warning. Bit-reproducible
    per seed.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ConfigError(f"fraction must be in [0, 1], got {fraction}")
    if amplitude_ratio < 0:
        raise ConfigError("amplitude_ratio must be >= 0")
    out = ds.sorted_copy()
    rng = np.random.default_rng(seed)
    for desc in out.schema:
        if desc.role != "KPI" or desc.kind != "numeric":
            continue
        slots = [
            (idx, rec.values[desc.name])
            for idx, rec in enumerate(out.records)
            if desc.name in rec.values
        ]
        if not slots:
            continue
        values = np.array([v for _, v in slots], dtype=float)
        sigma = float(np.std(values))
        if sigma == 0.0:
            warnings.warn(f"KPI {desc.name!r} is constant; noise injection skipped")
            continue
        n_pick = int(np.floor(fraction * len(slots) + 0.5))
        picked = rng.choice(len(slots), size=n_pick, replace=False)
        amplitude = amplitude_ratio * sigma
        noise = rng.uniform(-amplitude, amplitude, size=n_pick)
        for offset, eps in zip(picked, noise):
            idx = slots[int(offset)][0]
            out.records[idx].values[desc.name] = float(values[int(offset)] + eps)
    return out


NOT_CONTAINED = None


def containment_depth(original: Sequence[Rule], noisy: Sequence[Rule],
                      k: int) -> Optional[int]:
    """Smallest prefix of the noisy ranking containing all top-k original rules.

    Both lists must be in the canonical sort order. Returns the 1-based depth
    k' >= k, or None when some top-k rule is missing from the noisy list
    entirely (the not-contained signal). The closer k' is to k, the less the
    noise disturbed the ranking.
    """
    if k < 0 or k > len(original):
        raise ValueError(f"k={k} outside 0..{len(original)}")
    position: dict[tuple, int] = {}
    for i, rule in enumerate(noisy, start=1):
        position.setdefault(rule.identity(), i)
    depth = 0
    for rule in original[:k]:
        pos = position.get(rule.identity())
        if pos is None:
            return NOT_CONTAINED
        depth = max(depth, pos)
    return depth


# --- synthetic data with planted rules ---------------------------------------


@dataclass(frozen=True)
class PlantedRule:
    """A CP level pattern that triggers one KPI level with given probability."""

    pattern: tuple[tuple[str, str], ...]  # (cp variable, level label), sorted
    kpi_variable: str
    kpi_level: str
    response_probability: float

    def antecedent_items(self) -> frozenset[Item]:
        return frozenset(Item(v, level, CP_LEVEL) for v, level in self.pattern)

    def consequent_items(self) -> frozenset[Item]:
        return frozenset({Item(self.kpi_variable, self.kpi_level, KPI_LEVEL)})

    def identity(self) -> tuple[frozenset[Item], frozenset[Item]]:
        return (self.antecedent_items(), self.consequent_items())


@dataclass(frozen=True)
class SyntheticSpec:
    n_cells: int
    n_timestamps: int
    planted: tuple[PlantedRule, ...]
    background_noise_rate: float = 0.0  # within-level jitter, fraction of half bin
    seed: int = 0
    n_levels: int = 4
    extra_cp_vars: int = 0
    extra_kpi_vars: int = 0
    n_eng_vars: int = 2
    n_pm_vars: int = 0
    sampling_interval: int = 3600

    def validate(self) -> None:
        if self.n_cells < 1 or self.n_timestamps < 1:
            raise ConfigError("need at least one cell and one timestamp")
        if not 0.0 <= self.background_noise_rate <= 1.0:
            raise ConfigError("background_noise_rate must be in [0, 1]")
        if self.n_levels < 2:
            raise ConfigError("n_levels must be >= 2")
        labels = _kpi_labels(self.n_levels)
        cp_labels = {str(i) for i in range(self.n_levels)}
        for rule in self.planted:
            if not 0.0 < rule.response_probability <= 1.0:
                raise ConfigError(
                    f"response probability must be in (0, 1], got "
                    f"{rule.response_probability}"
                )
            if rule.kpi_level not in labels:
                raise ConfigError(f"unknown KPI level {rule.kpi_level!r}")
            pattern_vars = [v for v, _ in rule.pattern]
            if len(set(pattern_vars)) != len(pattern_vars):
                raise ConfigError("pattern repeats a CP variable")
            for _, level in rule.pattern:
                if level not in cp_labels:
                    raise ConfigError(f"unknown CP level {level!r}")
        # two rules for one KPI must have mutually exclusive patterns, or the
        # first match would dilute the other's analytic confidence
        for i, ra in enumerate(self.planted):
            for rb in self.planted[i + 1:]:
                if ra.kpi_variable != rb.kpi_variable:
                    continue
                pa, pb = dict(ra.pattern), dict(rb.pattern)
                conflicting = any(
                    v in pb and pb[v] != level for v, level in pa.items()
                )
                if not conflicting:
                    raise DataError(
                        f"unsatisfiable spec: rules for {ra.kpi_variable!r} can "
                        f"match the same transaction and responses would interfere"
                    )


def _kpi_labels(n_levels: int) -> tuple[str, ...]:
    if n_levels == 4:
        return DEFAULT_LABELS_4
    return tuple(f"level_{i}" for i in range(n_levels))


_BIN_WIDTH = 25.0


@dataclass(frozen=True)
class SyntheticResult:
    dataset: Dataset
    schemes: QuantizationScheme
    planted: tuple[PlantedRule, ...]


def generate_synthetic(spec: SyntheticSpec) -> SyntheticResult:
    """Simulate cells whose planted CP patterns drive KPI levels.

    When a transaction's CP levels match a planted pattern, the targeted KPI
    takes the planted level with the stated probability and one of the other
    levels otherwise, so the planted rule's analytic confidence equals the
    response probability exactly. Unmatched KPIs draw uniformly over all
    levels. Raw KPI values sit at bin midpoints, jittered within the bin by
    background_noise_rate, so quantization recovers the intended levels.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    labels = _kpi_labels(spec.n_levels)
    label_index = {lbl: i for i, lbl in enumerate(labels)}

    cp_vars = sorted({v for rule in spec.planted for v, _ in rule.pattern})
    cp_vars += [f"cp_extra_{i}" for i in range(spec.extra_cp_vars)]
    kpi_vars = sorted({rule.kpi_variable for rule in spec.planted})
    kpi_vars += [f"kpi_extra_{i}" for i in range(spec.extra_kpi_vars)]
    eng_vars = [f"eng_{i}" for i in range(spec.n_eng_vars)]
    pm_vars = [f"pm_{i}" for i in range(spec.n_pm_vars)]
    if not cp_vars or not kpi_vars:
        raise ConfigError("spec produces no CP or no KPI variables")

    schema = (
        [VariableDescriptor(v, "CP", "numeric") for v in cp_vars]
        + [VariableDescriptor(v, "KPI", "numeric") for v in kpi_vars]
        + [VariableDescriptor(v, "PM", "numeric") for v in pm_vars]
        + [VariableDescriptor(v, "ENG", "numeric") for v in eng_vars]
    )

    cp_labels = tuple(str(i) for i in range(spec.n_levels))
    schemes: QuantizationScheme = {}
    for v in cp_vars:
        schemes[v] = LevelScheme(
            labels=cp_labels,
            mapping={lbl: i for i, lbl in enumerate(cp_labels)},
            ordered=True,
        )
    breakpoints = tuple(_BIN_WIDTH * (i + 1) for i in range(spec.n_levels - 1))
    for v in kpi_vars + pm_vars:
        schemes[v] = LevelScheme(labels=labels, breakpoints=breakpoints)

    rules_by_kpi: dict[str, list[PlantedRule]] = {}
    for rule in spec.planted:
        rules_by_kpi.setdefault(rule.kpi_variable, []).append(rule)

    half_bin = _BIN_WIDTH / 2.0
    jitter_amp = spec.background_noise_rate * half_bin
    records: list[CellRecord] = []
    for c in range(spec.n_cells):
        cell = f"cell_{c:04d}"
        eng_values = {v: float(np.round(rng.uniform(0, 100), 3)) for v in eng_vars}
        for step in range(spec.n_timestamps):
            t = step * spec.sampling_interval
            values: dict[str, float | str] = dict(eng_values)
            cp_level = {v: int(rng.integers(0, spec.n_levels)) for v in cp_vars}
            for v in cp_vars:
                values[v] = float(cp_level[v])
            for v in kpi_vars:
                matched: Optional[PlantedRule] = None
                for rule in rules_by_kpi.get(v, []):
                    if all(cp_level[pv] == int(lvl) for pv, lvl in rule.pattern):
                        matched = rule
                        break
                if matched is not None:
                    target = label_index[matched.kpi_level]
                    if rng.random() < matched.response_probability:
                        level = target
                    else:
                        others = [i for i in range(spec.n_levels) if i != target]
                        level = others[int(rng.integers(0, len(others)))]
                else:
                    level = int(rng.integers(0, spec.n_levels))
                mid = level * _BIN_WIDTH + half_bin
                # the draw is consumed even at zero amplitude so the stream
                # stays aligned across jitter settings of one seed
                values[v] = float(mid + jitter_amp * rng.uniform(-1.0, 1.0))
            for v in pm_vars:
                values[v] = float(rng.uniform(0, spec.n_levels * _BIN_WIDTH))
            records.append(CellRecord(cell, t, values))

    dataset = Dataset(schema=schema, records=records,
                      sampling_interval=spec.sampling_interval)
    dataset.validate()
    return SyntheticResult(dataset=dataset, schemes=schemes, planted=spec.planted)
