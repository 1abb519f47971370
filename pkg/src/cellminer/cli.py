"""Command-line pipeline: ingest -> cluster -> mine -> extend -> evaluate.

Every stage reads its predecessor's on-disk artifact and writes its own, so
runs can be inspected and resumed stage by stage; `run` simply chains the
first four stages. All randomness sits behind explicit seeds and reports are
written with sorted keys, so identical configs produce byte-identical output.

Exit codes: 0 success, 1 config error, 2 data error, 3 internal metric
identity violation.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

from . import cluster as cluster_mod
from . import evaluation, ingestion, miner, quantize, ruleplus, transactions
from .errors import ConfigError, DataError, IdentityCheckError

DATASET_FILE = "dataset.json"
INGEST_REPORT_FILE = "ingest_report.json"
CLUSTERING_FILE = "clustering.json"
SCHEMES_FILE = "schemes.json"
STATS_FILE = "transaction_stats.json"
EVALUATION_FILE = "evaluation.json"


@dataclass
class PipelineConfig:
    data: Path
    schema: Path
    output: Path
    quantization: Optional[Path] = None
    labels: Optional[Path] = None
    max_gap: int = 0
    cut_count: Optional[int] = 1
    cut_distance: Optional[float] = None
    min_support: float = 0.05
    min_confidence: float = 0.6
    min_lift: float = 1.0
    include_lag: bool = True
    include_delta: bool = True
    dump_transactions: bool = False
    check_identities: bool = True
    threads: int = 1
    env_features: int = 2
    max_env_items: int = 2
    confidence_margin: float = 0.0
    env_target_kpi: str = ""
    feature_method: str = ruleplus.MUTUAL_INFORMATION
    noise_fraction: float = 0.2
    noise_amplitude_ratio: float = 0.1
    noise_seed: int = 0
    top_k: tuple[int, ...] = (10, 15, 20)

    def validate(self) -> None:
        if not 0.0 < self.min_support <= 1.0:
            raise ConfigError(f"min_support must be in (0, 1], got {self.min_support}")
        if not 0.0 <= self.min_confidence <= 1.0:
            raise ConfigError("min_confidence must be in [0, 1]")
        if self.min_lift < 0:
            raise ConfigError("min_lift must be >= 0")
        if self.max_gap < 0:
            raise ConfigError("max_gap must be >= 0")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if (self.cut_count is None) == (self.cut_distance is None):
            raise ConfigError("exactly one of cut_count/cut_distance must be set")
        if self.cut_count is not None and self.cut_count < 1:
            raise ConfigError("cut_count must be >= 1")
        if self.cut_distance is not None and self.cut_distance < 0:
            raise ConfigError("cut_distance must be >= 0")
        if self.env_features < 0 or self.max_env_items < 0:
            raise ConfigError("ruleplus sizes must be >= 0")
        if self.confidence_margin < 0:
            raise ConfigError("confidence_margin must be >= 0")
        if self.feature_method not in (ruleplus.MUTUAL_INFORMATION, ruleplus.CHI_SQUARE):
            raise ConfigError(f"unknown feature_method {self.feature_method!r}")
        if not 0.0 <= self.noise_fraction <= 1.0:
            raise ConfigError("noise_fraction must be in [0, 1]")
        if self.noise_amplitude_ratio < 0:
            raise ConfigError("noise_amplitude_ratio must be >= 0")
        if not self.top_k or any(k < 1 for k in self.top_k):
            raise ConfigError("top_k needs positive entries")
        for name, path in (("data", self.data), ("schema", self.schema),
                           ("quantization", self.quantization),
                           ("labels", self.labels)):
            if path is not None and not Path(path).exists():
                raise ConfigError(f"{name} file does not exist: {path}")


def load_config(path: Union[str, Path]) -> PipelineConfig:
    parser = configparser.ConfigParser()
    if not parser.read(str(path)):
        raise ConfigError(f"config file not found: {path}")
    base = Path(path).parent

    def get_path(section: str, key: str, required: bool = False) -> Optional[Path]:
        value = parser.get(section, key, fallback="").strip()
        if not value:
            if required:
                raise ConfigError(f"config needs [{section}] {key}")
            return None
        p = Path(value)
        return p if p.is_absolute() else base / p

    try:
        cfg = PipelineConfig(
            data=get_path("paths", "data", required=True),
            schema=get_path("paths", "schema", required=True),
            output=get_path("paths", "output", required=True),
            quantization=get_path("paths", "quantization"),
            labels=get_path("paths", "labels"),
            max_gap=parser.getint("ingestion", "max_gap", fallback=0),
            cut_count=(
                parser.getint("clustering", "cut_count")
                if parser.has_option("clustering", "cut_count") else None
            ),
            cut_distance=(
                parser.getfloat("clustering", "cut_distance")
                if parser.has_option("clustering", "cut_distance") else None
            ),
            min_support=parser.getfloat("mining", "min_support", fallback=0.05),
            min_confidence=parser.getfloat("mining", "min_confidence", fallback=0.6),
            min_lift=parser.getfloat("mining", "min_lift", fallback=1.0),
            include_lag=parser.getboolean("mining", "include_lag", fallback=True),
            include_delta=parser.getboolean("mining", "include_delta", fallback=True),
            dump_transactions=parser.getboolean("mining", "dump_transactions",
                                                fallback=False),
            check_identities=parser.getboolean("mining", "check_identities",
                                               fallback=True),
            threads=parser.getint("mining", "threads", fallback=1),
            env_features=parser.getint("ruleplus", "env_features", fallback=2),
            max_env_items=parser.getint("ruleplus", "max_env_items", fallback=2),
            confidence_margin=parser.getfloat("ruleplus", "confidence_margin",
                                              fallback=0.0),
            env_target_kpi=parser.get("ruleplus", "env_target_kpi", fallback=""),
            feature_method=parser.get("ruleplus", "feature_method",
                                      fallback=ruleplus.MUTUAL_INFORMATION),
            noise_fraction=parser.getfloat("evaluation", "noise_fraction",
                                           fallback=0.2),
            noise_amplitude_ratio=parser.getfloat(
                "evaluation", "noise_amplitude_ratio", fallback=0.1),
            noise_seed=parser.getint("evaluation", "noise_seed", fallback=0),
            top_k=_parse_k_list(parser.get("evaluation", "top_k",
                                           fallback="10,15,20")),
        )
    except ValueError as exc:
        raise ConfigError(f"bad value in {path}: {exc}") from exc
    if cfg.cut_count is None and cfg.cut_distance is None:
        cfg.cut_count = 1
    return cfg


def _parse_k_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"bad top_k list {text!r}") from exc


def _write_json(payload: object, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def _read_json(path: Path, stage_hint: str) -> object:
    if not path.exists():
        raise DataError(f"missing artifact {path.name}; run `{stage_hint}` first")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _metrics_dict(m: miner.RuleMetrics) -> dict:
    return {
        "support": m.support,
        "confidence": m.confidence,
        "lift": m.lift,
        "counts": {
            "n_joint": m.n_joint,
            "n_antecedent": m.n_antecedent,
            "n_consequent": m.n_consequent,
            "n_total": m.n_total,
        },
    }


def rule_to_dict(rule: miner.Rule, environment: Sequence[str] = ()) -> dict:
    payload = {
        "antecedent": sorted(i.render() for i in rule.antecedent),
        "consequent": sorted(i.render() for i in rule.consequent),
        "cluster_id": rule.cluster_id,
        "environment": sorted(environment),
    }
    payload.update(_metrics_dict(rule.metrics))
    return payload


def rule_from_dict(payload: dict, role_of: dict[str, str]) -> miner.Rule:
    counts = payload["counts"]
    metrics = miner.RuleMetrics(
        support=payload["support"],
        confidence=payload["confidence"],
        lift=payload["lift"],
        n_joint=counts["n_joint"],
        n_antecedent=counts["n_antecedent"],
        n_consequent=counts["n_consequent"],
        n_total=counts["n_total"],
    )
    return miner.Rule(
        antecedent=frozenset(
            transactions.parse_item(t, role_of) for t in payload["antecedent"]
        ),
        consequent=frozenset(
            transactions.parse_item(t, role_of) for t in payload["consequent"]
        ),
        metrics=metrics,
        cluster_id=payload.get("cluster_id"),
    )


def _rules_csv(rules: Sequence[miner.Rule], path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "antecedent", "consequent", "support", "confidence", "lift",
            "n_joint", "n_antecedent", "n_consequent", "n_total", "cluster_id",
        ])
        for rule in rules:
            m = rule.metrics
            writer.writerow([
                " & ".join(sorted(i.render() for i in rule.antecedent)),
                " & ".join(sorted(i.render() for i in rule.consequent)),
                repr(m.support),
                repr(m.confidence) if m.confidence is not None else "",
                repr(m.lift) if m.lift is not None else "",
                m.n_joint, m.n_antecedent, m.n_consequent, m.n_total,
                rule.cluster_id,
            ])


# --- stages -------------------------------------------------------------------


def stage_ingest(cfg: PipelineConfig) -> None:
    cfg.output.mkdir(parents=True, exist_ok=True)
    ds = ingestion.load_dataset(cfg.data, cfg.schema)
    filtered = ingestion.filter_redundant(ds)
    completed = ingestion.fill_gaps(filtered.dataset, cfg.max_gap)
    ingestion.save_dataset_json(completed.dataset, cfg.output / DATASET_FILE)
    report = {
        "dropped_variables": list(filtered.dropped_variables),
        "duplicates_removed": filtered.duplicates_removed,
        "gaps_filled": [gap.__dict__ for gap in completed.filled],
        "gaps_unfilled": [gap.__dict__ for gap in completed.unfilled],
        "n_records": len(completed.dataset.records),
        "n_cells": len(completed.dataset.cells()),
    }
    _write_json(report, cfg.output / INGEST_REPORT_FILE)


def stage_cluster(cfg: PipelineConfig) -> None:
    ds = ingestion.load_dataset_json(cfg.output / DATASET_FILE)
    if not ds.records:
        payload = {"clusters": [], "merges": [], "feature_names": [],
                   "excluded_features": []}
        _write_json(payload, cfg.output / CLUSTERING_FILE)
        return
    extraction = cluster_mod.cell_features(ds)
    clustering = cluster_mod.cluster_cells(
        extraction.vectors, cut_count=cfg.cut_count, cut_distance=cfg.cut_distance
    )
    payload = clustering.to_dict()
    payload["feature_names"] = list(extraction.feature_names)
    payload["excluded_features"] = list(extraction.excluded)
    _write_json(payload, cfg.output / CLUSTERING_FILE)


def _load_clustering(cfg: PipelineConfig) -> cluster_mod.CellClustering:
    payload = _read_json(cfg.output / CLUSTERING_FILE, "cluster")
    return cluster_mod.CellClustering.from_dict(payload)  # type: ignore[arg-type]


def _resolve_schemes(cfg: PipelineConfig, ds: ingestion.Dataset) -> quantize.QuantizationScheme:
    requests = None
    if cfg.quantization is not None:
        requests = quantize.load_quantization_config(cfg.quantization)
    return quantize.resolve_schemes(ds, requests)


def _mine_cluster(cfg: PipelineConfig, ds: ingestion.Dataset,
                  clustering: cluster_mod.CellClustering,
                  schemes: quantize.QuantizationScheme, cid: int) -> dict:
    db = transactions.build_transactions(
        ds, clustering, cid, schemes,
        include_lag=cfg.include_lag, include_delta=cfg.include_delta,
    )
    itemsets = miner.mine_frequent(db, cfg.min_support)
    rules = miner.sort_filter_rules(miner.generate_rules(
        itemsets, db, cfg.min_confidence, cfg.min_lift, cluster_id=cid
    ))
    kpi_vars = {i.variable for i in db.items if i.tag == transactions.KPI_LEVEL}
    cp_vars = {i.variable for i in db.items if i.tag == transactions.CP_LEVEL}
    pairs = []
    for kpi in sorted(kpi_vars):
        for cp in sorted(cp_vars):
            agg = miner.aggregate_variable_pair(
                db, kpi, cp, check_identities=cfg.check_identities
            )
            pairs.append(agg.to_dict())
    return {
        "rules": rules,
        "pairs": pairs,
        "dump": (
            "".join(f"{t.cell_id},{t.timestamp}\t{db.render_transaction(t)}\n"
                    for t in db.transactions)
            if cfg.dump_transactions else None
        ),
        "stats": {
            "cluster_id": cid,
            "n_cells": len(clustering.clusters[cid]),
            "n_transactions": db.n_all,
            "n_items": len(db.items),
            "n_frequent_itemsets": len(itemsets),
            "n_rules": len(rules),
        },
    }


def stage_mine(cfg: PipelineConfig) -> None:
    ds = ingestion.load_dataset_json(cfg.output / DATASET_FILE)
    clustering = _load_clustering(cfg)
    schemes = _resolve_schemes(cfg, ds)
    _write_json(quantize.schemes_to_dict(schemes), cfg.output / SCHEMES_FILE)

    # clusters are mined independently (possibly in parallel); report writing
    # stays serialized in cluster order so output is scheduling-independent
    results = _map_clusters(
        lambda cid: _mine_cluster(cfg, ds, clustering, schemes, cid),
        len(clustering.clusters), cfg.threads,
    )
    stats = []
    for cid, result in enumerate(results):
        if result["dump"] is not None:
            dump_path = cfg.output / f"transactions_cluster_{cid}.txt"
            dump_path.write_text(result["dump"], encoding="utf-8")
        _write_json(
            {"cluster_id": cid,
             "rules": [rule_to_dict(r) for r in result["rules"]]},
            cfg.output / f"rules_cluster_{cid}.json",
        )
        _rules_csv(result["rules"], cfg.output / f"rules_cluster_{cid}.csv")
        _write_json({"cluster_id": cid, "pairs": result["pairs"]},
                    cfg.output / f"aggregates_cluster_{cid}.json")
        stats.append(result["stats"])
    _write_json({"clusters": stats}, cfg.output / STATS_FILE)


def _map_clusters(worker, n_clusters: int, threads: int) -> list:
    if threads <= 1 or n_clusters <= 1:
        return [worker(cid) for cid in range(n_clusters)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, range(n_clusters)))


def _load_rules(cfg: PipelineConfig, cid: int,
                role_of: dict[str, str]) -> list[miner.Rule]:
    payload = _read_json(cfg.output / f"rules_cluster_{cid}.json", "mine")
    return [rule_from_dict(r, role_of) for r in payload["rules"]]  # type: ignore[index]


def _extend_cluster(cfg: PipelineConfig, ds: ingestion.Dataset,
                    clustering: cluster_mod.CellClustering,
                    schemes: quantize.QuantizationScheme,
                    role_of: dict[str, str], pm_vars: list[str],
                    target_kpi: str, cid: int) -> dict:
    rules = _load_rules(cfg, cid, role_of)
    entries: list[tuple[miner.Rule, list[str]]] = [(r, []) for r in rules]
    ranking = None
    if pm_vars and cfg.env_features >= 1 and cfg.max_env_items >= 1 and target_kpi:
        ranking = ruleplus.select_env_features(
            ds, clustering.clusters[cid], target_kpi, cfg.env_features,
            schemes, method=cfg.feature_method,
        )
        env_db = transactions.build_transactions(
            ds, clustering, cid, schemes,
            include_lag=cfg.include_lag, include_delta=cfg.include_delta,
            env_vars=ranking.selected,
        )
        outcome = ruleplus.extend_rules(
            rules, env_db, cfg.min_support,
            max_env_items=cfg.max_env_items,
            confidence_margin=cfg.confidence_margin,
        )
        entries += [
            (ext.as_rule(), sorted(i.render() for i in ext.env_items))
            for ext in outcome.extensions
        ]
    entries.sort(key=lambda pair: (
        -pair[0].metrics.support,
        -(pair[0].metrics.confidence or -1.0),
        -(pair[0].metrics.lift or -1.0),
        pair[0].render(),
    ))
    return {
        "cluster_id": cid,
        "environment_ranking": (
            [{"variable": v, "score": s} for v, s in ranking.scores]
            if ranking else []
        ),
        "rules": [rule_to_dict(r, environment=env) for r, env in entries],
    }


def stage_extend(cfg: PipelineConfig) -> None:
    ds = ingestion.load_dataset_json(cfg.output / DATASET_FILE)
    clustering = _load_clustering(cfg)
    role_of = {d.name: d.role for d in ds.schema}
    schemes_payload = _read_json(cfg.output / SCHEMES_FILE, "mine")
    schemes = quantize.schemes_from_dict(schemes_payload)  # type: ignore[arg-type]

    pm_vars = ds.variables("PM")
    for v in pm_vars:
        if v not in schemes:
            schemes[v] = ruleplus.pm_scheme(ds, v, schemes)
    target_kpi = cfg.env_target_kpi or next(iter(ds.variables("KPI")), "")
    payloads = _map_clusters(
        lambda cid: _extend_cluster(cfg, ds, clustering, schemes, role_of,
                                    pm_vars, target_kpi, cid),
        len(clustering.clusters), cfg.threads,
    )
    for cid, payload in enumerate(payloads):
        _write_json(payload, cfg.output / f"extended_rules_cluster_{cid}.json")


def stage_evaluate(cfg: PipelineConfig) -> None:
    ds = ingestion.load_dataset_json(cfg.output / DATASET_FILE)
    clustering = _load_clustering(cfg)
    role_of = {d.name: d.role for d in ds.schema}
    schemes_payload = _read_json(cfg.output / SCHEMES_FILE, "mine")
    schemes = quantize.schemes_from_dict(schemes_payload)  # type: ignore[arg-type]

    noisy_ds = evaluation.inject_noise(
        ds, fraction=cfg.noise_fraction,
        amplitude_ratio=cfg.noise_amplitude_ratio, seed=cfg.noise_seed,
    )
    containment = []
    all_rules: list[miner.Rule] = []
    for cid in range(len(clustering.clusters)):
        original = _load_rules(cfg, cid, role_of)
        all_rules.extend(original)
        db = transactions.build_transactions(
            noisy_ds, clustering, cid, schemes,
            include_lag=cfg.include_lag, include_delta=cfg.include_delta,
        )
        itemsets = miner.mine_frequent(db, cfg.min_support)
        noisy = miner.sort_filter_rules(miner.generate_rules(
            itemsets, db, cfg.min_confidence, cfg.min_lift, cluster_id=cid
        ))
        depths = {}
        for k in cfg.top_k:
            if k > len(original):
                depths[str(k)] = "insufficient rules"
                continue
            depth = evaluation.containment_depth(original, noisy, k)
            depths[str(k)] = depth if depth is not None else "not contained"
        containment.append({
            "cluster_id": cid,
            "n_original": len(original),
            "n_noisy": len(noisy),
            "depths": depths,
        })

    precision_payload = None
    if cfg.labels is not None:
        labels = evaluation.LabelSet.load(cfg.labels, role_of)
        report = evaluation.precision_against_labels(all_rules, labels)
        precision_payload = {
            "precision": report.precision,
            "n_scored": report.n_scored,
            "n_correct": report.n_correct,
            "n_incorrect": report.n_incorrect,
            "unlabeled": list(report.unlabeled),
        }
    _write_json({
        "noise": {
            "fraction": cfg.noise_fraction,
            "amplitude_ratio": cfg.noise_amplitude_ratio,
            "seed": cfg.noise_seed,
        },
        "containment": containment,
        "precision": precision_payload,
    }, cfg.output / EVALUATION_FILE)


PIPELINE_STAGES = (
    ("ingest", stage_ingest),
    ("cluster", stage_cluster),
    ("mine", stage_mine),
    ("extend", stage_extend),
)


def run_pipeline(cfg: PipelineConfig) -> None:
    cfg.validate()
    for name, stage in PIPELINE_STAGES:
        try:
            stage(cfg)
        except (ConfigError, DataError, IdentityCheckError) as exc:
            raise type(exc)(f"[{name}] {exc}") from exc


# --- synthetic data subcommand -------------------------------------------------


def load_synth_spec(path: Union[str, Path]) -> evaluation.SyntheticSpec:
    parser = configparser.ConfigParser()
    if not parser.read(str(path)):
        raise ConfigError(f"synthetic spec not found: {path}")
    if not parser.has_section("synthetic"):
        raise ConfigError(f"{path} lacks a [synthetic] section")
    planted = []
    for section in parser.sections():
        if not section.startswith("rule"):
            continue
        pattern = []
        for token in parser.get(section, "pattern").split(","):
            var, _, level = token.strip().partition(":")
            if not var or not level:
                raise ConfigError(f"{section}: bad pattern token {token!r}")
            pattern.append((var, level))
        planted.append(evaluation.PlantedRule(
            pattern=tuple(sorted(pattern)),
            kpi_variable=parser.get(section, "kpi"),
            kpi_level=parser.get(section, "level"),
            response_probability=parser.getfloat(section, "probability"),
        ))
    try:
        return evaluation.SyntheticSpec(
            n_cells=parser.getint("synthetic", "cells"),
            n_timestamps=parser.getint("synthetic", "timestamps"),
            planted=tuple(planted),
            background_noise_rate=parser.getfloat(
                "synthetic", "background_noise_rate", fallback=0.0),
            seed=parser.getint("synthetic", "seed", fallback=0),
            n_levels=parser.getint("synthetic", "levels", fallback=4),
            extra_cp_vars=parser.getint("synthetic", "extra_cp_vars", fallback=0),
            extra_kpi_vars=parser.getint("synthetic", "extra_kpi_vars", fallback=0),
            n_eng_vars=parser.getint("synthetic", "eng_vars", fallback=2),
            n_pm_vars=parser.getint("synthetic", "pm_vars", fallback=0),
        )
    except ValueError as exc:
        raise ConfigError(f"bad value in {path}: {exc}") from exc


def write_synthetic(result: evaluation.SyntheticResult, output: Path) -> None:
    output.mkdir(parents=True, exist_ok=True)
    ds = result.dataset
    ingestion.save_dataset(ds, output / "data.csv")
    ingestion.save_schema(ds.schema, ds.sampling_interval, output / "schema.ini")

    parser = configparser.ConfigParser()
    parser["quantization"] = {}
    for name in sorted(result.schemes):
        scheme = result.schemes[name]
        if scheme.breakpoints is not None:
            breaks = " ".join(repr(b) for b in scheme.breakpoints)
            labels = " ".join(scheme.labels)
            parser["quantization"][name] = f"breakpoints {breaks} | labels {labels}"
        else:
            parser["quantization"][name] = "identity"
    with open(output / "quantization.ini", "w", encoding="utf-8") as fh:
        parser.write(fh)

    _write_json([
        {
            "antecedent": sorted(i.render() for i in rule.antecedent_items()),
            "consequent": sorted(i.render() for i in rule.consequent_items()),
            "response_probability": rule.response_probability,
        }
        for rule in result.planted
    ], output / "ground_truth.json")


def stage_synth(spec_path: Path, output: Path) -> None:
    spec = load_synth_spec(spec_path)
    write_synthetic(evaluation.generate_synthetic(spec), output)


# --- argument parsing -----------------------------------------------------------


def _add_config_argument(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", required=True, help="pipeline config file (INI)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cellminer",
        description="Mine multi-level CP/KPI association rules from cell telemetry.",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "run ingest, cluster, mine and extend in sequence"),
        ("ingest", "load, filter and gap-fill the raw CSV"),
        ("cluster", "group similar cells"),
        ("mine", "mine per-cluster rules and level aggregates"),
        ("extend", "attach environment features to mined rules"),
        ("evaluate", "noise-robustness containment depths and optional precision"),
    ):
        sub = subs.add_parser(name, help=help_text)
        _add_config_argument(sub)
        if name in ("run", "mine", "extend"):
            sub.add_argument("--threads", type=int, default=None,
                             help="per-cluster worker cap for mine/extend")
        if name == "evaluate":
            sub.add_argument("--noise-seed", type=int, default=None)
            sub.add_argument("--k", type=str, default=None,
                             help="comma-separated top-k list, e.g. 10,15,20")
    synth = subs.add_parser("synth", help="generate a planted-rule dataset")
    synth.add_argument("--spec", required=True)
    synth.add_argument("--output", required=True)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            stage_synth(Path(args.spec), Path(args.output))
            return 0
        cfg = load_config(args.config)
        if args.command == "evaluate":
            if args.noise_seed is not None:
                cfg.noise_seed = args.noise_seed
            if args.k is not None:
                cfg.top_k = _parse_k_list(args.k)
        if getattr(args, "threads", None) is not None:
            cfg.threads = args.threads
        cfg.validate()
        if args.command == "run":
            run_pipeline(cfg)
        else:
            stage = dict(PIPELINE_STAGES + (("evaluate", stage_evaluate),))[args.command]
            stage(cfg)
        return 0
    except ConfigError as exc:
        print(f"[{args.command}] config error: {exc}", file=sys.stderr)
        return 1
    except (DataError, FileNotFoundError) as exc:
        print(f"[{args.command}] data error: {exc}", file=sys.stderr)
        return 2
    except IdentityCheckError as exc:
        print(f"[{args.command}] identity violation: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
