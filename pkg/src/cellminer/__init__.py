"""Multi-level association rule mining for cellular network telemetry.

The pipeline clusters similar cells, quantizes configuration parameters and
KPIs into discrete levels, mines per-cluster association rules with
support/confidence/lift, extends them with selected environment features, and
evaluates precision and noise robustness.
"""

from .cluster import CellClustering, CellFeatureVector, cell_features, cluster_cells
from .errors import ConfigError, DataError, IdentityCheckError, SchemaError
from .evaluation import (
    LabelSet,
    PlantedRule,
    SyntheticSpec,
    containment_depth,
    generate_synthetic,
    inject_noise,
    precision_against_labels,
)
from .ingestion import (
    CellRecord,
    Dataset,
    VariableDescriptor,
    fill_gaps,
    filter_redundant,
    load_dataset,
)
from .miner import (
    FrequentItemset,
    Rule,
    RuleMetrics,
    VariablePairAggregate,
    aggregate_variable_pair,
    generate_rules,
    mine_frequent,
    rule_metrics,
    sort_filter_rules,
)
from .quantize import (
    LevelScheme,
    LevelSeries,
    QuantizationScheme,
    delta_items,
    discretize_cp,
    fit_quantile_scheme,
    quantize_kpi,
    resolve_schemes,
)
from .ruleplus import EnvFeatureRanking, ExtendedRule, extend_rules, select_env_features
from .transactions import Item, Transaction, TransactionDB, build_transactions

__version__ = "0.1.0"
