import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cellminer.cluster import CellClustering
from cellminer.errors import DataError, SchemaError
from cellminer.quantize import LevelScheme, fit_identity_scheme
from cellminer.transactions import (
    CP_DELTA,
    CP_LEVEL,
    ENV_LEVEL,
    KPI_LAG_LEVEL,
    KPI_LEVEL,
    Item,
    TransactionDB,
    build_transactions,
    load_dump,
    parse_item,
)
from conftest import make_dataset

KPI_SCHEME = LevelScheme(
    labels=("very_low", "low", "degraded", "normal"), breakpoints=(90.0, 95.0, 99.0)
)


def two_step_dataset():
    return make_dataset(
        [("c1", 0, {"transecr": 2.0, "rate": 99.5}),
         ("c1", 3600, {"transecr": 4.0, "rate": 80.0})],
        [("transecr", "CP", "numeric"), ("rate", "KPI", "numeric")],
    )


def single_cluster(cells):
    return CellClustering(clusters=(tuple(sorted(cells)),), merges=())


def schemes_for(ds):
    return {"transecr": fit_identity_scheme([2.0, 4.0]), "rate": KPI_SCHEME}


def rendered(db):
    return [sorted(db.items[i].render() for i in t.item_ids) for t in db.transactions]


def test_lag_and_delta_items():
    ds = two_step_dataset()
    db = build_transactions(ds, single_cluster(["c1"]), 0, schemes_for(ds),
                            include_lag=True, include_delta=True)
    assert db.n_all == 2
    assert rendered(db) == [
        ["rate →normal", "transecr →2"],
        ["rate →very_low", "rate[t-1] →normal", "transecr →4",
         "transecr[delta] →increase"],
    ]


def test_lag_and_delta_disabled():
    ds = two_step_dataset()
    db = build_transactions(ds, single_cluster(["c1"]), 0, schemes_for(ds),
                            include_lag=False, include_delta=False)
    assert rendered(db) == [
        ["rate →normal", "transecr →2"],
        ["rate →very_low", "transecr →4"],
    ]


def test_empty_cluster():
    ds = two_step_dataset()
    clustering = CellClustering(clusters=(("c1",), ("ghost",)), merges=())
    db = build_transactions(ds, clustering, 1, schemes_for(ds))
    assert db.n_all == 0


def test_missing_kpi_leaves_cp_items():
    ds = make_dataset(
        [("c1", 0, {"transecr": 2.0})],
        [("transecr", "CP", "numeric"), ("rate", "KPI", "numeric")],
    )
    db = build_transactions(ds, single_cluster(["c1"]), 0, schemes_for(ds))
    assert rendered(db) == [["transecr →2"]]


def test_unknown_cluster_rejected():
    ds = two_step_dataset()
    with pytest.raises(DataError, match="cluster"):
        build_transactions(ds, single_cluster(["c1"]), 3, schemes_for(ds))


def test_missing_scheme_rejected():
    ds = two_step_dataset()
    with pytest.raises(SchemaError, match="rate"):
        build_transactions(ds, single_cluster(["c1"]), 0,
                           {"transecr": fit_identity_scheme([2.0, 4.0])})


def test_lag_requires_adjacent_grid_slot():
    # rate missing at t=3600: its level at t=0 lags into t=3600, but t=7200
    # has no observed predecessor and gets no lag item
    ds = make_dataset(
        [("c1", 0, {"transecr": 2.0, "rate": 99.5}),
         ("c1", 3600, {"transecr": 2.0}),
         ("c1", 7200, {"transecr": 2.0, "rate": 99.2})],
        [("transecr", "CP", "numeric"), ("rate", "KPI", "numeric")],
    )
    db = build_transactions(ds, single_cluster(["c1"]), 0, schemes_for(ds))
    lag_timestamps = [
        t.timestamp for t in db.transactions
        if any(db.items[i].tag == KPI_LAG_LEVEL for i in t.item_ids)
    ]
    assert lag_timestamps == [3600]


def test_env_items_attached():
    ds = make_dataset(
        [("c1", 0, {"transecr": 2.0, "rate": 99.5, "users": 10.0})],
        [("transecr", "CP", "numeric"), ("rate", "KPI", "numeric"),
         ("users", "PM", "numeric")],
    )
    schemes = schemes_for(ds)
    schemes["users"] = LevelScheme(labels=("lo", "hi"), breakpoints=(50.0,))
    db = build_transactions(ds, single_cluster(["c1"]), 0, schemes,
                            env_vars=("users",))
    assert rendered(db) == [["rate →normal", "transecr →2", "users →lo"]]


def test_level_exclusivity_enforced():
    db = TransactionDB()
    with pytest.raises(DataError, match="two levels"):
        db.add([Item("x", "1", CP_LEVEL), Item("x", "2", CP_LEVEL)])


def test_same_variable_different_tags_allowed():
    db = TransactionDB()
    db.add([Item("rate", "normal", KPI_LEVEL), Item("rate", "low", KPI_LAG_LEVEL)])
    assert db.n_all == 1


def test_rebuild_is_bit_identical():
    ds = two_step_dataset()
    first = build_transactions(ds, single_cluster(["c1"]), 0, schemes_for(ds))
    second = build_transactions(ds, single_cluster(["c1"]), 0, schemes_for(ds))
    assert first.items == second.items
    assert first.transactions == second.transactions


def test_dump_round_trip(tmp_path):
    ds = two_step_dataset()
    db = build_transactions(ds, single_cluster(["c1"]), 0, schemes_for(ds))
    path = tmp_path / "transactions.txt"
    db.dump(path)
    loaded = load_dump(path, {"transecr": "CP", "rate": "KPI"})
    assert rendered(loaded) == rendered(db)
    assert [(t.cell_id, t.timestamp) for t in loaded.transactions] == [
        (t.cell_id, t.timestamp) for t in db.transactions
    ]


def test_parse_item_tags():
    role_of = {"transecr": "CP", "rate": "KPI", "users": "PM"}
    assert parse_item("transecr →2", role_of) == Item("transecr", "2", CP_LEVEL)
    assert parse_item("rate →normal", role_of) == Item("rate", "normal", KPI_LEVEL)
    assert parse_item("rate[t-1] →low", role_of) == Item("rate", "low", KPI_LAG_LEVEL)
    assert parse_item("transecr[delta] →increase", role_of) == Item(
        "transecr", "increase", CP_DELTA
    )
    assert parse_item("users →lo", role_of) == Item("users", "lo", ENV_LEVEL)
    with pytest.raises(DataError):
        parse_item("nonsense", role_of)


@st.composite
def random_datasets(draw):
    n_cells = draw(st.integers(1, 3))
    n_steps = draw(st.integers(1, 6))
    records = []
    for c in range(n_cells):
        for s in range(n_steps):
            values = {}
            if draw(st.booleans()):
                values["transecr"] = float(draw(st.sampled_from([2, 4])))
            if draw(st.booleans()):
                values["rate"] = float(draw(st.integers(70, 100)))
            records.append((f"c{c}", s * 3600, values))
    return make_dataset(
        records,
        [("transecr", "CP", "numeric"), ("rate", "KPI", "numeric")],
    )


@settings(max_examples=60, deadline=None)
@given(random_datasets())
def test_transaction_count_and_exclusivity(ds):
    cells = ds.cells() or ["c0"]
    db = build_transactions(ds, single_cluster(cells), 0, schemes_for(ds))
    observed = sum(
        1 for r in ds.records if ("transecr" in r.values or "rate" in r.values)
    )
    assert db.n_all == observed
    for t in db.transactions:
        keys = [(db.items[i].variable, db.items[i].tag) for i in t.item_ids]
        assert len(keys) == len(set(keys))
