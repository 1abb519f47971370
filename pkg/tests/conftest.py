import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from cellminer.ingestion import CellRecord, Dataset, VariableDescriptor
from cellminer.transactions import CP_LEVEL, KPI_LEVEL, Item, TransactionDB


def make_dataset(records, schema, interval=3600) -> Dataset:
    """records: list of (cell_id, timestamp, {var: value}) triples."""
    ds = Dataset(
        schema=[VariableDescriptor(*entry) for entry in schema],
        records=[CellRecord(c, t, dict(values)) for c, t, values in records],
        sampling_interval=interval,
    )
    return ds.sorted_copy()


def simple_db(transaction_items, items=None) -> TransactionDB:
    """Build a TransactionDB from short item names like 'b1'.

    The first character is the variable, the rest the level. Variables 'a'
    and 'y' become KPI level items, everything else CP level items, so rule
    generation sees the usual antecedent/consequent split.
    """
    def as_item(name):
        if isinstance(name, Item):
            return name
        tag = KPI_LEVEL if name[0] in "ay" else CP_LEVEL
        return Item(variable=name[0], level=name[1:], tag=tag)

    db = TransactionDB()
    if items is not None:
        for name in items:
            db.intern(as_item(name))
    for n, names in enumerate(transaction_items):
        db.add([as_item(x) for x in names], cell_id="c", timestamp=n)
    return db


def db_to_sets(db: TransactionDB) -> list[frozenset]:
    """Render-based transaction sets for the brute-force oracles."""
    return [
        frozenset(db.items[i].render() for i in t.item_ids) for t in db.transactions
    ]
