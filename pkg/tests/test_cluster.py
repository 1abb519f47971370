import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cellminer.cluster import CellFeatureVector, cell_features, cluster_cells
from cellminer.errors import DataError
from conftest import make_dataset


def vectors(points):
    return [CellFeatureVector(cid, tuple(map(float, p))) for cid, p in points.items()]


def partition(clustering):
    return {frozenset(c) for c in clustering.clusters}


# --- cell_features ----------------------------------------------------------------


def feature_ds():
    return make_dataset(
        [
            ("c1", 0, {"height": 20.0, "load": 1.0, "rate": 99.0}),
            ("c1", 3600, {"height": 20.0, "load": 3.0, "rate": 98.0}),
            ("c2", 0, {"height": 35.0, "load": 6.0, "rate": 97.0}),
            ("c2", 3600, {"height": 35.0, "load": 10.0, "rate": 95.0}),
        ],
        [("height", "ENG", "numeric"), ("load", "PM", "numeric"),
         ("rate", "KPI", "numeric")],
    )


def test_feature_dimensions():
    extraction = cell_features(feature_ds())
    assert extraction.feature_names == ("height", "load:mean", "load:std")
    assert all(len(v.features) == 3 for v in extraction.vectors)


def test_standardization():
    extraction = cell_features(feature_ds())
    for j in range(3):
        column = [v.features[j] for v in extraction.vectors]
        assert abs(sum(column)) < 1e-9
        assert abs(sum(x * x for x in column) / len(column) - 1.0) < 1e-9


def test_identical_cells_identical_vectors():
    ds = make_dataset(
        [("c1", 0, {"height": 20.0, "load": 5.0}),
         ("c2", 0, {"height": 20.0, "load": 5.0}),
         ("c3", 0, {"height": 30.0, "load": 9.0})],
        [("height", "ENG", "numeric"), ("load", "PM", "numeric")],
    )
    extraction = cell_features(ds)
    by_id = {v.cell_id: v.features for v in extraction.vectors}
    assert by_id["c1"] == by_id["c2"]


def test_missing_pm_for_cell_rejected():
    ds = make_dataset(
        [("c1", 0, {"height": 20.0, "load": 5.0}),
         ("c2", 0, {"height": 25.0})],
        [("height", "ENG", "numeric"), ("load", "PM", "numeric")],
    )
    with pytest.raises(DataError, match="c2"):
        cell_features(ds)


def test_constant_feature_excluded_with_warning():
    ds = make_dataset(
        [("c1", 0, {"height": 20.0, "load": 5.0}),
         ("c2", 0, {"height": 20.0, "load": 9.0})],
        [("height", "ENG", "numeric"), ("load", "PM", "numeric")],
    )
    with pytest.warns(UserWarning, match="height"):
        extraction = cell_features(ds)
    assert "height" in extraction.excluded
    assert "height" not in extraction.feature_names


# --- cluster_cells -----------------------------------------------------------------


def test_two_tight_pairs():
    points = {"c1": (0, 0), "c2": (0, 0.1), "c3": (10, 10), "c4": (10, 10.1)}
    clustering = cluster_cells(vectors(points), cut_count=2)
    assert partition(clustering) == {frozenset({"c1", "c2"}), frozenset({"c3", "c4"})}

    # brute-force check: the two within-pair distances are the smallest of all
    def dist(a, b):
        return math.dist(points[a], points[b])

    pairs = sorted(
        ((dist(a, b), a, b) for a in points for b in points if a < b)
    )
    assert {(pairs[0][1], pairs[0][2]), (pairs[1][1], pairs[1][2])} == {
        ("c1", "c2"), ("c3", "c4")
    }
    assert clustering.merges[0].distance == pytest.approx(pairs[0][0])
    assert clustering.merges[1].distance == pytest.approx(pairs[1][0])


def test_single_cell_singleton():
    clustering = cluster_cells(vectors({"c1": (1, 2)}), cut_count=1)
    assert partition(clustering) == {frozenset({"c1"})}
    assert clustering.merges == ()


def test_cut_distance_zero_all_singletons():
    points = {"c1": (0, 0), "c2": (1, 0), "c3": (0, 2)}
    clustering = cluster_cells(vectors(points), cut_distance=0.0)
    assert partition(clustering) == {frozenset({c}) for c in points}


def test_cut_count_beyond_cells_rejected():
    with pytest.raises(DataError):
        cluster_cells(vectors({"c1": (0, 0)}), cut_count=2)


def test_exactly_one_cut_required():
    vs = vectors({"c1": (0, 0), "c2": (1, 1)})
    with pytest.raises(ValueError):
        cluster_cells(vs)
    with pytest.raises(ValueError):
        cluster_cells(vs, cut_count=1, cut_distance=1.0)


def test_identical_vectors_never_separated():
    points = {"c1": (0, 0), "c2": (0, 0), "c3": (5, 5), "c4": (9, 9)}
    for count in (1, 2, 3):
        clustering = cluster_cells(vectors(points), cut_count=count)
        cluster_of = {c: i for i, cl in enumerate(clustering.clusters) for c in cl}
        assert cluster_of["c1"] == cluster_of["c2"]


@st.composite
def point_sets(draw):
    n = draw(st.integers(1, 8))
    coords = draw(
        st.lists(
            st.tuples(st.integers(-50, 50), st.integers(-50, 50)),
            min_size=n, max_size=n,
        )
    )
    return {f"cell_{i}": c for i, c in enumerate(coords)}


@settings(max_examples=60, deadline=None)
@given(points=point_sets(), data=st.data())
def test_partition_and_monotone_merges(points, data):
    count = data.draw(st.integers(1, len(points)))
    clustering = cluster_cells(vectors(points), cut_count=count)
    members = [c for cluster in clustering.clusters for c in cluster]
    assert sorted(members) == sorted(points)          # disjoint covering partition
    assert len(clustering.clusters) == count
    distances = [m.distance for m in clustering.merges]
    assert all(d2 >= d1 - 1e-9 for d1, d2 in zip(distances, distances[1:]))


@settings(max_examples=40, deadline=None)
@given(points=point_sets(), seed=st.integers(0, 1000), data=st.data())
def test_permutation_invariance(points, seed, data):
    import random

    count = data.draw(st.integers(1, len(points)))
    vs = vectors(points)
    shuffled = list(vs)
    random.Random(seed).shuffle(shuffled)
    assert partition(cluster_cells(vs, cut_count=count)) == partition(
        cluster_cells(shuffled, cut_count=count)
    )
