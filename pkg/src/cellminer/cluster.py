"""Grouping of similar cells before mining.

Cells are described by their static engineering parameters plus per-PM
summary statistics (mean, standard deviation), standardized column-wise, and
merged bottom-up under Euclidean distance with average linkage. The merge
trace is kept so any cut of the dendrogram can be inspected or replayed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DataError
from .ingestion import Dataset

_EPS = 1e-12


@dataclass(frozen=True)
class CellFeatureVector:
    cell_id: str
    features: tuple[float, ...]


@dataclass(frozen=True)
class FeatureExtraction:
    vectors: tuple[CellFeatureVector, ...]
    feature_names: tuple[str, ...]
    excluded: tuple[str, ...]  # zero-variance columns dropped before standardizing


@dataclass(frozen=True)
class MergeStep:
    left: tuple[str, ...]   # members of the two clusters merged, each sorted
    right: tuple[str, ...]
    distance: float


@dataclass(frozen=True)
class CellClustering:
    """A partition of the cells plus the dendrogram trace that produced it."""

    clusters: tuple[tuple[str, ...], ...]  # each sorted; disjoint and covering
    merges: tuple[MergeStep, ...]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for cluster in self.clusters:
            if not cluster:
                raise DataError("empty cluster")
            overlap = seen.intersection(cluster)
            if overlap:
                raise DataError(f"cells {sorted(overlap)} appear in two clusters")
            seen.update(cluster)

    def cluster_of(self, cell_id: str) -> int:
        for i, cluster in enumerate(self.clusters):
            if cell_id in cluster:
                return i
        raise KeyError(cell_id)

    def to_dict(self) -> dict:
        return {
            "clusters": [list(c) for c in self.clusters],
            "merges": [
                {"left": list(m.left), "right": list(m.right), "distance": m.distance}
                for m in self.merges
            ],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "CellClustering":
        return cls(
            clusters=tuple(tuple(c) for c in payload["clusters"]),
            merges=tuple(
                MergeStep(tuple(m["left"]), tuple(m["right"]), float(m["distance"]))
                for m in payload["merges"]
            ),
        )


def cell_features(ds: Dataset) -> FeatureExtraction:
    """Build one standardized feature vector per cell.

    Numeric ENG variables contribute their per-cell value (mean over records,
    which equals the value when constant); numeric PM variables contribute
    mean and standard deviation over the cell's observed records. Columns that
    are constant across all cells carry no information and are excluded with a
    warning; a cell with no observation for a used variable is an error.
    """
    cells = ds.cells()
    if not cells:
        raise DataError("dataset has no cells")
    numeric = {d.name for d in ds.schema if d.kind == "numeric"}
    eng_vars = [v for v in ds.variables("ENG") if v in numeric]
    pm_vars = [v for v in ds.variables("PM") if v in numeric]
    for skipped in (set(ds.variables("ENG")) | set(ds.variables("PM"))) - numeric:
        warnings.warn(f"categorical variable {skipped!r} skipped in cell features")

    names: list[str] = []
    names.extend(eng_vars)
    for v in pm_vars:
        names.extend((f"{v}:mean", f"{v}:std"))

    per_cell_values: dict[str, dict[str, list[float]]] = {c: {} for c in cells}
    for rec in ds.records:
        bucket = per_cell_values[rec.cell_id]
        for v in eng_vars + pm_vars:
            if v in rec.values:
                bucket.setdefault(v, []).append(float(rec.values[v]))

    rows = []
    for cell in cells:
        bucket = per_cell_values[cell]
        row: list[float] = []
        for v in eng_vars:
            if v not in bucket:
                raise DataError(f"cell {cell!r}: no observations of ENG variable {v!r}")
            row.append(float(np.mean(bucket[v])))
        for v in pm_vars:
            if v not in bucket:
                raise DataError(f"cell {cell!r}: no observations of PM variable {v!r}")
            row.append(float(np.mean(bucket[v])))
            row.append(float(np.std(bucket[v])))
        rows.append(row)

    matrix = np.array(rows, dtype=float) if names else np.zeros((len(cells), 0))
    keep = []
    excluded = []
    for j, name in enumerate(names):
        if matrix.shape[0] > 1 and np.std(matrix[:, j]) <= _EPS:
            excluded.append(name)
            warnings.warn(f"feature {name!r} is constant across cells; excluded")
        else:
            keep.append(j)
    matrix = matrix[:, keep]
    kept_names = tuple(names[j] for j in keep)
    if matrix.shape[1] and matrix.shape[0] > 1:
        matrix = (matrix - matrix.mean(axis=0)) / np.std(matrix, axis=0)

    vectors = tuple(
        CellFeatureVector(cell, tuple(float(x) for x in matrix[i]))
        for i, cell in enumerate(cells)
    )
    return FeatureExtraction(vectors=vectors, feature_names=kept_names,
                             excluded=tuple(excluded))


def cluster_cells(features: Sequence[CellFeatureVector], linkage: str = "average",
                  cut_count: Optional[int] = None,
                  cut_distance: Optional[float] = None) -> CellClustering:
    """Agglomerative clustering with average linkage under Euclidean distance.

    Exactly one of cut_count / cut_distance selects where the dendrogram is
    cut: the partition with that many clusters, or the partition after
    applying every merge at distance <= cut_distance. Ties between candidate
    merges are broken by the lexicographically smallest member cell ids, so
    results are reproducible regardless of input order.
    """
    if linkage != "average":
        raise ValueError(f"unsupported linkage {linkage!r}")
    if (cut_count is None) == (cut_distance is None):
        raise ValueError("exactly one of cut_count/cut_distance must be given")
    if not features:
        raise DataError("no cells to cluster")
    ids = [f.cell_id for f in features]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate cell ids in feature vectors")
    order = sorted(range(len(features)), key=lambda i: ids[i])
    cells = [ids[i] for i in order]
    n = len(cells)
    if cut_count is not None and not (1 <= cut_count <= n):
        raise DataError(f"cut_count {cut_count} outside 1..{n}")

    dims = {len(f.features) for f in features}
    if len(dims) != 1:
        raise DataError("feature vectors have inconsistent lengths")
    matrix = np.array([features[i].features for i in order], dtype=float)
    if matrix.shape[1] == 0:
        dist = np.zeros((n, n))
    else:
        diff = matrix[:, None, :] - matrix[None, :, :]
        dist = np.sqrt((diff**2).sum(axis=2))
    np.fill_diagonal(dist, np.inf)

    members: list[Optional[tuple[str, ...]]] = [(c,) for c in cells]
    sizes = np.ones(n)
    active = list(range(n))
    merges: list[MergeStep] = []

    while len(active) > 1:
        sub = dist[np.ix_(active, active)]
        dmin = sub.min()
        pairs = np.argwhere(sub <= dmin + _EPS * max(1.0, dmin))
        best = None
        for a, b in pairs:
            if a >= b:
                continue
            i, j = active[a], active[b]
            key = tuple(sorted((members[i], members[j])))
            if best is None or key < best[0]:
                best = (key, i, j)
        assert best is not None
        _, i, j = best
        mi, mj = members[i], members[j]
        assert mi is not None and mj is not None
        left, right = sorted((mi, mj))
        merges.append(MergeStep(left=left, right=right, distance=float(dist[i, j])))

        # Lance-Williams update for average linkage
        ni, nj = sizes[i], sizes[j]
        for k in active:
            if k in (i, j):
                continue
            d = (ni * dist[i, k] + nj * dist[j, k]) / (ni + nj)
            dist[i, k] = dist[k, i] = d
        sizes[i] = ni + nj
        members[i] = tuple(sorted(mi + mj))
        members[j] = None
        active.remove(j)

    clusters = _apply_cut(cells, merges, cut_count, cut_distance)
    return CellClustering(clusters=clusters, merges=tuple(merges))


def _apply_cut(cells: Sequence[str], merges: Sequence[MergeStep],
               cut_count: Optional[int],
               cut_distance: Optional[float]) -> tuple[tuple[str, ...], ...]:
    parts: dict[str, tuple[str, ...]] = {c: (c,) for c in cells}
    if cut_count is not None:
        n_apply = len(cells) - cut_count
    else:
        n_apply = sum(1 for m in merges if m.distance <= cut_distance)
    for m in merges[:n_apply]:
        merged = tuple(sorted(m.left + m.right))
        for c in merged:
            parts[c] = merged
    return tuple(sorted(set(parts.values())))
