"""Exact k-nearest-neighbor retrieval under a pluggable linear metric.

The index is immutable after build. Vectors are pre-transformed by the
metric once so a query costs one O(n d) scan; search is exact by linear
scan, which keeps the evaluation harness oracle-clean at note-library
scale. Ties break toward the lower row index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import NoteMetadata
from .features_io import FeatureArchive, FeatureDescriptor, load_archive, save_archive
from .lmnn import MetricMatrix, load_metric, save_metric


@dataclass(frozen=True)
class IndexItem:
    item_id: str
    source_path: str
    metadata: NoteMetadata


@dataclass(frozen=True)
class QueryResult:
    ranked: tuple[tuple[str, float], ...]  # (item id, distance), non-decreasing
    query_descriptor: FeatureDescriptor
    truncated: bool = False

    def __post_init__(self):
        dists = [d for _, d in self.ranked]
        if any(b < a for a, b in zip(dists, dists[1:])):
            raise ValueError("result distances must be non-decreasing")
        ids = [i for i, _ in self.ranked]
        if len(set(ids)) != len(ids):
            raise ValueError("result ids must be distinct")


class RetrievalIndex:
    """Immutable feature matrix + items supporting exact k-NN queries."""

    def __init__(self, vectors: np.ndarray, items: list[IndexItem],
                 descriptor: FeatureDescriptor, metric: MetricMatrix | None = None):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] < 1:
            raise ValueError("index needs at least one feature row")
        if vectors.shape[0] != len(items):
            raise ValueError("one item per feature row required")
        if metric is not None:
            if metric.d_in != vectors.shape[1]:
                raise ValueError("metric dimension incompatible with features")
            if metric.feature_descriptor and \
                    metric.feature_descriptor != descriptor.config_hash:
                raise ValueError("metric was trained on a different feature family")
        self.vectors = vectors
        self.items = list(items)
        self.descriptor = descriptor
        self.metric = metric
        self._transformed = metric.transform(vectors) if metric is not None else vectors
        self._ids = [it.item_id for it in self.items]
        self._id_to_row = {it.item_id: r for r, it in enumerate(self.items)}

    def __len__(self) -> int:
        return len(self.items)

    def row_for(self, item_id: str) -> int:
        try:
            return self._id_to_row[item_id]
        except KeyError:
            raise KeyError(f"unknown item id {item_id!r}") from None

    def item(self, item_id: str) -> IndexItem:
        return self.items[self.row_for(item_id)]

    def vector_for(self, item_id: str) -> np.ndarray:
        return self.vectors[self.row_for(item_id)].copy()


def build_index(features: np.ndarray, items: list[IndexItem],
                descriptor: FeatureDescriptor,
                metric: MetricMatrix | None = None) -> RetrievalIndex:
    return RetrievalIndex(features, items, descriptor, metric)


def query(idx: RetrievalIndex, q: np.ndarray, k: int,
          exclude_ids: tuple[str, ...] = (),
          query_descriptor: FeatureDescriptor | None = None) -> QueryResult:
    """Exact k nearest items to q under the index metric.

    exclude_ids filters indexed items (self-exclusion during evaluation).
    If fewer than k items remain, all are returned with truncated=True.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if query_descriptor is not None and query_descriptor != idx.descriptor:
        raise ValueError("query feature descriptor does not match the index")
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (idx.vectors.shape[1],):
        raise ValueError("query dimension does not match the index")
    tq = idx.metric.transform(q) if idx.metric is not None else q
    dists = np.sqrt(np.maximum(np.sum((idx._transformed - tq) ** 2, axis=1), 0.0))

    order = np.lexsort((np.arange(len(idx)), dists))
    banned = set(exclude_ids)
    ranked = []
    for row in order:
        item_id = idx._ids[row]
        if item_id in banned:
            continue
        ranked.append((item_id, float(dists[row])))
        if len(ranked) == k:
            break
    return QueryResult(tuple(ranked), idx.descriptor, truncated=len(ranked) < k)


def save_index(directory, idx: RetrievalIndex, extra_config: dict | None = None) -> None:
    """Persist as feature archive + items JSON + optional metric files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_archive(directory / "features", FeatureArchive(
        matrix=idx.vectors.astype(np.float32),
        descriptor=idx.descriptor,
        item_ids=[it.item_id for it in idx.items],
    ))
    items_blob = {
        "version": 1,
        "items": [
            {"item_id": it.item_id, "source_path": it.source_path,
             "metadata": it.metadata.to_dict()}
            for it in idx.items
        ],
        "has_metric": idx.metric is not None,
        "config": extra_config or {},
    }
    with open(directory / "items.json", "w") as fh:
        json.dump(items_blob, fh, indent=1)
    if idx.metric is not None:
        save_metric(directory / "metric", idx.metric)


def load_index(directory) -> tuple[RetrievalIndex, dict]:
    directory = Path(directory)
    archive = load_archive(directory / "features")
    with open(directory / "items.json") as fh:
        items_blob = json.load(fh)
    items = [
        IndexItem(e["item_id"], e["source_path"], NoteMetadata.from_dict(e["metadata"]))
        for e in items_blob["items"]
    ]
    metric = load_metric(directory / "metric") if items_blob.get("has_metric") else None
    idx = RetrievalIndex(archive.matrix.astype(np.float64), items,
                         archive.descriptor, metric)
    return idx, items_blob.get("config", {})
