"""Train/test splitting, precision-at-k, and the feature/metric ablation grid."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import CorpusManifest
from .features_io import FeatureDescriptor
from .knn import IndexItem, QueryResult, build_index, query
from .lmnn import LabeledFeatures, LmnnConfig, MetricMatrix, train_lmnn
from .pipeline import cached_features, descriptor_for
from .scattering import fit_compression_matrix, log_compress_matrix


def stratified_split(labels, test_fraction: float, seed: int):
    """Per-class proportional split; deterministic in seed.

    Classes with a single member always go to train. Returns (train_idx,
    test_idx) as sorted integer arrays.
    """
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("cannot split an empty item list")
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    train, test = [], []
    for label in sorted(set(labels.tolist())):
        members = np.flatnonzero(labels == label)
        if members.size == 1:
            train.extend(members.tolist())
            continue
        # per-class randomness keyed by membership, not label text, so any
        # bijective relabeling yields the identical split
        rng = np.random.default_rng(
            np.random.SeedSequence([int(seed), 0x5B117, *members.tolist()])
        )
        n_test = min(int(round(test_fraction * members.size)), members.size - 1)
        perm = rng.permutation(members)
        test.extend(perm[:n_test].tolist())
        train.extend(perm[n_test:].tolist())
    return np.array(sorted(train), dtype=int), np.array(sorted(test), dtype=int)


def precision_at_k(result: QueryResult, query_label: str,
                   item_labels: dict[str, str], k: int) -> float:
    """Fraction of the top-k retrieved items sharing the query's label."""
    if len(result.ranked) < k:
        raise ValueError(f"result holds {len(result.ranked)} items, need {k}")
    hits = sum(1 for item_id, _ in result.ranked[:k]
               if item_labels[item_id] == query_label)
    return hits / k


@dataclass
class EvalReport:
    label_namespace: str
    feature_family: str
    feature_descriptor: dict
    T: float
    metric_kind: str
    p_at_k: float
    k: int
    per_class: dict[str, float]
    split_seed: int
    n_train: int
    n_test: int
    confusions: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(**d)


def evaluate_features(matrix: np.ndarray, item_ids: list[str], labels: list[str],
                      namespace: str, metric_kind: str, k: int = 5,
                      test_fraction: float = 0.2, seed: int = 42,
                      lmnn_cfg: LmnnConfig = LmnnConfig(),
                      descriptor: FeatureDescriptor | None = None,
                      feature_family: str = "", T: float = 0.025,
                      compress_paths=None, items: list[IndexItem] | None = None) -> EvalReport:
    """One grid cell: split, fit stats on train, train metric, retrieve, score.

    The quasi-logarithmic compression (scattering only, signalled by
    compress_paths) is fit on the train subset and applied to all vectors;
    queries come from the test subset and retrieval runs over train only.
    """
    labels_arr = np.asarray(labels)
    descriptor = descriptor or FeatureDescriptor(feature_family or "features", "adhoc")
    train_idx, test_idx = stratified_split(labels_arr, test_fraction, seed)
    if test_idx.size == 0:
        raise ValueError("split produced no test queries")

    x = np.asarray(matrix, dtype=np.float64)
    if compress_paths is not None:
        stats = fit_compression_matrix(x[train_idx], compress_paths)
        x = log_compress_matrix(x, stats)

    metric: MetricMatrix | None
    if metric_kind == "lmnn":
        metric = train_lmnn(
            LabeledFeatures(x[train_idx], labels_arr[train_idx], namespace),
            lmnn_cfg, feature_descriptor=descriptor.config_hash,
        )
    elif metric_kind == "euclidean":
        metric = None
    else:
        raise ValueError(f"unknown metric kind {metric_kind!r}")

    if items is None:
        items = [IndexItem(item_ids[i], item_ids[i], None) for i in range(len(item_ids))]  # type: ignore[arg-type]
    idx = build_index(x[train_idx], [items[i] for i in train_idx], descriptor, metric)
    train_labels = {item_ids[i]: labels_arr[i] for i in train_idx}

    per_query = []
    class_hits: dict[str, list[float]] = {}
    confusion_counts: dict[str, dict[str, int]] = {}
    for i in test_idx:
        result = query(idx, x[i], k)
        p = precision_at_k(result, labels_arr[i], train_labels, k)
        per_query.append(p)
        class_hits.setdefault(str(labels_arr[i]), []).append(p)
        row = confusion_counts.setdefault(str(labels_arr[i]), {})
        for item_id, _ in result.ranked[:k]:
            got = str(train_labels[item_id])
            row[got] = row.get(got, 0) + 1
    per_class = {c: float(np.mean(v)) for c, v in sorted(class_hits.items())}
    confusions = {
        c: {g: cnt / (len(class_hits[c]) * k) for g, cnt in sorted(row.items())}
        for c, row in sorted(confusion_counts.items())
    }
    return EvalReport(
        label_namespace=namespace,
        feature_family=feature_family,
        feature_descriptor=descriptor.to_dict(),
        T=T,
        metric_kind=metric_kind,
        p_at_k=float(np.mean(per_query)),
        k=k,
        per_class=per_class,
        split_seed=seed,
        n_train=int(train_idx.size),
        n_test=int(test_idx.size),
        confusions=confusions,
    )


@dataclass(frozen=True)
class GridSpec:
    features: tuple[str, ...] = ("mfcc13", "mfcc40", "mfcc-poly", "scattering")
    T_sweep: tuple[float, ...] = (0.025, 0.1, 0.25, 0.5, 1.0)
    metrics: tuple[str, ...] = ("euclidean", "lmnn")
    namespaces: tuple[str, ...] = ("instrument", "technique")
    k: int = 5
    test_fraction: float = 0.2
    seed: int = 42


def grid_cells(grid: GridSpec):
    for family in grid.features:
        T_values = grid.T_sweep if family == "scattering" else (0.025,)
        for T in T_values:
            for namespace in grid.namespaces:
                for metric_kind in grid.metrics:
                    yield family, T, namespace, metric_kind


def run_grid(manifest: CorpusManifest, grid: GridSpec = GridSpec(), root=None,
             workdir=None, n_jobs: int = 1,
             lmnn_cfg: LmnnConfig = LmnnConfig(),
             out_path=None, progress=None) -> list[EvalReport]:
    """Evaluate every (feature, T, metric, namespace) cell of the grid.

    Reports go to JSON lines at out_path as they complete (written
    atomically via temp + rename of the growing file).
    """
    item_ids = [e.path for e in manifest.entries]
    items = [IndexItem(e.path, e.path, e.metadata) for e in manifest.entries]
    reports = []
    archives: dict = {}
    for family, T, namespace, metric_kind in grid_cells(grid):
        if (family, T) not in archives:
            archives[family, T] = cached_features(manifest, family, T=T, root=root,
                                                  workdir=workdir, n_jobs=n_jobs)
        archive = archives[family, T]
        report = evaluate_features(
            archive.matrix, item_ids, manifest.labels(namespace), namespace,
            metric_kind, k=grid.k, test_fraction=grid.test_fraction,
            seed=grid.seed, lmnn_cfg=lmnn_cfg,
            descriptor=descriptor_for(family, T),
            feature_family=family, T=T,
            compress_paths=archive.paths, items=items,
        )
        reports.append(report)
        if progress is not None:
            progress(report)
        if out_path is not None:
            write_reports_jsonl(reports, out_path)
    return reports


def write_reports_jsonl(reports: list[EvalReport], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as fh:
        for r in reports:
            fh.write(json.dumps(r.to_dict()) + "\n")
    tmp.replace(path)


def reports_csv(reports: list[EvalReport]) -> str:
    """Summary table: one row per grid cell."""
    lines = ["feature,T,metric,namespace,p_at_k,k,n_test"]
    for r in reports:
        lines.append(f"{r.feature_family},{r.T:g},{r.metric_kind},"
                     f"{r.label_namespace},{r.p_at_k:.4f},{r.k},{r.n_test}")
    return "\n".join(lines) + "\n"
