"""Diffusion-map embedding of feature spaces for visualization.

Pairwise distances (optionally under a learned metric) feed a Gaussian
kernel; row normalization yields a Markov matrix whose leading nontrivial
eigenvectors, scaled by eigenvalue^t, give the diffusion coordinates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import pdist, squareform

from .lmnn import MetricMatrix


class DisconnectedGraph(ValueError):
    """Kernel graph split into components at the chosen bandwidth."""


@dataclass
class Embedding:
    coordinates: np.ndarray  # [n x m]
    eigenvalues: np.ndarray  # m values in (0, 1], non-increasing
    item_ids: list[str]

    def __post_init__(self):
        if self.coordinates.shape != (len(self.item_ids), self.eigenvalues.size):
            raise ValueError("coordinates must be [n_items x n_dims]")
        if not np.all(np.isfinite(self.coordinates)):
            raise ValueError("coordinates must be finite")
        if np.any(np.diff(self.eigenvalues) > 1e-12):
            raise ValueError("eigenvalues must be non-increasing")

    def to_records(self, labels: dict[str, str] | None = None) -> list[dict]:
        records = []
        for i, item_id in enumerate(self.item_ids):
            rec = {"id": item_id,
                   "x": float(self.coordinates[i, 0]),
                   "y": float(self.coordinates[i, 1]) if self.coordinates.shape[1] > 1 else 0.0}
            if labels is not None:
                rec["label"] = labels.get(item_id, "")
            records.append(rec)
        return records

    def to_json(self, labels: dict[str, str] | None = None) -> str:
        return json.dumps(self.to_records(labels))


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Deterministic orientation: first non-negligible entry positive."""
    out = vectors.copy()
    for col in range(out.shape[1]):
        v = out[:, col]
        nz = np.flatnonzero(np.abs(v) > 1e-12 * max(np.abs(v).max(), 1e-300))
        if nz.size and v[nz[0]] < 0:
            out[:, col] = -v
    return out


def diffusion_map(vectors: np.ndarray, metric: MetricMatrix | None = None,
                  n_dims: int = 2, kernel_bandwidth: float | None = None,
                  diffusion_time: float = 1.0,
                  item_ids: list[str] | None = None) -> Embedding:
    """Embed rows of `vectors` into n_dims diffusion coordinates.

    kernel_bandwidth defaults to the median pairwise distance (self-tuning
    heuristic). The trivial constant eigenvector is excluded. Raises
    DisconnectedGraph when the kernel graph falls apart at this bandwidth
    rather than silently embedding islands.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    n = vectors.shape[0]
    if n < n_dims + 1:
        raise ValueError("need at least n_dims + 1 points")
    if item_ids is None:
        item_ids = [str(i) for i in range(n)]
    x = metric.transform(vectors) if metric is not None else vectors
    dists = squareform(pdist(x))
    if kernel_bandwidth is None:
        off_diag = dists[np.triu_indices(n, k=1)]
        kernel_bandwidth = float(np.median(off_diag))
        if kernel_bandwidth == 0.0:
            kernel_bandwidth = 1.0
    if kernel_bandwidth <= 0:
        raise ValueError("kernel_bandwidth must be positive")

    w = np.exp(-(dists ** 2) / kernel_bandwidth ** 2)
    adjacency = w > 1e-12
    n_comp, _ = connected_components(adjacency, directed=False)
    if n_comp > 1:
        raise DisconnectedGraph(
            f"kernel graph has {n_comp} components at bandwidth {kernel_bandwidth:g}"
        )

    deg = w.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(deg)
    sym = w * inv_sqrt[:, None] * inv_sqrt[None, :]
    # symmetric conjugate of the Markov matrix: same spectrum, stable solve
    eigvals, eigvecs = eigh(sym)
    order = np.argsort(eigvals)[::-1]
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]
    eigvals = np.clip(eigvals, 0.0, 1.0)

    # drop the trivial eigenpair (eigenvalue 1, constant right eigenvector)
    keep = slice(1, 1 + n_dims)
    right = eigvecs[:, keep] * inv_sqrt[:, None]
    right /= np.linalg.norm(right, axis=0, keepdims=True)
    right = _fix_signs(right)
    coords = right * (eigvals[keep] ** diffusion_time)[None, :]
    return Embedding(coords, eigvals[keep], list(item_ids))


def markov_matrix(vectors: np.ndarray, metric: MetricMatrix | None = None,
                  kernel_bandwidth: float | None = None) -> np.ndarray:
    """Row-normalized Gaussian kernel (exposed for verification)."""
    vectors = np.asarray(vectors, dtype=np.float64)
    x = metric.transform(vectors) if metric is not None else vectors
    dists = squareform(pdist(x))
    if kernel_bandwidth is None:
        off_diag = dists[np.triu_indices(vectors.shape[0], k=1)]
        kernel_bandwidth = float(np.median(off_diag)) or 1.0
    w = np.exp(-(dists ** 2) / kernel_bandwidth ** 2)
    return w / w.sum(axis=1, keepdims=True)
