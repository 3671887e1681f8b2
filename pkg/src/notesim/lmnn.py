"""Large-margin nearest-neighbor metric learning.

Learns a linear map L so the weighted distance ||L(x_i - x_j)||_2 pulls
same-class target neighbors together and pushes differently-labeled
impostors beyond a unit margin:

    loss = (1-mu) * sum_targets D2(i,j)
         + mu * sum_{targets, impostors} max(0, margin + D2(i,j) - D2(i,l))

with squared distances D2 under the current L. Target neighbors are fixed
under the plain Euclidean metric; impostors are recomputed exactly at every
loss evaluation. The solver is plain gradient descent on L with step
halving on any increase, so the accepted-loss sequence never increases.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class MetricMatrix:
    """The linear map of the learned distance; identity reproduces the
    Euclidean distance exactly."""

    entries: np.ndarray
    feature_descriptor: str
    final_loss: float | None = None

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=np.float64)
        if self.entries.ndim != 2:
            raise ValueError("metric must be a matrix")
        if self.entries.shape[0] > self.entries.shape[1]:
            raise ValueError("d_out cannot exceed d_in")
        if not np.all(np.isfinite(self.entries)):
            raise ValueError("metric entries must be finite")

    @classmethod
    def identity(cls, dim: int, feature_descriptor: str = "") -> "MetricMatrix":
        return cls(np.eye(dim), feature_descriptor)

    @property
    def d_in(self) -> int:
        return self.entries.shape[1]

    def transform(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.entries.T


@dataclass(frozen=True)
class LmnnConfig:
    n_target_neighbors: int = 3
    pull_push_weight: float = 0.5  # mu
    margin: float = 1.0
    max_iterations: int = 100
    initial_step: float | None = None  # None: auto-scale from first gradient
    step_shrink: float = 0.5
    step_grow: float = 1.1
    convergence_tol: float = 1e-7

    def __post_init__(self):
        if self.n_target_neighbors < 1:
            raise ValueError("n_target_neighbors must be positive")
        if not 0.0 < self.pull_push_weight < 1.0:
            raise ValueError("pull_push_weight must lie in (0, 1)")
        if self.margin <= 0 or self.max_iterations < 0:
            raise ValueError("margin must be positive, max_iterations >= 0")
        if not 0.0 < self.step_shrink < 1.0 or self.step_grow < 1.0:
            raise ValueError("need 0 < step_shrink < 1 <= step_grow")


@dataclass
class LabeledFeatures:
    vectors: np.ndarray
    labels: np.ndarray
    label_namespace: str = ""

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != self.labels.shape[0]:
            raise ValueError("one label per feature row required")


def target_neighbors(data: LabeledFeatures, k: int) -> list[tuple[int, int]]:
    """k nearest same-class points per row under plain Euclidean distance.

    Fixed for the whole optimization. Distance ties break toward the lower
    row index. Classes smaller than k+1 simply yield fewer pairs.
    """
    pairs: list[tuple[int, int]] = []
    x = data.vectors
    for label in np.unique(data.labels):
        members = np.flatnonzero(data.labels == label)
        if members.size < 2:
            continue
        sub = x[members]
        d2 = np.sum((sub[:, None, :] - sub[None, :, :]) ** 2, axis=2)
        np.fill_diagonal(d2, np.inf)
        for row, i in enumerate(members):
            order = np.lexsort((members, d2[row]))
            for j_local in order[: min(k, members.size - 1)]:
                pairs.append((int(i), int(members[j_local])))
    pairs.sort()
    return pairs


def _loss_grad_core(L: np.ndarray, x: np.ndarray, labels: np.ndarray,
                    targets: list[tuple[int, int]], mu: float, margin: float):
    n = x.shape[0]
    lx = x @ L.T
    sq = np.sum(lx * lx, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (lx @ lx.T), 0.0)

    weights = np.zeros((n, n))
    pull_loss = 0.0
    push_loss = 0.0
    diff_label = labels[:, None] != labels[None, :]
    for i, j in targets:
        dij = d2[i, j]
        pull_loss += dij
        weights[i, j] += 1.0 - mu
        hinge = margin + dij - d2[i]
        active = np.flatnonzero(diff_label[i] & (hinge > 0))
        if active.size:
            push_loss += float(hinge[active].sum())
            weights[i, j] += mu * active.size
            weights[i, active] -= mu

    sym = weights + weights.T
    lap = np.diag(sym.sum(axis=1)) - sym
    grad = 2.0 * L @ (x.T @ lap @ x)
    loss = (1.0 - mu) * pull_loss + mu * push_loss
    return loss, grad


def lmnn_loss_grad(L: MetricMatrix, data: LabeledFeatures,
                   targets: list[tuple[int, int]], cfg: LmnnConfig):
    """Hinge objective and its analytic gradient with respect to L.

    Impostors are found exactly under the current L on every call.
    """
    if L.d_in != data.vectors.shape[1]:
        raise ValueError("metric and feature dimensions disagree")
    return _loss_grad_core(L.entries, data.vectors, data.labels, targets,
                           cfg.pull_push_weight, cfg.margin)


def train_lmnn(data: LabeledFeatures, cfg: LmnnConfig = LmnnConfig(),
               feature_descriptor: str = "",
               loss_history: list | None = None) -> MetricMatrix:
    """Gradient descent on L from the identity; returns the best iterate.

    Accepted steps never increase the loss (step halves on an increase and
    grows mildly on acceptance). loss_history, when given, receives the
    accepted loss sequence.
    """
    if np.unique(data.labels).size < 2:
        raise ValueError("need at least 2 classes to train")
    targets = target_neighbors(data, cfg.n_target_neighbors)
    if not targets:
        raise ValueError("no pull terms: every class is a singleton")

    x = data.vectors
    L = np.eye(x.shape[1])
    loss, grad = _loss_grad_core(L, x, data.labels, targets,
                                 cfg.pull_push_weight, cfg.margin)
    if not np.isfinite(loss):
        raise ValueError("non-finite loss at identity: check feature scaling")
    if loss_history is not None:
        loss_history.append(loss)
    grad_norm = float(np.linalg.norm(grad))
    if cfg.initial_step is not None:
        step = cfg.initial_step
    else:
        step = 0.01 * np.linalg.norm(L) / (grad_norm + 1e-30)

    best_L, best_loss = L.copy(), loss
    for _ in range(cfg.max_iterations):
        if grad_norm == 0.0 or step < 1e-18:
            break
        candidate = L - step * grad
        cand_loss, cand_grad = _loss_grad_core(candidate, x, data.labels, targets,
                                               cfg.pull_push_weight, cfg.margin)
        if not np.isfinite(cand_loss):
            step *= cfg.step_shrink
            continue
        if cand_loss <= loss:
            improvement = loss - cand_loss
            L, loss, grad = candidate, cand_loss, cand_grad
            grad_norm = float(np.linalg.norm(grad))
            step *= cfg.step_grow
            if loss_history is not None:
                loss_history.append(loss)
            if loss < best_loss:
                best_L, best_loss = L.copy(), loss
            if improvement <= cfg.convergence_tol * max(abs(loss), 1.0):
                break
        else:
            step *= cfg.step_shrink
    return MetricMatrix(best_L, feature_descriptor, final_loss=float(best_loss))


def distance(L: MetricMatrix, a: np.ndarray, b: np.ndarray) -> float:
    """The weighted distance ||L(a - b)||_2."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size != L.d_in:
        raise ValueError("dimension mismatch between metric and vectors")
    return float(np.linalg.norm(L.entries @ (a - b)))


def save_metric(prefix, metric: MetricMatrix, config: LmnnConfig | None = None) -> None:
    """Metric file: JSON header plus little-endian float32 matrix."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "version": 1,
        "d_out": metric.entries.shape[0],
        "d_in": metric.entries.shape[1],
        "feature_descriptor": metric.feature_descriptor,
        "final_loss": metric.final_loss,
    }
    if config is not None:
        header["config"] = {
            "n_target_neighbors": config.n_target_neighbors,
            "pull_push_weight": config.pull_push_weight,
            "margin": config.margin,
            "max_iterations": config.max_iterations,
        }
    with open(prefix.with_suffix(".json"), "w") as fh:
        json.dump(header, fh)
    with open(prefix.with_suffix(".f32"), "wb") as fh:
        fh.write(metric.entries.astype("<f4").tobytes(order="C"))


def load_metric(prefix) -> MetricMatrix:
    prefix = Path(prefix)
    with open(prefix.with_suffix(".json")) as fh:
        header = json.load(fh)
    raw = np.frombuffer(prefix.with_suffix(".f32").read_bytes(), dtype="<f4")
    entries = raw.reshape(header["d_out"], header["d_in"]).astype(np.float64)
    return MetricMatrix(entries, header["feature_descriptor"],
                        final_loss=header.get("final_loss"))
