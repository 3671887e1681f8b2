"""Shared test fixtures-as-code: canonical instances and independent oracles."""

import numpy as np

from notesim.lmnn import LabeledFeatures


def noisy_axis_instance(seed, n_per_class=30, noise_scale=60.0, separation=1.5):
    """Two Gaussian classes separated along axis 0; axis 1 is pure noise
    scaled far above the signal. Euclidean 1-NN flounders, a learned metric
    that de-weights axis 1 does not."""
    rng = np.random.default_rng(seed)
    a = np.stack([rng.normal(-separation, 1.0, n_per_class),
                  rng.normal(0.0, noise_scale, n_per_class)], axis=1)
    b = np.stack([rng.normal(+separation, 1.0, n_per_class),
                  rng.normal(0.0, noise_scale, n_per_class)], axis=1)
    x = np.vstack([a, b])
    labels = np.array([0] * n_per_class + [1] * n_per_class)
    return LabeledFeatures(x, labels)


def accuracy_1nn(train: LabeledFeatures, test: LabeledFeatures,
                 metric_entries: np.ndarray) -> float:
    lx_train = train.vectors @ metric_entries.T
    lx_test = test.vectors @ metric_entries.T
    d = np.linalg.norm(lx_test[:, None, :] - lx_train[None, :, :], axis=2)
    pred = train.labels[np.argmin(d, axis=1)]
    return float(np.mean(pred == test.labels))


def linear_scan_oracle(vectors, metric_entries, q, k, tie_lower_index=True):
    """Independent k-NN oracle: per-row distance formula, python sort.

    Deliberately avoids the index's pre-transformed cache: the metric is
    applied to each difference vector directly.
    """
    import math

    scored = []
    for row_idx in range(vectors.shape[0]):
        diff = q - vectors[row_idx]
        mapped = metric_entries @ diff if metric_entries is not None else diff
        scored.append((math.sqrt(float(np.dot(mapped, mapped))), row_idx))
    scored.sort(key=lambda t: (t[0], t[1]))
    return scored[:k]
