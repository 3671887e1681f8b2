import json

import numpy as np
import pytest

from notesim.embedding import (DisconnectedGraph, diffusion_map, markov_matrix)
from notesim.lmnn import MetricMatrix


def two_clusters(seed=0, n_per=30, separation=20.0):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n_per, 3)) + np.array([separation, 0, 0])
    b = rng.standard_normal((n_per, 3))
    return np.vstack([a, b])


class TestMarkov:
    def test_rows_sum_to_one(self):
        x = two_clusters()
        p = markov_matrix(x)
        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-10)

    def test_entries_nonnegative(self):
        p = markov_matrix(two_clusters())
        assert np.all(p >= 0)


class TestDiffusionMap:
    def test_two_cluster_sign_separation(self):
        x = two_clusters()
        emb = diffusion_map(x, n_dims=2)
        signs = np.sign(emb.coordinates[:, 0])
        first, second = signs[:30], signs[30:]
        agree = max((first > 0).mean() + (second < 0).mean(),
                    (first < 0).mean() + (second > 0).mean()) / 2
        assert agree >= 0.95

    def test_eigenvalues_in_unit_interval_and_sorted(self):
        emb = diffusion_map(two_clusters(), n_dims=5)
        assert np.all(emb.eigenvalues <= 1.0 + 1e-12)
        assert np.all(emb.eigenvalues >= 0.0)
        assert np.all(np.diff(emb.eigenvalues) <= 1e-12)

    def test_full_spectrum_minus_trivial(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((6, 2))
        emb = diffusion_map(x, n_dims=5)
        assert emb.coordinates.shape == (6, 5)

    def test_permutation_equivariance(self):
        x = two_clusters(seed=2)
        rng = np.random.default_rng(3)
        perm = rng.permutation(x.shape[0])
        base = diffusion_map(x, n_dims=2)
        permuted = diffusion_map(x[perm], n_dims=2)
        for col in range(2):
            a = base.coordinates[perm, col]
            b = permuted.coordinates[:, col]
            assert np.allclose(a, b, atol=1e-8) or np.allclose(a, -b, atol=1e-8)

    def test_deterministic_sign_convention(self):
        x = two_clusters(seed=4)
        a = diffusion_map(x, n_dims=2)
        b = diffusion_map(x, n_dims=2)
        assert np.array_equal(a.coordinates, b.coordinates)
        first_nonzero = a.coordinates[np.flatnonzero(
            np.abs(a.coordinates[:, 0]) > 1e-12)[0], 0]
        assert first_nonzero > 0

    def test_disconnected_graph_raises(self):
        x = two_clusters(separation=1e6)
        with pytest.raises(DisconnectedGraph):
            diffusion_map(x, n_dims=2, kernel_bandwidth=1.0)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            diffusion_map(np.ones((2, 2)), n_dims=2)

    def test_metric_respected(self):
        # squash the separating axis: clusters merge, first eigenvalue drops
        x = two_clusters()
        squash = MetricMatrix(np.diag([0.0, 1.0, 1.0]), "")
        plain = diffusion_map(x, n_dims=1)
        squashed = diffusion_map(x, metric=squash, n_dims=1)
        assert squashed.eigenvalues[0] < plain.eigenvalues[0]

    def test_json_export(self):
        x = two_clusters(seed=5)
        ids = [f"n{i}" for i in range(x.shape[0])]
        emb = diffusion_map(x, n_dims=2, item_ids=ids)
        records = json.loads(emb.to_json(labels={i: "lab" for i in ids}))
        assert len(records) == len(ids)
        assert set(records[0]) == {"id", "x", "y", "label"}
