import numpy as np
import pytest

from notesim.evaluate import (EvalReport, GridSpec, evaluate_features,
                              grid_cells, precision_at_k, reports_csv,
                              run_grid, stratified_split, write_reports_jsonl)
from notesim.features_io import FeatureDescriptor
from notesim.knn import QueryResult

DESC = FeatureDescriptor("mfcc-mean", "feedface0000")


class TestStratifiedSplit:
    def test_proportional_per_class(self):
        labels = ["a"] * 5 + ["b"] * 5
        train, test = stratified_split(labels, 0.2, seed=0)
        assert len(test) == 2
        test_labels = [labels[i] for i in test]
        assert sorted(test_labels) == ["a", "b"]

    def test_singleton_goes_to_train(self):
        labels = ["a"] * 5 + ["solo"]
        train, test = stratified_split(labels, 0.9, seed=0)
        assert 5 in train

    def test_deterministic(self):
        labels = list("aabbbccccdd")
        a = stratified_split(labels, 0.3, seed=7)
        b = stratified_split(labels, 0.3, seed=7)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_different_seed_differs(self):
        labels = ["a"] * 50 + ["b"] * 50
        a = stratified_split(labels, 0.3, seed=1)
        b = stratified_split(labels, 0.3, seed=2)
        assert not np.array_equal(a[1], b[1])

    def test_partition(self):
        labels = list("aaabbbbcc")
        train, test = stratified_split(labels, 0.4, seed=3)
        assert sorted(list(train) + list(test)) == list(range(9))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            stratified_split([], 0.2, seed=0)
        with pytest.raises(ValueError):
            stratified_split(["a"], 1.5, seed=0)


class TestPrecisionAtK:
    def _result(self, ids):
        return QueryResult(tuple((i, float(n)) for n, i in enumerate(ids)), DESC)

    def test_all_correct(self):
        r = self._result(["a", "b", "c", "d", "e"])
        labels = {i: "X" for i in "abcde"}
        assert precision_at_k(r, "X", labels, 5) == 1.0

    def test_two_of_five(self):
        r = self._result(["a", "b", "c", "d", "e"])
        labels = {"a": "X", "b": "Y", "c": "X", "d": "Y", "e": "Y"}
        assert precision_at_k(r, "X", labels, 5) == pytest.approx(0.4)

    def test_namespace_semantics(self):
        # instrument namespace counts any violin as correct regardless of technique
        r = self._result(["v1", "v2"])
        instrument_labels = {"v1": "Vn", "v2": "Vn"}
        technique_labels = {"v1": "tremolo", "v2": "ordinario"}
        assert precision_at_k(r, "Vn", instrument_labels, 2) == 1.0
        assert precision_at_k(r, "ordinario", technique_labels, 2) == 0.5

    def test_too_few_entries(self):
        r = self._result(["a"])
        with pytest.raises(ValueError):
            precision_at_k(r, "X", {"a": "X"}, 5)

    def test_label_bijection_invariance(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((40, 3))
        labels = [f"c{i % 4}" for i in range(40)]
        ids = [f"i{i}" for i in range(40)]
        base = evaluate_features(x, ids, labels, "technique", "euclidean",
                                 k=3, seed=5)
        remap = {f"c{i}": f"z{9 - i}" for i in range(4)}
        relabeled = [remap[l] for l in labels]
        again = evaluate_features(x, ids, relabeled, "technique", "euclidean",
                                  k=3, seed=5)
        assert again.p_at_k == base.p_at_k


class TestEvaluateFeatures:
    def _clustered(self, seed=0, n_per=12, n_classes=3, spread=0.3):
        rng = np.random.default_rng(seed)
        centers = rng.standard_normal((n_classes, 4)) * 5
        x = np.vstack([centers[c] + spread * rng.standard_normal((n_per, 4))
                       for c in range(n_classes)])
        labels = [f"c{c}" for c in range(n_classes) for _ in range(n_per)]
        ids = [f"i{i}" for i in range(len(labels))]
        return x, ids, labels

    def test_tight_clusters_score_one(self):
        x, ids, labels = self._clustered()
        report = evaluate_features(x, ids, labels, "technique", "euclidean", k=3)
        assert report.p_at_k == 1.0
        assert set(report.per_class) == {"c0", "c1", "c2"}
        assert report.n_train + report.n_test == len(ids)

    def test_identity_metric_equals_euclidean(self):
        x, ids, labels = self._clustered(spread=3.0)
        a = evaluate_features(x, ids, labels, "technique", "euclidean", k=5)
        from notesim.lmnn import LmnnConfig

        b = evaluate_features(x, ids, labels, "technique", "lmnn", k=5,
                              lmnn_cfg=LmnnConfig(max_iterations=0))
        assert a.p_at_k == b.p_at_k
        assert a.per_class == b.per_class

    def test_duplicated_class_vectors_give_perfect_precision(self):
        # a query exactly duplicating k same-class train vectors scores 1
        x = np.vstack([np.tile([1.0, 2.0], (8, 1)),
                       np.tile([50.0, 50.0], (8, 1))])
        labels = ["dup"] * 8 + ["far"] * 8
        ids = [f"i{i}" for i in range(16)]
        report = evaluate_features(x, ids, labels, "technique", "euclidean",
                                   k=3, test_fraction=0.25)
        assert report.per_class["dup"] == 1.0


class TestGrid:
    def test_grid_cells_enumeration(self):
        grid = GridSpec(features=("mfcc13", "scattering"), T_sweep=(0.025, 1.0),
                        metrics=("euclidean",), namespaces=("technique",))
        cells = list(grid_cells(grid))
        assert ("mfcc13", 0.025, "technique", "euclidean") in cells
        assert ("scattering", 1.0, "technique", "euclidean") in cells
        # mfcc does not sweep T
        assert ("mfcc13", 1.0, "technique", "euclidean") not in cells
        assert len(cells) == 3

    def test_report_roundtrip_and_csv(self, tmp_path):
        report = EvalReport("technique", "mfcc13", DESC.to_dict(), 0.025,
                            "euclidean", 0.75, 5, {"a": 0.5}, 42, 32, 8)
        write_reports_jsonl([report], tmp_path / "r.jsonl")
        import json

        lines = (tmp_path / "r.jsonl").read_text().splitlines()
        assert EvalReport.from_dict(json.loads(lines[0])) == report
        csv = reports_csv([report])
        assert csv.splitlines()[0].startswith("feature,")
        assert "mfcc13,0.025,euclidean,technique,0.7500" in csv
