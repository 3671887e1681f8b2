import numpy as np
import pytest

from notesim.features_io import (FeatureArchive, FeatureDescriptor,
                                 config_hash, load_archive, save_archive)
from notesim.scattering import ScatteringPath


class TestConfigHash:
    def test_stable_and_order_insensitive(self):
        a = config_hash({"x": 1, "y": [1, 2]})
        b = config_hash({"y": [1, 2], "x": 1})
        assert a == b and len(a) == 12

    def test_distinguishes_configs(self):
        assert config_hash({"x": 1}) != config_hash({"x": 2})


class TestArchive:
    def _archive(self):
        rng = np.random.default_rng(0)
        paths = (ScatteringPath(1, 100.0), ScatteringPath(2, 100.0, 8.0))
        return FeatureArchive(
            matrix=rng.standard_normal((5, 2)).astype(np.float32),
            descriptor=FeatureDescriptor("scattering", "abc123def456"),
            item_ids=[f"i{i}" for i in range(5)],
            paths=paths,
            averaging_scale=1.0,
        )

    def test_bit_exact_roundtrip(self, tmp_path):
        archive = self._archive()
        save_archive(tmp_path / "f", archive)
        back = load_archive(tmp_path / "f")
        assert np.array_equal(back.matrix, archive.matrix)
        assert back.matrix.dtype == np.float32
        assert back.descriptor == archive.descriptor
        assert back.item_ids == archive.item_ids
        assert back.paths == archive.paths
        assert back.averaging_scale == 1.0

    def test_missing_archive(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_archive(tmp_path / "nothing")

    def test_corrupt_payload_detected(self, tmp_path):
        archive = self._archive()
        save_archive(tmp_path / "f", archive)
        (tmp_path / "f.f32").write_bytes(b"\x00" * 12)
        with pytest.raises(ValueError, match="size"):
            load_archive(tmp_path / "f")

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            FeatureArchive(np.zeros((2, 2), dtype=np.float32),
                           FeatureDescriptor("x", "y"), ["only-one"])
