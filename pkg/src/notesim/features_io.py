"""Feature archives: float32 matrices with JSON sidecars.

An archive is `<prefix>.f32` (little-endian float32, row-major) plus
`<prefix>.json` describing the feature family, its configuration hash, item
ids, and for scattering features the path descriptors and averaging scale.
Reload is bit-exact.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scattering import ScatteringPath


def config_hash(config: dict) -> str:
    """Stable short hash of a JSON-serializable configuration."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class FeatureDescriptor:
    """Provenance of a feature family: tag plus configuration hash."""

    family: str  # "scattering" | "mfcc-mean" | "mfcc40-mean" | "mfcc-poly"
    config_hash: str

    def compatible_with(self, other: "FeatureDescriptor") -> bool:
        return self == other

    def to_dict(self) -> dict:
        return {"family": self.family, "config_hash": self.config_hash}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureDescriptor":
        return cls(d["family"], d["config_hash"])


@dataclass
class FeatureArchive:
    matrix: np.ndarray  # float32 [n x d]
    descriptor: FeatureDescriptor
    item_ids: list[str]
    paths: tuple[ScatteringPath, ...] | None = None
    averaging_scale: float | None = None
    extra: dict | None = None

    def __post_init__(self):
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.float32)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.item_ids):
            raise ValueError("matrix rows must match item_ids")
        if self.paths is not None and len(self.paths) != self.matrix.shape[1]:
            raise ValueError("path list must match feature dimension")


def save_archive(prefix, archive: FeatureArchive) -> None:
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    data = archive.matrix.astype("<f4", copy=False)
    with open(prefix.with_suffix(".f32"), "wb") as fh:
        fh.write(data.tobytes(order="C"))
    sidecar = {
        "version": 1,
        "descriptor": archive.descriptor.to_dict(),
        "n_items": archive.matrix.shape[0],
        "dim": archive.matrix.shape[1],
        "item_ids": archive.item_ids,
    }
    if archive.paths is not None:
        sidecar["paths"] = [p.to_dict() for p in archive.paths]
    if archive.averaging_scale is not None:
        sidecar["averaging_scale"] = archive.averaging_scale
    if archive.extra:
        sidecar["extra"] = archive.extra
    with open(prefix.with_suffix(".json"), "w") as fh:
        json.dump(sidecar, fh)


def save_stats(path, stats, descriptor: FeatureDescriptor) -> None:
    """Compression stats sidecar: per-path medians, epsilon, path list."""
    blob = {
        "version": 1,
        "descriptor": descriptor.to_dict(),
        "epsilon": stats.epsilon,
        "medians": [float(m) for m in stats.medians],
        "paths": [p.to_dict() for p in stats.paths],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(blob, fh)


def load_stats(path):
    from .scattering import CompressionStats

    with open(path) as fh:
        blob = json.load(fh)
    if blob.get("version") != 1:
        raise ValueError(f"unsupported stats version {blob.get('version')!r}")
    paths = tuple(ScatteringPath.from_dict(p) for p in blob["paths"])
    stats = CompressionStats(np.array(blob["medians"]), blob["epsilon"], paths)
    return stats, FeatureDescriptor.from_dict(blob["descriptor"])


def load_archive(prefix) -> FeatureArchive:
    prefix = Path(prefix)
    sidecar_path = prefix.with_suffix(".json")
    data_path = prefix.with_suffix(".f32")
    if not sidecar_path.exists() or not data_path.exists():
        raise FileNotFoundError(f"missing feature archive at {prefix}")
    with open(sidecar_path) as fh:
        sidecar = json.load(fh)
    if sidecar.get("version") != 1:
        raise ValueError(f"unsupported archive version {sidecar.get('version')!r}")
    raw = np.frombuffer(data_path.read_bytes(), dtype="<f4")
    n, d = sidecar["n_items"], sidecar["dim"]
    if raw.size != n * d:
        raise ValueError("archive payload size disagrees with sidecar")
    paths = None
    if "paths" in sidecar:
        paths = tuple(ScatteringPath.from_dict(p) for p in sidecar["paths"])
    return FeatureArchive(
        matrix=raw.reshape(n, d).copy(),
        descriptor=FeatureDescriptor.from_dict(sidecar["descriptor"]),
        item_ids=list(sidecar["item_ids"]),
        paths=paths,
        averaging_scale=sidecar.get("averaging_scale"),
        extra=sidecar.get("extra"),
    )
