"""Serving state and the query-time feature pipeline.

A persisted index directory holds everything a query needs: compressed
feature vectors, items, the optional learned metric, the compression stats
frozen at training time, and the extraction configuration. Uploaded audio is
resampled, scattered at the index's averaging scale, and compressed with the
training-corpus medians; medians are corpus-level statistics and are never
refit per query.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .audio import Waveform, load_wav, resample
from .corpus import CorpusManifest
from .features_io import load_stats, save_stats
from .knn import IndexItem, QueryResult, RetrievalIndex, build_index, load_index, query, save_index
from .lmnn import MetricMatrix
from .scattering import (CompressionStats, build_filterbank,
                         default_first_order, default_second_order,
                         fit_compression_matrix, log_compress_matrix,
                         scalogram, scatter)


@dataclass
class ServiceState:
    """Read-only artifacts backing the CLI query command and the HTTP API."""

    index: RetrievalIndex
    stats: CompressionStats | None
    config: dict
    audio_root: Path

    def __post_init__(self):
        if self.stats is not None and len(self.stats.paths) != self.index.vectors.shape[1]:
            raise ValueError("compression stats and index dimensions disagree")

    @property
    def sample_rate(self) -> int:
        return int(self.config.get("sample_rate", 22050))

    @property
    def averaging_scale(self) -> float:
        return float(self.config.get("T", 1.0))


def build_index_dir(out_dir, matrix_raw: np.ndarray, manifest: CorpusManifest,
                    descriptor, paths=None, metric: MetricMatrix | None = None,
                    stats: CompressionStats | None = None, config: dict | None = None,
                    audio_root=None) -> None:
    """Compress (scattering only), wrap, and persist a retrieval index."""
    config = dict(config or {})
    if audio_root is not None:
        config["audio_root"] = str(Path(audio_root).resolve())
    if paths is not None:
        if stats is None:
            stats = fit_compression_matrix(np.asarray(matrix_raw, dtype=np.float64), paths)
        matrix = log_compress_matrix(np.asarray(matrix_raw, dtype=np.float64), stats)
    else:
        matrix = np.asarray(matrix_raw, dtype=np.float64)
    items = [IndexItem(e.path, e.path, e.metadata) for e in manifest.entries]
    idx = build_index(matrix, items, descriptor, metric)
    save_index(out_dir, idx, extra_config=config)
    if stats is not None:
        save_stats(Path(out_dir) / "stats.json", stats, descriptor)


def load_state(index_dir, audio_root=None) -> ServiceState:
    index_dir = Path(index_dir)
    idx, config = load_index(index_dir)
    stats = None
    stats_path = index_dir / "stats.json"
    if stats_path.exists():
        stats, stats_descriptor = load_stats(stats_path)
        if stats_descriptor != idx.descriptor:
            raise ValueError("stats descriptor does not match the index")
    root = Path(audio_root or config.get("audio_root", "."))
    return ServiceState(index=idx, stats=stats, config=config, audio_root=root)


def featurize_waveform(state: ServiceState, w: Waveform) -> np.ndarray:
    """Uploaded-audio pipeline: resample, scatter at the index's T, compress
    with the frozen training medians."""
    if state.config.get("feature_family", "scattering") != "scattering":
        raise ValueError("query-by-upload requires a scattering index")
    w = resample(w, state.sample_rate)
    vec = scatter(w, T=state.averaging_scale,
                  cfg1=default_first_order(state.sample_rate),
                  cfg2=default_second_order(state.sample_rate))
    if state.stats is None:
        raise ValueError("index has no compression stats; rebuild it")
    return log_compress_matrix(vec.values[None, :], state.stats)[0]


def query_by_waveform(state: ServiceState, w: Waveform, k: int) -> QueryResult:
    return query(state.index, featurize_waveform(state, w), k)


def query_by_item(state: ServiceState, item_id: str, k: int,
                  exclude_self: bool = True) -> QueryResult:
    vec = state.index.vector_for(item_id)
    exclude = (item_id,) if exclude_self else ()
    return query(state.index, vec, k, exclude_ids=exclude)


def item_waveform(state: ServiceState, item_id: str) -> Waveform:
    item = state.index.item(item_id)
    return load_wav(state.audio_root / item.source_path)


def render_scalogram_png(w: Waveform, min_height: int = 256,
                         hop: float = 0.005) -> bytes:
    """Grayscale constant-Q scalogram, log-frequency axis, low bands at the
    bottom. Deterministic for a fixed waveform and config."""
    fb = build_filterbank(default_first_order(w.sample_rate))
    scal = scalogram(w, fb, hop=hop)
    mag = scal.magnitudes
    peak = float(mag.max())
    if peak <= 0:
        img = np.zeros_like(mag)
    else:
        img = np.log1p(mag / (1e-3 * peak)) / np.log1p(1e3)
    pixels = (np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)[::-1, :]
    image = Image.fromarray(pixels, mode="L")
    if image.height < min_height:
        scale = -(-min_height // image.height)
        image = image.resize((image.width, image.height * scale), Image.NEAREST)
    buf = io.BytesIO()
    image.save(buf, format="PNG")
    return buf.getvalue()
