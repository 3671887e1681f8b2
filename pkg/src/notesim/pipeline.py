"""Corpus-to-feature plumbing shared by the evaluation grid, CLI, and server.

Feature extraction is the slow step, so raw (uncompressed) feature matrices
are cached as archives keyed by feature family, configuration, and corpus
content. Compression stats and metrics are always fit downstream on train
subsets, never cached with the features.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .audio import CANONICAL_RATE, Waveform, load_wav, resample
from .corpus import CorpusManifest
from .features_io import (FeatureArchive, FeatureDescriptor, config_hash,
                          load_archive, save_archive)
from .mfcc import MfccConfig, mfcc, summarize_mean, summarize_poly
from .scattering import (default_first_order, default_second_order,
                         scatter_batch, scattering_paths, build_filterbank)

FEATURE_FAMILIES = ("mfcc13", "mfcc40", "mfcc-poly", "scattering")


def load_corpus_waveforms(manifest: CorpusManifest, root=None,
                          sample_rate: int = CANONICAL_RATE,
                          n_jobs: int = 1) -> list[Waveform]:
    """Load and resample every manifest entry to the canonical rate."""
    root = Path(root if root is not None else manifest.root)

    def _one(rel):
        return resample(load_wav(root / rel), sample_rate)

    rels = [e.path for e in manifest.entries]
    if n_jobs == 1:
        return [_one(r) for r in rels]
    return Parallel(n_jobs=n_jobs, batch_size=32)(delayed(_one)(r) for r in rels)


def feature_config(family: str, T: float = 1.0,
                   sample_rate: int = CANONICAL_RATE) -> dict:
    if family == "scattering":
        cfg1, cfg2 = default_first_order(sample_rate), default_second_order(sample_rate)
        return {
            "family": "scattering", "sample_rate": sample_rate, "T": T,
            "q1": cfg1.bins_per_octave, "f_min": cfg1.f_min, "f_max": cfg1.f_max,
            "q2": cfg2.bins_per_octave, "f2_min": cfg2.f_min, "f2_max": cfg2.f_max,
        }
    if family in ("mfcc13", "mfcc40"):
        n = 13 if family == "mfcc13" else 40
        return {"family": "mfcc-mean", "sample_rate": sample_rate,
                "n_mel_bands": 40, "n_coeffs": n,
                "frame_length": 0.025, "hop": 0.010}
    if family == "mfcc-poly":
        return {"family": "mfcc-poly", "sample_rate": sample_rate,
                "n_mel_bands": 40, "n_coeffs": 13,
                "frame_length": 0.025, "hop": 0.010, "max_degree": 3}
    raise ValueError(f"unknown feature family {family!r}")


def descriptor_for(family: str, T: float = 1.0,
                   sample_rate: int = CANONICAL_RATE) -> FeatureDescriptor:
    cfg = feature_config(family, T, sample_rate)
    return FeatureDescriptor(cfg["family"], config_hash(cfg))


def extract_features(family: str, waves: list[Waveform], T: float = 1.0,
                     n_jobs: int = 1):
    """Raw feature matrix for one family; returns (matrix, paths | None).

    Scattering matrices are uncompressed; apply the corpus-fit
    quasi-logarithmic compression downstream.
    """
    sr = waves[0].sample_rate
    if family == "scattering":
        return scatter_batch(waves, T=T, n_jobs=n_jobs)
    cfg = feature_config(family, T, sr)
    mfcc_cfg = MfccConfig(n_mel_bands=cfg["n_mel_bands"], n_coeffs=cfg["n_coeffs"],
                          frame_length=cfg["frame_length"], hop=cfg["hop"])

    if family in ("mfcc13", "mfcc40"):
        def _one(w):
            return summarize_mean(mfcc(w, mfcc_cfg))
    else:
        def _one(w):
            return summarize_poly(mfcc(w, mfcc_cfg), max_degree=cfg["max_degree"])

    if n_jobs == 1:
        rows = [_one(w) for w in waves]
    else:
        rows = Parallel(n_jobs=n_jobs, batch_size=32)(delayed(_one)(w) for w in waves)
    return np.vstack(rows), None


def corpus_fingerprint(manifest: CorpusManifest) -> str:
    return config_hash({"checksums": [e.checksum for e in manifest.entries]})


def cached_features(manifest: CorpusManifest, family: str, T: float = 1.0,
                    root=None, workdir=None, n_jobs: int = 1,
                    sample_rate: int = CANONICAL_RATE) -> FeatureArchive:
    """Extract (or reload) the raw feature archive for a whole manifest."""
    descriptor = descriptor_for(family, T, sample_rate)
    item_ids = [e.path for e in manifest.entries]
    prefix = None
    if workdir is not None:
        tag = f"{family}_T{int(round(T * 1000))}ms" if family == "scattering" else family
        prefix = Path(workdir) / "features" / f"{tag}_{corpus_fingerprint(manifest)[:8]}"
        try:
            archive = load_archive(prefix)
            if archive.descriptor == descriptor and archive.item_ids == item_ids:
                return archive
        except (FileNotFoundError, ValueError):
            pass
    waves = load_corpus_waveforms(manifest, root=root, sample_rate=sample_rate,
                                  n_jobs=n_jobs)
    matrix, paths = extract_features(family, waves, T=T, n_jobs=n_jobs)
    archive = FeatureArchive(
        matrix=matrix.astype(np.float32), descriptor=descriptor,
        item_ids=item_ids, paths=paths,
        averaging_scale=T if family == "scattering" else None,
        extra={"grid_family": family},
    )
    if prefix is not None:
        save_archive(prefix, archive)
    return archive
