"""Command-line interface.

Subcommands map one-to-one onto package operations: synth, scan, extract,
fit-compress, train-metric, build-index, evaluate, embed, query, serve.
Every error exits non-zero with a message on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="notesim",
                                     description="query-by-example retrieval for instrumental notes")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render the synthetic labeled corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--limit", type=int, help="render only the first N notes")

    p = sub.add_parser("scan", help="scan a corpus directory into a manifest")
    p.add_argument("--root", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv-dir", help="also write per-namespace histogram CSVs")

    p = sub.add_parser("extract", help="extract a feature archive")
    p.add_argument("--manifest", required=True)
    p.add_argument("--root", help="audio root (defaults to manifest root)")
    p.add_argument("--features", default="scattering",
                   choices=["scattering", "mfcc13", "mfcc40", "mfcc-poly"])
    p.add_argument("--T", type=float, default=1.0, dest="T")
    p.add_argument("--out", required=True, help="archive prefix")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("fit-compress", help="fit quasi-log compression stats")
    p.add_argument("--archive", required=True)
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument("--out", required=True, help="stats JSON path")

    p = sub.add_parser("train-metric", help="train the large-margin metric")
    p.add_argument("--archive", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--stats", help="compression stats JSON (scattering archives)")
    p.add_argument("--namespace", default="technique",
                   choices=["instrument", "technique"])
    p.add_argument("--neighbors", type=int, default=3)
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--out", required=True, help="metric prefix")

    p = sub.add_parser("build-index", help="build and persist a retrieval index")
    p.add_argument("--archive", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--root", help="audio root stored for serving")
    p.add_argument("--metric", help="metric prefix (omit for Euclidean)")
    p.add_argument("--stats", help="reuse existing stats instead of refitting")
    p.add_argument("--out", required=True, help="index directory")

    p = sub.add_parser("evaluate", help="run evaluation grid cells")
    p.add_argument("--manifest", required=True)
    p.add_argument("--root")
    p.add_argument("--features", default="scattering",
                   help="comma list: scattering,mfcc13,mfcc40,mfcc-poly")
    p.add_argument("--T", default="1.0", dest="T", help="comma list of seconds")
    p.add_argument("--metric", default="lmnn", help="comma list: euclidean,lmnn")
    p.add_argument("--namespace", default="technique",
                   help="comma list: instrument,technique")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--workdir", help="feature archive cache directory")
    p.add_argument("--out", required=True, help="report JSONL path")
    p.add_argument("--csv", help="also write the summary CSV")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("embed", help="export 2-D diffusion coordinates")
    p.add_argument("--index", required=True)
    p.add_argument("--namespace", default="technique",
                   choices=["instrument", "technique"])
    p.add_argument("--filter", help="e.g. instrument:SyA|SyB")
    p.add_argument("--dims", type=int, default=2)
    p.add_argument("--out", required=True)

    p = sub.add_parser("query", help="query an index with an audio file or item id")
    p.add_argument("--index", required=True)
    p.add_argument("--input", help="WAV file to use as the query")
    p.add_argument("--item", help="indexed item id to use as the query")
    p.add_argument("--root", help="audio root override")
    p.add_argument("--k", type=int, default=5)

    p = sub.add_parser("serve", help="serve the HTTP API")
    p.add_argument("--index", required=True)
    p.add_argument("--root", help="audio root override")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--ui", help="static UI directory to mount at /ui")
    p.add_argument("--max-upload-seconds", type=float, default=30.0)

    return parser


def _cmd_synth(args) -> int:
    from .audio import default_corpus_specs, synthesize_corpus

    specs = default_corpus_specs(seed=args.seed)
    if args.limit:
        specs = specs[: args.limit]
    entries = synthesize_corpus(args.out, seed=args.seed, specs=specs,
                                n_jobs=args.jobs)
    print(f"wrote {len(entries)} notes to {args.out}")
    return 0


def _cmd_scan(args) -> int:
    from .corpus import scan_corpus

    manifest = scan_corpus(args.root)
    manifest.save(args.out)
    if args.csv_dir:
        csv_dir = Path(args.csv_dir)
        csv_dir.mkdir(parents=True, exist_ok=True)
        for ns in ("instrument", "technique"):
            (csv_dir / f"{ns}_histogram.csv").write_text(manifest.histogram_csv(ns))
    print(f"scanned {len(manifest.entries)} notes "
          f"({len(manifest.skipped)} skipped) -> {args.out}")
    return 0


def _load_manifest(path):
    from .corpus import CorpusManifest

    if not Path(path).exists():
        raise FileNotFoundError(f"missing manifest {path}")
    return CorpusManifest.load(path)


def _cmd_extract(args) -> int:
    from .features_io import FeatureArchive, save_archive
    from .pipeline import (descriptor_for, extract_features,
                           load_corpus_waveforms)

    manifest = _load_manifest(args.manifest)
    waves = load_corpus_waveforms(manifest, root=args.root, n_jobs=args.jobs)
    matrix, paths = extract_features(args.features, waves, T=args.T, n_jobs=args.jobs)
    archive = FeatureArchive(
        matrix=matrix.astype(np.float32),
        descriptor=descriptor_for(args.features, args.T),
        item_ids=[e.path for e in manifest.entries],
        paths=paths,
        averaging_scale=args.T if args.features == "scattering" else None,
        extra={"grid_family": args.features},
    )
    save_archive(args.out, archive)
    print(f"extracted {matrix.shape[0]}x{matrix.shape[1]} {args.features} -> {args.out}")
    return 0


def _load_archive_or_fail(prefix):
    from .features_io import load_archive

    try:
        return load_archive(prefix)
    except FileNotFoundError:
        raise FileNotFoundError(f"missing feature archive at {prefix}; run extract first")


def _cmd_fit_compress(args) -> int:
    from .features_io import save_stats
    from .scattering import fit_compression_matrix

    archive = _load_archive_or_fail(args.archive)
    if archive.paths is None:
        raise ValueError("compression stats apply to scattering archives only")
    stats = fit_compression_matrix(archive.matrix.astype(np.float64),
                                   archive.paths, epsilon=args.epsilon)
    save_stats(args.out, stats, archive.descriptor)
    print(f"fit medians over {archive.matrix.shape[0]} vectors -> {args.out}")
    return 0


def _compressed_matrix(archive, stats_path):
    from .features_io import load_stats
    from .scattering import fit_compression_matrix, log_compress_matrix

    matrix = archive.matrix.astype(np.float64)
    if archive.paths is None:
        return matrix, None
    if stats_path:
        stats, descriptor = load_stats(stats_path)
        if descriptor != archive.descriptor:
            raise ValueError("stats were fit for a different feature config")
    else:
        stats = fit_compression_matrix(matrix, archive.paths)
    return log_compress_matrix(matrix, stats), stats


def _cmd_train_metric(args) -> int:
    from .lmnn import LabeledFeatures, LmnnConfig, save_metric, train_lmnn

    archive = _load_archive_or_fail(args.archive)
    manifest = _load_manifest(args.manifest)
    if [e.path for e in manifest.entries] != archive.item_ids:
        raise ValueError("manifest and archive cover different items")
    matrix, _ = _compressed_matrix(archive, args.stats)
    labels = np.asarray(manifest.labels(args.namespace))
    cfg = LmnnConfig(n_target_neighbors=args.neighbors,
                     max_iterations=args.iterations)
    metric = train_lmnn(LabeledFeatures(matrix, labels, args.namespace), cfg,
                        feature_descriptor=archive.descriptor.config_hash)
    save_metric(args.out, metric, cfg)
    print(f"trained metric on {matrix.shape[0]} items "
          f"(final loss {metric.final_loss:.4f}) -> {args.out}")
    return 0


def _cmd_build_index(args) -> int:
    from .features_io import load_stats
    from .lmnn import load_metric
    from .service import build_index_dir

    archive = _load_archive_or_fail(args.archive)
    manifest = _load_manifest(args.manifest)
    if [e.path for e in manifest.entries] != archive.item_ids:
        raise ValueError("manifest and archive cover different items")
    metric = load_metric(args.metric) if args.metric else None
    stats = None
    if args.stats:
        stats, descriptor = load_stats(args.stats)
        if descriptor != archive.descriptor:
            raise ValueError("stats were fit for a different feature config")
    config = {
        "feature_family": archive.extra.get("grid_family", archive.descriptor.family)
        if archive.extra else archive.descriptor.family,
        "T": archive.averaging_scale or 0.025,
        "sample_rate": 22050,
    }
    build_index_dir(args.out, archive.matrix.astype(np.float64), manifest,
                    archive.descriptor, paths=archive.paths, metric=metric,
                    stats=stats, config=config,
                    audio_root=args.root or manifest.root)
    print(f"indexed {len(manifest.entries)} items -> {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    from .evaluate import GridSpec, reports_csv, run_grid
    from .lmnn import LmnnConfig

    manifest = _load_manifest(args.manifest)
    grid = GridSpec(
        features=tuple(args.features.split(",")),
        T_sweep=tuple(float(t) for t in args.T.split(",")),
        metrics=tuple(args.metric.split(",")),
        namespaces=tuple(args.namespace.split(",")),
        k=args.k,
        test_fraction=args.test_fraction,
        seed=args.seed,
    )
    reports = run_grid(manifest, grid, root=args.root, workdir=args.workdir,
                       n_jobs=args.jobs,
                       lmnn_cfg=LmnnConfig(max_iterations=args.iterations),
                       out_path=args.out,
                       progress=lambda r: print(
                           f"  {r.feature_family} T={r.T:g} {r.metric_kind} "
                           f"{r.label_namespace}: P@{r.k} = {r.p_at_k:.3f}"))
    if args.csv:
        Path(args.csv).write_text(reports_csv(reports))
    print(f"wrote {len(reports)} reports -> {args.out}")
    return 0


def _cmd_embed(args) -> int:
    from .embedding import diffusion_map
    from .server import _parse_filter
    from .service import load_state

    state = load_state(args.index)
    selector = _parse_filter(args.filter)
    rows, ids, labels = [], [], {}
    for row, item in enumerate(state.index.items):
        if selector is not None and item.metadata.label(selector[0]) not in selector[1]:
            continue
        rows.append(row)
        ids.append(item.item_id)
        labels[item.item_id] = item.metadata.label(args.namespace)
    emb = diffusion_map(state.index.vectors[rows], metric=state.index.metric,
                        n_dims=args.dims, item_ids=ids)
    Path(args.out).write_text(emb.to_json(labels))
    print(f"embedded {len(ids)} items -> {args.out}")
    return 0


def _cmd_query(args) -> int:
    from .audio import load_wav
    from .service import load_state, query_by_item, query_by_waveform

    state = load_state(args.index, audio_root=args.root)
    if (args.input is None) == (args.item is None):
        raise ValueError("give exactly one of --input or --item")
    if args.input:
        result = query_by_waveform(state, load_wav(args.input), args.k)
    else:
        result = query_by_item(state, args.item, args.k)
    for item_id, dist in result.ranked:
        meta = state.index.item(item_id).metadata
        print(f"{dist:10.4f}  {item_id}  {meta.instrument_code} "
              f"{meta.technique} {meta.pitch or '-'} {meta.dynamics}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app
    from .service import load_state

    state = load_state(args.index, audio_root=args.root)
    app = create_app(state, max_upload_seconds=args.max_upload_seconds,
                     ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "scan": _cmd_scan,
    "extract": _cmd_extract,
    "fit-compress": _cmd_fit_compress,
    "train-metric": _cmd_train_metric,
    "build-index": _cmd_build_index,
    "evaluate": _cmd_evaluate,
    "embed": _cmd_embed,
    "query": _cmd_query,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
