"""HTTP API for interactive query-by-example browsing.

Endpoints:
  POST /query                     multipart WAV or JSON {"item_id": ...}
  GET  /items/{id}                metadata + resource URLs
  GET  /items/{id}/audio          WAV stream
  GET  /items/{id}/scalogram.png  rendered constant-Q scalogram
  GET  /embedding                 2-D diffusion coordinates
  GET  /health, GET /config

Serving state is immutable; responses are pure functions of (state,
request), so identical requests always rank identically.
"""

from __future__ import annotations

import io
from functools import lru_cache

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .audio import UnreadableAudio, UnsupportedEncoding
from .embedding import DisconnectedGraph, diffusion_map
from .knn import QueryResult
from .service import (ServiceState, item_waveform, query_by_item,
                      query_by_waveform, render_scalogram_png)

MAX_UPLOAD_BYTES = 64 * 1024 * 1024


def _result_payload(state: ServiceState, result: QueryResult) -> list[dict]:
    out = []
    for item_id, dist in result.ranked:
        item = state.index.item(item_id)
        out.append({
            "id": item_id,
            "distance": dist,
            "metadata": item.metadata.to_dict(),
            "audio_url": f"/items/{item_id}/audio",
            "scalogram_url": f"/items/{item_id}/scalogram.png",
        })
    return out


def _parse_filter(spec: str | None):
    """'instrument:SyA|SyB' -> ('instrument', {'SyA', 'SyB'})"""
    if not spec:
        return None
    field, _, values = spec.partition(":")
    if field not in ("instrument", "technique") or not values:
        raise ValueError(f"bad filter {spec!r}; use instrument:a|b or technique:a|b")
    return field, set(values.split("|"))


def create_app(state: ServiceState, max_upload_seconds: float = 30.0,
               ui_dir=None) -> FastAPI:
    app = FastAPI(title="notesim", version="0.1.0")
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    @lru_cache(maxsize=512)
    def scalogram_png(item_id: str) -> bytes:
        return render_scalogram_png(item_waveform(state, item_id))

    @lru_cache(maxsize=32)
    def embedding_records(namespace: str, filter_spec: str | None, dims: int) -> list:
        selector = _parse_filter(filter_spec)
        rows, ids, labels = [], [], {}
        for row, item in enumerate(state.index.items):
            if selector is not None:
                if item.metadata.label(selector[0]) not in selector[1]:
                    continue
            rows.append(row)
            ids.append(item.item_id)
            labels[item.item_id] = item.metadata.label(namespace)
        if len(rows) < dims + 1:
            raise ValueError("too few items after filtering")
        emb = diffusion_map(state.index.vectors[rows], metric=state.index.metric,
                            n_dims=dims, item_ids=ids)
        return emb.to_records(labels)

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/config")
    def config():
        return {
            "n_items": len(state.index),
            "descriptor": state.index.descriptor.to_dict(),
            "has_metric": state.index.metric is not None,
            "config": {k: v for k, v in state.config.items() if k != "audio_root"},
            "max_upload_seconds": max_upload_seconds,
        }

    @app.post("/query")
    async def run_query(request: Request):
        k = 5
        content_type = request.headers.get("content-type", "")
        if content_type.startswith("multipart/"):
            form = await request.form()
            if "k" in form:
                k = int(form["k"])
            upload = form.get("file")
            if upload is None:
                return JSONResponse({"error": "multipart query needs a 'file' part"},
                                    status_code=400)
            payload = await upload.read()
            if len(payload) > MAX_UPLOAD_BYTES:
                return JSONResponse({"error": "upload too large"}, status_code=413)
            from .audio import _decode_wav_bytes

            try:
                w = _decode_wav_bytes(payload, upload.filename or "upload")
            except (UnreadableAudio, UnsupportedEncoding) as exc:
                return JSONResponse({"error": str(exc)}, status_code=400)
            if w.duration > max_upload_seconds:
                return JSONResponse(
                    {"error": f"audio longer than {max_upload_seconds}s limit"},
                    status_code=413)
            result = query_by_waveform(state, w, k)
            query_desc = {"kind": "upload", "filename": upload.filename}
        else:
            body = await request.json()
            k = int(body.get("k", 5))
            item_id = body.get("item_id")
            if item_id is None:
                return JSONResponse({"error": "JSON query needs item_id"},
                                    status_code=400)
            try:
                result = query_by_item(state, item_id, k,
                                       exclude_self=bool(body.get("exclude_self", True)))
            except KeyError:
                return JSONResponse({"error": f"unknown item {item_id!r}"},
                                    status_code=404)
            query_desc = {"kind": "item", "item_id": item_id,
                          "metadata": state.index.item(item_id).metadata.to_dict(),
                          "scalogram_url": f"/items/{item_id}/scalogram.png"}
        return {"query": query_desc, "k": k, "truncated": result.truncated,
                "results": _result_payload(state, result)}

    @app.get("/items/{item_id}")
    def get_item(item_id: str):
        try:
            item = state.index.item(item_id)
        except KeyError:
            return JSONResponse({"error": f"unknown item {item_id!r}"}, status_code=404)
        return {"id": item.item_id, "metadata": item.metadata.to_dict(),
                "audio_url": f"/items/{item_id}/audio",
                "scalogram_url": f"/items/{item_id}/scalogram.png"}

    @app.get("/items/{item_id}/audio")
    def get_audio(item_id: str):
        try:
            item = state.index.item(item_id)
        except KeyError:
            return JSONResponse({"error": f"unknown item {item_id!r}"}, status_code=404)
        payload = (state.audio_root / item.source_path).read_bytes()
        return Response(payload, media_type="audio/wav")

    @app.get("/items/{item_id}/scalogram.png")
    def get_scalogram(item_id: str):
        try:
            png = scalogram_png(item_id)
        except KeyError:
            return JSONResponse({"error": f"unknown item {item_id!r}"}, status_code=404)
        return Response(png, media_type="image/png")

    @app.get("/embedding")
    def get_embedding(namespace: str = "technique", filter: str | None = None,
                      dims: int = 2):
        try:
            records = embedding_records(namespace, filter, dims)
        except DisconnectedGraph as exc:
            return JSONResponse({"error": str(exc)}, status_code=422)
        except ValueError as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        return records

    if ui_dir is not None:
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
