"""HTTP session service over the retrieval engine.

Sessions are held in memory, keyed by opaque ids, and expire after a
configurable idle timeout. Requests touching the same session serialize on a
per-session lock; independent sessions never share state, so ending a
session and resubmitting the same query reproduces the original first page.
"""

from __future__ import annotations

import io
import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Response, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse
from pydantic import BaseModel
from PIL import Image, UnidentifiedImageError

from .color_features import class_map_from_rgb
from .feedback import Corpus, FeedbackSet, Ranking, run_iteration, start_session
from .index_store import CatalogEntry, load_index
from .tiling import build_query_signature

__all__ = ["MAX_ITERATIONS", "create_app"]

MAX_ITERATIONS = 10  # hard cap per session: 1 initial ranking + 9 feedback rounds
DEFAULT_PAGE_SIZE = 20
DEFAULT_SESSION_TIMEOUT = 30.0 * 60.0


class FeedbackBody(BaseModel):
    positives: list[int] = []
    negatives: list[int] = []


@dataclass
class _Session:
    state: object
    lock: threading.Lock = field(default_factory=threading.Lock)
    last_access: float = field(default_factory=time.monotonic)


def _decode_rgb(data: bytes) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(data)) as img:
            return np.asarray(img.convert("RGB"))
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise ValueError(f"could not decode query image: {exc}") from None


def create_app(
    index_path: str | None = None,
    *,
    corpus: Corpus | None = None,
    catalog: list[CatalogEntry] | None = None,
    palette_size: int | None = None,
    page_size: int = DEFAULT_PAGE_SIZE,
    session_timeout: float = DEFAULT_SESSION_TIMEOUT,
) -> FastAPI:
    """Build the application around one loaded index.

    Either index_path or (corpus, catalog, palette_size) must be given.
    """
    if index_path is not None:
        header, catalog_entries, signatures = load_index(index_path)
        corpus = Corpus(signatures)
        catalog = catalog_entries
        palette_size = header.palette_size
    if corpus is None or catalog is None or palette_size is None:
        raise ValueError("need index_path or corpus + catalog + palette_size")
    paths_by_id = {entry.image_id: entry.path for entry in catalog}

    app = FastAPI(title="subimage retrieval service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    sessions: dict[str, _Session] = {}
    registry_lock = threading.Lock()

    def _evict_stale(now: float) -> None:
        stale = [
            sid for sid, sess in sessions.items() if now - sess.last_access > session_timeout
        ]
        for sid in stale:
            sessions.pop(sid, None)

    def _get_session(session_id: str) -> _Session:
        with registry_lock:
            _evict_stale(time.monotonic())
            sess = sessions.get(session_id)
            if sess is None:
                raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
            sess.last_access = time.monotonic()
            return sess

    def _page_payload(session_id: str, iteration: int, ranking: Ranking) -> dict:
        return {
            "sessionId": session_id,
            "iteration": iteration,
            "pageSize": page_size,
            "results": [
                {
                    "imageId": entry.image_id,
                    "score": entry.score,
                    "rank": rank,
                    "url": f"/images/{entry.image_id}",
                }
                for rank, entry in enumerate(ranking.top(page_size), start=1)
            ],
        }

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok", "images": len(corpus), "paletteSize": palette_size}

    @app.post("/sessions", status_code=201)
    def create_session(image: UploadFile) -> dict:
        data = image.file.read()
        try:
            rgb = _decode_rgb(data)
            class_map = class_map_from_rgb(rgb, palette_size)
            query = build_query_signature(class_map)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        session_id = uuid.uuid4().hex
        ranking, state = start_session(session_id, query, corpus, page_size)
        with registry_lock:
            _evict_stale(time.monotonic())
            sessions[session_id] = _Session(state=state)
        return _page_payload(session_id, state.iteration, ranking)

    @app.post("/sessions/{session_id}/feedback")
    def submit_feedback(session_id: str, body: FeedbackBody) -> dict:
        sess = _get_session(session_id)
        with sess.lock:
            state = sess.state
            if state.iteration >= MAX_ITERATIONS:
                raise HTTPException(
                    status_code=409,
                    detail=f"session reached the {MAX_ITERATIONS}-iteration cap",
                )
            try:
                feedback = FeedbackSet(
                    positives=tuple(body.positives), negatives=tuple(body.negatives)
                )
                ranking, _ = run_iteration(state, feedback, corpus, page_size)
            except ValueError as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from None
            sess.last_access = time.monotonic()
            return _page_payload(session_id, state.iteration, ranking)

    @app.delete("/sessions/{session_id}", status_code=204)
    def end_session(session_id: str) -> Response:
        with registry_lock:
            if sessions.pop(session_id, None) is None:
                raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return Response(status_code=204)

    @app.get("/images/{image_id}")
    def get_image(image_id: int):
        path = paths_by_id.get(image_id)
        if path is None:
            raise HTTPException(status_code=404, detail=f"unknown image {image_id}")
        return FileResponse(path)

    return app
