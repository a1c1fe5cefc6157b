"""HTTP service: session lifecycle, copilot turns, trace and graph views.

Graph and indexes are immutable after startup and shared by all requests.
Each live session owns a non-blocking lock so its turns run one at a time
(contention returns 409 instead of queueing). Turn responses are emitted as
canonical JSON bytes, which is what makes the CLI/API parity guarantee a
byte-for-byte statement rather than a semantic one.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from contextlib import asynccontextmanager
from dataclasses import dataclass, field

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .chat import ChatContract
from .config import ServiceConfig, make_chat, make_embedder
from .embedding import EmbedderContract
from .errors import CounselGraphError, UnknownNode
from .graph import CotGraph, Speaker
from .index import IndexKind, VectorIndex
from .retrieval import ConversationHistory, run_turn
from .util import canonical_json_bytes


@dataclass
class LiveSession:
    session_id: str
    history: ConversationHistory
    turn_log: list[dict] = field(default_factory=list)
    created_at: float = field(default_factory=time.time)
    updated_at: float = field(default_factory=time.time)
    lock: threading.Lock = field(default_factory=threading.Lock)


class TurnRequest(BaseModel):
    client_text: str


class ChooseRequest(BaseModel):
    candidate_index: int
    edited_text: str | None = None


def _error(status: int, stage: str, code: str, message: str) -> JSONResponse:
    return JSONResponse({"stage": stage, "code": code, "message": message},
                        status_code=status)


def _canonical(payload: dict, status: int = 200) -> Response:
    return Response(content=canonical_json_bytes(payload), status_code=status,
                    media_type="application/json")


@dataclass
class EngineState:
    """Everything the endpoints share. loaded=False means startup could not
    read the graph/index files; data endpoints then answer 503."""

    config: ServiceConfig
    graph: CotGraph | None = None
    dialogue_index: VectorIndex | None = None
    cot_index: VectorIndex | None = None
    llm: ChatContract | None = None
    embedder: EmbedderContract | None = None
    load_error: str = ""
    sessions: dict[str, LiveSession] = field(default_factory=dict)
    sessions_lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def loaded(self) -> bool:
        return self.graph is not None


def _load_engine(state: EngineState) -> None:
    config = state.config
    try:
        with open(config.graph_path, "rb") as fh:
            graph = CotGraph.deserialize(fh.read())
        with open(config.dialogue_index_path, "rb") as fh:
            dialogue_index = VectorIndex.deserialize(fh.read())
        with open(config.cot_index_path, "rb") as fh:
            cot_index = VectorIndex.deserialize(fh.read())
    except (OSError, CounselGraphError) as exc:
        state.load_error = f"engine resources not loaded: {exc}"
        return
    if dialogue_index.index_kind is not IndexKind.DIALOGUE:
        state.load_error = f"{config.dialogue_index_path} is not a dialogue index"
        return
    if cot_index.index_kind is not IndexKind.COT:
        state.load_error = f"{config.cot_index_path} is not a cot index"
        return
    embedder = make_embedder(config)
    for name, index in (("dialogue", dialogue_index), ("cot", cot_index)):
        if index.entries and index.dim != embedder.dim:
            state.load_error = (
                f"{name} index dim {index.dim} != embedder dim {embedder.dim}")
            return
    state.graph = graph
    state.dialogue_index = dialogue_index
    state.cot_index = cot_index
    state.embedder = embedder
    state.llm = make_chat(config)


def _snapshot(state: EngineState) -> None:
    if not state.config.snapshot_path:
        return
    payload = {
        "sessions": [
            {
                "session_id": s.session_id,
                "history": s.history.to_json_list(),
                "turn_log": s.turn_log,
                "created_at": s.created_at,
                "updated_at": s.updated_at,
            }
            for s in sorted(state.sessions.values(),
                            key=lambda s: s.session_id)
        ]
    }
    with open(state.config.snapshot_path, "wb") as fh:
        fh.write(canonical_json_bytes(payload))


def create_app(config: ServiceConfig, *, graph: CotGraph | None = None,
               dialogue_index: VectorIndex | None = None,
               cot_index: VectorIndex | None = None,
               llm: ChatContract | None = None,
               embedder: EmbedderContract | None = None) -> FastAPI:
    """Build the service. Tests may inject prebuilt resources; otherwise
    everything loads from the config's file paths."""
    state = EngineState(config=config)
    if graph is not None:
        state.graph = graph
        state.dialogue_index = dialogue_index
        state.cot_index = cot_index
        state.llm = llm if llm is not None else make_chat(config)
        state.embedder = embedder if embedder is not None else make_embedder(config)
    else:
        _load_engine(state)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        del app
        yield
        _snapshot(state)

    app = FastAPI(title="counselgraph", version="0.1.0", lifespan=lifespan)
    app.state.engine = state
    if config.cors_origins:
        app.add_middleware(
            CORSMiddleware, allow_origins=list(config.cors_origins),
            allow_methods=["*"], allow_headers=["*"])

    @app.exception_handler(CounselGraphError)
    async def _domain_error(request: Request, exc: CounselGraphError):
        del request
        return _error(502, exc.stage or "", exc.code, str(exc))

    def unavailable() -> JSONResponse:
        return _error(503, "startup", "not-loaded",
                      state.load_error or "engine resources not loaded")

    @app.get("/health")
    def health() -> Response:
        sizes = {}
        if state.loaded:
            sizes = {"dialogue": len(state.dialogue_index.entries),
                     "cot": len(state.cot_index.entries)}
        return _canonical({
            "status": "ok" if state.loaded else "degraded",
            "graph_loaded": state.loaded,
            "index_sizes": sizes,
            "stub_mode": config.stub_mode,
        })

    @app.post("/sessions", status_code=201)
    def create_session() -> Response:
        if not state.loaded:
            return unavailable()
        session = LiveSession(session_id=str(uuid.uuid4()),
                              history=ConversationHistory(turns=()))
        with state.sessions_lock:
            state.sessions[session.session_id] = session
        return _canonical({"session_id": session.session_id}, status=201)

    @app.post("/sessions/{session_id}/turns")
    def post_turn(session_id: str, body: TurnRequest) -> Response:
        if not state.loaded:
            return unavailable()
        session = state.sessions.get(session_id)
        if session is None:
            return _error(404, "request", "unknown-session",
                          f"no session {session_id!r}")
        if not session.lock.acquire(blocking=False):
            return _error(409, "request", "turn-in-flight",
                          "a turn is already running for this session")
        try:
            if not body.client_text.strip():
                return _error(422, "request", "empty-text",
                              "client_text must be non-empty")
            tentative = session.history.append(Speaker.CLIENT, body.client_text)
            try:
                result = run_turn(tentative, state.graph,
                                  state.dialogue_index, state.cot_index,
                                  state.llm, state.embedder,
                                  config.retrieval)
            except CounselGraphError as exc:
                return _error(502, exc.stage or "", exc.code, str(exc))
            payload = result.to_json_dict()
            session.history = tentative
            session.turn_log.append({"result": payload, "choice": None})
            session.updated_at = time.time()
            return _canonical(payload)
        finally:
            session.lock.release()

    @app.post("/sessions/{session_id}/choose")
    def choose(session_id: str, body: ChooseRequest) -> Response:
        session = state.sessions.get(session_id)
        if session is None:
            return _error(404, "request", "unknown-session",
                          f"no session {session_id!r}")
        if not session.turn_log:
            return _error(422, "request", "no-turns",
                          "session has no copilot turns yet")
        entry = session.turn_log[-1]
        candidates = entry["result"]["candidates"]
        if not 0 <= body.candidate_index < len(candidates):
            return _error(422, "request", "bad-candidate-index",
                          f"candidate_index {body.candidate_index} out of "
                          f"range [0, {len(candidates)})")
        text = body.edited_text if body.edited_text is not None \
            else candidates[body.candidate_index]["text"]
        if not text.strip():
            return _error(422, "request", "empty-text",
                          "chosen reply must be non-empty")
        session.history = session.history.append(Speaker.THERAPIST, text)
        entry["choice"] = {"candidate_index": body.candidate_index,
                           "edited_text": body.edited_text, "text": text}
        session.updated_at = time.time()
        return _canonical({"ok": True})

    @app.get("/sessions/{session_id}/trace")
    def get_trace(session_id: str, turn: int = -1) -> Response:
        session = state.sessions.get(session_id)
        if session is None:
            return _error(404, "request", "unknown-session",
                          f"no session {session_id!r}")
        if turn == -1 and session.turn_log:
            turn = len(session.turn_log) - 1
        if not 0 <= turn < len(session.turn_log):
            return _error(404, "request", "unknown-turn",
                          f"no turn {turn} (session has "
                          f"{len(session.turn_log)} turns)")
        return _canonical(session.turn_log[turn]["result"]["trace"])

    @app.get("/graph/subgraph")
    def graph_subgraph(seeds: str = "", depth: int = 1) -> Response:
        if not state.loaded:
            return unavailable()
        seed_ids = [s.strip() for s in seeds.split(",") if s.strip()]
        if not seed_ids:
            return _error(422, "request", "malformed-seeds",
                          "seeds must be a comma-separated node id list")
        if depth < 0:
            return _error(422, "request", "bad-depth", "depth must be >= 0")
        try:
            sub = state.graph.extract_subgraph(seed_ids, depth=depth)
        except UnknownNode as exc:
            return _error(404, "request", exc.code, str(exc))
        return _canonical(sub.to_json_dict())

    @app.get("/graph/sessions")
    def graph_sessions() -> Response:
        if not state.loaded:
            return unavailable()
        return _canonical({"sessions": [
            {
                "session_id": meta.session_id,
                "title": meta.title,
                "source": meta.source,
                "dialogue_node_count": meta.dialogue_node_count,
                "cot_node_count": meta.cot_node_count,
            }
            for meta in sorted(state.graph.sessions.values(),
                               key=lambda m: m.session_id)
        ]})

    @app.get("/graph/sessions/{session_id}")
    def graph_session_detail(session_id: str) -> Response:
        if not state.loaded:
            return unavailable()
        meta = state.graph.sessions.get(session_id)
        if meta is None:
            return _error(404, "request", "unknown-session",
                          f"no graph session {session_id!r}")
        return _canonical({
            "session_id": meta.session_id,
            "title": meta.title,
            "source": meta.source,
            "turns": [
                {"id": node.id, "turn_index": node.turn_index,
                 "speaker": node.speaker.value, "text": node.text}
                for node in state.graph.dialogue_nodes(session_id)
            ],
        })

    return app


def restore_snapshot(app: FastAPI, path: str) -> int:
    """Best-effort reload of a session snapshot; returns sessions restored."""
    state: EngineState = app.state.engine
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    count = 0
    for item in payload.get("sessions", []):
        session = LiveSession(
            session_id=item["session_id"],
            history=ConversationHistory.from_json_list(item["history"]),
            turn_log=list(item.get("turn_log", [])),
            created_at=float(item.get("created_at", time.time())),
            updated_at=float(item.get("updated_at", time.time())))
        with state.sessions_lock:
            state.sessions[session.session_id] = session
        count += 1
    return count


def serve(config: ServiceConfig) -> None:  # pragma: no cover - manual entry
    import uvicorn

    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
