"""JSON-over-HTTP service: workbooks, structure graphs, and refinement
sessions.

State lives in process memory; determinism of the evolution seeds makes
any session reconstructible from its inputs.  Errors come back as
{"error": {"code", "message"}} with 400 for bad input, 404 for unknown
ids, 409 for operations out of order.  Graph responses reuse the same
serializer as the CLI, byte for byte.

Handlers are synchronous, so the framework runs them on worker threads:
per-session locks serialize writes to one session while distinct
sessions and read-only lookups proceed concurrently.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any

from fastapi import Body, FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .errors import (NoAnnotations, SchemaError, SessionStateError,
                     UnknownGenome, WiaError)
from .evaluate import evaluate
from .export import build_structure, export_json
from .model import CellAddress, Workbook, load_workbook, save_workbook
from .segments import generate_groups
from .evolve import EvolutionConfig, EvolutionSession
from .evolve.session import annotations_from_json

log = logging.getLogger("wia.service")

_CONFLICTS = (NoAnnotations, SessionStateError)
_NOT_FOUND = (UnknownGenome,)


class NotFound(LookupError):
    """Unknown workbook or session id."""


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class _SessionEntry:
    session: EvolutionSession
    workbook_id: str
    created_at: str = field(default_factory=_now)
    lock: threading.Lock = field(default_factory=threading.Lock)


class Store:
    """In-memory workbooks and sessions with process-unique ids."""

    def __init__(self):
        self._lock = threading.Lock()
        self._counters = {"wb": 0, "s": 0}
        self.workbooks: dict[str, Workbook] = {}
        self.sessions: dict[str, _SessionEntry] = {}

    def new_id(self, prefix: str) -> str:
        with self._lock:
            self._counters[prefix] += 1
            return f"{prefix}-{self._counters[prefix]}"

    def add_workbook(self, workbook: Workbook) -> str:
        wid = self.new_id("wb")
        self.workbooks[wid] = workbook
        return wid

    def workbook(self, wid: str) -> Workbook:
        try:
            return self.workbooks[wid]
        except KeyError:
            raise NotFound(f"no workbook {wid!r}") from None

    def add_session(self, entry: _SessionEntry) -> str:
        sid = self.new_id("s")
        self.sessions[sid] = entry
        return sid

    def session(self, sid: str) -> _SessionEntry:
        try:
            return self.sessions[sid]
        except KeyError:
            raise NotFound(f"no session {sid!r}") from None


def _error_response(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse({"error": {"code": code, "message": message}},
                        status_code=status)


def _error_code(exc: WiaError) -> str:
    name = type(exc).__name__
    out = [name[0].lower()]
    for ch in name[1:]:
        if ch.isupper():
            out.append("_")
            out.append(ch.lower())
        else:
            out.append(ch)
    return "".join(out)


def _session_summary(sid: str, entry: _SessionEntry) -> dict:
    s = entry.session
    return {"id": sid, "workbook_id": entry.workbook_id,
            "created_at": entry.created_at, "status": s.status,
            "round": s.t, "annotations": len(s.annotations)}


def _candidate_json(candidate) -> dict:
    return {"genome_id": candidate.genome_id,
            "fitness": candidate.fitness,
            "values": {str(cell): value.to_json()
                       for cell, value in candidate.values.items()}}


def _require_object(payload: Any, what: str, allowed: set[str]) -> dict:
    if payload is None:
        return {}
    if not isinstance(payload, dict):
        raise SchemaError(f"{what} body must be a JSON object")
    unknown = set(payload) - allowed
    if unknown:
        raise SchemaError(f"unknown keys: {', '.join(sorted(unknown))}")
    return payload


def _default_sheet(workbook: Workbook) -> str:
    return workbook.sheets[0].name if workbook.sheets else "S1"


def create_app() -> FastAPI:
    app = FastAPI(title="wia", docs_url=None, redoc_url=None,
                  openapi_url=None)
    store = Store()
    app.state.store = store

    @app.exception_handler(WiaError)
    async def _wia_error(request: Request, exc: WiaError):
        if isinstance(exc, _CONFLICTS):
            status = 409
        elif isinstance(exc, _NOT_FOUND):
            status = 404
        else:
            status = 400
        return _error_response(status, _error_code(exc), str(exc))

    @app.exception_handler(NotFound)
    async def _not_found(request: Request, exc: NotFound):
        return _error_response(404, "not_found", str(exc))

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request,
                                exc: RequestValidationError):
        return _error_response(400, "schema_error", "malformed request body")

    @app.post("/workbooks")
    def post_workbook(payload: Any = Body(...)):
        workbook = load_workbook(json.dumps(payload))
        wid = store.add_workbook(workbook)
        log.info("workbook %s: %d cells", wid, workbook.cell_count())
        return {"id": wid}

    @app.get("/workbooks/{wid}/graph")
    def get_graph(wid: str, level: str = "group"):
        if level not in ("group", "cell"):
            raise SchemaError("'level' must be group or cell")
        workbook = store.workbook(wid)
        groups, graph = generate_groups(workbook)
        structure = build_structure(workbook, groups, graph,
                                    include_cells=level == "cell")
        return Response(content=export_json(structure),
                        media_type="application/json")

    @app.get("/workbooks/{wid}/values")
    def get_values(wid: str):
        workbook = store.workbook(wid)
        result = evaluate(workbook)
        ordered = sorted(result.values, key=CellAddress.sort_key)
        return {"values": {str(a): result.values[a].to_json()
                           for a in ordered},
                "cycles": [[str(a) for a in cycle]
                           for cycle in result.cycles]}

    @app.post("/sessions")
    def post_session(payload: Any = Body(...)):
        payload = _require_object(payload, "session",
                                  {"workbook_id", "config"})
        wid = payload.get("workbook_id")
        if not isinstance(wid, str):
            raise SchemaError("'workbook_id' must be a string")
        workbook = store.workbook(wid)
        config = EvolutionConfig.from_dict(payload.get("config") or {})
        session = EvolutionSession(workbook, config)
        entry = _SessionEntry(session, wid)
        sid = store.add_session(entry)
        log.info("session %s on %s: %d genes", sid, wid,
                 session.gene_map.n_genes)
        return {"id": sid, "created_at": entry.created_at,
                "workbook_id": wid}

    @app.get("/sessions/{sid}")
    def get_session(sid: str):
        return _session_summary(sid, store.session(sid))

    @app.post("/sessions/{sid}/annotations")
    def post_annotations(sid: str, payload: Any = Body(...)):
        entry = store.session(sid)
        with entry.lock:
            session = entry.session
            annotations = annotations_from_json(
                payload, _default_sheet(session.base),
                require_round=session.t)
            session.add_annotations(annotations)
            return _session_summary(sid, entry)

    @app.post("/sessions/{sid}/step")
    def post_step(sid: str, payload: Any = Body(None)):
        entry = store.session(sid)
        payload = _require_object(payload, "step", {"generations"})
        generations = payload.get("generations", 10)
        with entry.lock:
            candidates = entry.session.step(generations)
            return {"best_fitness": candidates[0].fitness,
                    "candidates": [_candidate_json(c) for c in candidates]}

    @app.post("/sessions/{sid}/choose")
    def post_choose(sid: str, payload: Any = Body(...)):
        entry = store.session(sid)
        payload = _require_object(payload, "choose", {"genome_id", "accept"})
        genome_id = payload.get("genome_id")
        if not isinstance(genome_id, str):
            raise SchemaError("'genome_id' must be a string")
        accept = payload.get("accept", False)
        if not isinstance(accept, bool):
            raise SchemaError("'accept' must be a boolean")
        with entry.lock:
            picked = entry.session.choose(genome_id, accept=accept)
            summary = _session_summary(sid, entry)
            summary["chosen"] = picked.genome_id
            return summary

    @app.get("/sessions/{sid}/export")
    def get_export(sid: str, genome_id: str | None = None):
        entry = store.session(sid)
        with entry.lock:
            session = entry.session
            if genome_id is None:
                genome = session.current_genome
            else:
                genome = session.candidate(genome_id).genome
            payload = save_workbook(session.export_model(genome))
        return Response(content=payload, media_type="application/json")

    return app
