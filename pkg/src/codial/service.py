"""HTTP host for live guarded conversations.

One compiled program per server process.  Sessions live in memory; every
completed turn is appended to a per-session JSONL transcript when a
transcript directory is configured, and a server can rebuild its session
table from those files on restart.  All state mutation goes through
``run_turn`` under a per-session lock, so each session's transcript is a
strict, gap-free sequence of turns even under concurrent clients.
"""

from __future__ import annotations

import json
import queue
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import StreamingResponse
from pydantic import BaseModel

from .chief import graph_to_dict
from .errors import BackendError
from .ir import GuardrailProgram, program_to_dict
from .runtime import ConversationState, RuntimeOptions, initial_state, run_turn

KEEPALIVE_SECONDS = 0.25


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class ConversationSession:
    session_id: str
    state: ConversationState
    created: str
    updated: str
    transcript_path: Path | None = None
    turns: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)
    subscribers: list[queue.Queue] = field(default_factory=list)


class SessionStore:
    """In-memory session table with optional JSONL transcript durability."""

    def __init__(self, transcript_dir: str | Path | None = None):
        self._sessions: dict[str, ConversationSession] = {}
        self._lock = threading.Lock()
        self.transcript_dir = Path(transcript_dir) if transcript_dir else None
        if self.transcript_dir:
            self.transcript_dir.mkdir(parents=True, exist_ok=True)

    def _transcript_path(self, session_id: str) -> Path | None:
        if self.transcript_dir is None:
            return None
        return self.transcript_dir / f"{session_id}.jsonl"

    def create(self, program: GuardrailProgram) -> ConversationSession:
        session_id = str(uuid.uuid4())
        now = _now()
        session = ConversationSession(
            session_id=session_id,
            state=initial_state(program),
            created=now,
            updated=now,
            transcript_path=self._transcript_path(session_id),
        )
        with self._lock:
            self._sessions[session_id] = session
        return session

    def restore(self, session: ConversationSession) -> None:
        with self._lock:
            self._sessions[session.session_id] = session

    def get(self, session_id: str) -> ConversationSession | None:
        with self._lock:
            return self._sessions.get(session_id)

    def __len__(self) -> int:
        with self._lock:
            return len(self._sessions)


def _restore_sessions(store: SessionStore) -> None:
    """Rebuild the session table from transcripts left by a previous run."""
    if store.transcript_dir is None:
        return
    for path in sorted(store.transcript_dir.glob("*.jsonl")):
        records = []
        for line in path.read_text().splitlines():
            if line.strip():
                records.append(json.loads(line))
        if not records:
            continue
        last = records[-1]
        store.restore(ConversationSession(
            session_id=path.stem,
            state=ConversationState(
                variables=dict(last["state"]["variables"]),
                history=[dict(m) for m in last["state"]["history"]],
            ),
            created=records[0]["ts"],
            updated=last["ts"],
            transcript_path=path,
            turns=last["turn"],
        ))


def _state_delta(before: dict, after: dict) -> dict:
    delta = {}
    for name in after:
        if name not in before or before[name] != after[name]:
            delta[name] = {"old": before.get(name), "new": after[name]}
    return delta


def _publish(session: ConversationSession, payload: dict) -> None:
    for q in list(session.subscribers):
        q.put(payload)


class MessageIn(BaseModel):
    text: str


def build_app(program: GuardrailProgram, backend, *, registry: dict | None = None,
              transcript_dir: str | Path | None = None,
              cors_origins: list[str] | None = None,
              resume: bool = False,
              options: RuntimeOptions | None = None) -> FastAPI:
    app = FastAPI(title="codial", docs_url=None, redoc_url=None)
    if cors_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=list(cors_origins),
            allow_methods=["*"],
            allow_headers=["*"],
        )

    store = SessionStore(transcript_dir)
    if resume:
        _restore_sessions(store)
    app.state.store = store
    app.state.program = program

    def _session_or_404(session_id: str) -> ConversationSession:
        session = store.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return session

    @app.get("/health")
    def health():
        return {"status": "ok", "sessions": len(store)}

    @app.get("/program")
    def get_program():
        return {
            "program": program_to_dict(program),
            "graph": graph_to_dict(program.graph),
        }

    @app.post("/conversations")
    def create_conversation():
        session = store.create(program)
        return {"session_id": session.session_id}

    @app.get("/conversations/{session_id}/state")
    def get_state(session_id: str):
        session = _session_or_404(session_id)
        return {
            "session_id": session.session_id,
            "variables": dict(session.state.variables),
            "history": [dict(m) for m in session.state.history],
            "created": session.created,
            "updated": session.updated,
            "turns": session.turns,
        }

    @app.post("/conversations/{session_id}/messages")
    def post_message(session_id: str, message: MessageIn):
        session = _session_or_404(session_id)
        if not session.lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="turn in progress")
        try:
            before = dict(session.state.variables)
            try:
                result = run_turn(program, session.state, message.text,
                                  backend, registry=registry, options=options)
            except BackendError as exc:
                raise HTTPException(status_code=502, detail={
                    "error": str(exc),
                    "status": exc.status,
                    "body": exc.body,
                })
            session.state = result.state
            session.turns += 1
            session.updated = _now()
            payload = {
                "session_id": session.session_id,
                "turn": session.turns,
                "state_delta": _state_delta(before, result.state.variables),
                **result.to_dict(),
            }
            if session.transcript_path is not None:
                record = {"ts": session.updated, "text": message.text, **payload}
                with session.transcript_path.open("a") as fh:
                    fh.write(json.dumps(record, sort_keys=True) + "\n")
            _publish(session, payload)
            return payload
        finally:
            session.lock.release()

    @app.get("/conversations/{session_id}/events")
    def events(session_id: str):
        session = _session_or_404(session_id)
        q: queue.Queue = queue.Queue()
        session.subscribers.append(q)

        def stream():
            try:
                while True:
                    try:
                        item = q.get(timeout=KEEPALIVE_SECONDS)
                    except queue.Empty:
                        yield ": keep-alive\n\n"
                        continue
                    yield f"data: {json.dumps(item)}\n\n"
            finally:
                session.subscribers.remove(q)

        return StreamingResponse(stream(), media_type="text/event-stream",
                                 headers={"Cache-Control": "no-cache"})

    return app


def replay_transcript(program: GuardrailProgram, path: str | Path, backend,
                      registry: dict | None = None,
                      options: RuntimeOptions | None = None) -> ConversationState:
    """Re-run a transcript's user turns from a fresh state.

    With the same backend behaviour this reproduces the final recorded
    state exactly; a divergence means the program or backend changed.
    """
    state = initial_state(program)
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        state = run_turn(program, state, record["text"], backend,
                         registry=registry, options=options).state
    return state
