"""Session-oriented HTTP facade: a human steps episodes against a checkpoint.

Sessions live in memory with TTL eviction; the mode is fixed at creation
(per-episode modality rule) and each session serializes its own steps behind
a lock, while different sessions step concurrently. Checkpoint parameters are
shared read-only across sessions.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from . import codec, net, oracle, world
from .errors import (
    AnnotationMissingError,
    CheckpointError,
    ConfigError,
    PlanningError,
    ThoughtParseError,
)
from .evaluation import OracleThoughtTracker, Policy, _parse_chunk, load_policy
from .vocab import VocabConfig, Vocabulary, detokenize, tokenize_text

SESSION_MODES = ("act", "think", "follow", "oracle")
DEFAULT_TTL_SECONDS = 30 * 60
THOUGHT_TOKEN_CAP = 48


class CreateSessionRequest(BaseModel):
    task_family: str
    n_objects: int = 2
    seed: int = 0
    mode: str = "act"
    checkpoint: Optional[str] = None


class StepRequest(BaseModel):
    thought: Optional[str] = None


@dataclass
class Session:
    id: str
    mode: str
    state: world.WorldState
    policy: Optional[Policy]
    created_at: float
    last_used: float
    history: list[dict] = field(default_factory=list)
    tracker: Optional[OracleThoughtTracker] = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    def snapshot(self) -> dict:
        return {
            "session_id": self.id,
            "mode": self.mode,
            "scene": world.scene_to_dict(self.state),
            "task_text": self.state.task.text,
            "success": world.check_success(self.state),
            "steps": self.state.step_count,
            "created_at": self.created_at,
        }


class SessionStore:
    def __init__(self, ttl_seconds: float = DEFAULT_TTL_SECONDS):
        self.ttl = ttl_seconds
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def _evict_expired(self, now: float) -> None:
        dead = [k for k, s in self._sessions.items() if now - s.last_used > self.ttl]
        for k in dead:
            del self._sessions[k]

    def add(self, session: Session) -> None:
        with self._lock:
            self._evict_expired(time.time())
            self._sessions[session.id] = session

    def get(self, sid: str) -> Session:
        with self._lock:
            self._evict_expired(time.time())
            if sid not in self._sessions:
                raise HTTPException(status_code=404, detail=f"unknown session {sid}")
            s = self._sessions[sid]
            s.last_used = time.time()
            return s

    def delete(self, sid: str) -> None:
        with self._lock:
            if sid not in self._sessions:
                raise HTTPException(status_code=404, detail=f"unknown session {sid}")
            del self._sessions[sid]


def _parse_human_thought(text: str, policy: Policy) -> list[int]:
    """Structured thought string, or raw in-vocabulary words as a fallback."""
    words = tokenize_text(text)
    unknown = [w for w in words if w not in policy.vocab.token_to_id]
    if unknown:
        raise HTTPException(status_code=400, detail={"unknown_words": unknown})
    ids = policy.vocab.encode(words)
    try:
        thought = codec.parse_thought(ids, policy.vocab)
        return codec.render_thought(thought, policy.thought_format, policy.vocab)
    except (ThoughtParseError, AnnotationMissingError):
        return ids  # free-text fallback: feed the words verbatim


def create_app(
    default_checkpoint: Optional[str] = None,
    ttl_seconds: float = DEFAULT_TTL_SECONDS,
) -> FastAPI:
    app = FastAPI(title="gridvla steering service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    store = SessionStore(ttl_seconds)
    policies: dict[str, Policy] = {}
    policies_lock = threading.Lock()

    def get_policy(path: Optional[str]) -> Optional[Policy]:
        path = path or default_checkpoint
        if path is None:
            raise HTTPException(
                status_code=400, detail="no checkpoint configured and none provided"
            )
        with policies_lock:
            if path not in policies:
                try:
                    policies[path] = load_policy(path)
                except (OSError, CheckpointError, ConfigError) as exc:
                    raise HTTPException(
                        status_code=400, detail=f"cannot load checkpoint {path}: {exc}"
                    )
            return policies[path]

    @app.get("/healthz")
    def healthz():
        return {"ok": True}

    @app.get("/vocab")
    def vocab_manifest(checkpoint: Optional[str] = None):
        if checkpoint is None and default_checkpoint is None:
            # no model configured (oracle-only service): default token table
            return Vocabulary(VocabConfig()).manifest()
        return get_policy(checkpoint).vocab.manifest()

    @app.post("/sessions")
    def create_session(req: CreateSessionRequest):
        if req.mode not in SESSION_MODES:
            raise HTTPException(
                status_code=400, detail=f"mode must be one of {SESSION_MODES}"
            )
        policy = None if req.mode == "oracle" else get_policy(req.checkpoint)
        grid_size = policy.grid_size if policy else 8
        try:
            state = world.reset(req.task_family, req.n_objects, req.seed, grid_size)
            tracker = OracleThoughtTracker(state) if req.mode == "oracle" else None
        except (ConfigError, PlanningError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        now = time.time()
        session = Session(
            id=uuid.uuid4().hex,
            mode=req.mode,
            state=state,
            policy=policy,
            created_at=now,
            last_used=now,
            tracker=tracker,
        )
        store.add(session)
        return session.snapshot()

    @app.post("/sessions/{sid}/step")
    def step_session(sid: str, req: StepRequest):
        session = store.get(sid)
        with session.lock:
            return _run_step(session, req.thought)

    @app.get("/sessions/{sid}")
    def get_session(sid: str):
        session = store.get(sid)
        snap = session.snapshot()
        snap["history"] = session.history
        return snap

    @app.delete("/sessions/{sid}")
    def delete_session(sid: str):
        store.delete(sid)
        return {"deleted": sid}

    return app


def _run_step(session: Session, human_thought: Optional[str]) -> dict:
    state = session.state
    policy = session.policy
    warning = None
    thought_str = None
    thought_source = None
    tokens_generated = 0
    decode_seconds = 0.0
    malformed = 0

    if session.mode == "oracle":
        if human_thought is not None:
            warning = "oracle mode ignores the thought field"
        sub = session.tracker.current(state)
        if sub is None:
            action = world.Action(0, 0, state.gripper_state)
        else:
            action = oracle.act(state, sub)
            th = session.tracker.thought(state)
            if th is not None:
                thought_str = th.subtask_text + (
                    f" ; move: {th.move_label}" if th.move_label else ""
                )
                thought_source = "oracle"
        actions = [action]
    else:
        vocab = policy.vocab
        obs = codec.observe(state, vocab)
        prompt = codec.render_prompt(state.task, vocab)
        chunk = policy.chunk_size
        t0 = time.perf_counter()

        if session.mode == "act":
            if human_thought is not None:
                warning = "act mode ignores the thought field"
            prefix = [vocab.bos_id] + obs + prompt + [vocab.modality_ids["act"]]
            gen = net.decode(policy.params, prefix, {vocab.eos_id}, 3 * chunk + 1)
            tokens_generated = len(gen)
            actions, malformed = _parse_chunk(gen, vocab, chunk, state.gripper_state)
        elif session.mode == "think":
            if human_thought is not None:
                warning = "think mode ignores the thought field"
            prefix = [vocab.bos_id] + obs + prompt + [vocab.modality_ids["think"]]
            cache = net.DecodeCache(policy.params)
            gen1 = net.decode(
                policy.params,
                prefix,
                {vocab.sep_id, vocab.eos_id},
                THOUGHT_TOKEN_CAP,
                cache=cache,
            )
            tokens_generated += len(gen1)
            if gen1 and gen1[-1] == vocab.sep_id:
                thought_str = detokenize(vocab.decode(gen1[:-1]))
                thought_source = "model"
                gen2 = net.decode(
                    policy.params, [vocab.sep_id], {vocab.eos_id}, 3 * chunk + 1, cache=cache
                )
                tokens_generated += len(gen2)
                actions, malformed = _parse_chunk(gen2, vocab, chunk, state.gripper_state)
            else:
                malformed = 1
                actions = [world.Action(0, 0, state.gripper_state)]
        elif session.mode == "follow":
            if not human_thought or not human_thought.strip():
                raise HTTPException(
                    status_code=400, detail="follow mode needs a thought per step"
                )
            thought_ids = _parse_human_thought(human_thought, policy)
            thought_str = detokenize(vocab.decode(thought_ids))
            thought_source = "human"
            prefix = [vocab.bos_id] + obs + thought_ids + [vocab.modality_ids["follow"]]
            gen = net.decode(policy.params, prefix, {vocab.eos_id}, 3 * chunk + 1)
            tokens_generated = len(gen)
            actions, malformed = _parse_chunk(gen, vocab, chunk, state.gripper_state)
        else:
            raise HTTPException(status_code=400, detail=f"unknown mode {session.mode}")
        decode_seconds = time.perf_counter() - t0

    for action in actions:
        state = world.step(state, action)
        if world.check_success(state):
            break
    session.state = state

    record = {
        "step": len(session.history),
        "action": {"dx": actions[0].dx, "dy": actions[0].dy, "grip": actions[0].grip},
        "actions": [{"dx": a.dx, "dy": a.dy, "grip": a.grip} for a in actions],
        "thought": thought_str,
        "thought_source": thought_source,
        "tokens_generated": tokens_generated,
        "decode_seconds": decode_seconds,
        "malformed": malformed,
        "scene": world.scene_to_dict(state),
        "success": world.check_success(state),
        "warning": warning,
    }
    session.history.append(
        {k: record[k] for k in ("step", "action", "thought", "thought_source", "tokens_generated", "decode_seconds")}
    )
    return record


def main(argv=None) -> None:
    import argparse

    import uvicorn

    ap = argparse.ArgumentParser(description="run the steering service")
    ap.add_argument("--checkpoint", default=None, help="default checkpoint path")
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=8000)
    ap.add_argument("--ttl-seconds", type=float, default=DEFAULT_TTL_SECONDS)
    args = ap.parse_args(argv)
    app = create_app(args.checkpoint, args.ttl_seconds)
    uvicorn.run(app, host=args.host, port=args.port)


if __name__ == "__main__":
    main()
