"""Streaming control service.

Each session owns one producer coroutine that steps the control loop in
frame order; control mutations arrive through request handlers and apply at
the next frame boundary, so no streamed frame ever reflects a partially
applied schedule. Produced frames are kept in an in-session history; the
stream socket delivers from a cursor, which makes reconnection, pause and
seek replay-safe (no frame skipped or duplicated).

All endpoints are versioned under /v1 and speak JSON validated against the
published schemas. Socket messages are JSON text frames.
"""

from __future__ import annotations

import asyncio
import json
import os
import time
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException, Request, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse, PlainTextResponse

from .config import (
    SessionConfig,
    schedule_from_obj,
    schedule_schema,
    schedule_to_obj,
    _validate,
)
from .core import project_2d
from .errors import FacemotionError
from .models import NoiseSpec, StyleCode
from .pipeline import (
    FRAME_RATE,
    ControlLoop,
    ControlSchedule,
    Trajectory,
    builtin_pose_templates,
    precompute_base,
)
from . import io as fio

_INT_NONNEG = {"type": "integer", "minimum": 0}

ASSET_KINDS = ("identity", "audio", "weights", "phonemes")

_ASSET_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": list(ASSET_KINDS)},
        "content": {"type": "string"},
        "name": {"type": "string"},
    },
    "required": ["kind", "content"],
}

_TRANSPORT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "action": {"enum": ["play", "pause", "seek"]},
        "frame": _INT_NONNEG,
    },
    "required": ["action"],
}


def _session_schema() -> dict:
    return {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "identity": {"type": "string"},
            "audio": {"type": "string"},
            "weights": {"type": "string"},
            "phonemes": {"type": "string"},
            "style": _INT_NONNEG,
            "pose": {"enum": ["static", "nod", "sway"]},
            "schedule": schedule_schema(),
            "noise_seed": _INT_NONNEG,
            "window": {"oneOf": [{"type": "null"}, {"type": "integer", "minimum": 1}]},
            "overlap": _INT_NONNEG,
            "realtime": {"type": "boolean"},
        },
        "required": ["identity", "audio", "weights"],
    }


_PARSERS = {
    "identity": fio.read_identity,
    "audio": fio.read_audio_features,
    "weights": fio.read_weights,
    "phonemes": fio.read_phonemes,
}


@dataclass
class Asset:
    id: str
    kind: str
    name: str
    obj: object


@dataclass
class Session:
    id: str
    loop: ControlLoop
    frame_count: int
    region_tags: list
    realtime: bool
    watermark: int = 256
    state: str = "created"
    messages: list = field(default_factory=list)
    frames: list = field(default_factory=list)
    delivered: int = 0
    listeners: int = 0
    epoch: float = 0.0
    epoch_frame: int = 0
    cond: asyncio.Condition = field(default_factory=asyncio.Condition)
    producer: asyncio.Task | None = None

    @property
    def produced(self) -> int:
        return len(self.messages)


class Engine:
    """Process-lifetime state: uploaded assets and live sessions."""

    def __init__(self, config: SessionConfig):
        self.config = config
        self.assets: dict[str, Asset] = {}
        self.sessions: dict[str, Session] = {}
        self._counter = 0

    def next_id(self, prefix: str) -> str:
        self._counter += 1
        return f"{prefix}{self._counter}"

    def asset(self, asset_id: str, kind: str) -> Asset:
        a = self.assets.get(asset_id)
        if a is None:
            raise HTTPException(status_code=404, detail=f"unknown asset '{asset_id}'")
        if a.kind != kind:
            raise HTTPException(
                status_code=422, detail=f"asset '{asset_id}' is a {a.kind}, expected {kind}"
            )
        return a

    def session(self, session_id: str) -> Session:
        s = self.sessions.get(session_id)
        if s is None:
            raise HTTPException(status_code=404, detail=f"unknown session '{session_id}'")
        return s


def _region_tags(regions: dict, n_kp: int) -> list:
    tags = ["none"] * n_kp
    for name, mask in regions.items():
        for i in mask.indices:
            tags[i] = name
    return tags


def _frame_message(sess: Session, t: int, k_d) -> dict:
    return {
        "type": "frame",
        "index": t,
        "points": [[c[0], c[1]] for c in project_2d(k_d).tolist()],
        "coords": k_d.coords.tolist(),
        "regions": sess.region_tags,
        "controls": schedule_to_obj(sess.loop.schedule),
        "state": sess.state,
    }


def _encode(msg: dict) -> str:
    return json.dumps(msg, separators=(",", ":"))


async def _produce(sess: Session) -> None:
    while True:
        async with sess.cond:
            await sess.cond.wait_for(
                lambda: sess.state != "playing"
                or sess.produced >= sess.frame_count
                or sess.listeners == 0
                or sess.produced - sess.delivered < sess.watermark
            )
            if sess.state != "playing":
                return
            if sess.produced >= sess.frame_count:
                sess.state = "finished"
                sess.cond.notify_all()
                return
        if sess.realtime:
            target = sess.epoch + (sess.produced - sess.epoch_frame) / FRAME_RATE
            delay = target - time.monotonic()
            if delay > 0:
                await asyncio.sleep(delay)
            if sess.state != "playing":
                continue
        else:
            await asyncio.sleep(0)
        t = sess.produced
        k_d = sess.loop.step(t)
        msg = _frame_message(sess, t, k_d)
        async with sess.cond:
            sess.frames.append(k_d)
            sess.messages.append(msg)
            sess.cond.notify_all()


def create_app(config: SessionConfig | None = None, frontend_dir: str | None = None) -> FastAPI:
    engine = Engine(config if config is not None else SessionConfig())
    app = FastAPI(title="facemotion control service", version="1")
    app.state.engine = engine

    @app.exception_handler(FacemotionError)
    async def _facemotion_error(request: Request, exc: FacemotionError):
        return JSONResponse(
            status_code=422, content={"detail": f"{type(exc).__name__}: {exc}"}
        )

    async def _body(request: Request, schema: dict, what: str) -> dict:
        try:
            obj = await request.json()
        except json.JSONDecodeError as exc:
            raise HTTPException(status_code=422, detail=f"{what}: invalid JSON: {exc}")
        _validate(obj, schema, what)
        return obj

    @app.post("/v1/assets")
    async def post_asset(request: Request):
        obj = await _body(request, _ASSET_SCHEMA, "asset")
        parsed = _PARSERS[obj["kind"]](obj["content"])
        asset = Asset(
            id=engine.next_id("a"),
            kind=obj["kind"],
            name=obj.get("name", ""),
            obj=parsed,
        )
        engine.assets[asset.id] = asset
        return {"asset_id": asset.id, "kind": asset.kind}

    @app.get("/v1/assets")
    async def list_assets():
        return {
            "assets": [
                {"id": a.id, "kind": a.kind, "name": a.name} for a in engine.assets.values()
            ]
        }

    @app.post("/v1/sessions")
    async def post_session(request: Request):
        obj = await _body(request, _session_schema(), "session")
        identity = engine.asset(obj["identity"], "identity").obj
        audio = engine.asset(obj["audio"], "audio").obj
        weights = engine.asset(obj["weights"], "weights").obj
        phonemes = engine.asset(obj["phonemes"], "phonemes").obj if "phonemes" in obj else {}
        cfg = engine.config
        style = StyleCode(obj.get("style", 0), weights.dims.n_styles)
        template = builtin_pose_templates()[obj.get("pose", "static")]
        schedule = (
            schedule_from_obj(obj["schedule"], ControlSchedule.neutral())
            if "schedule" in obj
            else ControlSchedule.neutral()
        )
        base = precompute_base(
            identity, template, audio, style, weights,
            noise=NoiseSpec(weights.dims.noise_sigma, obj.get("noise_seed", cfg.seeds.noise)),
            regions=cfg.region_masks(),
            window=obj.get("window", cfg.window),
            overlap=obj.get("overlap", cfg.overlap),
        )
        loop = ControlLoop(base, schedule, phonemes)
        sess = Session(
            id=engine.next_id("s"),
            loop=loop,
            frame_count=base.n_frames,
            region_tags=_region_tags(base.regions, base.n_kp),
            realtime=obj.get("realtime", True),
        )
        engine.sessions[sess.id] = sess
        return {
            "session_id": sess.id,
            "state": sess.state,
            "frame_count": sess.frame_count,
            "n_kp": base.n_kp,
            "fps": FRAME_RATE,
            "schedule": schedule_to_obj(loop.schedule),
        }

    @app.get("/v1/sessions/{session_id}")
    async def get_session(session_id: str):
        sess = engine.session(session_id)
        return {
            "session_id": sess.id,
            "state": sess.state,
            "frame_count": sess.frame_count,
            "produced": sess.produced,
            "delivered": sess.delivered,
            "schedule": schedule_to_obj(sess.loop.schedule),
        }

    @app.put("/v1/sessions/{session_id}/controls")
    async def put_controls(session_id: str, request: Request):
        sess = engine.session(session_id)
        obj = await _body(request, schedule_schema(), "schedule")
        schedule = schedule_from_obj(obj, sess.loop.schedule)
        sess.loop.set_schedule(schedule)
        async with sess.cond:
            sess.cond.notify_all()
        return {
            "schedule": schedule_to_obj(sess.loop.schedule),
            "applied_from": sess.loop.next_t,
        }

    @app.post("/v1/sessions/{session_id}/transport")
    async def post_transport(session_id: str, request: Request):
        sess = engine.session(session_id)
        obj = await _body(request, _TRANSPORT_SCHEMA, "transport")
        action = obj["action"]
        if action == "play":
            if sess.state not in ("created", "paused"):
                raise HTTPException(status_code=409, detail=f"cannot play while {sess.state}")
            sess.state = "playing"
            sess.epoch = time.monotonic()
            sess.epoch_frame = sess.produced
            if sess.producer is None or sess.producer.done():
                sess.producer = asyncio.get_running_loop().create_task(_produce(sess))
        elif action == "pause":
            if sess.state != "playing":
                raise HTTPException(status_code=409, detail=f"cannot pause while {sess.state}")
            sess.state = "paused"
        else:
            if sess.state == "playing":
                raise HTTPException(status_code=409, detail="cannot seek while playing")
            if "frame" not in obj:
                raise HTTPException(status_code=422, detail="seek needs a frame index")
            frame = obj["frame"]
            if frame > sess.produced:
                raise HTTPException(
                    status_code=409,
                    detail=f"cannot seek to {frame}: only {sess.produced} frames produced",
                )
            sess.delivered = frame
        async with sess.cond:
            sess.cond.notify_all()
        return {
            "state": sess.state,
            "produced": sess.produced,
            "delivered": sess.delivered,
            "frame_count": sess.frame_count,
        }

    @app.websocket("/v1/sessions/{session_id}/stream")
    async def stream(ws: WebSocket, session_id: str):
        sess = engine.sessions.get(session_id)
        if sess is None:
            await ws.close(code=4404)
            return
        await ws.accept()
        async with sess.cond:
            sess.listeners += 1
            sess.cond.notify_all()
        try:
            while True:
                async with sess.cond:
                    await sess.cond.wait_for(
                        lambda: sess.delivered < sess.produced or sess.state == "finished"
                    )
                    if sess.delivered < sess.produced:
                        idx = sess.delivered
                        text = _encode(sess.messages[idx])
                    else:
                        idx = None
                        text = _encode({"type": "end", "frame_count": sess.frame_count})
                await ws.send_text(text)
                if idx is None:
                    break
                async with sess.cond:
                    if sess.delivered == idx:
                        sess.delivered = idx + 1
                        sess.cond.notify_all()
        except WebSocketDisconnect:
            pass
        finally:
            async with sess.cond:
                sess.listeners -= 1
                sess.cond.notify_all()

    @app.get("/v1/sessions/{session_id}/trajectory")
    async def get_trajectory(session_id: str):
        sess = engine.session(session_id)
        if sess.state != "finished":
            raise HTTPException(
                status_code=409, detail=f"trajectory available when finished, state is {sess.state}"
            )
        traj = Trajectory(tuple(sess.frames), sess.loop.base.poses)
        return PlainTextResponse(fio.write_trajectory(traj), media_type="text/plain")

    @app.get("/v1/meta/{kind}")
    async def meta(kind: str, session: str | None = None):
        if kind == "emotions":
            if session is not None:
                names = list(engine.session(session).loop.base.weights.categories)
            else:
                names = list(engine.config.categories)
        elif kind == "regions":
            if session is not None:
                names = sorted(engine.session(session).loop.base.regions)
            else:
                names = sorted(engine.config.regions)
        elif kind == "phonemes":
            if session is not None:
                names = sorted(engine.session(session).loop.phonemes)
            else:
                names = sorted(
                    {n for a in engine.assets.values() if a.kind == "phonemes" for n in a.obj}
                )
        else:
            raise HTTPException(status_code=404, detail=f"unknown meta kind '{kind}'")
        return {"names": names}

    target = frontend_dir or os.environ.get("FACEMOTION_FRONTEND")
    if target is None:
        guess = os.path.join(os.getcwd(), "frontend", "dist")
        target = guess if os.path.isdir(guess) else None
    if target and os.path.isdir(target):
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=target, html=True), name="ui")

    return app
