"""Streaming generation service.

Wire protocol: newline-delimited JSON messages, one object per line, schema
versioned by the ``v`` field.

  request: {"v":1,"type":"request","id":...,"sentence":...,"task":...,
            "emotion":...,"gender":...,"handedness":...,"fps_out":120}
  frame:   {"v":1,"type":"frame","id":...,"t":0,"quats":[[w,x,y,z]*J],
            "pos":[[x,y,z]*J],"done":false}
  done:    {"v":1,"type":"done","id":...,"frames":N,"mean_ms":...,
            "p95_ms":...,"done":true}
  error:   {"v":1,"type":"error","id":...,"message":...}

Frame fields appear in fixed order and reals carry 9 significant digits.
Transports: POST /generate streams the frame/done lines as NDJSON; the
WebSocket /ws speaks the same messages bidirectionally for browser clients
(a malformed message earns an error reply and the connection stays open).
Frames stream at generation speed; the client owns playback timing.
"""

from __future__ import annotations

import json

import anyio
import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel, ValidationError

from .engine import GestureEngine, RequestError, latency_stats_ms

PROTOCOL_VERSION = 1


class GenerationRequest(BaseModel):
    v: int = PROTOCOL_VERSION
    type: str = "request"
    id: str = "0"
    sentence: str
    task: str = "conversation"
    emotion: str | list = "neutral"
    gender: str = "female"
    handedness: str = "right"
    fps_out: float = 120.0


def fmt9(x: float) -> str:
    return f"{x + 0.0:.9g}"  # +0.0 normalizes -0.0


def _vec_json(rows) -> str:
    return "[" + ",".join("[" + ",".join(fmt9(v) for v in row) + "]" for row in rows) + "]"


def frame_line(req_id: str, t: int, quats: np.ndarray, pos: np.ndarray, done: bool = False) -> str:
    return (
        f'{{"v":{PROTOCOL_VERSION},"type":"frame","id":{json.dumps(req_id)},"t":{t},'
        f'"quats":{_vec_json(quats)},"pos":{_vec_json(pos)},"done":{"true" if done else "false"}}}'
    )


def done_line(req_id: str, stats: dict) -> str:
    return (
        f'{{"v":{PROTOCOL_VERSION},"type":"done","id":{json.dumps(req_id)},'
        f'"frames":{stats["frames"]},"mean_ms":{fmt9(stats["mean_ms"])},'
        f'"p95_ms":{fmt9(stats["p95_ms"])},"done":true}}'
    )


def error_line(req_id, message: str) -> str:
    return json.dumps(
        {"v": PROTOCOL_VERSION, "type": "error", "id": req_id, "message": message}
    )


def stream_request(engine: GestureEngine, req: GenerationRequest):
    """Yield protocol lines (without newlines) for one request."""
    latencies = []
    for frame in engine.frame_iter(req.sentence, req.task, req.emotion, req.gender, req.handedness):
        latencies.append(frame.latency_s)
        yield frame_line(req.id, frame.t, frame.pose, frame.positions)
    yield done_line(req.id, latency_stats_ms(latencies))


def create_app(engine: GestureEngine, viewer_dir=None) -> FastAPI:
    app = FastAPI(title="emogest", version="0.1.0")
    if viewer_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/viewer", StaticFiles(directory=viewer_dir, html=True), name="viewer")

    @app.get("/meta")
    def meta():
        return {
            "protocol": PROTOCOL_VERSION,
            "model": engine.model_cfg.to_dict(),
            "skeleton": engine.skeleton.name,
            "skeleton_hash": engine.skeleton.content_hash(),
            "emotions": engine.lexicon.terms(),
        }

    @app.get("/skeleton")
    def skeleton():
        sk = engine.skeleton
        return {
            "name": sk.name,
            "joints": sk.names,
            "parents": [int(p) for p in sk.parents],
            "offsets": [[float(v) for v in o] for o in sk.offsets],
        }

    @app.post("/generate")
    def generate(req: GenerationRequest):
        try:
            engine.resolve(req.sentence, req.task, req.emotion, req.gender, req.handedness)
        except (RequestError, ValueError) as e:
            return JSONResponse(status_code=400, content={"error": str(e), "id": req.id})

        def lines():
            for line in stream_request(engine, req):
                yield line + "\n"

        return StreamingResponse(lines(), media_type="application/x-ndjson")

    @app.websocket("/ws")
    async def ws(websocket: WebSocket):
        await websocket.accept()
        try:
            while True:
                raw = await websocket.receive_text()
                try:
                    req = GenerationRequest(**json.loads(raw))
                except (json.JSONDecodeError, ValidationError, TypeError) as e:
                    await websocket.send_text(error_line(None, f"malformed request: {e}"))
                    continue
                try:
                    engine.resolve(req.sentence, req.task, req.emotion, req.gender, req.handedness)
                except (RequestError, ValueError) as e:
                    await websocket.send_text(error_line(req.id, str(e)))
                    continue
                gen = stream_request(engine, req)
                while True:
                    line = await anyio.to_thread.run_sync(lambda: next(gen, None))
                    if line is None:
                        break
                    await websocket.send_text(line)
        except WebSocketDisconnect:
            pass

    return app
