"""FastAPI service wrapping the engine: REST surface plus the websocket
gateway speaking the newline-style JSON message protocol."""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional, Union

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field, TypeAdapter

from .engine import Engine, decode_session
from .gateway import LiveSession
from .kinematics import TrajectorySample
from .lexicon import SpokenWord
from .session import SessionRecord


class SampleMsg(BaseModel):
    kind: Literal["sample"]
    t: float
    x: float = Field(ge=0.0, le=1.0)
    y: float = Field(ge=0.0, le=1.0)


class TokenMsg(BaseModel):
    kind: Literal["token"]
    t0: float
    t1: float
    text: str


class ResetMsg(BaseModel):
    kind: Literal["reset"]


ClientMsg = Union[SampleMsg, TokenMsg, ResetMsg]
_client_msg = TypeAdapter(ClientMsg)


class DecodeRequest(BaseModel):
    samples: list[SampleMsg]
    tokens: list[TokenMsg] = []
    fusion: bool = True
    session_id: str = "request"


class DecodeResponse(BaseModel):
    session_id: str
    records: list[dict]
    commands: list[dict]


def create_app(engine: Engine, frontend_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="deixis gateway", version="0.1.0")

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "phonemes": [k.value for k in engine.models],
            "map_objects": len(engine.map_ctx.objects),
            "feature_dim": engine.model_set.dim,
        }

    @app.get("/map")
    def get_map():
        return engine.map_ctx.to_dict()

    @app.post("/decode", response_model=DecodeResponse)
    def decode(req: DecodeRequest):
        record = SessionRecord(
            session_id=req.session_id,
            samples=tuple(TrajectorySample(s.t, s.x, s.y) for s in req.samples),
            tokens=tuple(SpokenWord(t.text.strip().lower(), t.t0, t.t1) for t in req.tokens),
        )
        decoded = decode_session(engine, record, fusion_on=req.fusion)
        return DecodeResponse(
            session_id=req.session_id,
            records=list(decoded.records),
            commands=[rec_cmd for rec in decoded.records for rec_cmd in rec["commands"]],
        )

    @app.websocket("/ws")
    async def ws(websocket: WebSocket):
        await websocket.accept()
        fusion = websocket.query_params.get("fusion", "on") != "off"
        session = LiveSession(engine, fusion_on=fusion)
        try:
            while True:
                raw = await websocket.receive_json()
                try:
                    msg = _client_msg.validate_python(raw)
                except Exception as e:  # malformed message, session continues
                    await websocket.send_json({"kind": "error", "msg": f"bad message: {e}"})
                    continue
                for out in session.handle_event(msg.model_dump()):
                    await websocket.send_json(out)
        except WebSocketDisconnect:
            pass  # mid-phrase state is discarded with the session

    if frontend_dir and Path(frontend_dir).is_dir():
        app.mount("/app", StaticFiles(directory=frontend_dir, html=True), name="app")

    return app
