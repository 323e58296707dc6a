"""Live session logic behind the streaming service.

One LiveSession per client connection. Events are validated, fed to the
shared stream decoder, and committed phrase records are translated into
wire messages. Cursor-mode messages are provisional feedback driven by the
best partial hypothesis; they are exempt from the append-only rule.
"""

from __future__ import annotations

import math
from typing import Optional

from .engine import Engine, StreamDecoder
from .lexicon import SpokenWord
from .phoneme import PhonemeKind


def record_messages(record: dict) -> list[dict]:
    """Wire messages carried by one committed phrase record."""
    out = []
    for seg in record["segments"]:
        out.append(
            {"kind": "stroke", "id": seg["id"], "phoneme": seg["phoneme"],
             "t0": seg["t0"], "t1": seg["t1"]}
        )
    for stroke in record["strokes"]:
        out.append(
            {"kind": "deixis", "stroke": stroke["seg"], "category": stroke["category"],
             "subclass": stroke["subclass"], "confidence": stroke["confidence"]}
        )
    for cmd in record["commands"]:
        out.append(
            {"kind": "command", "verb": cmd["verb"], "objects": cmd["objects"],
             "source": cmd["source"], "path": cmd["path"],
             "destination": cmd["destination"]}
        )
    return out


class LiveSession:
    def __init__(self, engine: Engine, fusion_on: bool = True, session_id: str = "live"):
        self.engine = engine
        self.fusion_on = fusion_on
        self.session_id = session_id
        self.decoder = StreamDecoder(engine, fusion_on=fusion_on, session_id=session_id)
        self.cursor_mode = "idle"
        self._last_probe = -math.inf

    @property
    def committed_records(self) -> list[dict]:
        return list(self.decoder.committed.records)

    def _error(self, msg: str) -> list[dict]:
        return [{"kind": "error", "msg": msg}]

    def _probe_cursor(self, t: float) -> list[dict]:
        if t - self._last_probe < self.engine.config.stream.cursor_stride:
            return []
        self._last_probe = t
        phoneme = self.decoder.partial_final_phoneme()
        mode = "point" if phoneme == PhonemeKind.POINT else "idle"
        if mode != self.cursor_mode:
            self.cursor_mode = mode
            return [{"kind": "cursor", "mode": mode, "t": round(t, 6)}]
        return []

    def handle_event(self, event: dict) -> list[dict]:
        kind = event.get("kind")
        if kind == "reset":
            self.decoder = StreamDecoder(
                self.engine, fusion_on=self.fusion_on, session_id=self.session_id
            )
            self.cursor_mode = "idle"
            self._last_probe = -math.inf
            return []
        if kind == "sample":
            t = float(event["t"])
            if t < self.decoder.cursor_time - 1e-9:
                return self._error(f"sample at {t:.3f} precedes committed output")
            if t < self.decoder.last_sample_t - 1e-9:
                return self._error(f"sample at {t:.3f} is out of order")
            records = self.decoder.feed_sample(t, float(event["x"]), float(event["y"]))
            out = []
            for rec in records:
                out.extend(record_messages(rec))
            out.extend(self._probe_cursor(t))
            return out
        if kind == "token":
            t0 = float(event["t0"])
            if t0 < self.decoder.cursor_time - 1e-9:
                return self._error(f"token at {t0:.3f} precedes committed output")
            records = self.decoder.feed_token(
                SpokenWord(str(event["text"]).strip().lower(), t0, float(event["t1"]))
            )
            out = []
            for rec in records:
                out.extend(record_messages(rec))
            return out
        return self._error(f"unknown event kind {kind!r}")

    def finish(self) -> list[dict]:
        """Flush remaining complete phrases (graceful shutdown)."""
        out = []
        for rec in self.decoder.flush():
            out.extend(record_messages(rec))
        return out
