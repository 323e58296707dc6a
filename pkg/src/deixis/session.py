"""Session records and their newline-delimited JSON file format.

One record per line, with kinds ``sample``, ``token``, ``truth_seg``,
``truth_deixis``, ``meta``, plus the ``truth_cmd`` extension carrying the
script's intended commands. Unknown kinds survive a round-trip verbatim.
Timestamps are written with six decimal places, so generators quantize to
the microsecond grid to keep round-trips lossless.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

from .errors import ParseError, TimeOrderError
from .kinematics import TrajectorySample
from .lexicon import SpokenWord
from .phoneme import PhonemeKind
from .semantics import CommandVerb, DeixisCategory, DeixisSubclass

log = logging.getLogger(__name__)


def qt(t: float) -> float:
    """Quantize a timestamp to the 6-decimal file grid."""
    return round(float(t), 6)


@dataclass(frozen=True)
class TruthSegment:
    t0: float
    t1: float
    phoneme: PhonemeKind


@dataclass(frozen=True)
class TruthDeixis:
    seg: int  # index into the truth segment list
    category: DeixisCategory
    subclass: DeixisSubclass


@dataclass(frozen=True)
class TruthCommand:
    verb: CommandVerb
    object_ids: tuple


@dataclass(frozen=True)
class SessionRecord:
    session_id: str
    samples: tuple = ()
    tokens: tuple = ()
    truth_segments: tuple = ()
    truth_deixis: tuple = ()
    truth_commands: tuple = ()
    map_ref: str = ""
    seed: Optional[int] = None
    extras: tuple = ()

    @property
    def strokes(self) -> list[TruthSegment]:
        from .phoneme import is_stroke

        return [s for s in self.truth_segments if is_stroke(s.phoneme)]

    def validate(self) -> "SessionRecord":
        ts = [s.t for s in self.samples]
        for a, b in zip(ts, ts[1:]):
            if b < a:
                raise TimeOrderError(f"sample timestamps decrease at t={b}")
        segs = self.truth_segments
        for i, (a, b) in enumerate(zip(segs, segs[1:])):
            if b.t0 < a.t1 - 1e-9:
                raise TimeOrderError(
                    f"truth segments overlap: {a.phoneme.value}[{a.t0},{a.t1}] and "
                    f"{b.phoneme.value}[{b.t0},{b.t1}]"
                )
        for d in self.truth_deixis:
            if not 0 <= d.seg < len(segs):
                raise ValueError(f"truth deixis references segment {d.seg}")
        return self


def save_session(record: SessionRecord, path) -> None:
    lines = []

    def emit(obj):
        lines.append(json.dumps(obj, sort_keys=True, separators=(",", ":")))

    emit({"kind": "meta", "map": record.map_ref, "seed": record.seed,
          "session": record.session_id})
    for s in record.samples:
        emit({"kind": "sample", "t": qt(s.t), "x": s.x, "y": s.y})
    for tok in record.tokens:
        emit({"kind": "token", "t0": qt(tok.t0), "t1": qt(tok.t1), "text": tok.text})
    for seg in record.truth_segments:
        emit({"kind": "truth_seg", "t0": qt(seg.t0), "t1": qt(seg.t1),
              "phoneme": seg.phoneme.value})
    for d in record.truth_deixis:
        emit({"kind": "truth_deixis", "seg": d.seg, "category": d.category.value,
              "subclass": d.subclass.value})
    for c in record.truth_commands:
        emit({"kind": "truth_cmd", "verb": c.verb.value, "objects": list(c.object_ids)})
    for extra in record.extras:
        emit(extra)
    Path(path).write_text("\n".join(lines) + "\n")


def load_session(path) -> SessionRecord:
    samples, tokens, segs, deixis, cmds, extras = [], [], [], [], [], []
    meta = {"map": "", "seed": None, "session": Path(path).stem}
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(str(e), line_no) from None
        if not isinstance(rec, dict) or "kind" not in rec:
            raise ParseError("record must be an object with a 'kind'", line_no)
        kind = rec["kind"]
        try:
            if kind == "meta":
                meta.update({k: rec[k] for k in ("map", "seed", "session") if k in rec})
            elif kind == "sample":
                samples.append(TrajectorySample(rec["t"], rec["x"], rec["y"]))
            elif kind == "token":
                tokens.append(SpokenWord(rec["text"], rec["t0"], rec["t1"]))
            elif kind == "truth_seg":
                segs.append(TruthSegment(rec["t0"], rec["t1"], PhonemeKind(rec["phoneme"])))
            elif kind == "truth_deixis":
                deixis.append(
                    TruthDeixis(rec["seg"], DeixisCategory(rec["category"]),
                                DeixisSubclass(rec["subclass"]))
                )
            elif kind == "truth_cmd":
                cmds.append(TruthCommand(CommandVerb(rec["verb"]), tuple(rec["objects"])))
            else:
                log.warning("%s:%d: unknown record kind %r retained", path, line_no, kind)
                extras.append(rec)
        except (KeyError, ValueError, TypeError) as e:
            raise ParseError(f"bad {kind} record: {e}", line_no) from None
    record = SessionRecord(
        session_id=str(meta["session"]),
        samples=tuple(samples),
        tokens=tuple(tokens),
        truth_segments=tuple(segs),
        truth_deixis=tuple(deixis),
        truth_commands=tuple(cmds),
        map_ref=meta["map"],
        seed=meta["seed"],
        extras=tuple(extras),
    )
    return record.validate()
