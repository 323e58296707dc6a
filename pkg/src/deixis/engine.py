"""Pipeline orchestration: chunked stream decoding shared by the batch CLI
and the live gateway.

The stream is cut wherever the hand has verifiably returned to the rest
region (a causal test on raw samples), each chunk is decoded through the
full pipeline, and completed phrases are committed as canonical records.
Batch decoding replays the same cut/decode logic over a whole session, so
a live replay and a batch run produce byte-identical records.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .config import EngineConfig
from .fusion import assign_tokens, cooccurring_tokens, rescore_nbest
from .hmm import ModelSet
from .kinematics import (
    HoldKind,
    TrajectorySample,
    detect_holds,
    estimate_rest_centroid,
    extract_features,
)
from .lexicon import Lexicon, SpokenWord, spot_keywords
from .mapcontext import (
    MapContext,
    RefKind,
    ReferenceResolution,
    iconic_match_score,
    resolve_enclosure,
    resolve_path,
    resolve_point,
)
from .metrics import DecodedSession
from .morphology import (
    GesturePhrase,
    attach_holds,
    build_default_network,
    classify_closure,
    decode_continuous,
    segment_phrases,
)
from .phoneme import PhonemeKind, is_stroke
from .semantics import (
    DeixisCategory,
    DeixisSubclass,
    LabeledStroke,
    classify_deixis,
    emit_commands,
    parse_motion_complexes,
)
from .session import SessionRecord, qt


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _ref_dict(ref: Optional[ReferenceResolution]) -> Optional[dict]:
    if ref is None:
        return None
    return {
        "kind": ref.kind.value,
        "objects": list(ref.object_ids),
        "point": [ref.point[0], ref.point[1]] if ref.point else None,
        "radius": ref.radius,
        "score": ref.score,
    }


class Engine:
    """Immutable bundle of trained models, map, config, and lexicon."""

    def __init__(
        self,
        model_set: ModelSet,
        map_ctx: MapContext,
        config: Optional[EngineConfig] = None,
        lexicon: Optional[Lexicon] = None,
    ):
        self.model_set = model_set
        self.models = dict(model_set.models)
        self.map_ctx = map_ctx
        self.config = config or EngineConfig()
        self.lexicon = lexicon or Lexicon()
        self.network = build_default_network(
            model_set.topology, self.config.decoder.edge_penalty
        )
        self.cooccurrence = self.config.fusion.model()

    # ------------------------------------------------------------------
    def _resolve_stroke(self, stroke):
        ctx_cfg = self.config.context
        pts = stroke.path_points
        if stroke.kind == PhonemeKind.POINT or len(pts) < 2:
            tail = pts[-max(3, len(pts) // 3):] if pts else ((0.5, 0.5),)
            pos = (
                float(np.mean([p[0] for p in tail])),
                float(np.mean([p[1] for p in tail])),
            )
            return resolve_point(self.map_ctx, pos, ctx_cfg.point_radius)
        if stroke.kind == PhonemeKind.CIRCLE and stroke.closure:
            return resolve_enclosure(self.map_ctx, pts)
        return resolve_path(self.map_ctx, pts, ctx_cfg.path_buffer)

    def _iconic(self, stroke, resolution):
        """Best shape-tracing score among candidate objects, with the object."""
        if stroke.kind != PhonemeKind.CONTOUR or len(stroke.path_points) < 2:
            return None, None
        best_score, best_obj = 0.0, None
        for oid in resolution.object_ids[:4]:
            score = iconic_match_score(
                stroke.path_points, self.map_ctx[oid], self.config.context.path_buffer
            )
            if score > best_score:
                best_score, best_obj = score, oid
        return best_score, best_obj

    def _assign_evidence(self, segments, tokens):
        strokes = [s for s in segments if is_stroke(s.kind)]
        return assign_tokens(strokes, tokens, self.cooccurrence.window)

    def interpret(self, segments, holds, tokens, phrase_start_id: int):
        """Semantics for one decoded chunk: label strokes, parse complexes,
        emit commands, and build one record per phrase."""
        phrases = attach_holds(segment_phrases(segments), holds)
        assigned = self._assign_evidence(segments, tokens)
        out_phrases = []
        for offset, phrase in enumerate(phrases):
            phrase = replace(phrase, id=phrase_start_id + offset)
            pre_holds = {
                h.anchor_stroke: h for h in phrase.holds if h.kind == HoldKind.PRE_STROKE
            }
            labeled = []
            for stroke in phrase.strokes:
                evidence = assigned.get(stroke.id, [])
                resolution = self._resolve_stroke(stroke)
                iconic_score, iconic_obj = self._iconic(stroke, resolution)
                label = classify_deixis(
                    stroke,
                    evidence,
                    resolution,
                    pre_hold=pre_holds.get(stroke.id),
                    iconic_score=iconic_score,
                )
                if label.subclass == DeixisSubclass.ICONIC and iconic_obj is not None:
                    resolution = ReferenceResolution(
                        RefKind.OBJECT, (iconic_obj,), point=resolution.point,
                        score=float(iconic_score),
                    )
                if label.category == DeixisCategory.INTRANSITIVE:
                    resolution = resolution.as_area(self.config.context.point_radius)
                labeled.append(
                    LabeledStroke(
                        stroke=stroke,
                        deixis=label,
                        reference=resolution,
                        evidence=tuple(evidence),
                        pre_hold=pre_holds.get(stroke.id),
                    )
                )
            complexes = parse_motion_complexes(phrase, labeled, tokens)
            diagnostics: list[str] = []
            commands = emit_commands(labeled, complexes, phrase.id, diagnostics)
            out_phrases.append((phrase, labeled, complexes, commands, diagnostics))
        return out_phrases


def build_phrase_record(session_id, phrase, labeled, complexes, commands, diagnostics):
    seg_ids = {id(ls): ls.stroke.id for ls in labeled}
    return {
        "kind": "phrase",
        "session": session_id,
        "phrase_id": phrase.id,
        "t0": qt(phrase.t0),
        "t1": qt(phrase.t1),
        "segments": [
            {"id": s.id, "phoneme": s.kind.value, "t0": qt(s.t0), "t1": qt(s.t1)}
            for s in phrase.segments
        ],
        "holds": [
            {"t0": qt(h.t0), "t1": qt(h.t1), "hold_kind": h.kind.value,
             "anchor": h.anchor_stroke}
            for h in phrase.holds
        ],
        "strokes": [
            {
                "seg": ls.stroke.id,
                "category": ls.deixis.category.value,
                "subclass": ls.deixis.subclass.value,
                "confidence": ls.deixis.confidence,
                "closure": ls.stroke.closure,
                "reference": _ref_dict(ls.reference),
                "evidence": [
                    {"text": t.text, "class": t.word_class.value,
                     "t0": qt(t.t0), "t1": qt(t.t1)}
                    for t in ls.evidence
                ],
            }
            for ls in labeled
        ],
        "complexes": [
            {
                "complex_kind": c.kind.value,
                "strokes": [seg_ids[id(ls)] for ls in c.strokes],
                "source": _ref_dict(c.source),
                "path": _ref_dict(c.path),
                "destination": _ref_dict(c.destination),
            }
            for c in complexes
        ],
        "commands": [
            {
                "verb": cmd.verb.value,
                "objects": list(cmd.object_ids),
                "source": _ref_dict(cmd.source),
                "path": _ref_dict(cmd.path),
                "destination": _ref_dict(cmd.destination),
                "area": _ref_dict(cmd.area),
                "t": qt(cmd.t_issued),
            }
            for cmd in commands
        ],
        "diagnostics": list(diagnostics),
    }


@dataclass
class _Committed:
    records: list
    segments: list
    labeled: list
    commands: list


class StreamDecoder:
    """Causal chunking plus full-pipeline decoding of each chunk.

    Samples and tokens are fed in event-time order. A cut happens once the
    hand has dwelt in the rest region for ``rest_confirm`` seconds after
    any activity; the chunk is then decoded as soon as the stream clock
    passes the cut by the keyword window (so trailing keywords are in).
    The frame grid is global, so chunk segmentations tile the session.
    """

    def __init__(self, engine: Engine, fusion_on: bool = True, session_id: str = ""):
        self.engine = engine
        self.fusion_on = fusion_on
        self.session_id = session_id
        cfg = engine.config
        self.rate = cfg.kinematics.rate_hz
        self.dt = 1.0 / self.rate
        self.stream_cfg = cfg.stream
        self.rest_window = cfg.kinematics.rest_window

        self.raw: list[TrajectorySample] = []
        self.words: list[SpokenWord] = []
        self.t_start: Optional[float] = None
        self.last_sample_t = -math.inf
        self.stream_time = -math.inf
        self.rest_ref: Optional[tuple] = None
        self.activity = False
        self.pending_cut: Optional[tuple] = None  # (cut_time, commit_at)

        self.next_frame = 0
        self.next_segment_id = 0
        self.next_phrase_id = 0
        self.committed = _Committed([], [], [], [])

    # ------------------------------------------------------------------
    @property
    def cursor_time(self) -> float:
        if self.t_start is None:
            return -math.inf
        return self.t_start + self.next_frame * self.dt

    def feed_sample(self, t: float, x: float, y: float) -> list[dict]:
        if t < self.last_sample_t - 1e-9:
            raise ValueError("sample timestamps must be non-decreasing")
        self.last_sample_t = t
        self.raw.append(TrajectorySample(t, x, y))
        if self.t_start is None:
            self.t_start = t
        self._maybe_fix_rest_ref(t)
        self._update_activity(t, x, y)
        return self._advance(t)

    def feed_token(self, word: SpokenWord) -> list[dict]:
        self.words.append(word)
        return self._advance(word.t0)

    def flush(self) -> list[dict]:
        out = []
        if self.pending_cut is not None:
            out.extend(self._commit(self.pending_cut[0]))
            self.pending_cut = None
        if self.t_start is not None and self.raw:
            last = self.raw[-1].t + self.dt
            if self._frame_index(last) > self.next_frame:
                out.extend(self._commit(last))
        return out

    # ------------------------------------------------------------------
    def _maybe_fix_rest_ref(self, t: float):
        if self.rest_ref is not None:
            return
        if t - self.t_start >= self.rest_window:
            head = [s for s in self.raw if s.t <= self.t_start + self.rest_window]
            if len(head) >= 2:
                self.rest_ref = estimate_rest_centroid(head)

    def _update_activity(self, t, x, y):
        if self.rest_ref is None:
            return
        if math.hypot(x - self.rest_ref[0], y - self.rest_ref[1]) > self.stream_cfg.act_radius:
            self.activity = True

    def _rest_confirmed(self, t: float) -> bool:
        rx, ry = self.rest_ref
        lo = t - self.stream_cfg.rest_confirm
        if lo < self.cursor_time - 1e-9 and self.next_frame > 0:
            return False
        window = [s for s in self.raw if s.t >= lo]
        if len(window) < 2 or window[0].t > lo + self.dt * 1.5:
            return False
        return all(
            math.hypot(s.x - rx, s.y - ry) <= self.stream_cfg.rest_radius for s in window
        )

    def _advance(self, event_time: float) -> list[dict]:
        self.stream_time = max(self.stream_time, event_time)
        out: list[dict] = []
        if (
            self.pending_cut is None
            and self.rest_ref is not None
            and self.activity
            and self.raw
            and self._rest_confirmed(self.raw[-1].t)
        ):
            cut = self.raw[-1].t
            commit_at = cut + self.engine.cooccurrence.window.post + self.stream_cfg.commit_extra
            self.pending_cut = (cut, commit_at)
        if (
            self.pending_cut is None
            and self.raw
            and self.raw[-1].t - self.cursor_time > self.stream_cfg.horizon
        ):
            self.pending_cut = (self.raw[-1].t, self.raw[-1].t)
        if self.pending_cut is not None and self.stream_time >= self.pending_cut[1] - 1e-9:
            out.extend(self._commit(self.pending_cut[0]))
            self.pending_cut = None
            self.activity = False
        return out

    def _frame_index(self, t: float) -> int:
        return int(math.floor((t - self.t_start) * self.rate + 1e-9)) + 1

    def _grid(self, k0: int, k1: int) -> list[TrajectorySample]:
        times = self.t_start + np.arange(k0, k1) * self.dt
        rt = np.array([s.t for s in self.raw])
        rx = np.array([s.x for s in self.raw])
        ry = np.array([s.y for s in self.raw])
        xs = np.interp(times, rt, rx)
        ys = np.interp(times, rt, ry)
        return [
            TrajectorySample(float(t), float(x), float(y))
            for t, x, y in zip(times, xs, ys)
        ]

    def _chunk_tokens(self, t0: float, t1: float):
        window = self.engine.cooccurrence.window
        lo = t0 - window.pre
        hi = t1 + window.post
        in_range = [w for w in self.words if w.t1 >= lo - 1e-9 and w.t0 <= hi + 1e-9]
        in_range.sort(key=lambda w: (w.t0, w.t1, w.text))
        return spot_keywords(self.engine.lexicon, in_range, self.engine.map_ctx)

    def _commit(self, cut_time: float) -> list[dict]:
        k0 = self.next_frame
        k1 = min(self._frame_index(cut_time), self._frame_index(self.raw[-1].t))
        if k1 - k0 < 8:
            self.next_frame = max(self.next_frame, k1)
            self._trim()
            return []
        grid = self._grid(k0, k1)
        rest_ref = self.rest_ref or estimate_rest_centroid(grid)
        features = extract_features(grid, rest_ref)
        cfg = self.engine.config
        nbest = cfg.decoder.nbest if self.fusion_on else 1
        hyps = decode_continuous(
            self.engine.network, self.engine.models, features, nbest=nbest,
            samples=grid, stroke_repeat=cfg.decoder.stroke_repeat,
        )
        hyps = [
            (
                [
                    classify_closure(s, cfg.closure.eps_close, cfg.closure.theta_turn)
                    if s.kind in (PhonemeKind.CONTOUR, PhonemeKind.CIRCLE)
                    else s
                    for s in segs
                ],
                score,
            )
            for segs, score in hyps
        ]
        tokens = self._chunk_tokens(grid[0].t, grid[-1].t + self.dt)
        if self.fusion_on and len(hyps) > 1:
            acoustic_top = hyps[0][0]
            holds = detect_holds(
                features, acoustic_top, cfg.kinematics.v_hold,
                cfg.kinematics.tau_hold, cfg.kinematics.gap_max,
            )
            hyps = rescore_nbest(hyps, tokens, self.engine.cooccurrence, holds)
        segments = [
            replace(s, id=self.next_segment_id + i) for i, s in enumerate(hyps[0][0])
        ]
        self.next_segment_id += len(segments)
        holds = detect_holds(
            features, segments, cfg.kinematics.v_hold,
            cfg.kinematics.tau_hold, cfg.kinematics.gap_max,
        )
        phrase_data = self.engine.interpret(segments, holds, tokens, self.next_phrase_id)
        self.next_phrase_id += len(phrase_data)

        records = []
        for phrase, labeled, complexes, commands, diagnostics in phrase_data:
            records.append(
                build_phrase_record(
                    self.session_id, phrase, labeled, complexes, commands, diagnostics
                )
            )
            self.committed.labeled.extend(labeled)
            self.committed.commands.extend(commands)
        self.committed.segments.extend(segments)
        self.committed.records.extend(records)
        self.next_frame = k1
        self._trim()
        return records

    def _trim(self):
        keep_from = self.cursor_time - 1.0
        while len(self.raw) > 2 and self.raw[1].t < keep_from:
            self.raw.pop(0)
        window = self.engine.cooccurrence.window
        tok_keep = self.cursor_time - window.pre - 1.0
        self.words = [w for w in self.words if w.t1 >= tok_keep]

    # ------------------------------------------------------------------
    def partial_final_phoneme(self) -> Optional[PhonemeKind]:
        """Phoneme of the best open-ended hypothesis at the newest frame.

        Best-effort feedback only; never affects committed output.
        """
        if self.t_start is None or self.rest_ref is None or not self.raw:
            return None
        k0 = self.next_frame
        k1 = self._frame_index(self.raw[-1].t)
        if k1 - k0 < 4:
            return None
        grid = self._grid(k0, k1)
        features = extract_features(grid, self.rest_ref)
        return _open_end_phoneme(self.engine, features)


def _open_end_phoneme(engine: Engine, features) -> PhonemeKind:
    from .morphology import _Composite
    from .kinematics import feature_matrix

    composite = _Composite(
        engine.network, engine.models,
        stroke_repeat=engine.config.decoder.stroke_repeat,
    )
    B = composite.emissions(feature_matrix(features))
    alpha = np.full(composite.n, -np.inf)
    alpha[composite.start_state] = composite.start_logp + B[0, composite.start_state]
    for t in range(1, B.shape[0]):
        new = np.full(composite.n, -np.inf)
        for j in range(composite.n):
            best = -np.inf
            for (i, w, _) in composite.in_arcs[j]:
                v = alpha[i] + w
                if v > best:
                    best = v
            new[j] = best + B[t, j]
        alpha = new
    return composite.phonemes[int(composite.state_phoneme[int(np.argmax(alpha))])]


def session_rest_ref(record: SessionRecord, rest_window: float = 0.5):
    """Rest reference from the leading samples; prefix-computable, so the
    streaming and batch paths agree."""
    head = [s for s in record.samples if s.t <= record.samples[0].t + rest_window]
    return estimate_rest_centroid(head if len(head) >= 2 else record.samples)


def collect_training_segments(corpus, config: EngineConfig, trim: int = 1):
    """Per-phoneme feature slices from truth-labeled sessions.

    One frame is trimmed from each side of every slice: central differences
    smear observations across segment boundaries, and the blurred frames
    otherwise dominate the entry and exit states.
    """
    import numpy as np

    topology = config.decoder.topology()
    by_phoneme: dict[PhonemeKind, list] = {k: [] for k in topology.state_counts}
    for rec in corpus:
        rest_ref = session_rest_ref(rec, config.kinematics.rest_window)
        feats = extract_features(rec.samples, rest_ref)
        X = np.array([f.as_array() for f in feats])
        t = np.array([f.t for f in feats])
        for seg in rec.truth_segments:
            lo = int(np.searchsorted(t, seg.t0 - 1e-9, side="left")) + trim
            hi = int(np.searchsorted(t, seg.t1 - 1e-9, side="left")) - trim
            if hi - lo >= topology.n_states(seg.phoneme):
                by_phoneme[seg.phoneme].append(X[lo:hi])
    return by_phoneme


def _merged_events(record: SessionRecord):
    """Deterministic replay order: by event time, samples before tokens."""
    events = [(s.t, 0, i, ("sample", s)) for i, s in enumerate(record.samples)]
    events += [(w.t0, 1, i, ("token", w)) for i, w in enumerate(record.tokens)]
    events.sort(key=lambda e: (e[0], e[1], e[2]))
    return [e[3] for e in events]


def decode_session(
    engine: Engine, record: SessionRecord, fusion_on: bool = True
) -> DecodedSession:
    """Batch decode: replay the session through the stream decoder."""
    sd = StreamDecoder(engine, fusion_on=fusion_on, session_id=record.session_id)
    for kind, payload in _merged_events(record):
        if kind == "sample":
            sd.feed_sample(payload.t, payload.x, payload.y)
        else:
            sd.feed_token(payload)
    sd.flush()
    c = sd.committed
    return DecodedSession(
        session_id=record.session_id,
        segments=tuple(c.segments),
        labeled=tuple(c.labeled),
        commands=tuple(c.commands),
        records=tuple(c.records),
    )
