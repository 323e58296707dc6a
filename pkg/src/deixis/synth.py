"""Synthetic multimodal sessions: scripted gesture kinematics plus keywords.

Each session is planned as a sequence of phrase templates (valid network
walks), rendered into frame-accurate 2D kinematics (minimum-jerk reaches,
constant-speed path following, closed loops, rest jitter), and paired with
keyword tokens whose onsets follow the during-and-after alignment skew.
Ground truth (segments, deixis labels, intended commands) is recorded in
full, and generation is deterministic per (seed, session index).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .errors import GeneratorNeedsObjects
from .kinematics import TrajectorySample
from .lexicon import SpokenWord
from .mapcontext import MapContext, MapObject, ObjectKind, resolve_enclosure, resolve_path
from .phoneme import PhonemeKind
from .semantics import CommandVerb, DeixisCategory, DeixisSubclass
from .session import (
    SessionRecord,
    TruthCommand,
    TruthDeixis,
    TruthSegment,
    qt,
)

DEFAULT_PLAN_WEIGHTS = {
    "nominal_point": 0.22,
    "spatial_point": 0.08,
    "medial_contour": 0.25,
    "iconic_contour": 0.10,
    "circle_area": 0.12,
    "from_to": 0.12,
    "take_out": 0.11,
}

REST_JITTER_SD = 0.005


@dataclass(frozen=True)
class SyntheticConfig:
    n_sessions: int = 1
    noise_sigma: float = 0.004
    keyword_offset_mean: float = 0.25
    keyword_offset_sd: float = 0.3
    keyword_offset_clip: tuple = (-0.3, 1.2)
    drop_keyword_prob: float = 0.07
    phrase_plan_weights: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_PLAN_WEIGHTS)
    )
    phrases_min: int = 1
    phrases_max: int = 2
    seed: int = 0
    rate_hz: float = 30.0
    rest_pos: tuple = (0.1, 0.9)


@dataclass
class _Phase:
    phoneme: PhonemeKind
    duration: float
    fn: Callable  # u in [0, 1] -> (x, y)


@dataclass
class _StrokeScript:
    phase_index: int  # index into the phase list
    category: DeixisCategory
    subclass: DeixisSubclass
    words: tuple  # keyword group, dropped as a unit
    lead_words: tuple = ()  # (word, offset before stroke onset), always kept


def _minjerk(u: float) -> float:
    return u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)


def _reach(p0, p1) -> Callable:
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)

    def fn(u):
        s = _minjerk(u)
        return tuple(p0 + (p1 - p0) * s)

    return fn


def _reach_then_dwell(p0, p1, move_frac: float) -> Callable:
    move = _reach(p0, p1)

    def fn(u):
        if u < move_frac:
            return move(u / move_frac)
        return tuple(p1)

    return fn


def _point_approach(p0, p1, move_frac: float, overshoot: float) -> Callable:
    """Pointing approach with a corrective submovement: overshoot the
    target slightly, hook back, then dwell. The sign flip in radial
    velocity is what distinguishes a pointing stop from the tail of a
    plain reach."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    d = p1 - p0
    n = float(np.hypot(*d))
    over = p1 + (d / n * overshoot if n > 1e-9 else np.array([overshoot, 0.0]))
    out = _reach(p0, over)
    back = _reach(over, p1)
    split = 0.7  # fraction of the approach spent on the outbound leg

    def fn(u):
        if u >= move_frac:
            return tuple(p1)
        v = u / move_frac
        if v < split:
            return out(v / split)
        return back((v - split) / (1.0 - split))

    return fn


def _along(points: Sequence) -> Callable:
    pts = np.asarray(points, dtype=float)
    seg = np.hypot(*np.diff(pts, axis=0).T)
    cum = np.r_[0.0, np.cumsum(seg)]
    total = cum[-1] if cum[-1] > 0 else 1.0

    def fn(u):
        s = u * total
        x = np.interp(s, cum, pts[:, 0])
        y = np.interp(s, cum, pts[:, 1])
        return (float(x), float(y))

    return fn


def _loop(center, radius: float, theta0: float, revs: float) -> Callable:
    cx, cy = center

    def fn(u):
        a = theta0 + 2.0 * math.pi * revs * u
        return (cx + radius * math.cos(a), cy + radius * math.sin(a))

    return fn


def _centroid(obj: MapObject) -> tuple:
    c = obj.geometry.centroid
    return (float(c.x), float(c.y))


def _staging(rest, target, pull: float = 0.10) -> tuple:
    rest = np.asarray(rest, dtype=float)
    target = np.asarray(target, dtype=float)
    d = target - rest
    n = float(np.hypot(*d))
    if n < 2 * pull:
        return tuple(rest + d * 0.5)
    return tuple(target - d / n * pull)


def _clip_unit(p, margin: float = 0.02) -> tuple:
    return (
        float(np.clip(p[0], margin, 1 - margin)),
        float(np.clip(p[1], margin, 1 - margin)),
    )


def _away_dir(p) -> np.ndarray:
    d = np.asarray(p, dtype=float) - np.array([0.5, 0.5])
    n = float(np.hypot(*d))
    if n < 1e-6:
        return np.array([1.0, 0.0])
    return d / n


class _PhraseBuilder:
    """Assembles one phrase: phases, stroke scripts, truth commands."""

    def __init__(self, rng, ctx: MapContext, rest_pos):
        self.rng = rng
        self.ctx = ctx
        self.rest = rest_pos
        self.phases: list[_Phase] = []
        self.strokes: list[_StrokeScript] = []
        self.commands: list[TruthCommand] = []
        self.cur = np.asarray(rest_pos, dtype=float)

    def _u(self, lo, hi) -> float:
        return float(self.rng.uniform(lo, hi))

    def prep(self, target, hold: bool = False):
        # every reach settles at the staging position, long enough that the
        # preparation model's final state trains into a tight dwell state;
        # a scripted pre-stroke hold is just a long settle
        settle = self._u(0.35, 0.5) if hold else self._u(0.18, 0.3)
        # duration scales with distance, so transport reaches run at a
        # near-constant ballistic peak speed well above any stroke
        dist = float(np.hypot(*(np.asarray(target) - self.cur)))
        reach = float(np.clip(dist / 1.2, 0.3, 0.8)) * self._u(1.0, 1.15)
        frac = reach / (reach + settle)
        self.phases.append(
            _Phase(PhonemeKind.PREPARATION, reach + settle,
                   _reach_then_dwell(tuple(self.cur), target, frac))
        )
        self.cur = np.asarray(target, dtype=float)

    def point(self, target, category, subclass, words, lead=()):
        approach = self._u(0.25, 0.32)
        dwell = self._u(0.22, 0.3)
        frac = approach / (approach + dwell)
        self.phases.append(
            _Phase(PhonemeKind.POINT, approach + dwell,
                   _point_approach(tuple(self.cur), target, frac,
                                   overshoot=self._u(0.02, 0.035)))
        )
        self.strokes.append(
            _StrokeScript(len(self.phases) - 1, category, subclass, tuple(words), tuple(lead))
        )
        self.cur = np.asarray(target, dtype=float)

    def contour(self, path_pts, category, subclass, words, lead=()):
        pts = np.asarray(path_pts, dtype=float)
        length = float(np.sum(np.hypot(*np.diff(pts, axis=0).T)))
        speed = self._u(0.25, 0.4)
        dur = float(np.clip(length / max(speed, 1e-6), 0.55, 1.4))
        self.phases.append(_Phase(PhonemeKind.CONTOUR, dur, _along(pts)))
        self.strokes.append(
            _StrokeScript(len(self.phases) - 1, category, subclass, tuple(words), tuple(lead))
        )
        self.cur = pts[-1].copy()

    def circle(self, center, radius, category, subclass, words):
        theta0 = self._u(0.0, 2.0 * math.pi)
        # overshoot keeps the traced loop closed even when decode boundary
        # jitter trims a few frames off either end
        revs = self._u(1.15, 1.3)
        dur = self._u(0.9, 1.4)
        self.phases.append(_Phase(PhonemeKind.CIRCLE, dur, _loop(center, radius, theta0, revs)))
        self.strokes.append(
            _StrokeScript(len(self.phases) - 1, category, subclass, tuple(words))
        )
        self.cur = np.asarray(_loop(center, radius, theta0, revs)(1.0), dtype=float)

    def retract(self):
        dist = float(np.hypot(*(np.asarray(self.rest) - self.cur)))
        dur = float(np.clip(dist / 1.2, 0.3, 0.8)) * self._u(1.0, 1.15)
        self.phases.append(
            _Phase(PhonemeKind.RETRACTION, dur, _reach(tuple(self.cur), self.rest))
        )
        self.cur = np.asarray(self.rest, dtype=float)


def _pick(rng, items):
    return items[int(rng.integers(len(items)))]


def _polygons(ctx: MapContext) -> list[MapObject]:
    return [o for o in ctx.objects if o.closed]


def _roads(ctx: MapContext) -> list[MapObject]:
    return [o for o in ctx.objects if not o.closed]


def _empty_spot(rng, ctx: MapContext, min_dist: float = 0.1) -> tuple:
    from shapely.geometry import Point

    for _ in range(200):
        p = (float(rng.uniform(0.06, 0.94)), float(rng.uniform(0.06, 0.94)))
        pt = Point(p)
        if all(o.geometry.distance(pt) > min_dist for o in ctx.objects):
            return p
    return (0.92, 0.08)


def _name_word(obj: MapObject) -> str:
    return obj.name.lower().split()[0]


def _build_phrase(name: str, rng, ctx: MapContext, rest_pos) -> _PhraseBuilder:
    b = _PhraseBuilder(rng, ctx, rest_pos)
    polys = _polygons(ctx)
    if name == "nominal_point":
        obj = _pick(rng, polys)
        target = _centroid(obj)
        b.prep(_staging(rest_pos, target))
        b.point(target, DeixisCategory.TRANSITIVE, DeixisSubclass.NOMINAL,
                ("this", _name_word(obj)))
        b.retract()
        b.commands.append(TruthCommand(CommandVerb.SELECT, (obj.id,)))
    elif name == "spatial_point":
        target = _empty_spot(rng, ctx)
        b.prep(_staging(rest_pos, target))
        b.point(target, DeixisCategory.TRANSITIVE, DeixisSubclass.SPATIAL, ("here",))
        b.retract()
        b.commands.append(TruthCommand(CommandVerb.LOCATE, ()))
    elif name == "medial_contour":
        obj = _pick(rng, polys)
        c = np.asarray(_centroid(obj))
        ang = rng.uniform(0, 2 * math.pi)
        d = np.array([math.cos(ang), math.sin(ang)])
        start = _clip_unit(c - d * 0.20)
        end = _clip_unit(c + d * 0.20)
        mid = _clip_unit(c + np.array([-d[1], d[0]]) * float(rng.uniform(-0.03, 0.03)))
        path = (start, mid, end)
        b.prep(start)
        b.contour(path, DeixisCategory.INTRANSITIVE, DeixisSubclass.MEDIAL,
                  ("go", "through"))
        b.retract()
        ref = resolve_path(ctx, path)
        b.commands.append(TruthCommand(CommandVerb.MOVE, ref.object_ids))
    elif name == "iconic_contour":
        road = _pick(rng, _roads(ctx))
        pts = list(road.points)
        if rng.random() < 0.5:
            pts = pts[::-1]
        b.prep(pts[0])
        b.contour(pts, DeixisCategory.TRANSITIVE, DeixisSubclass.ICONIC,
                  ("this", _name_word(road)))
        b.retract()
        b.commands.append(TruthCommand(CommandVerb.SELECT, (road.id,)))
    elif name == "circle_area":
        obj = _pick(rng, polys)
        center = _centroid(obj)
        x0, y0, x1, y1 = obj.geometry.bounds
        radius = min(0.16, 0.5 * math.hypot(x1 - x0, y1 - y0) + 0.05)
        start = _loop(center, radius, 0.0, 1.0)(0.0)
        b.prep(start)
        b.circle(center, radius, DeixisCategory.TRANSITIVE, DeixisSubclass.SPATIAL,
                 ("this", _name_word(obj)))
        b.retract()
        npts = 48
        loop_pts = [_loop(center, radius, 0.0, 1.0)(u / npts) for u in range(npts + 1)]
        ref = resolve_enclosure(ctx, loop_pts)
        b.commands.append(TruthCommand(CommandVerb.LOCATE, ref.object_ids))
    elif name == "from_to":
        a = _pick(rng, polys)
        others = [
            o for o in polys
            if o.id != a.id
            and math.dist(_centroid(o), _centroid(a)) >= 0.3
        ] or [o for o in polys if o.id != a.id]
        bb = _pick(rng, others)
        ta, tb = _centroid(a), _centroid(bb)
        b.prep(_staging(rest_pos, ta), hold=True)
        b.point(ta, DeixisCategory.INTRANSITIVE, DeixisSubclass.INITIAL, ("from", "here"))
        b.prep(_staging(ta, tb))
        b.point(tb, DeixisCategory.INTRANSITIVE, DeixisSubclass.FINAL, ("to", "here"))
        b.retract()
        b.commands.append(TruthCommand(CommandVerb.MOVE, (a.id, bb.id)))
    elif name == "take_out":
        lots = [o for o in polys if o.kind == ObjectKind.LOT] or polys
        obj = _pick(rng, lots)
        c = np.asarray(_centroid(obj))
        target = tuple(c)
        end = _clip_unit(c + _away_dir(c) * 0.34)
        away = _away_dir(c)
        start = _clip_unit(c + away * 0.12)
        path = (start, end)
        b.prep(_staging(rest_pos, target))
        b.point(target, DeixisCategory.TRANSITIVE, DeixisSubclass.NOMINAL,
                ("this", _name_word(obj)), lead=(("take", 0.5),))
        b.prep(start)
        b.contour(path, DeixisCategory.INTRANSITIVE, DeixisSubclass.MEDIAL, ("out",))
        b.retract()
        ref = resolve_path(ctx, path)
        b.commands.append(TruthCommand(CommandVerb.SELECT, (obj.id,)))
        b.commands.append(TruthCommand(CommandVerb.MOVE, ref.object_ids))
    elif name == "through_then_point":
        # medial contour carrying a pre-stroke hold, answered by a
        # transitive point naming the destination object
        obj = _pick(rng, polys)
        c = np.asarray(_centroid(obj))
        ang = rng.uniform(0, 2 * math.pi)
        d = np.array([math.cos(ang), math.sin(ang)])
        start = _clip_unit(c - d * 0.18)
        end = _clip_unit(c + d * 0.18)
        others = [o for o in polys if o.id != obj.id] or polys
        dest = _pick(rng, others)
        tdest = _centroid(dest)
        b.prep(start, hold=True)
        b.contour((start, end), DeixisCategory.INTRANSITIVE, DeixisSubclass.MEDIAL,
                  ("through",))
        b.prep(_staging(end, tdest))
        b.point(tdest, DeixisCategory.TRANSITIVE, DeixisSubclass.NOMINAL,
                ("this", _name_word(dest)))
        b.retract()
        path_ref = resolve_path(ctx, (start, end))
        b.commands.append(TruthCommand(CommandVerb.MOVE, tuple(dict.fromkeys(
            list(path_ref.object_ids) + [dest.id]))))
    else:
        raise ValueError(f"unknown phrase template {name!r}")
    return b


def available_templates(ctx: MapContext) -> list[str]:
    names = list(DEFAULT_PLAN_WEIGHTS)
    if len(_polygons(ctx)) < 2:
        names.remove("from_to")
    if not _roads(ctx):
        names.remove("iconic_contour")
    if not _polygons(ctx):
        raise GeneratorNeedsObjects("map has no polygon objects")
    return names


def plan_walk(template: str) -> list[PhonemeKind]:
    """The phoneme walk a template renders, rest to rest."""
    body = {
        "nominal_point": [PhonemeKind.PREPARATION, PhonemeKind.POINT, PhonemeKind.RETRACTION],
        "spatial_point": [PhonemeKind.PREPARATION, PhonemeKind.POINT, PhonemeKind.RETRACTION],
        "medial_contour": [PhonemeKind.PREPARATION, PhonemeKind.CONTOUR, PhonemeKind.RETRACTION],
        "iconic_contour": [PhonemeKind.PREPARATION, PhonemeKind.CONTOUR, PhonemeKind.RETRACTION],
        "circle_area": [PhonemeKind.PREPARATION, PhonemeKind.CIRCLE, PhonemeKind.RETRACTION],
        "from_to": [PhonemeKind.PREPARATION, PhonemeKind.POINT, PhonemeKind.PREPARATION,
                    PhonemeKind.POINT, PhonemeKind.RETRACTION],
        "take_out": [PhonemeKind.PREPARATION, PhonemeKind.POINT, PhonemeKind.CONTOUR,
                     PhonemeKind.RETRACTION],
    }[template]
    return [PhonemeKind.REST] + body + [PhonemeKind.REST]


def _sample_templates(rng, cfg: SyntheticConfig, ctx: MapContext, n: int) -> list[str]:
    avail = available_templates(ctx)
    weights = np.array([cfg.phrase_plan_weights.get(t, 0.0) for t in avail], dtype=float)
    if weights.sum() <= 0:
        weights = np.ones(len(avail))
    weights = weights / weights.sum()
    return [avail[int(rng.choice(len(avail), p=weights))] for _ in range(n)]


def generate_session(cfg: SyntheticConfig, ctx: MapContext, index: int) -> SessionRecord:
    rng = np.random.default_rng([cfg.seed, index])
    if not ctx.objects:
        raise GeneratorNeedsObjects("map has no objects")

    n_phrases = int(rng.integers(cfg.phrases_min, cfg.phrases_max + 1))
    templates = _sample_templates(rng, cfg, ctx, n_phrases)

    phases: list[_Phase] = []
    stroke_scripts: list[tuple[int, _StrokeScript]] = []  # (phase offset, script)
    commands: list[TruthCommand] = []

    def add_rest(lo, hi):
        phases.append(_Phase(PhonemeKind.REST, float(rng.uniform(lo, hi)),
                             lambda u: cfg.rest_pos))

    add_rest(0.7, 1.3)
    for k, name in enumerate(templates):
        builder = _build_phrase(name, rng, ctx, cfg.rest_pos)
        offset = len(phases)
        phases.extend(builder.phases)
        stroke_scripts.extend((offset, s) for s in builder.strokes)
        commands.extend(builder.commands)
        if k + 1 < len(templates):
            add_rest(0.7, 1.3)
    add_rest(1.7, 2.1)
    return _render_session(
        phases, stroke_scripts, commands, cfg, rng, f"s{cfg.seed}_{index:04d}"
    )


def _render_session(phases, stroke_scripts, commands, cfg, rng, session_id):
    """Turn a phase plan into a frame-accurate session with tokens and truth."""
    rate = cfg.rate_hz
    dt = 1.0 / rate
    frame_bounds = [0]
    for ph in phases:
        n = max(2, int(round(ph.duration * rate)))
        frame_bounds.append(frame_bounds[-1] + n)
    total = frame_bounds[-1]

    xs = np.empty(total)
    ys = np.empty(total)
    for ph, k0, k1 in zip(phases, frame_bounds, frame_bounds[1:]):
        n = k1 - k0
        for i in range(n):
            u = i / n
            x, y = ph.fn(u)
            xs[k0 + i] = x
            ys[k0 + i] = y
        if ph.phoneme == PhonemeKind.REST:
            xs[k0:k1] += rng.normal(0.0, REST_JITTER_SD, n)
            ys[k0:k1] += rng.normal(0.0, REST_JITTER_SD, n)

    if cfg.noise_sigma > 0:
        xs += rng.normal(0.0, cfg.noise_sigma, total)
        ys += rng.normal(0.0, cfg.noise_sigma, total)
    xs = np.clip(xs, 0.0, 1.0)
    ys = np.clip(ys, 0.0, 1.0)

    samples = tuple(
        TrajectorySample(qt(k * dt), float(xs[k]), float(ys[k])) for k in range(total)
    )
    truth_segments = tuple(
        TruthSegment(qt(k0 * dt), qt(k1 * dt), ph.phoneme)
        for ph, k0, k1 in zip(phases, frame_bounds, frame_bounds[1:])
    )

    truth_deixis = tuple(
        TruthDeixis(offset + s.phase_index, s.category, s.subclass)
        for offset, s in stroke_scripts
    )

    # keyword tokens: one group per stroke, aligned during-and-after
    lo_clip, hi_clip = cfg.keyword_offset_clip
    raw_tokens: list[list] = []
    for offset, script in stroke_scripts:
        stroke_t0 = frame_bounds[offset + script.phase_index] * dt
        for word, lead in script.lead_words:
            t0 = stroke_t0 - lead
            raw_tokens.append([word, t0, t0 + float(rng.uniform(0.18, 0.28))])
        keep = rng.random() >= cfg.drop_keyword_prob
        off = float(np.clip(rng.normal(cfg.keyword_offset_mean, cfg.keyword_offset_sd),
                            lo_clip, hi_clip))
        t = stroke_t0 + off
        for word in script.words:
            dur = float(rng.uniform(0.15, 0.35))
            if keep:
                raw_tokens.append([word, t, t + dur])
            t += dur + float(rng.uniform(0.03, 0.1))

    raw_tokens.sort(key=lambda w: w[1])
    tokens = []
    prev_t1 = None
    for word, t0, t1 in raw_tokens:
        if prev_t1 is not None and t0 < prev_t1 + 0.01:
            shift = prev_t1 + 0.01 - t0
            t0 += shift
            t1 += shift
        prev_t1 = t1
        tokens.append(SpokenWord(word, qt(max(t0, 0.0)), qt(max(t1, t0 + 0.05))))

    record = SessionRecord(
        session_id=session_id,
        samples=samples,
        tokens=tuple(tokens),
        truth_segments=truth_segments,
        truth_deixis=truth_deixis,
        truth_commands=tuple(commands),
        map_ref="",
        seed=cfg.seed,
    )
    return record.validate()


def scripted_session(
    ctx: MapContext,
    template: str,
    session_id: str,
    seed: int = 0,
    cfg: Optional[SyntheticConfig] = None,
    hold: Optional[bool] = None,
) -> SessionRecord:
    """One noise-free single-phrase session for a named template.

    The kinematics are deterministic for the seed; callers typically
    replace the token stream with hand-timed keywords before decoding.
    """
    cfg = cfg or SyntheticConfig(noise_sigma=0.0, drop_keyword_prob=0.0, seed=seed)
    rng = np.random.default_rng([cfg.seed, 977])
    builder = _build_phrase(template, rng, ctx, cfg.rest_pos)
    phases = [_Phase(PhonemeKind.REST, 1.0, lambda u: cfg.rest_pos)]
    offset = len(phases)
    phases.extend(builder.phases)
    scripts = [(offset, s) for s in builder.strokes]
    phases.append(_Phase(PhonemeKind.REST, 1.9, lambda u: cfg.rest_pos))
    return _render_session(phases, scripts, builder.commands, cfg, rng, session_id)


def generate_synthetic(cfg: SyntheticConfig, ctx: MapContext) -> list[SessionRecord]:
    """Deterministic corpus: session ``i`` depends only on (seed, i)."""
    if not ctx.objects:
        raise GeneratorNeedsObjects("map has no objects")
    available_templates(ctx)  # raises early when nothing can be planned
    return [generate_session(cfg, ctx, i) for i in range(cfg.n_sessions)]
