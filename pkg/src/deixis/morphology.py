"""Morphological network over phoneme HMMs and continuous decoding.

The network constrains which phoneme may follow which: rest leads to
preparation, preparation to a stroke, strokes may chain directly into
further strokes or a new preparation (retraction elision), and retraction
returns to rest. Continuous decoding runs token-passing Viterbi over the
composite state graph formed by joining the per-phoneme left-to-right
models along network edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import IncompleteTopology, StreamTooShort, WrongKind
from .hmm import Hmm, ModelTopology, viterbi_decode
from .kinematics import FeatureVector, TrajectorySample, feature_matrix, feature_times
from .phoneme import PHONEME_ORDER, STROKE_KINDS, PhonemeKind, is_stroke

DEFAULT_EDGE_PENALTY = -1.0
# Direct stroke-to-stroke chaining (retraction elided) carries a stiffer
# default prior: with a uniform penalty the n-best fills with implausible
# rapid stroke chains at high noise.
CHAIN_EDGE_PENALTY = -5.0

_DEFAULT_EDGES = [
    (PhonemeKind.REST, PhonemeKind.PREPARATION),
    (PhonemeKind.PREPARATION, PhonemeKind.POINT),
    (PhonemeKind.PREPARATION, PhonemeKind.CONTOUR),
    (PhonemeKind.PREPARATION, PhonemeKind.CIRCLE),
    (PhonemeKind.RETRACTION, PhonemeKind.REST),
] + [
    (s, d)
    for s in (PhonemeKind.POINT, PhonemeKind.CONTOUR, PhonemeKind.CIRCLE)
    for d in (
        PhonemeKind.RETRACTION,
        PhonemeKind.PREPARATION,
        PhonemeKind.POINT,
        PhonemeKind.CONTOUR,
        PhonemeKind.CIRCLE,
    )
]

_CHAIN_EDGES = frozenset(
    (a, b) for (a, b) in _DEFAULT_EDGES if is_stroke(a) and is_stroke(b)
)


@dataclass(frozen=True)
class MorphNetwork:
    nodes: tuple
    edges: Mapping  # (src, dst) -> log penalty

    def __post_init__(self):
        if PhonemeKind.REST not in self.nodes:
            raise ValueError("network must contain the rest node")
        for (a, b) in self.edges:
            if a not in self.nodes or b not in self.nodes:
                raise ValueError(f"edge {a.value}->{b.value} references unknown node")
        # no stroke-free, rest-free cycle: the subgraph restricted to
        # preparation/retraction must be acyclic
        restricted = {PhonemeKind.PREPARATION, PhonemeKind.RETRACTION} & set(self.nodes)
        adj = {n: [b for (a, b) in self.edges if a == n and b in restricted] for n in restricted}
        seen: set = set()

        def dfs(node, stack):
            if node in stack:
                raise ValueError("network has a cycle without a stroke or rest")
            if node in seen:
                return
            seen.add(node)
            for nxt in adj[node]:
                dfs(nxt, stack | {node})

        for n in restricted:
            dfs(n, frozenset())

    def successors(self, kind: PhonemeKind):
        return [b for (a, b) in self.edges if a == kind]

    def has_edge(self, a: PhonemeKind, b: PhonemeKind) -> bool:
        return (a, b) in self.edges

    def is_valid_walk(self, kinds: Sequence[PhonemeKind]) -> bool:
        """A decoded label sequence must start and end at rest and follow edges."""
        if not kinds:
            return False
        if kinds[0] != PhonemeKind.REST or kinds[-1] != PhonemeKind.REST:
            return False
        return all(self.has_edge(a, b) for a, b in zip(kinds, kinds[1:]))


def build_default_network(topology: ModelTopology, penalties=None) -> MorphNetwork:
    """The standard transition graph with configurable log penalties.

    ``penalties`` is None for the per-edge defaults, a single log penalty
    applied to all edges, or a map from (src, dst) pairs to log penalties
    (unmapped edges keep their defaults).
    """
    if not topology.covers(PHONEME_ORDER):
        missing = [k.value for k in PHONEME_ORDER if k not in topology.state_counts]
        raise IncompleteTopology(f"topology missing phonemes: {', '.join(missing)}")

    def default_for(edge):
        return CHAIN_EDGE_PENALTY if edge in _CHAIN_EDGES else DEFAULT_EDGE_PENALTY

    if isinstance(penalties, Mapping):
        edges = {e: float(penalties.get(e, default_for(e))) for e in _DEFAULT_EDGES}
    elif penalties is None:
        edges = {e: default_for(e) for e in _DEFAULT_EDGES}
    else:
        edges = {e: float(penalties) for e in _DEFAULT_EDGES}
    return MorphNetwork(nodes=PHONEME_ORDER, edges=edges)


@dataclass(frozen=True)
class StrokeSegment:
    id: int
    kind: PhonemeKind
    t0: float
    t1: float
    score: float
    path_points: tuple = ()
    closure: bool = False

    def __post_init__(self):
        if not self.t0 < self.t1:
            raise ValueError("segment must have positive duration")
        if self.closure and self.kind not in (PhonemeKind.CONTOUR, PhonemeKind.CIRCLE):
            raise ValueError("closure applies only to contour/circle segments")


@dataclass(frozen=True)
class GesturePhrase:
    id: int
    segments: tuple
    holds: tuple = ()

    @property
    def t0(self) -> float:
        return self.segments[0].t0

    @property
    def t1(self) -> float:
        return self.segments[-1].t1

    @property
    def strokes(self) -> tuple:
        return tuple(s for s in self.segments if is_stroke(s.kind))


class _Composite:
    """Flattened state space: phoneme HMMs joined along network edges.

    Entry to a phoneme is always through its state 0 (charging that
    phoneme's own initial log-probability); exit is only from its final
    state. Stroke-phoneme states are expanded ``stroke_repeat`` times with
    tied emissions, forcing each state to persist that many frames; this
    leaves the score of every still-admissible path unchanged (each
    forced step costs the state's self-loop, exactly as dwelling did) but
    removes few-frame flick strokes from the search space entirely.
    """

    def __init__(
        self,
        network: MorphNetwork,
        models: Mapping[PhonemeKind, Hmm],
        stroke_repeat: int = 1,
    ):
        self.phonemes = [k for k in PHONEME_ORDER if k in network.nodes]
        for k in self.phonemes:
            if k not in models:
                raise IncompleteTopology(f"no model for phoneme {k.value}")
        self.models = models
        self.network = network
        self.repeat = {
            k: (stroke_repeat if is_stroke(k) else 1) for k in self.phonemes
        }

        self.offset = {}
        total = 0
        for k in self.phonemes:
            self.offset[k] = total
            total += models[k].n_states * self.repeat[k]
        self.n = total
        self.state_phoneme = np.empty(total, dtype=int)
        self.state_model_index = np.empty(total, dtype=int)
        for pi, k in enumerate(self.phonemes):
            m, off, rep = models[k], self.offset[k], self.repeat[k]
            for i in range(m.n_states):
                for r in range(rep):
                    idx = off + i * rep + r
                    self.state_phoneme[idx] = pi
                    self.state_model_index[idx] = i

        # incoming arcs per composite state: (src, weight, crossing)
        self.in_arcs: list[list] = [[] for _ in range(total)]
        for k in self.phonemes:
            m, off, rep = models[k], self.offset[k], self.repeat[k]
            for i in range(m.n_states):
                a_stay = float(m.log_trans[i, i]) if np.isfinite(m.log_trans[i, i]) else None
                last = off + i * rep + (rep - 1)
                for r in range(rep - 1):
                    # forced duration step, priced like a self-loop
                    if a_stay is not None:
                        self.in_arcs[off + i * rep + r + 1].append(
                            (off + i * rep + r, a_stay, False)
                        )
                if a_stay is not None:
                    self.in_arcs[last].append((last, a_stay, False))
                if i + 1 < m.n_states and np.isfinite(m.log_trans[i, i + 1]):
                    self.in_arcs[off + (i + 1) * rep].append(
                        (last, float(m.log_trans[i, i + 1]), False)
                    )
        for (a, b), pen in network.edges.items():
            m_a, m_b = models[a], models[b]
            src = self.offset[a] + (m_a.n_states - 1) * self.repeat[a] + (self.repeat[a] - 1)
            dst = self.offset[b]
            w = float(pen) + float(m_b.log_init[0])
            self.in_arcs[dst].append((src, w, True))
        for arcs in self.in_arcs:
            arcs.sort()

        rest = PhonemeKind.REST
        self.start_state = self.offset[rest]
        self.start_logp = float(models[rest].log_init[0])
        self.final_states = list(
            range(self.offset[rest], self.offset[rest] + models[rest].n_states)
        )

    def emissions(self, features) -> np.ndarray:
        X = feature_matrix(features)
        cols = []
        for k in self.phonemes:
            B = self.models[k].emission_logprobs(X)
            if self.repeat[k] > 1:
                B = np.repeat(B, self.repeat[k], axis=1)
            cols.append(B)
        return np.concatenate(cols, axis=1)


def _segments_from_boundaries(
    composite: _Composite,
    boundaries: Sequence,
    times: np.ndarray,
    dt: float,
    features,
) -> list[StrokeSegment]:
    """Materialize (phoneme, start_frame) boundary lists into segments.

    Per-segment scores are the within-segment Viterbi log-probability under
    that phoneme's model.
    """
    T = times.size
    X = feature_matrix(features)
    segs = []
    for idx, (pi, f0) in enumerate(boundaries):
        f1 = boundaries[idx + 1][1] if idx + 1 < len(boundaries) else T
        kind = composite.phonemes[pi]
        t0 = float(times[f0])
        t1 = float(times[f1]) if f1 < T else float(times[-1] + dt)
        _, score = viterbi_decode(composite.models[kind], X[f0:f1])
        segs.append(StrokeSegment(id=idx, kind=kind, t0=t0, t1=t1, score=score))
    return segs


def decode_continuous(
    network: MorphNetwork,
    models: Mapping[PhonemeKind, Hmm],
    features: Sequence[FeatureVector],
    nbest: int = 1,
    samples: Optional[Sequence[TrajectorySample]] = None,
    stroke_repeat: int = 1,
) -> list[tuple[list[StrokeSegment], float]]:
    """Token-passing Viterbi over the composite graph, best hypotheses first.

    Every hypothesis is a full segmentation whose label sequence is a valid
    network walk from rest back to rest. Hypotheses are distinct in label
    sequence or boundaries; the top hypothesis is the exact single best.
    When ``samples`` (aligned with ``features``) are given, the covered
    positions are attached to each segment.
    """
    if nbest < 1:
        raise ValueError("nbest must be >= 1")
    X = feature_matrix(features)
    T = X.shape[0]
    if T < 1:
        raise StreamTooShort("empty feature stream")
    composite = _Composite(network, models, stroke_repeat=stroke_repeat)
    B = composite.emissions(X)
    times = feature_times(features) if not isinstance(features, np.ndarray) else np.arange(T, dtype=float)
    dt = float(times[1] - times[0]) if T > 1 else 1.0

    # tokens: per composite state, {label sequence: (score, boundaries)};
    # survivors are deduplicated by phoneme label sequence, so the n-best
    # is diverse in labels, and each surviving label sequence carries the
    # boundaries of its best-scoring path
    p0 = int(composite.state_phoneme[composite.start_state])
    tokens: list[dict] = [dict() for _ in range(composite.n)]
    tokens[composite.start_state][(p0,)] = (
        composite.start_logp + B[0, composite.start_state],
        ((p0, 0),),
    )

    def prune(d: dict) -> dict:
        if len(d) <= nbest:
            return d
        best = sorted(d.items(), key=lambda kv: (-kv[1][0], kv[0]))[:nbest]
        return dict(best)

    for t in range(1, T):
        new_tokens: list[dict] = [dict() for _ in range(composite.n)]
        for j in range(composite.n):
            acc = new_tokens[j]
            pj = int(composite.state_phoneme[j])
            for (i, w, crossing) in composite.in_arcs[j]:
                src = tokens[i]
                if not src:
                    continue
                base = w + B[t, j]
                for labels, (sc, bounds) in src.items():
                    if crossing:
                        nl = labels + (pj,)
                        nb = bounds + ((pj, t),)
                    else:
                        nl, nb = labels, bounds
                    ns = sc + base
                    old = acc.get(nl)
                    if old is None or ns > old[0]:
                        acc[nl] = (ns, nb)
            new_tokens[j] = prune(acc)
        tokens = new_tokens

    final: dict = {}
    for s in composite.final_states:
        for labels, (sc, bounds) in tokens[s].items():
            old = final.get(labels)
            if old is None or sc > old[0]:
                final[labels] = (sc, bounds)
    if not final:
        raise StreamTooShort("no admissible path ends in rest")

    ranked = sorted(final.items(), key=lambda kv: (-kv[1][0], kv[0]))[:nbest]
    out = []
    for labels, (sc, bounds) in ranked:
        segs = _segments_from_boundaries(composite, bounds, times, dt, X)
        if samples is not None:
            segs = with_path_points(segs, samples)
        out.append((segs, float(sc)))
    return out


def with_path_points(
    segments: Sequence[StrokeSegment], samples: Sequence[TrajectorySample]
) -> list[StrokeSegment]:
    """Attach the (x, y) positions covered by each segment's time span."""
    ts = np.array([s.t for s in samples])
    out = []
    for seg in segments:
        i0 = int(np.searchsorted(ts, seg.t0 - 1e-9, side="left"))
        i1 = int(np.searchsorted(ts, seg.t1 - 1e-9, side="left"))
        i1 = max(i1, i0 + 1)
        pts = tuple((samples[i].x, samples[i].y) for i in range(i0, min(i1, len(samples))))
        out.append(replace(seg, path_points=pts))
    return out


def _turning(points: np.ndarray) -> float:
    """Accumulated signed heading change along a polyline, radians."""
    deltas = np.diff(points, axis=0)
    norms = np.hypot(deltas[:, 0], deltas[:, 1])
    keep = deltas[norms > 1e-9]
    if keep.shape[0] < 2:
        return 0.0
    angles = np.arctan2(keep[:, 1], keep[:, 0])
    d = np.diff(angles)
    d = (d + np.pi) % (2 * np.pi) - np.pi
    return float(np.sum(d))


def _reentry_gap(pts: np.ndarray, window: float = 0.3) -> float:
    """Smallest distance between the leading and trailing stretches of a
    path. Robust to decode boundary jitter trimming or extending a loop:
    an over-closed loop whose strict endpoints have drifted apart still
    re-enters its starting region."""
    k = max(1, int(round(window * pts.shape[0])))
    head = pts[:k]
    tail = pts[-k:]
    d = head[None, :, :] - tail[:, None, :]
    return float(np.sqrt((d * d).sum(axis=2)).min())


def classify_closure(
    segment: StrokeSegment,
    eps_close: float = 0.05,
    theta_turn: float = 5.0,
    min_extent: float = 0.08,
) -> StrokeSegment:
    """Resolve contour vs circle geometrically.

    Closure requires both criteria: the stroke returns within
    ``eps_close`` of its starting region and the accumulated |turning|
    reaches ``theta_turn``. The path must also span at least
    ``min_extent``, or a stationary noise cloud would count as an
    arbitrarily small loop. Closed segments become circles, open ones
    contours.
    """
    if segment.kind not in (PhonemeKind.CONTOUR, PhonemeKind.CIRCLE):
        raise WrongKind(f"closure classification does not apply to {segment.kind.value}")
    pts = np.asarray(segment.path_points, dtype=float)
    if pts.shape[0] < 3:
        return replace(segment, kind=PhonemeKind.CONTOUR, closure=False)
    extent = float(np.hypot(*(pts.max(axis=0) - pts.min(axis=0))))
    closed = (
        extent >= min_extent
        and _reentry_gap(pts) <= eps_close
        and abs(_turning(pts)) >= theta_turn
    )
    return replace(
        segment,
        kind=PhonemeKind.CIRCLE if closed else PhonemeKind.CONTOUR,
        closure=closed,
    )


def segment_phrases(segments: Sequence[StrokeSegment]) -> list[GesturePhrase]:
    """Group decoded segments into gesture phrases between rest entries.

    Maximal rest-free runs containing at least one stroke become phrases;
    stroke-free runs (spurious preparation/retraction) are discarded.
    """
    phrases = []
    run: list[StrokeSegment] = []
    pid = 0
    for seg in list(segments) + [None]:
        if seg is None or seg.kind == PhonemeKind.REST:
            if run and any(is_stroke(s.kind) for s in run):
                phrases.append(GesturePhrase(id=pid, segments=tuple(run)))
                pid += 1
            run = []
        else:
            run.append(seg)
    return phrases


def attach_holds(phrases: Sequence[GesturePhrase], holds) -> list[GesturePhrase]:
    """Associate detected holds with the phrase whose span they intersect."""
    out = []
    for p in phrases:
        hs = tuple(h for h in holds if h.t1 >= p.t0 - 1e-9 and h.t0 <= p.t1 + 1e-9)
        out.append(replace(p, holds=hs))
    return out


def replace_phrase(p: GesturePhrase, **kw) -> GesturePhrase:
    return replace(p, **kw)
