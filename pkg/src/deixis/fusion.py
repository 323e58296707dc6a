"""Decision-level fusion: rescore gesture hypotheses with aligned keywords.

Each stroke in a hypothesis collects at most one affinity bonus, the best
match among the keywords co-occurring with its alignment window. Pre-stroke
holds that overlap a discourse-initial token add a separate bonus. The
decoder itself is untouched; fusion only shifts scores and re-sorts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .kinematics import HoldKind
from .lexicon import KeywordClass, KeywordToken
from .phoneme import PhonemeKind, is_stroke

# a token starting this long after the previous token ends opens a new clause
CLAUSE_GAP = 1.5

# Point pairs with object/place reference classes, contour with motion
# path classes, circle with area/object classes. The adverbial row is
# asymmetric: "here"-style words accompany area-directed strokes far more
# than path-tracing ones, and a flat value would make the bonus unable to
# separate a point from a contour at all. The 10.0 magnitude is what it
# takes for keyword evidence to overturn a decoder preference of several
# nats; these are decision-level weights, freely configurable.
AFFINITY_STRONG = 10.0
AFFINITY_WEAK = 2.0

DEFAULT_AFFINITY: dict[tuple[PhonemeKind, KeywordClass], float] = {}
for _cls in (
    KeywordClass.NOUN,
    KeywordClass.PRONOUN,
    KeywordClass.DEICTIC_MARKER,
    KeywordClass.SPATIAL_ADVERBIAL,
    KeywordClass.PREP_INITIAL,
    KeywordClass.PREP_FINAL,
):
    DEFAULT_AFFINITY[(PhonemeKind.POINT, _cls)] = AFFINITY_STRONG
for _cls in (KeywordClass.PREP_MEDIAL, KeywordClass.MOTION_VERB):
    DEFAULT_AFFINITY[(PhonemeKind.CONTOUR, _cls)] = AFFINITY_STRONG
DEFAULT_AFFINITY[(PhonemeKind.CONTOUR, KeywordClass.SPATIAL_ADVERBIAL)] = AFFINITY_WEAK
DEFAULT_AFFINITY[(PhonemeKind.CIRCLE, KeywordClass.NOUN)] = AFFINITY_STRONG
DEFAULT_AFFINITY[(PhonemeKind.CIRCLE, KeywordClass.SPATIAL_ADVERBIAL)] = AFFINITY_WEAK


@dataclass(frozen=True)
class AlignmentWindow:
    """Seconds of extension before stroke onset and after stroke end."""

    pre: float = 0.2
    post: float = 1.0

    def __post_init__(self):
        if self.pre < 0 or self.post < 0:
            raise ValueError("window extents must be non-negative")


@dataclass(frozen=True)
class CoOccurrenceModel:
    window: AlignmentWindow = AlignmentWindow()
    affinity: Mapping = field(default_factory=lambda: dict(DEFAULT_AFFINITY))
    holds_bonus: float = 3.0

    def __post_init__(self):
        for (kind, cls), bonus in self.affinity.items():
            if cls == KeywordClass.OTHER and bonus != 0.0:
                raise ValueError("Other-class affinity must be zero")

    def bonus(self, kind: PhonemeKind, cls: KeywordClass) -> float:
        return float(self.affinity.get((kind, cls), 0.0))

    @staticmethod
    def zeroed() -> "CoOccurrenceModel":
        return CoOccurrenceModel(affinity={}, holds_bonus=0.0)


def cooccurring_tokens(
    segment, tokens: Sequence[KeywordToken], window: AlignmentWindow
) -> list[KeywordToken]:
    """Tokens whose extent intersects the segment's widened span.

    Intersection is closed on both ends: a token ending exactly at
    segment.t0 - window.pre still counts.
    """
    lo = segment.t0 - window.pre
    hi = segment.t1 + window.post
    return [tok for tok in tokens if tok.t1 >= lo - 1e-12 and tok.t0 <= hi + 1e-12]


def assign_tokens(
    strokes: Sequence, tokens: Sequence[KeywordToken], window: AlignmentWindow
) -> dict:
    """One stroke per token: among strokes whose alignment window co-occurs
    with the token, the one with the cheapest temporal cost, keyed by
    stroke id. A token spoken during a stroke costs nothing; one starting
    before the stroke's onset is cheap (the gesture waits for its
    co-expressive speech); one trailing after the stroke's end is doubly
    expensive. Keeps a keyword from testifying for several neighbors."""
    out: dict = {s.id: [] for s in strokes}
    for tok in tokens:
        best = None
        for s in strokes:
            if not cooccurring_tokens(s, [tok], window):
                continue
            if tok.t0 < s.t0:
                d = s.t0 - tok.t0
            else:
                d = 2.0 * max(0.0, tok.t0 - s.t1)
            if best is None or d < best[0] - 1e-12:
                best = (d, s.id)
        if best is not None:
            out[best[1]].append(tok)
    return out


def discourse_initial_tokens(tokens: Sequence[KeywordToken]) -> list[KeywordToken]:
    """Tokens that open a clause: the first token, or any token following a
    silence of at least CLAUSE_GAP."""
    out = []
    prev_t1 = None
    for tok in sorted(tokens, key=lambda t: t.t0):
        if prev_t1 is None or tok.t0 - prev_t1 >= CLAUSE_GAP:
            out.append(tok)
        prev_t1 = max(prev_t1, tok.t1) if prev_t1 is not None else tok.t1
    return out


def _hypothesis_bonus(
    segments, tokens, model: CoOccurrenceModel, holds, initial_tokens
) -> float:
    strokes = [s for s in segments if is_stroke(s.kind)]
    assigned = assign_tokens(strokes, tokens, model.window)
    total = 0.0
    for seg in strokes:
        # one bonus per stroke, from its own aligned keywords only, so a
        # mislabeled stroke cannot borrow a neighbor's keyword class and a
        # split stroke cannot mint extra bonuses
        near = assigned.get(seg.id, [])
        if near:
            total += max(model.bonus(seg.kind, tok.word_class) for tok in near)
    if model.holds_bonus and holds:
        # pre-stroke-ness is judged against this hypothesis's own strokes:
        # the detected hold intervals are hypothesis-independent, but which
        # hypothesis places a stroke right after a hold is exactly the
        # boundary evidence worth rewarding
        stroke_starts = [s.t0 for s in strokes]
        for hold in holds:
            anchored = any(
                -1e-9 <= t0 - hold.t1 <= model.window.pre + 1e-9 for t0 in stroke_starts
            )
            if not anchored:
                continue
            if any(
                tok.t1 >= hold.t0 - model.window.pre and tok.t0 <= hold.t1 + model.window.post
                for tok in initial_tokens
            ):
                total += model.holds_bonus
    return total


def rescore_nbest(
    hypotheses: Sequence[tuple],
    tokens: Sequence[KeywordToken],
    model: CoOccurrenceModel,
    holds: Sequence = (),
) -> list[tuple]:
    """Add co-occurrence bonuses to each hypothesis and re-sort, stably.

    The hypothesis set is unchanged; only scores and order move. With no
    tokens and no qualifying holds the input order is preserved exactly.
    """
    if not hypotheses:
        raise ValueError("need at least one hypothesis")
    initial = discourse_initial_tokens(tokens) if tokens else []
    rescored = [
        (segs, score + _hypothesis_bonus(segs, tokens, model, holds, initial))
        for segs, score in hypotheses
    ]
    order = sorted(range(len(rescored)), key=lambda i: -rescored[i][1])
    return [rescored[i] for i in order]
