"""From strokes plus aligned keywords to deixis labels, motion complexes,
and executable map commands.

Transitive deixis references objects without displacement (nominal,
spatial, iconic); intransitive deixis expresses displacement (initial,
medial, final, after Talmy's motion-verb split). Motion complexes bind
deixis-labeled strokes into one displacement expression: a transitive
complex ends in a destination point, an intransitive complex does not.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .kinematics import HoldSegment
from .lexicon import PREP_CLASSES, KeywordClass, KeywordToken
from .mapcontext import RefKind, ReferenceResolution
from .morphology import GesturePhrase, StrokeSegment
from .phoneme import PhonemeKind

log = logging.getLogger(__name__)

ICONIC_THRESHOLD = 0.6
SYNC_SLACK = 0.1
DEMOTION_PENALTY = 0.3
FALLBACK_CONFIDENCE = 0.3


class DeixisCategory(str, Enum):
    TRANSITIVE = "transitive"
    INTRANSITIVE = "intransitive"


class DeixisSubclass(str, Enum):
    NOMINAL = "nominal"
    SPATIAL = "spatial"
    ICONIC = "iconic"
    INITIAL = "initial"
    MEDIAL = "medial"
    FINAL = "final"


TRANSITIVE_SUBCLASSES = frozenset(
    {DeixisSubclass.NOMINAL, DeixisSubclass.SPATIAL, DeixisSubclass.ICONIC}
)
_PREP_TO_SUBCLASS = {
    KeywordClass.PREP_INITIAL: DeixisSubclass.INITIAL,
    KeywordClass.PREP_MEDIAL: DeixisSubclass.MEDIAL,
    KeywordClass.PREP_FINAL: DeixisSubclass.FINAL,
}


@dataclass(frozen=True)
class DeixisLabel:
    category: DeixisCategory
    subclass: DeixisSubclass
    confidence: float

    def __post_init__(self):
        transitive = self.subclass in TRANSITIVE_SUBCLASSES
        if transitive != (self.category == DeixisCategory.TRANSITIVE):
            raise ValueError(f"subclass {self.subclass.value} inconsistent with {self.category.value}")


@dataclass(frozen=True)
class LabeledStroke:
    stroke: StrokeSegment
    deixis: DeixisLabel
    reference: ReferenceResolution
    evidence: tuple = ()
    pre_hold: Optional[HoldSegment] = None

    def __post_init__(self):
        if (
            self.deixis.category == DeixisCategory.INTRANSITIVE
            and self.reference.kind == RefKind.OBJECT
        ):
            raise ValueError("intransitive labels need path or area references")


class MotionComplexKind(str, Enum):
    TRANSITIVE = "transitive_complex"
    INTRANSITIVE = "intransitive_complex"


@dataclass(frozen=True)
class MotionComplex:
    kind: MotionComplexKind
    strokes: tuple
    source: Optional[ReferenceResolution] = None
    path: Optional[ReferenceResolution] = None
    destination: Optional[ReferenceResolution] = None

    def __post_init__(self):
        if self.kind == MotionComplexKind.TRANSITIVE and self.destination is None:
            raise ValueError("transitive complex needs a destination")
        if self.kind == MotionComplexKind.INTRANSITIVE and self.destination is not None:
            raise ValueError("intransitive complex never has a destination")
        for ls in self.strokes:
            if ls.deixis.subclass == DeixisSubclass.INITIAL and ls.stroke.kind != PhonemeKind.POINT:
                raise ValueError("initial deixis requires a point stroke")


class CommandVerb(str, Enum):
    SELECT = "select"
    LOCATE = "locate"
    MOVE = "move"


@dataclass(frozen=True)
class Command:
    verb: CommandVerb
    object_ids: tuple
    source: Optional[ReferenceResolution] = None
    path: Optional[ReferenceResolution] = None
    destination: Optional[ReferenceResolution] = None
    area: Optional[ReferenceResolution] = None
    phrase_id: Optional[int] = None
    t_issued: float = 0.0

    def __post_init__(self):
        if self.verb == CommandVerb.SELECT and not self.object_ids:
            raise ValueError("select needs at least one object")
        if self.verb == CommandVerb.MOVE and not (self.source or self.path or self.destination):
            raise ValueError("move needs a source, path, or destination")


def classify_deixis(
    stroke: StrokeSegment,
    evidence: Sequence[KeywordToken],
    resolution: ReferenceResolution,
    pre_hold: Optional[HoldSegment] = None,
    iconic_score: Optional[float] = None,
) -> DeixisLabel:
    """Six-way deixis decision, in order:

    1. Any spatial preposition or motion verb in evidence makes the stroke
       intransitive; the subclass comes from the first preposition spoken
       (initial/medial/final), a bare motion verb defaults to medial.
    2. Only a point may express initial movement; other strokes demote to
       medial with a confidence penalty.
    3. Otherwise transitive: iconic for a contour tracing the resolved
       object, nominal for noun/pronoun/deictic evidence on an object,
       spatial for adverbial evidence or an area resolution.
    4. No usable evidence at all: transitive/spatial at low confidence.
    """
    preps = sorted(
        (tok for tok in evidence if tok.word_class in PREP_CLASSES),
        key=lambda t: t.t0,
    )
    has_motion_verb = any(tok.word_class == KeywordClass.MOTION_VERB for tok in evidence)
    if preps or has_motion_verb:
        sub = _PREP_TO_SUBCLASS[preps[0].word_class] if preps else DeixisSubclass.MEDIAL
        confidence = 1.0
        if sub == DeixisSubclass.INITIAL and stroke.kind != PhonemeKind.POINT:
            sub = DeixisSubclass.MEDIAL
            confidence -= DEMOTION_PENALTY
        return DeixisLabel(DeixisCategory.INTRANSITIVE, sub, confidence)

    classes = {tok.word_class for tok in evidence}
    nominal_evidence = classes & {
        KeywordClass.NOUN,
        KeywordClass.PRONOUN,
        KeywordClass.DEICTIC_MARKER,
    }
    if (
        stroke.kind == PhonemeKind.CONTOUR
        and iconic_score is not None
        and iconic_score >= ICONIC_THRESHOLD
    ):
        return DeixisLabel(DeixisCategory.TRANSITIVE, DeixisSubclass.ICONIC, 1.0)
    if nominal_evidence and resolution.kind == RefKind.OBJECT:
        return DeixisLabel(DeixisCategory.TRANSITIVE, DeixisSubclass.NOMINAL, 1.0)
    if KeywordClass.SPATIAL_ADVERBIAL in classes or resolution.kind == RefKind.AREA:
        return DeixisLabel(DeixisCategory.TRANSITIVE, DeixisSubclass.SPATIAL, 1.0)
    return DeixisLabel(DeixisCategory.TRANSITIVE, DeixisSubclass.SPATIAL, FALLBACK_CONFIDENCE)


def _precedes_or_overlaps_speech(ls: LabeledStroke) -> bool:
    """The stroke precedes or starts synchronously with its evidence."""
    if not ls.evidence:
        return True
    first = min(tok.t0 for tok in ls.evidence)
    return ls.stroke.t0 <= first + SYNC_SLACK


def parse_motion_complexes(
    phrase: GesturePhrase,
    labeled: Sequence[LabeledStroke],
    clause_tokens: Sequence[KeywordToken] = (),
) -> list[MotionComplex]:
    """Bind intransitive runs into motion complexes.

    A maximal run of intransitive strokes becomes a transitive complex when
    it ends in a final-labeled point (the destination), or when a medial
    stroke carrying a pre-stroke hold is answered by a later transitive
    point, which is absorbed as the destination. Runs with no destination
    whose strokes precede or overlap their speech form intransitive
    complexes. Unbound strokes pass through for standalone interpretation.
    """
    complexes: list[MotionComplex] = []
    consumed: set[int] = set()
    items = list(labeled)
    i = 0
    while i < len(items):
        if items[i].deixis.category != DeixisCategory.INTRANSITIVE:
            i += 1
            continue
        j = i
        while j + 1 < len(items) and items[j + 1].deixis.category == DeixisCategory.INTRANSITIVE:
            j += 1
        run = items[i : j + 1]
        source = next(
            (ls.reference for ls in run if ls.deixis.subclass == DeixisSubclass.INITIAL), None
        )
        medials = [ls.reference for ls in run if ls.deixis.subclass == DeixisSubclass.MEDIAL]
        path = next((r for r in medials if r.kind == RefKind.PATH), None) or (
            medials[0] if medials else None
        )

        last = run[-1]
        destination = None
        strokes = tuple(run)
        if last.deixis.subclass == DeixisSubclass.FINAL and last.stroke.kind == PhonemeKind.POINT:
            destination = last.reference
        else:
            hold_medial = any(
                ls.deixis.subclass == DeixisSubclass.MEDIAL and ls.pre_hold is not None
                for ls in run
            )
            if hold_medial:
                closing = next(
                    (
                        ls
                        for ls in items[j + 1 :]
                        if ls.deixis.category == DeixisCategory.TRANSITIVE
                        and ls.stroke.kind == PhonemeKind.POINT
                        and id(ls) not in consumed
                    ),
                    None,
                )
                if closing is not None:
                    destination = closing.reference
                    strokes = strokes + (closing,)
                    consumed.add(id(closing))

        if destination is not None:
            complexes.append(
                MotionComplex(
                    MotionComplexKind.TRANSITIVE,
                    strokes,
                    source=source,
                    path=path,
                    destination=destination,
                )
            )
            consumed.update(id(ls) for ls in run)
        elif all(_precedes_or_overlaps_speech(ls) for ls in run):
            complexes.append(
                MotionComplex(MotionComplexKind.INTRANSITIVE, strokes, source=source, path=path)
            )
            consumed.update(id(ls) for ls in run)
        i = j + 1
    return complexes


def _merge_ids(*refs) -> tuple:
    seen = []
    for ref in refs:
        if ref is None:
            continue
        for oid in ref.object_ids:
            if oid not in seen:
                seen.append(oid)
    return tuple(seen)


def emit_commands(
    labeled: Sequence[LabeledStroke],
    complexes: Sequence[MotionComplex],
    phrase_id: Optional[int] = None,
    diagnostics: Optional[list] = None,
) -> list[Command]:
    """One phrase's commands: complexes become moves, unbound nominal or
    iconic strokes become selects, unbound spatial strokes become locates.
    Moves with nothing resolved are dropped with a diagnostic."""
    commands: list[tuple[float, Command]] = []
    in_complex = {id(ls) for c in complexes for ls in c.strokes}

    for c in complexes:
        t = max(ls.stroke.t1 for ls in c.strokes)
        if not (c.source or c.path or c.destination):
            msg = f"phrase {phrase_id}: move with no resolved source/path/destination dropped"
            log.warning(msg)
            if diagnostics is not None:
                diagnostics.append(msg)
            continue
        commands.append(
            (
                t,
                Command(
                    CommandVerb.MOVE,
                    _merge_ids(c.source, c.path, c.destination),
                    source=c.source,
                    path=c.path,
                    destination=c.destination,
                    phrase_id=phrase_id,
                    t_issued=t,
                ),
            )
        )

    for ls in labeled:
        if id(ls) in in_complex or ls.deixis.category != DeixisCategory.TRANSITIVE:
            continue
        t = ls.stroke.t1
        if ls.deixis.subclass in (DeixisSubclass.NOMINAL, DeixisSubclass.ICONIC):
            if not ls.reference.object_ids:
                msg = f"phrase {phrase_id}: {ls.deixis.subclass.value} stroke with no object dropped"
                log.warning(msg)
                if diagnostics is not None:
                    diagnostics.append(msg)
                continue
            commands.append(
                (
                    t,
                    Command(
                        CommandVerb.SELECT,
                        tuple(ls.reference.object_ids),
                        phrase_id=phrase_id,
                        t_issued=t,
                    ),
                )
            )
        else:
            commands.append(
                (
                    t,
                    Command(
                        CommandVerb.LOCATE,
                        tuple(ls.reference.object_ids),
                        area=ls.reference,
                        phrase_id=phrase_id,
                        t_issued=t,
                    ),
                )
            )
    commands.sort(key=lambda pair: pair[0])
    return [cmd for _, cmd in commands]
