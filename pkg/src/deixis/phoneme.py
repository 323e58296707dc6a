"""Gesture phoneme inventory shared by the kinematics and decoding layers."""

from enum import Enum


class PhonemeKind(str, Enum):
    REST = "rest"
    PREPARATION = "preparation"
    POINT = "point"
    CONTOUR = "contour"
    CIRCLE = "circle"
    RETRACTION = "retraction"


STROKE_KINDS = frozenset({PhonemeKind.POINT, PhonemeKind.CONTOUR, PhonemeKind.CIRCLE})

# Canonical ordering used for composite state indexing and serialization.
PHONEME_ORDER = (
    PhonemeKind.REST,
    PhonemeKind.PREPARATION,
    PhonemeKind.POINT,
    PhonemeKind.CONTOUR,
    PhonemeKind.CIRCLE,
    PhonemeKind.RETRACTION,
)


def is_stroke(kind: PhonemeKind) -> bool:
    return kind in STROKE_KINDS
