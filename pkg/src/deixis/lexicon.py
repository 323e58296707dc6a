"""Keyword classes for the speech side of the co-occurrence model.

Tokens arrive pre-transcribed with spoken extents. Classification is a
closed-class table lookup with first-match precedence, falling back to
map-object and generic nouns, then to Other. Other-class tokens are kept:
clause boundary detection downstream needs them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import TokenOverlap


class KeywordClass(str, Enum):
    NOUN = "noun"
    PRONOUN = "pronoun"
    DEICTIC_MARKER = "deictic_marker"
    SPATIAL_ADVERBIAL = "spatial_adverbial"
    PREP_INITIAL = "prep_initial"
    PREP_MEDIAL = "prep_medial"
    PREP_FINAL = "prep_final"
    MOTION_VERB = "motion_verb"
    OTHER = "other"


PREP_CLASSES = (
    KeywordClass.PREP_INITIAL,
    KeywordClass.PREP_MEDIAL,
    KeywordClass.PREP_FINAL,
)

# Lookup order; earlier classes win when a word appears in several sets.
PRECEDENCE = (
    KeywordClass.DEICTIC_MARKER,
    KeywordClass.SPATIAL_ADVERBIAL,
    KeywordClass.PREP_INITIAL,
    KeywordClass.PREP_MEDIAL,
    KeywordClass.PREP_FINAL,
    KeywordClass.MOTION_VERB,
    KeywordClass.PRONOUN,
)

DEFAULT_WORDS: dict[KeywordClass, frozenset] = {
    KeywordClass.PREP_INITIAL: frozenset({"from", "out", "off", "away"}),
    KeywordClass.PREP_MEDIAL: frozenset({"through", "along", "across", "via", "past"}),
    KeywordClass.PREP_FINAL: frozenset({"to", "toward", "towards", "into", "onto", "at"}),
    KeywordClass.SPATIAL_ADVERBIAL: frozenset({"here", "there", "below", "above", "around", "nearby"}),
    KeywordClass.DEICTIC_MARKER: frozenset({"this", "that", "these", "those"}),
    KeywordClass.MOTION_VERB: frozenset({"go", "move", "take", "enter", "drive", "bring"}),
    KeywordClass.PRONOUN: frozenset({"it", "them", "one"}),
}

GENERIC_NOUNS = frozenset({"building", "road", "lot", "car", "parking", "library"})


@dataclass(frozen=True)
class SpokenWord:
    """One raw transcript token with its spoken extent."""

    text: str
    t0: float
    t1: float


@dataclass(frozen=True)
class KeywordToken:
    text: str
    t0: float
    t1: float
    word_class: KeywordClass

    def __post_init__(self):
        if self.t0 > self.t1:
            raise ValueError("token extent reversed")
        if not self.text or any(c.isspace() for c in self.text):
            raise ValueError("token text must be a single non-empty word")


@dataclass(frozen=True)
class Lexicon:
    words: Mapping[KeywordClass, frozenset] = field(
        default_factory=lambda: dict(DEFAULT_WORDS)
    )
    generic_nouns: frozenset = GENERIC_NOUNS

    def __post_init__(self):
        # resolve overlaps so the class sets end up pairwise disjoint
        resolved = {}
        claimed: set = set()
        for cls in PRECEDENCE:
            ws = frozenset(w.lower() for w in self.words.get(cls, ())) - claimed
            resolved[cls] = ws
            claimed |= ws
        object.__setattr__(self, "words", resolved)

    @staticmethod
    def load(path) -> "Lexicon":
        """Merge a JSON word-list file (class name -> word array) over built-ins."""
        doc = json.loads(Path(path).read_text())
        merged = {cls: set(words) for cls, words in DEFAULT_WORDS.items()}
        for key, extra in doc.items():
            cls = KeywordClass(key)
            merged.setdefault(cls, set()).update(w.lower() for w in extra)
        return Lexicon(words={c: frozenset(w) for c, w in merged.items()})


def classify_token(lexicon: Lexicon, word: str, context) -> KeywordClass:
    """Precedence lookup; nouns resolve against map-object names."""
    for cls in PRECEDENCE:
        if word in lexicon.words.get(cls, ()):
            return cls
    if word in lexicon.generic_nouns or (context is not None and word in context.name_words):
        return KeywordClass.NOUN
    return KeywordClass.OTHER


def spot_keywords(
    lexicon: Lexicon, tokens: Iterable, context
) -> list[KeywordToken]:
    """Classify every transcript token, preserving count and order."""
    out: list[KeywordToken] = []
    prev_t1 = None
    for tok in tokens:
        text, t0, t1 = tok.text, tok.t0, tok.t1
        if prev_t1 is not None and t0 < prev_t1 - 1e-9:
            raise TokenOverlap(f"token '{text}' at {t0:.3f} overlaps previous token")
        prev_t1 = t1
        word = text.strip().lower()
        out.append(KeywordToken(word, t0, t1, classify_token(lexicon, word, context)))
    return out
