"""Correct-rate style evaluation of decoded sessions against ground truth."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .errors import SessionMismatch
from .phoneme import PHONEME_ORDER, PhonemeKind, is_stroke
from .session import SessionRecord

OVERLAP_MIN = 0.5
CONFUSION_NONE = "none"


@dataclass(frozen=True)
class DecodedSession:
    """Everything a pipeline run produced for one session."""

    session_id: str
    segments: tuple        # full committed tiling, every phoneme kind
    labeled: tuple         # LabeledStroke list across phrases
    commands: tuple
    records: tuple = ()    # canonical phrase record dicts


@dataclass(frozen=True)
class Metrics:
    segment_correct_rate: float
    deixis_accuracy: float
    command_accuracy: float
    confusion: Mapping  # truth phoneme -> {decoded phoneme or "none": count}
    n_truth_strokes: int
    n_truth_deixis: int
    n_truth_commands: int
    n_sessions: int

    def to_dict(self) -> dict:
        return {
            "segment_correct_rate": self.segment_correct_rate,
            "deixis_accuracy": self.deixis_accuracy,
            "command_accuracy": self.command_accuracy,
            "confusion": {k: dict(v) for k, v in self.confusion.items()},
            "n_truth_strokes": self.n_truth_strokes,
            "n_truth_deixis": self.n_truth_deixis,
            "n_truth_commands": self.n_truth_commands,
            "n_sessions": self.n_sessions,
        }

    def format_table(self) -> str:
        lines = [
            f"sessions            {self.n_sessions}",
            f"segment correct     {self.segment_correct_rate:.4f}  ({self.n_truth_strokes} truth strokes)",
            f"deixis accuracy     {self.deixis_accuracy:.4f}  ({self.n_truth_deixis} labels)",
            f"command accuracy    {self.command_accuracy:.4f}  ({self.n_truth_commands} commands)",
            "",
            "confusion (rows = truth, cols = decoded)",
        ]
        kinds = [k.value for k in PHONEME_ORDER] + [CONFUSION_NONE]
        header = f"{'':12s}" + "".join(f"{k[:6]:>8s}" for k in kinds)
        lines.append(header)
        for row in PHONEME_ORDER:
            counts = self.confusion.get(row.value, {})
            lines.append(
                f"{row.value:12s}" + "".join(f"{counts.get(k, 0):8d}" for k in kinds)
            )
        return "\n".join(lines)


def _overlap(a0, a1, b0, b1) -> float:
    return max(0.0, min(a1, b1) - max(a0, b0))


def _match_strokes(truth_strokes, decoded_strokes, overlap_min):
    """One-to-one greedy matching by overlap; ties go to the earlier
    decoded segment. Only same-phoneme pairs clearing the threshold count."""
    pairs = []
    for ti, ts in enumerate(truth_strokes):
        for di, ds in enumerate(decoded_strokes):
            if ds.kind != ts.phoneme:
                continue
            ov = _overlap(ts.t0, ts.t1, ds.t0, ds.t1)
            if ov >= overlap_min * (ts.t1 - ts.t0) - 1e-12:
                pairs.append((-ov, ds.t0, ts.t0, ti, di))
    pairs.sort()
    truth_used, dec_used = set(), set()
    matches = {}
    for _, _, _, ti, di in pairs:
        if ti in truth_used or di in dec_used:
            continue
        truth_used.add(ti)
        dec_used.add(di)
        matches[ti] = di
    return matches


def evaluate(
    decoded: Sequence[DecodedSession],
    truth: Sequence[SessionRecord],
    overlap_min: float = OVERLAP_MIN,
) -> Metrics:
    dec_by_id = {d.session_id: d for d in decoded}
    truth_by_id = {t.session_id: t for t in truth}
    if set(dec_by_id) != set(truth_by_id):
        missing = set(truth_by_id) ^ set(dec_by_id)
        raise SessionMismatch(f"session ids do not line up: {sorted(missing)[:5]}")

    n_strokes = n_matched = 0
    n_deixis = n_deixis_ok = 0
    n_cmds = n_cmds_ok = 0
    confusion = {k.value: {} for k in PHONEME_ORDER}

    for sid in sorted(truth_by_id):
        t_rec = truth_by_id[sid]
        d_rec = dec_by_id[sid]
        truth_strokes = [
            (i, s) for i, s in enumerate(t_rec.truth_segments) if is_stroke(s.phoneme)
        ]
        dec_strokes = [s for s in d_rec.segments if is_stroke(s.kind)]
        matches = _match_strokes([s for _, s in truth_strokes], dec_strokes, overlap_min)
        n_strokes += len(truth_strokes)
        n_matched += len(matches)

        # deixis: the matched decoded stroke must carry the same label
        label_by_seg = {ls.stroke.id: ls.deixis for ls in d_rec.labeled}
        truth_pos = {seg_idx: pos for pos, (seg_idx, _) in enumerate(truth_strokes)}
        for td in t_rec.truth_deixis:
            n_deixis += 1
            pos = truth_pos.get(td.seg)
            if pos is None or pos not in matches:
                continue
            dec_seg = dec_strokes[matches[pos]]
            lab = label_by_seg.get(dec_seg.id)
            if lab is not None and lab.category == td.category and lab.subclass == td.subclass:
                n_deixis_ok += 1

        # commands: greedy in order on (verb, object id set)
        used = set()
        for tc in t_rec.truth_commands:
            n_cmds += 1
            want = (tc.verb, tuple(sorted(tc.object_ids)))
            for ci, dc in enumerate(d_rec.commands):
                if ci in used:
                    continue
                if (dc.verb, tuple(sorted(dc.object_ids))) == want:
                    used.add(ci)
                    n_cmds_ok += 1
                    break

        # confusion over every truth segment: label of the max-overlap
        # decoded segment, or "none" when nothing overlaps
        for ts in t_rec.truth_segments:
            best = None
            for ds in d_rec.segments:
                ov = _overlap(ts.t0, ts.t1, ds.t0, ds.t1)
                if ov > 0 and (best is None or ov > best[0]):
                    best = (ov, ds.kind.value)
            col = best[1] if best else CONFUSION_NONE
            row = confusion[ts.phoneme.value]
            row[col] = row.get(col, 0) + 1

    return Metrics(
        segment_correct_rate=n_matched / n_strokes if n_strokes else 1.0,
        deixis_accuracy=n_deixis_ok / n_deixis if n_deixis else 1.0,
        command_accuracy=n_cmds_ok / n_cmds if n_cmds else 1.0,
        confusion=confusion,
        n_truth_strokes=n_strokes,
        n_truth_deixis=n_deixis,
        n_truth_commands=n_cmds,
        n_sessions=len(truth),
    )
