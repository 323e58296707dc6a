"""Engine configuration: every tunable with its documented default.

A config file is JSON mirroring the section layout below; anything absent
falls back to the default, so an empty file reproduces the defaults
exactly. CLI flags override the file, the file overrides defaults.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

from .fusion import DEFAULT_AFFINITY, AlignmentWindow, CoOccurrenceModel
from .hmm import DEFAULT_STATE_COUNTS, ModelTopology
from .lexicon import KeywordClass
from .phoneme import PhonemeKind

ENV_CONFIG = "DEIXIS_CONFIG"


@dataclass(frozen=True)
class KinematicsConfig:
    rate_hz: float = 30.0
    v_hold: float = 0.03
    tau_hold: float = 0.2
    gap_max: float = 0.15
    rest_window: float = 0.5  # leading span used to fix the rest reference


@dataclass(frozen=True)
class DecoderConfig:
    nbest: int = 10
    edge_penalty: Optional[float] = None  # None = per-edge defaults
    stroke_repeat: int = 1  # frames each stroke state must persist
    state_counts: Mapping = field(default_factory=lambda: dict(DEFAULT_STATE_COUNTS))

    def topology(self) -> ModelTopology:
        return ModelTopology(dict(self.state_counts))


@dataclass(frozen=True)
class ClosureConfig:
    eps_close: float = 0.05
    theta_turn: float = 5.0


@dataclass(frozen=True)
class FusionConfig:
    window_pre: float = 0.2
    window_post: float = 1.0
    holds_bonus: float = 3.0
    affinity: Mapping = field(default_factory=lambda: dict(DEFAULT_AFFINITY))

    def model(self) -> CoOccurrenceModel:
        return CoOccurrenceModel(
            window=AlignmentWindow(self.window_pre, self.window_post),
            affinity=dict(self.affinity),
            holds_bonus=self.holds_bonus,
        )


@dataclass(frozen=True)
class ContextConfig:
    point_radius: float = 0.04
    path_buffer: float = 0.03


@dataclass(frozen=True)
class SemanticsConfig:
    iconic_threshold: float = 0.6
    sync_slack: float = 0.1
    clause_gap: float = 1.5


@dataclass(frozen=True)
class StreamConfig:
    horizon: float = 8.0          # ring-buffer span of uncommitted input
    rest_confirm: float = 0.4     # dwell near rest that confirms a phrase end
    rest_radius: float = 0.03     # "near rest" position tolerance
    act_radius: float = 0.08      # leaving this radius counts as activity
    commit_extra: float = 0.1     # wait past the cut for trailing keywords
    cursor_stride: float = 0.25   # cadence of provisional cursor decoding


@dataclass(frozen=True)
class TrainConfig:
    iters: int = 20
    tol: float = 1e-4
    var_floor: float = 1e-6


@dataclass(frozen=True)
class EngineConfig:
    kinematics: KinematicsConfig = KinematicsConfig()
    decoder: DecoderConfig = DecoderConfig()
    closure: ClosureConfig = ClosureConfig()
    fusion: FusionConfig = FusionConfig()
    context: ContextConfig = ContextConfig()
    semantics: SemanticsConfig = SemanticsConfig()
    stream: StreamConfig = StreamConfig()
    train: TrainConfig = TrainConfig()


_SECTIONS = {
    "kinematics": KinematicsConfig,
    "decoder": DecoderConfig,
    "closure": ClosureConfig,
    "fusion": FusionConfig,
    "context": ContextConfig,
    "semantics": SemanticsConfig,
    "stream": StreamConfig,
    "train": TrainConfig,
}


def _encode_affinity(aff: Mapping) -> dict:
    return {f"{k.value}|{c.value}": v for (k, c), v in aff.items()}


def _decode_affinity(doc: Mapping) -> dict:
    out = {}
    for key, v in doc.items():
        kind, cls = key.split("|")
        out[(PhonemeKind(kind), KeywordClass(cls))] = float(v)
    return out


def config_to_dict(cfg: EngineConfig) -> dict:
    doc = {}
    for name in _SECTIONS:
        section = dataclasses.asdict(getattr(cfg, name))
        if name == "fusion":
            section["affinity"] = _encode_affinity(getattr(cfg, name).affinity)
        if name == "decoder":
            section["state_counts"] = {
                k.value: v for k, v in getattr(cfg, name).state_counts.items()
            }
        doc[name] = section
    return doc


def config_from_dict(doc: Mapping) -> EngineConfig:
    sections = {}
    for name, cls in _SECTIONS.items():
        overrides = dict(doc.get(name, {}))
        if name == "fusion" and "affinity" in overrides:
            overrides["affinity"] = _decode_affinity(overrides["affinity"])
        if name == "decoder" and "state_counts" in overrides:
            overrides["state_counts"] = {
                PhonemeKind(k): int(v) for k, v in overrides["state_counts"].items()
            }
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(overrides) - known
        if unknown:
            raise ValueError(f"unknown config keys in [{name}]: {sorted(unknown)}")
        sections[name] = cls(**overrides)
    return EngineConfig(**sections)


def load_config(path: Optional[str] = None) -> EngineConfig:
    """Resolve the config file from the argument, then $DEIXIS_CONFIG, then
    defaults."""
    if path is None:
        path = os.environ.get(ENV_CONFIG)
    if not path:
        return EngineConfig()
    doc = json.loads(Path(path).read_text())
    return config_from_dict(doc)


def save_config(cfg: EngineConfig, path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n")
