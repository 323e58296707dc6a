"""Continuous gesture/speech interpretation for 2D map control.

Pipeline: timestamped hand positions -> kinematic features -> network-
constrained phoneme decoding -> keyword co-occurrence rescoring -> deixis
classification and motion complexes -> map commands.
"""

from .config import EngineConfig, load_config
from .engine import Engine, StreamDecoder, decode_session
from .errors import DeixisError
from .hmm import (
    Hmm,
    ModelSet,
    ModelTopology,
    baum_welch_train,
    flat_start,
    forward_log_likelihood,
    load_models,
    save_models,
    viterbi_decode,
)
from .kinematics import (
    FeatureVector,
    HoldKind,
    HoldSegment,
    TrajectorySample,
    detect_holds,
    estimate_rest_centroid,
    extract_features,
    resample,
)
from .lexicon import KeywordClass, KeywordToken, Lexicon, classify_token, spot_keywords
from .mapcontext import (
    MapContext,
    MapObject,
    ReferenceResolution,
    demo_map,
    iconic_match_score,
    load_map,
    resolve_enclosure,
    resolve_path,
    resolve_point,
    save_map,
)
from .metrics import DecodedSession, Metrics, evaluate
from .morphology import (
    GesturePhrase,
    MorphNetwork,
    StrokeSegment,
    build_default_network,
    classify_closure,
    decode_continuous,
    segment_phrases,
)
from .phoneme import PhonemeKind, is_stroke
from .semantics import (
    Command,
    DeixisCategory,
    DeixisLabel,
    DeixisSubclass,
    MotionComplex,
    classify_deixis,
    emit_commands,
    parse_motion_complexes,
)
from .session import SessionRecord, load_session, save_session
from .synth import SyntheticConfig, generate_synthetic

__version__ = "0.1.0"
