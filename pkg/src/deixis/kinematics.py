"""Kinematic front end: resampling, feature extraction, hold detection.

Hand positions arrive as timestamped normalized display coordinates. This
module turns them into fixed-rate observation vectors (speed, tangential
acceleration, signed turn rate, distance from the rest region, radial
velocity) and recovers low-velocity holds, which are not modeled as HMM
phonemes and must be found by post-processing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyTrajectory, NotResampled
from .phoneme import PhonemeKind, is_stroke

FEATURE_NAMES = ("speed", "accel", "turn_rate", "rest_dist", "radial_vel")
FEATURE_DIM = len(FEATURE_NAMES)

# Below this speed (display-widths/sec) the heading is meaningless noise.
EPS_SPEED = 0.02
# Curvature of a noisy near-stationary trajectory diverges; bound it so a
# single slow frame cannot dominate a Gaussian log-likelihood.
TURN_CLAMP = 15.0


@dataclass(frozen=True)
class TrajectorySample:
    t: float
    x: float
    y: float


@dataclass(frozen=True)
class FeatureVector:
    t: float
    speed: float
    accel: float
    turn_rate: float
    rest_dist: float
    radial_vel: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.speed, self.accel, self.turn_rate, self.rest_dist, self.radial_vel]
        )


class HoldKind(str, Enum):
    PRE_STROKE = "pre_stroke"
    POST_STROKE = "post_stroke"
    ISOLATED = "isolated"


@dataclass(frozen=True)
class HoldSegment:
    t0: float
    t1: float
    kind: HoldKind
    anchor_stroke: Optional[int] = None


def samples_to_arrays(samples: Sequence[TrajectorySample]):
    t = np.array([s.t for s in samples], dtype=float)
    x = np.array([s.x for s in samples], dtype=float)
    y = np.array([s.y for s in samples], dtype=float)
    return t, x, y


def feature_matrix(features: Sequence[FeatureVector]) -> np.ndarray:
    """Stack feature vectors into a (T, 5) observation matrix."""
    if isinstance(features, np.ndarray):
        return features
    return np.array([f.as_array() for f in features])


def feature_times(features: Sequence[FeatureVector]) -> np.ndarray:
    return np.array([f.t for f in features], dtype=float)


def resample(
    samples: Sequence[TrajectorySample], rate_hz: float
) -> list[TrajectorySample]:
    """Linearly resample a trajectory onto a uniform grid at ``rate_hz``.

    Duplicate input timestamps are collapsed to the latest observation.
    Raises EmptyTrajectory when fewer than two distinct timestamps remain.
    """
    if rate_hz <= 0:
        raise ValueError("rate_hz must be positive")
    t, x, y = samples_to_arrays(samples)
    if t.size and np.any(np.diff(t) < 0):
        raise ValueError("timestamps must be non-decreasing")
    if t.size:
        # keep the last sample at each distinct timestamp
        keep = np.r_[np.diff(t) > 0, True]
        t, x, y = t[keep], x[keep], y[keep]
    if t.size < 2:
        raise EmptyTrajectory("need at least 2 distinct timestamps")
    dt = 1.0 / rate_hz
    n = int(math.floor((t[-1] - t[0]) * rate_hz + 1e-9)) + 1
    grid = t[0] + np.arange(n) * dt
    xs = np.interp(grid, t, x)
    ys = np.interp(grid, t, y)
    return [TrajectorySample(float(g), float(xi), float(yi)) for g, xi, yi in zip(grid, xs, ys)]


def extract_features(
    samples: Sequence[TrajectorySample],
    rest_centroid: tuple[float, float],
) -> list[FeatureVector]:
    """Differentiate a uniform-rate trajectory into observation vectors.

    Central differences in the interior, one-sided at the endpoints. The
    turn rate is the signed angular velocity of the velocity vector,
    zeroed wherever speed falls below EPS_SPEED.
    """
    t, x, y = samples_to_arrays(samples)
    if t.size < 3:
        raise ValueError("need at least 3 samples for differentiation")
    dts = np.diff(t)
    mean_dt = float(np.mean(dts))
    if mean_dt <= 0 or np.max(np.abs(dts - mean_dt)) > 0.01 * mean_dt:
        raise NotResampled("sample spacing varies by more than 1%")

    vx = np.gradient(x, mean_dt, edge_order=1)
    vy = np.gradient(y, mean_dt, edge_order=1)
    ax = np.gradient(vx, mean_dt, edge_order=1)
    ay = np.gradient(vy, mean_dt, edge_order=1)

    speed = np.hypot(vx, vy)
    accel = np.gradient(speed, mean_dt, edge_order=1)
    v2 = speed * speed
    with np.errstate(divide="ignore", invalid="ignore"):
        turn = np.where(speed < EPS_SPEED, 0.0, (vx * ay - vy * ax) / np.maximum(v2, 1e-300))
    turn = np.clip(turn, -TURN_CLAMP, TURN_CLAMP)

    cx, cy = rest_centroid
    rest_dist = np.hypot(x - cx, y - cy)
    radial_vel = np.gradient(rest_dist, mean_dt, edge_order=1)

    return [
        FeatureVector(float(t[i]), float(speed[i]), float(accel[i]), float(turn[i]),
                      float(rest_dist[i]), float(radial_vel[i]))
        for i in range(t.size)
    ]


def _sample_speeds(t: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-sample speed from consecutive displacements (last sample reuses
    its backward difference). Duplicate timestamps get zero speed for
    coincident positions, else a large sentinel."""
    n = t.size
    if n == 1:
        return np.zeros(1)
    dt = np.diff(t)
    dist = np.hypot(np.diff(x), np.diff(y))
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(dt > 0, dist / np.maximum(dt, 1e-300), np.where(dist > 0, np.inf, 0.0))
    return np.r_[v, v[-1]]


def estimate_rest_centroid(samples: Sequence[TrajectorySample]) -> tuple[float, float]:
    """Centroid of the lowest-speed quartile of samples.

    The quartile is every sample whose speed is <= the k-th smallest speed,
    k = max(1, n // 4); ties at the threshold are all included, so equal
    dwell clusters contribute jointly and all-equal speeds fall back to the
    global centroid.
    """
    if not samples:
        raise ValueError("need at least one sample")
    t, x, y = samples_to_arrays(samples)
    speeds = _sample_speeds(t, x, y)
    k = max(1, t.size // 4)
    thr = np.partition(speeds, k - 1)[k - 1]
    sel = speeds <= thr
    return float(np.mean(x[sel])), float(np.mean(y[sel]))


def detect_holds(
    features: Sequence[FeatureVector],
    strokes: Sequence,
    v_hold: float = 0.03,
    tau_hold: float = 0.2,
    gap_max: float = 0.15,
) -> list[HoldSegment]:
    """Find maximal sub-threshold dwell intervals and anchor them to strokes.

    ``strokes`` may be a full decoded segmentation; rest-kind entries are
    used to discard dwells that are simply part of rest, stroke-kind
    entries provide the pre/post anchoring. An interval qualifying both as
    pre- and post-stroke takes the smaller gap, preferring pre-stroke on a
    tie (the semantically loaded kind).
    """
    if not features:
        return []
    speed = np.array([f.speed for f in features])
    times = np.array([f.t for f in features])
    below = speed < v_hold

    rest_spans = [(s.t0, s.t1) for s in strokes if s.kind == PhonemeKind.REST]
    stroke_segs = [s for s in strokes if is_stroke(s.kind)]

    holds: list[HoldSegment] = []
    i = 0
    n = len(features)
    eps = 1e-9
    while i < n:
        if not below[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and below[j + 1]:
            j += 1
        t0, t1 = float(times[i]), float(times[j])
        i = j + 1
        if t1 - t0 < tau_hold - eps:
            continue
        if any(r0 - eps <= t0 and t1 <= r1 + eps for r0, r1 in rest_spans):
            continue

        pre = post = None  # (gap, stroke)
        for s in stroke_segs:
            gap_pre = s.t0 - t1
            if -eps <= gap_pre <= gap_max + eps and (pre is None or gap_pre < pre[0]):
                pre = (gap_pre, s)
            gap_post = t0 - s.t1
            if -eps <= gap_post <= gap_max + eps and (post is None or gap_post < post[0]):
                post = (gap_post, s)
        if pre is not None and (post is None or pre[0] <= post[0]):
            holds.append(HoldSegment(t0, t1, HoldKind.PRE_STROKE, pre[1].id))
        elif post is not None:
            holds.append(HoldSegment(t0, t1, HoldKind.POST_STROKE, post[1].id))
        else:
            holds.append(HoldSegment(t0, t1, HoldKind.ISOLATED, None))
    return holds
