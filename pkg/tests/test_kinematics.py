import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deixis.errors import EmptyTrajectory, NotResampled
from deixis.kinematics import (
    HoldKind,
    TrajectorySample,
    detect_holds,
    estimate_rest_centroid,
    extract_features,
    resample,
)
from deixis.morphology import StrokeSegment
from deixis.phoneme import PhonemeKind


def make(traj):
    return [TrajectorySample(t, x, y) for t, x, y in traj]


class TestResample:
    def test_linear_interpolation(self):
        out = resample(make([(0.0, 0.0, 0.0), (1.0, 1.0, 0.0)]), 2.0)
        assert [s.t for s in out] == [0.0, 0.5, 1.0]
        assert [s.x for s in out] == [0.0, 0.5, 1.0]

    def test_constant_position(self):
        out = resample(make([(0.0, 0.3, 0.7), (0.5, 0.3, 0.7), (1.0, 0.3, 0.7)]), 30.0)
        assert all(s.x == 0.3 and s.y == 0.7 for s in out)

    def test_irregular_sine_matches_independent_interpolant(self):
        # oracle: piecewise-linear evaluation by explicit segment search
        rng = np.random.default_rng(7)
        t = np.sort(rng.uniform(0, 2, 11))
        t[0], t[-1] = 0.0, 2.0
        xs = np.sin(t * 2.1)
        ys = np.cos(t * 1.3)
        pts = make(list(zip(t, xs, ys)))

        def interp(tq, ts, vs):
            for a, b, va, vb in zip(ts, ts[1:], vs, vs[1:]):
                if a <= tq <= b:
                    w = 0.0 if b == a else (tq - a) / (b - a)
                    return va + (vb - va) * w
            raise AssertionError

        out = resample(pts, 30.0)
        for s in out:
            assert abs(s.x - interp(s.t, t, xs)) < 1e-9
            assert abs(s.y - interp(s.t, t, ys)) < 1e-9

    def test_strictly_increasing_and_duplicates_allowed(self):
        out = resample(make([(0.0, 0.0, 0.0), (0.5, 0.2, 0.2), (0.5, 0.4, 0.4), (1.0, 1.0, 1.0)]), 10.0)
        ts = [s.t for s in out]
        assert all(b > a for a, b in zip(ts, ts[1:]))

    def test_empty_trajectory(self):
        with pytest.raises(EmptyTrajectory):
            resample(make([(1.0, 0.5, 0.5), (1.0, 0.5, 0.5)]), 30.0)

    @given(st.integers(2, 30), st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_idempotent(self, n, seed):
        rng = np.random.default_rng(seed)
        t = np.sort(rng.uniform(0, 3, n))
        if t[-1] - t[0] < 0.2:
            t = t + np.linspace(0, 0.5, n)
        pts = make(list(zip(t, rng.uniform(0, 1, n), rng.uniform(0, 1, n))))
        once = resample(pts, 30.0)
        twice = resample(once, 30.0)
        assert len(once) == len(twice)
        for a, b in zip(once, twice):
            assert abs(a.x - b.x) < 1e-12 and abs(a.y - b.y) < 1e-12


def uniform(fn, t0=0.0, t1=2.0, rate=30.0):
    ts = np.arange(t0, t1 + 1e-9, 1.0 / rate)
    return make([(t, *fn(t)) for t in ts])


class TestExtractFeatures:
    def test_stationary(self):
        feats = extract_features(uniform(lambda t: (0.4, 0.6)), (0.1, 0.9))
        for f in feats:
            assert f.speed == 0 and f.accel == 0 and f.turn_rate == 0 and f.radial_vel == 0
            assert abs(f.rest_dist - math.hypot(0.3, 0.3)) < 1e-12

    def test_constant_velocity_line(self):
        feats = extract_features(uniform(lambda t: (0.1 + 0.2 * t, 0.5)), (0.1, 0.5))
        for f in feats[1:-1]:
            assert abs(f.speed - 0.2) < 1e-6
            assert abs(f.accel) < 1e-6
            assert abs(f.turn_rate) < 1e-6

    def test_circle_against_closed_form(self):
        # x = c + r cos(wt), y = c + r sin(wt): speed = r*w, turn rate = w
        r, w = 0.1, math.pi  # one revolution in 2 s
        feats = extract_features(
            uniform(lambda t: (0.5 + r * math.cos(w * t), 0.5 + r * math.sin(w * t))),
            (0.5, 0.5),
        )
        for f in feats[2:-2]:
            assert abs(f.speed - r * w) / (r * w) < 0.05
            assert abs(f.turn_rate - w) / w < 0.05

    def test_not_resampled(self):
        pts = make([(0.0, 0, 0), (0.03, 0.1, 0), (0.08, 0.2, 0), (0.1, 0.3, 0)])
        with pytest.raises(NotResampled):
            extract_features(pts, (0, 0))

    def test_time_reversal(self):
        rng = np.random.default_rng(3)
        pts = uniform(lambda t: (0.3 + 0.2 * math.sin(t * 2), 0.4 + 0.1 * math.cos(t * 3)))
        fwd = extract_features(pts, (0.1, 0.9))
        t_end = pts[-1].t
        rev = extract_features(
            [TrajectorySample(t_end - s.t, s.x, s.y) for s in reversed(pts)], (0.1, 0.9)
        )
        for a, b in zip(fwd[1:-1], list(reversed(rev))[1:-1]):
            assert abs(a.speed - b.speed) < 1e-9
            assert abs(a.turn_rate + b.turn_rate) < 1e-9
            assert abs(a.radial_vel + b.radial_vel) < 1e-9

    def test_translation_equivariance(self):
        pts = uniform(lambda t: (0.3 + 0.1 * math.sin(t), 0.4 + 0.1 * math.cos(t)))
        shifted = [TrajectorySample(s.t, s.x + 0.2, s.y - 0.1) for s in pts]
        base = extract_features(pts, (0.1, 0.9))
        moved_centroid = extract_features(shifted, (0.3, 0.8))
        for a, b in zip(base, moved_centroid):
            assert abs(a.speed - b.speed) < 1e-12
            assert abs(a.accel - b.accel) < 1e-12
            assert abs(a.turn_rate - b.turn_rate) < 1e-12
            assert abs(a.rest_dist - b.rest_dist) < 1e-9
            assert abs(a.radial_vel - b.radial_vel) < 1e-9


class TestRestCentroid:
    def test_all_identical(self):
        pts = make([(i / 30, 0.25, 0.75) for i in range(10)])
        assert estimate_rest_centroid(pts) == (0.25, 0.75)

    def test_dwell_dominated_session(self):
        # oracle: independent quartile selection over finite-difference speeds
        rng = np.random.default_rng(5)
        traj = []
        t = 0.0
        for _ in range(240):
            traj.append((t, 0.1 + rng.normal(0, 0.003), 0.9 + rng.normal(0, 0.003)))
            t += 1 / 30
        for i in range(60):
            traj.append((t, 0.1 + 0.8 * (i / 60), 0.9 - 0.6 * (i / 60)))
            t += 1 / 30
        pts = make(traj)

        cx, cy = estimate_rest_centroid(pts)
        t_arr = np.array([p.t for p in pts])
        x = np.array([p.x for p in pts])
        y = np.array([p.y for p in pts])
        v = np.hypot(np.diff(x), np.diff(y)) / np.diff(t_arr)
        v = np.r_[v, v[-1]]
        k = max(1, len(pts) // 4)
        thr = np.sort(v)[k - 1]
        sel = v <= thr
        assert abs(cx - float(np.mean(x[sel]))) < 1e-12
        assert abs(cy - float(np.mean(y[sel]))) < 1e-12
        assert abs(cx - 0.1) < 0.02 and abs(cy - 0.9) < 0.02

    def test_equal_clusters_take_union(self):
        pts = make(
            [(i / 30, 0.2, 0.2) for i in range(30)]
            + [(1.0 + i / 30, 0.8, 0.8) for i in range(30)]
        )
        cx, cy = estimate_rest_centroid(pts)
        # both zero-speed clusters fall at or below the quartile threshold
        assert 0.3 < cx < 0.7 and 0.3 < cy < 0.7


def seg(i, kind, t0, t1):
    return StrokeSegment(id=i, kind=kind, t0=t0, t1=t1, score=0.0)


class TestDetectHolds:
    def hold_features(self, spans, rate=30.0, t_end=3.0):
        """speed = 0 inside the given spans, 0.5 elsewhere"""
        out = []
        t = 0.0
        from deixis.kinematics import FeatureVector

        while t < t_end:
            speed = 0.0 if any(a <= t <= b for a, b in spans) else 0.5
            out.append(FeatureVector(t, speed, 0.0, 0.0, 0.5, 0.0))
            t += 1 / rate
        return out

    def test_pre_stroke_hold(self):
        feats = self.hold_features([(1.0, 1.3)])
        strokes = [seg(7, PhonemeKind.CONTOUR, 1.33, 2.0)]
        holds = detect_holds(feats, strokes, v_hold=0.03, tau_hold=0.2, gap_max=0.1)
        assert len(holds) == 1
        assert holds[0].kind == HoldKind.PRE_STROKE
        assert holds[0].anchor_stroke == 7

    def test_no_subthreshold_interval(self):
        feats = self.hold_features([])
        assert detect_holds(feats, []) == []

    def test_scripted_boundaries_within_one_frame(self):
        t0, t1 = 1.0, 1.25
        feats = self.hold_features([(t0, t1)])
        strokes = [seg(1, PhonemeKind.POINT, t1 + 0.05, 2.0)]
        holds = detect_holds(feats, strokes, v_hold=0.03, tau_hold=0.2, gap_max=0.15)
        assert len(holds) == 1
        assert abs(holds[0].t0 - t0) <= 1 / 30 + 1e-9
        assert abs(holds[0].t1 - t1) <= 1 / 30 + 1e-9
        assert holds[0].kind == HoldKind.PRE_STROKE

    def test_rest_exclusion_and_no_overlap(self):
        feats = self.hold_features([(0.0, 0.5), (1.0, 1.3)])
        segments = [
            seg(0, PhonemeKind.REST, 0.0, 0.6),
            seg(1, PhonemeKind.POINT, 1.35, 1.8),
        ]
        holds = detect_holds(feats, segments, v_hold=0.03, tau_hold=0.2, gap_max=0.1)
        assert len(holds) == 1  # the rest dwell is not a hold
        for a, b in zip(holds, holds[1:]):
            assert a.t1 <= b.t0

    def test_mean_speed_below_threshold(self, small_engine, campus):
        from deixis.engine import decode_session, session_rest_ref
        from deixis.kinematics import extract_features
        from deixis.synth import SyntheticConfig, generate_synthetic

        rec = generate_synthetic(SyntheticConfig(n_sessions=1, seed=77, noise_sigma=0.0), campus)[0]
        feats = extract_features(rec.samples, session_rest_ref(rec))
        holds = detect_holds(feats, [])
        speeds = {f.t: f.speed for f in feats}
        for h in holds:
            vals = [v for t, v in speeds.items() if h.t0 <= t <= h.t1]
            assert np.mean(vals) < 0.03
