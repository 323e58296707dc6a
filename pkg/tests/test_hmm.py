import itertools
import math

import numpy as np
import pytest

from deixis.errors import ModelShapeError, SegmentTooShort
from deixis.hmm import (
    Hmm,
    ModelSet,
    ModelTopology,
    baum_welch_train,
    flat_start,
    forward_log_likelihood,
    left_right_log_trans,
    load_models,
    save_models,
    viterbi_decode,
)
from deixis.phoneme import PhonemeKind

LOG_2PI = math.log(2 * math.pi)


def gauss_logpdf(x, mean, var):
    return sum(
        -0.5 * (LOG_2PI + math.log(v) + (a - m) ** 2 / v)
        for a, m, v in zip(x, mean, var)
    )


def random_left_right(rng, n, d):
    lt = np.full((n, n), -np.inf)
    for i in range(n - 1):
        adv = rng.uniform(0.2, 0.8)
        lt[i, i] = np.log(1 - adv)
        lt[i, i + 1] = np.log(adv)
    lt[n - 1, n - 1] = 0.0
    init = np.full(n, -np.inf)
    init[0] = 0.0
    return Hmm(
        lt,
        rng.normal(0, 1, (n, d)),
        rng.uniform(0.2, 2.0, (n, d)),
        init,
    )


def enumerate_paths(model, obs):
    """All admissible state paths with their joint log probabilities."""
    n, T = model.n_states, len(obs)
    B = model.emission_logprobs(np.asarray(obs))
    results = []
    for path in itertools.product(range(n), repeat=T):
        lp = model.log_init[path[0]] + B[0, path[0]]
        for t in range(1, T):
            lp += model.log_trans[path[t - 1], path[t]] + B[t, path[t]]
        if np.isfinite(lp):
            results.append((list(path), float(lp)))
    return results


class TestForward:
    def test_single_observation_at_mean(self, rng):
        mean = np.array([[0.3, -1.0, 2.0]])
        var = np.array([[0.5, 1.0, 2.0]])
        m = Hmm(np.zeros((1, 1)), mean, var, np.zeros(1))
        ll = forward_log_likelihood(m, mean.copy())
        assert abs(ll - gauss_logpdf(mean[0], mean[0], var[0])) < 1e-12

    def test_matches_path_enumeration(self, rng):
        for trial in range(50):
            n = int(rng.integers(1, 4))
            T = int(rng.integers(1, 6))
            m = random_left_right(rng, n, 2)
            obs = rng.normal(0, 1.5, (T, 2))
            paths = enumerate_paths(m, obs)
            expected = math.log(sum(math.exp(lp) for _, lp in paths))
            got = forward_log_likelihood(m, obs)
            assert abs(got - expected) <= 1e-9 * max(1.0, abs(expected))

    def test_far_observation_is_finite(self, rng):
        m = random_left_right(rng, 2, 2)
        obs = np.full((3, 2), 300.0)
        ll = forward_log_likelihood(m, obs)
        assert ll < -1000 and np.isfinite(ll)

    def test_dimension_mismatch(self, rng):
        m = random_left_right(rng, 2, 3)
        with pytest.raises(ModelShapeError):
            forward_log_likelihood(m, np.zeros((4, 2)))


class TestViterbi:
    def test_single_state(self, rng):
        m = random_left_right(rng, 1, 2)
        obs = rng.normal(0, 1, (4, 2))
        path, lp = viterbi_decode(m, obs)
        assert path == [0, 0, 0, 0]
        B = m.emission_logprobs(obs)
        assert abs(lp - float(B.sum())) < 1e-12

    def test_matches_enumeration(self, rng):
        for trial in range(50):
            m = random_left_right(rng, 2, 2)
            obs = rng.normal(0, 1.5, (3, 2))
            paths = enumerate_paths(m, obs)
            best = max(paths, key=lambda p: p[1])
            path, lp = viterbi_decode(m, obs)
            assert abs(lp - best[1]) < 1e-12

    def test_tie_breaks_to_lexicographically_smaller(self):
        # symmetric two-state model: staying or advancing costs the same and
        # both states emit identically, so every path ties
        with np.errstate(divide="ignore"):
            lt = np.log(np.array([[0.5, 0.5], [0.0, 1.0]]))
        lt[1, 0] = -np.inf
        means = np.zeros((2, 1))
        variances = np.ones((2, 1))
        init = np.log(np.array([0.5, 0.5]))
        m = Hmm(lt, means, variances, init)
        path, _ = viterbi_decode(m, np.zeros((3, 1)))
        paths = enumerate_paths(m, np.zeros((3, 1)))
        best_lp = max(lp for _, lp in paths)
        tied = sorted(p for p, lp in paths if abs(lp - best_lp) < 1e-12)
        assert path == tied[0]

    def test_never_exceeds_forward(self, rng):
        for _ in range(60):
            n = int(rng.integers(1, 4))
            m = random_left_right(rng, n, 2)
            obs = rng.normal(0, 2, (int(rng.integers(1, 8)), 2))
            _, lp = viterbi_decode(m, obs)
            assert lp <= forward_log_likelihood(m, obs) + 1e-10


def sample_from(model, rng, T):
    states, obs = [], []
    s = int(rng.choice(model.n_states, p=np.exp(model.log_init)))
    for _ in range(T):
        states.append(s)
        obs.append(rng.normal(model.means[s], np.sqrt(model.variances[s])))
        s = int(rng.choice(model.n_states, p=np.exp(model.log_trans[s])))
    return np.array(obs)


class TestBaumWelch:
    def test_log_likelihood_non_decreasing(self, rng):
        true = random_left_right(rng, 2, 2)
        segments = [sample_from(true, rng, int(rng.integers(6, 15))) for _ in range(200)]
        init = flat_start(2, segments)
        trained = baum_welch_train(init, segments, max_iters=20)
        hist = trained.ll_history
        assert len(hist) >= 2
        for a, b in zip(hist, hist[1:]):
            assert b >= a - 1e-8

    def test_single_state_closed_form(self, rng):
        X = rng.normal(0.5, 1.0, (40, 3))
        init = Hmm(np.zeros((1, 1)), np.zeros((1, 3)), np.ones((1, 3)), np.zeros(1))
        trained = baum_welch_train(init, [X], max_iters=1)
        assert np.allclose(trained.means[0], X.mean(axis=0), atol=1e-9)
        assert np.allclose(trained.variances[0], np.maximum(X.var(axis=0), 1e-6), atol=1e-9)

    def test_heldout_improves_over_initialization(self, rng):
        true = random_left_right(rng, 3, 2)
        train = [sample_from(true, rng, 12) for _ in range(120)]
        heldout = [sample_from(true, rng, 12) for _ in range(30)]
        init = flat_start(3, train)
        before = sum(forward_log_likelihood(init, seg) for seg in heldout)
        trained = baum_welch_train(init, train, max_iters=15)
        after = sum(forward_log_likelihood(trained, seg) for seg in heldout)
        assert after > before

    def test_preserves_structure(self, rng):
        true = random_left_right(rng, 3, 2)
        segments = [sample_from(true, rng, 10) for _ in range(50)]
        trained = baum_welch_train(flat_start(3, segments), segments, max_iters=8)
        trained.validate()  # row sums, sparsity, variance floor
        assert np.isneginf(trained.log_trans[1, 0])
        assert np.isneginf(trained.log_trans[0, 2])

    def test_deterministic(self, rng):
        true = random_left_right(rng, 2, 2)
        segments = [sample_from(true, rng, 8) for _ in range(30)]
        a = baum_welch_train(flat_start(2, segments), segments, max_iters=5)
        b = baum_welch_train(flat_start(2, segments), segments, max_iters=5)
        assert np.array_equal(a.means, b.means)
        assert np.array_equal(a.log_trans, b.log_trans)

    def test_segment_too_short(self, rng):
        m = random_left_right(rng, 3, 2)
        with pytest.raises(SegmentTooShort):
            baum_welch_train(m, [np.zeros((2, 2))])

    def test_identical_observations_floor_variance(self):
        X = np.full((12, 2), 0.7)
        init = Hmm(left_right_log_trans(2), np.zeros((2, 2)), np.ones((2, 2)),
                   np.array([0.0, -np.inf]))
        trained = baum_welch_train(init, [X], max_iters=3)
        assert np.all(trained.variances >= 1e-6 * (1 - 1e-12))


class TestPersistence:
    def test_round_trip_bit_exact(self, rng, tmp_path):
        models = {}
        topology = ModelTopology()
        for kind in topology.state_counts:
            n = topology.n_states(kind)
            segs = [rng.normal(0, 1, (n + 4, 5)) for _ in range(3)]
            models[kind] = baum_welch_train(flat_start(n, segs), segs, max_iters=2)
        ms = ModelSet(models=models, topology=topology, config={"a": 1})
        path = tmp_path / "model.json"
        save_models(ms, path)
        loaded = load_models(path)
        for kind, m in models.items():
            lm = loaded.models[kind]
            assert np.array_equal(m.log_trans, lm.log_trans)
            assert np.array_equal(m.means, lm.means)
            assert np.array_equal(m.variances, lm.variances)
            assert np.array_equal(m.log_init, lm.log_init)
            assert m.ll_history == lm.ll_history
        save_models(loaded, tmp_path / "model2.json")
        assert (tmp_path / "model.json").read_bytes() == (tmp_path / "model2.json").read_bytes()

    def test_topology_defaults(self):
        topo = ModelTopology()
        assert topo.n_states(PhonemeKind.PREPARATION) == 3
        assert topo.n_states(PhonemeKind.RETRACTION) == 3
        assert topo.n_states(PhonemeKind.POINT) == 3
        assert topo.n_states(PhonemeKind.CONTOUR) == 4
        assert topo.n_states(PhonemeKind.REST) == 4
        assert topo.n_states(PhonemeKind.CIRCLE) == 4
