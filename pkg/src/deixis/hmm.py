"""Left-to-right continuous-observation HMMs: likelihood, decoding, training.

Each phoneme model is a left-to-right chain (self-loop and advance only)
with one diagonal Gaussian per state. Everything runs in log space; the
variance floor keeps emissions finite on degenerate data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import IncompleteTopology, ModelShapeError, SegmentTooShort
from .kinematics import FEATURE_NAMES, feature_matrix
from .phoneme import PHONEME_ORDER, PhonemeKind

LOG_2PI = float(np.log(2.0 * np.pi))
VAR_FLOOR = 1e-6

DEFAULT_STATE_COUNTS = {
    PhonemeKind.PREPARATION: 3,
    PhonemeKind.RETRACTION: 3,
    PhonemeKind.POINT: 3,
    PhonemeKind.CONTOUR: 4,
    PhonemeKind.REST: 4,
    PhonemeKind.CIRCLE: 4,
}


@dataclass(frozen=True)
class ModelTopology:
    """State count per phoneme kind."""

    state_counts: Mapping[PhonemeKind, int] = field(
        default_factory=lambda: dict(DEFAULT_STATE_COUNTS)
    )

    def __post_init__(self):
        for kind, n in self.state_counts.items():
            if n < 1:
                raise ValueError(f"state count for {kind} must be >= 1")

    def n_states(self, kind: PhonemeKind) -> int:
        try:
            return self.state_counts[kind]
        except KeyError:
            raise IncompleteTopology(f"no state count for phoneme {kind.value}")

    def covers(self, kinds) -> bool:
        return all(k in self.state_counts for k in kinds)


def _logsumexp(a: np.ndarray, axis=None) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(over="ignore", divide="ignore"):
        out = np.log(np.sum(np.exp(a - safe), axis=axis)) + np.squeeze(safe, axis=axis)
    if axis is None:
        return float(out) if np.isfinite(m) else float("-inf")
    return np.where(np.isfinite(np.squeeze(m, axis=axis)), out, -np.inf)


@dataclass(frozen=True)
class Hmm:
    log_trans: np.ndarray  # (n, n)
    means: np.ndarray      # (n, d)
    variances: np.ndarray  # (n, d)
    log_init: np.ndarray   # (n,)
    ll_history: tuple = ()  # total training log-likelihood per EM iteration

    def __post_init__(self):
        for name in ("log_trans", "means", "variances", "log_init"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        self.validate()

    @property
    def n_states(self) -> int:
        return self.log_trans.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def validate(self):
        n = self.log_trans.shape[0]
        if self.log_trans.shape != (n, n):
            raise ModelShapeError("transition matrix must be square")
        if self.means.shape != self.variances.shape or self.means.shape[0] != n:
            raise ModelShapeError("emission parameter shapes inconsistent")
        if self.log_init.shape != (n,):
            raise ModelShapeError("initial vector length mismatch")
        with np.errstate(over="ignore"):
            rows = np.exp(self.log_trans).sum(axis=1)
            init = np.exp(self.log_init).sum()
        if np.any(np.abs(rows - 1.0) > 1e-9) or abs(init - 1.0) > 1e-9:
            raise ValueError("transition rows and init vector must sum to 1")
        for i in range(n):
            for j in range(n):
                if (j < i or j > i + 1) and self.log_trans[i, j] != -np.inf:
                    raise ValueError("left-to-right sparsity violated")
        if np.any(self.variances < VAR_FLOOR * (1 - 1e-12)):
            raise ValueError("variance below floor")

    def emission_logprobs(self, obs) -> np.ndarray:
        """Per-frame, per-state diagonal-Gaussian log densities, shape (T, n)."""
        X = feature_matrix(obs)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ModelShapeError(
                f"observations have dim {X.shape[-1] if X.ndim else 0}, model wants {self.dim}"
            )
        diff = X[:, None, :] - self.means[None, :, :]
        return -0.5 * np.sum(
            LOG_2PI + np.log(self.variances)[None, :, :] + diff * diff / self.variances[None, :, :],
            axis=2,
        )


def left_right_log_trans(n: int, advance: float = 0.5) -> np.ndarray:
    """Self-loop/advance transition matrix; the last state only self-loops."""
    lt = np.full((n, n), -np.inf)
    for i in range(n - 1):
        lt[i, i] = np.log(1.0 - advance)
        lt[i, i + 1] = np.log(advance)
    lt[n - 1, n - 1] = 0.0
    return lt


def flat_start(n_states: int, segments: Sequence, var_floor: float = VAR_FLOOR) -> Hmm:
    """Deterministic initialization: split every segment into ``n_states``
    temporal bins and pool per-bin statistics across segments."""
    mats = [feature_matrix(s) for s in segments]
    if not mats:
        raise ValueError("need at least one segment")
    d = mats[0].shape[1]
    sums = np.zeros((n_states, d))
    sq = np.zeros((n_states, d))
    counts = np.zeros(n_states)
    for X in mats:
        if X.shape[0] < n_states:
            raise SegmentTooShort(
                f"segment of length {X.shape[0]} cannot initialize {n_states} states"
            )
        for i, chunk in enumerate(np.array_split(X, n_states)):
            sums[i] += chunk.sum(axis=0)
            sq[i] += (chunk * chunk).sum(axis=0)
            counts[i] += chunk.shape[0]
    means = sums / counts[:, None]
    variances = np.maximum(sq / counts[:, None] - means * means, var_floor)
    log_init = np.full(n_states, -np.inf)
    log_init[0] = 0.0
    return Hmm(left_right_log_trans(n_states), means, variances, log_init)


def forward_log_likelihood(model: Hmm, obs) -> float:
    """log P(obs | model) by the forward recursion in log space."""
    B = model.emission_logprobs(obs)
    if B.shape[0] == 0:
        raise ValueError("empty observation sequence")
    la = model.log_init + B[0]
    for t in range(1, B.shape[0]):
        la = _logsumexp(la[:, None] + model.log_trans, axis=0) + B[t]
    return float(_logsumexp(la))


def viterbi_decode(model: Hmm, obs) -> tuple[list[int], float]:
    """Best state path and its joint log-probability.

    The backward max pass plus greedy forward trace returns, among all
    optimal paths, the lexicographically smallest one, so ties resolve
    toward lower state indices deterministically.
    """
    B = model.emission_logprobs(obs)
    T, n = B.shape
    if T == 0:
        raise ValueError("empty observation sequence")
    beta = np.zeros(n)
    choice = np.empty((T - 1, n), dtype=int)
    for t in range(T - 2, -1, -1):
        scores = model.log_trans + (B[t + 1] + beta)[None, :]
        choice[t] = np.argmax(scores, axis=1)
        beta = scores[np.arange(n), choice[t]]
    start = model.log_init + B[0] + beta
    s = int(np.argmax(start))
    logp = float(start[s])
    path = [s]
    for t in range(T - 1):
        s = int(choice[t, s])
        path.append(s)
    return path, logp


def _forward_backward(model: Hmm, B: np.ndarray):
    T, n = B.shape
    alpha = np.empty((T, n))
    alpha[0] = model.log_init + B[0]
    for t in range(1, T):
        alpha[t] = _logsumexp(alpha[t - 1][:, None] + model.log_trans, axis=0) + B[t]
    beta = np.zeros((T, n))
    for t in range(T - 2, -1, -1):
        beta[t] = _logsumexp(model.log_trans + (B[t + 1] + beta[t + 1])[None, :], axis=1)
    ll = float(_logsumexp(alpha[-1]))
    return alpha, beta, ll


def baum_welch_train(
    model: Hmm,
    segments: Sequence,
    max_iters: int = 20,
    tol: float = 1e-4,
    var_floor: float = VAR_FLOOR,
) -> Hmm:
    """EM re-estimation of transitions and Gaussian emissions.

    The initial distribution is fixed (left-to-right entry). Stops when the
    total log-likelihood improves by less than ``tol`` or after
    ``max_iters``. Left-to-right zeros are preserved by construction and
    the variance floor is applied on every iteration.
    """
    mats = [feature_matrix(s) for s in segments]
    if not mats:
        raise ValueError("need at least one training segment")
    n = model.n_states
    for X in mats:
        if X.shape[0] < n:
            raise SegmentTooShort(f"segment length {X.shape[0]} < {n} states")
        if X.shape[1] != model.dim:
            raise ModelShapeError("training segment dimension mismatch")

    log_trans = model.log_trans.copy()
    means = model.means.copy()
    variances = model.variances.copy()
    mask = np.isfinite(log_trans)
    history: list[float] = []

    for _ in range(max_iters):
        trans_num = np.zeros((n, n))
        w_sum = np.zeros(n)
        wx = np.zeros((n, model.dim))
        wx2 = np.zeros((n, model.dim))
        total_ll = 0.0
        cur = Hmm(log_trans, means, variances, model.log_init)
        for X in mats:
            B = cur.emission_logprobs(X)
            alpha, beta, ll = _forward_backward(cur, B)
            total_ll += ll
            gamma = np.exp(alpha + beta - ll)
            if X.shape[0] > 1:
                with np.errstate(over="ignore"):
                    xi = np.exp(
                        alpha[:-1, :, None]
                        + log_trans[None, :, :]
                        + (B[1:] + beta[1:])[:, None, :]
                        - ll
                    )
                trans_num += xi.sum(axis=0)
            w_sum += gamma.sum(axis=0)
            wx += gamma.T @ X
            wx2 += gamma.T @ (X * X)

        history.append(total_ll)

        row_tot = trans_num.sum(axis=1)
        new_lt = log_trans.copy()
        for i in range(n):
            if row_tot[i] > 0:
                with np.errstate(divide="ignore"):
                    row = np.where(mask[i], trans_num[i] / row_tot[i], 0.0)
                    new_lt[i] = np.where(mask[i], np.log(np.maximum(row, 1e-300)), -np.inf)
                # renormalize exactly over the allowed entries
                new_lt[i] = np.where(
                    mask[i], new_lt[i] - _logsumexp(new_lt[i][None, :], axis=1), -np.inf
                )
        occupied = w_sum > 0
        new_means = np.where(occupied[:, None], wx / np.maximum(w_sum, 1e-300)[:, None], means)
        ex2 = np.where(occupied[:, None], wx2 / np.maximum(w_sum, 1e-300)[:, None], variances)
        new_vars = np.maximum(ex2 - new_means * new_means, var_floor)

        log_trans, means, variances = new_lt, new_means, new_vars
        if len(history) > 1 and history[-1] - history[-2] < tol:
            break

    return Hmm(log_trans, means, variances, model.log_init, ll_history=tuple(history))


@dataclass(frozen=True)
class ModelSet:
    """Trained phoneme models plus everything needed to reproduce decoding."""

    models: Mapping[PhonemeKind, Hmm]
    topology: ModelTopology
    feature_names: tuple = FEATURE_NAMES
    config: Mapping = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return next(iter(self.models.values())).dim


def _hmm_to_dict(m: Hmm) -> dict:
    def clean(a):
        return [[None if not np.isfinite(v) else v for v in row] for row in a]

    return {
        "log_trans": clean(m.log_trans),
        "means": m.means.tolist(),
        "variances": m.variances.tolist(),
        "log_init": [None if not np.isfinite(v) else v for v in m.log_init],
        "ll_history": list(m.ll_history),
    }


def _hmm_from_dict(d: dict) -> Hmm:
    def arr(rows):
        return np.array(
            [[-np.inf if v is None else v for v in row] for row in rows], dtype=float
        )

    return Hmm(
        arr(d["log_trans"]),
        np.array(d["means"], dtype=float),
        np.array(d["variances"], dtype=float),
        np.array([-np.inf if v is None else v for v in d["log_init"]], dtype=float),
        ll_history=tuple(d.get("ll_history", ())),
    )


def save_models(model_set: ModelSet, path) -> None:
    doc = {
        "feature_dim": model_set.dim,
        "feature_names": list(model_set.feature_names),
        "topology": {k.value: v for k, v in model_set.topology.state_counts.items()},
        "models": {
            k.value: _hmm_to_dict(model_set.models[k])
            for k in PHONEME_ORDER
            if k in model_set.models
        },
        "config": dict(model_set.config),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")


def load_models(path) -> ModelSet:
    doc = json.loads(Path(path).read_text())
    models = {PhonemeKind(k): _hmm_from_dict(v) for k, v in doc["models"].items()}
    topology = ModelTopology({PhonemeKind(k): v for k, v in doc["topology"].items()})
    return ModelSet(
        models=models,
        topology=topology,
        feature_names=tuple(doc["feature_names"]),
        config=doc.get("config", {}),
    )
