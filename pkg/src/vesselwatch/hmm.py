"""Left-to-right discrete hidden Markov models.

Scoring uses the per-step rescaled forward recursion, so log-likelihoods of
long sequences stay finite where the raw product of probabilities would
underflow. Training is multi-sequence Baum-Welch; ragged training sets are
padded with a synthetic always-emitted symbol, which leaves every scale
factor at exactly 1 and every backward variable at exactly 1 inside the pad,
so masked statistics match the unpadded computation bit for bit.

State 0 is always the entry state (pi is pinned at (1, 0, ..., 0)) and
transitions may only move forward by at most ``max_jump`` states.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .errors import InputError, InvariantError

DEFAULT_NUM_STATES = 4
DEFAULT_MAX_JUMP = 2
ROW_SUM_TOL = 1e-9


def band_mask(num_states: int, max_jump: int) -> np.ndarray:
    """Boolean mask of allowed transitions: j in [i, i + max_jump]."""
    i = np.arange(num_states)[:, None]
    j = np.arange(num_states)[None, :]
    return (j >= i) & (j <= i + max_jump)


@dataclass(frozen=True)
class Hmm:
    pi: np.ndarray
    A: np.ndarray
    B: np.ndarray
    max_jump: int = DEFAULT_MAX_JUMP

    def __post_init__(self):
        for name in ("pi", "A", "B"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.pi.ndim != 1 or self.A.ndim != 2 or self.B.ndim != 2:
            raise InputError("model arrays have wrong rank")
        n = len(self.pi)
        if self.A.shape != (n, n) or self.B.shape[0] != n:
            raise InputError("model arrays have inconsistent shapes")
        if self.max_jump < 1:
            raise InputError(f"max_jump must be >= 1, got {self.max_jump}")

    @property
    def num_states(self) -> int:
        return len(self.pi)

    @property
    def num_symbols(self) -> int:
        return int(self.B.shape[1])


def validate(model: Hmm) -> str | None:
    """Check every model invariant; return the first violation, or None."""
    n, k = model.num_states, model.num_symbols
    if model.pi[0] != 1.0 or np.any(model.pi[1:] != 0.0):
        return f"pi must be (1, 0, ..., 0), got {model.pi.tolist()}"
    for name, arr in (("A", model.A), ("B", model.B)):
        if not np.all(np.isfinite(arr)):
            return f"{name} contains non-finite entries"
        bad = np.argwhere(arr < 0.0)
        if len(bad):
            i, j = bad[0]
            return f"negative entry {name}[{i}][{j}] = {arr[i, j]}"
    allowed = band_mask(n, model.max_jump)
    bad = np.argwhere((~allowed) & (model.A != 0.0))
    if len(bad):
        i, j = bad[0]
        kind = "backward transition" if j < i else "jump beyond band"
        return f"{kind} A[{i}][{j}] = {model.A[i, j]}"
    for i in range(n):
        s = float(model.A[i].sum())
        if abs(s - 1.0) > ROW_SUM_TOL:
            return f"A row {i} sums to {s}"
    for i in range(n):
        s = float(model.B[i].sum())
        if abs(s - 1.0) > ROW_SUM_TOL:
            return f"B row {i} sums to {s}"
    return None


@dataclass(frozen=True)
class TrainConfig:
    max_iterations: int = 100
    ll_tolerance: float = 1e-4
    emission_floor: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise InputError("max_iterations must be positive")
        if self.ll_tolerance <= 0:
            raise InputError("ll_tolerance must be positive")
        if self.emission_floor <= 0:
            raise InputError("emission_floor must be positive")


def _as_symbols(obs, num_symbols: int) -> np.ndarray:
    arr = obs.array() if hasattr(obs, "array") else np.asarray(obs, dtype=np.intp)
    if arr.ndim != 1 or len(arr) < 1:
        raise InputError("need a non-empty 1-d symbol sequence")
    if arr.min() < 0:
        raise InputError(f"negative symbol {int(arr.min())}")
    if arr.max() >= num_symbols:
        raise InputError(f"symbol {int(arr.max())} outside alphabet of size {num_symbols}")
    return arr


def forward_log_likelihood(model: Hmm, obs) -> float:
    """log P(obs | model) via the scaled forward recursion (natural log).

    Returns -inf exactly when the model assigns the sequence zero
    probability.
    """
    sym = _as_symbols(obs, model.num_symbols)
    alpha = model.pi * model.B[:, sym[0]]
    total = 0.0
    c = float(alpha.sum())
    if c == 0.0:
        return -math.inf
    total += math.log(c)
    alpha = alpha / c
    for o in sym[1:]:
        alpha = (alpha @ model.A) * model.B[:, o]
        c = float(alpha.sum())
        if c == 0.0:
            return -math.inf
        total += math.log(c)
        alpha = alpha / c
    return total


def _pad_sequences(seqs: list[np.ndarray], num_symbols: int) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([len(s) for s in seqs], dtype=np.intp)
    t_max = int(lengths.max())
    padded = np.full((len(seqs), t_max), num_symbols, dtype=np.intp)
    for i, s in enumerate(seqs):
        padded[i, : len(s)] = s
    return padded, lengths


def forward_log_likelihood_batch(model: Hmm, sequences: Iterable) -> np.ndarray:
    """Score many sequences at once; identical values to the scalar routine."""
    seqs = [_as_symbols(s, model.num_symbols) for s in sequences]
    if not seqs:
        return np.empty(0)
    padded, lengths = _pad_sequences(seqs, model.num_symbols)
    n_seq, t_max = padded.shape
    bx = np.hstack([model.B, np.ones((model.num_states, 1))])
    alpha = model.pi[None, :] * bx[:, padded[:, 0]].T
    out = np.zeros(n_seq)
    dead = np.zeros(n_seq, dtype=bool)
    c = alpha.sum(axis=1)
    dead |= c == 0.0
    with np.errstate(divide="ignore"):
        out += np.where(dead, -np.inf, np.log(np.where(c > 0, c, 1.0)))
    alpha = alpha / np.where(c > 0, c, 1.0)[:, None]
    for t in range(1, t_max):
        alpha = (alpha @ model.A) * bx[:, padded[:, t]].T
        c = alpha.sum(axis=1)
        newly_dead = (c == 0.0) & ~dead & (t < lengths)
        dead |= newly_dead
        step = np.where(t < lengths, np.log(np.where(c > 0, c, 1.0)), 0.0)
        out = np.where(dead, -np.inf, out + step)
        alpha = np.where(
            (c > 0)[:, None], alpha / np.where(c > 0, c, 1.0)[:, None], 1.0 / model.num_states
        )
    return out


def initial_model(num_states: int, num_symbols: int, max_jump: int, seed: int) -> Hmm:
    """Deterministic starting point: banded-uniform A, near-uniform B.

    B gets a symmetric perturbation of at most 1% around uniform so that
    Baum-Welch can break ties between states.
    """
    allowed = band_mask(num_states, max_jump)
    a = allowed / allowed.sum(axis=1, keepdims=True)
    rng = np.random.default_rng(seed)
    b = (1.0 + rng.uniform(-0.01, 0.01, size=(num_states, num_symbols))) / num_symbols
    b = b / b.sum(axis=1, keepdims=True)
    pi = np.zeros(num_states)
    pi[0] = 1.0
    return Hmm(pi=pi, A=a, B=b, max_jump=max_jump)


def _floor_emission_rows(b: np.ndarray, floor: float) -> np.ndarray:
    """Raise sub-floor entries to exactly ``floor``; rescale the rest to keep
    each row summing to 1. Iterates because rescaling can push new entries
    below the floor."""
    out = np.array(b, dtype=float)
    n, k = out.shape
    for i in range(n):
        row = out[i]
        pinned = np.zeros(k, dtype=bool)
        for _ in range(k):
            below = ~pinned & (row < floor)
            if not below.any():
                break
            pinned |= below
            row[pinned] = floor
            free = ~pinned
            if not free.any():
                raise InvariantError("emission floor too large for row")
            target = 1.0 - float(pinned.sum()) * floor
            row[free] *= target / row[free].sum()
        out[i] = row
    return out


def _e_step(
    a: np.ndarray,
    bx: np.ndarray,
    pi: np.ndarray,
    padded: np.ndarray,
    lengths: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """One forward-backward sweep over the padded batch.

    Returns (transition outer products, emission counts by symbol,
    state occupancy over transition steps, total log-likelihood).
    """
    n_seq, t_max = padded.shape
    n = a.shape[0]
    alphas = np.empty((t_max, n_seq, n))
    scales = np.empty((t_max, n_seq))

    alpha = pi[None, :] * bx[:, padded[:, 0]].T
    c = alpha.sum(axis=1)
    if np.any(c <= 0.0):
        raise InvariantError("zero-probability sequence during training")
    alpha = alpha / c[:, None]
    alphas[0], scales[0] = alpha, c
    for t in range(1, t_max):
        alpha = (alpha @ a) * bx[:, padded[:, t]].T
        c = alpha.sum(axis=1)
        if np.any(c <= 0.0):
            raise InvariantError("zero-probability sequence during training")
        alpha = alpha / c[:, None]
        alphas[t], scales[t] = alpha, c
    total_ll = float(np.log(scales).sum())  # pad steps scale to exactly 1

    trans_outer = np.zeros((n, n))
    emit_acc = np.zeros((bx.shape[1], n))
    occupancy = np.zeros(n)
    beta = np.ones((n_seq, n))
    for t in range(t_max - 1, -1, -1):
        gamma = alphas[t] * beta
        emit_w = gamma * (t < lengths)[:, None]
        np.add.at(emit_acc, padded[:, t], emit_w)
        occupancy += (gamma * (t < lengths - 1)[:, None]).sum(axis=0)
        if t > 0:
            rhs = bx[:, padded[:, t]].T * beta / scales[t][:, None]
            w = (t < lengths)[:, None]  # transition t-1 -> t is real
            trans_outer += (alphas[t - 1] * w).T @ rhs
            beta = rhs @ a.T
    return trans_outer, emit_acc, occupancy, total_ll


def baum_welch(
    sequences: Iterable,
    num_states: int = DEFAULT_NUM_STATES,
    num_symbols: int | None = None,
    max_jump: int = DEFAULT_MAX_JUMP,
    cfg: TrainConfig = TrainConfig(),
) -> tuple[Hmm, list[float]]:
    """Fit a left-to-right model to one or more symbol sequences.

    Returns the trained model and the per-iteration total log-likelihood
    trace (evaluated before each update). Training stops at
    ``cfg.max_iterations`` or once an iteration improves the total
    log-likelihood by less than ``cfg.ll_tolerance``.
    """
    raw = list(sequences)
    if not raw:
        raise InputError("empty training set")
    if num_symbols is None:
        sizes = {s.alphabet_size for s in raw if hasattr(s, "alphabet_size")}
        if len(sizes) != 1:
            raise InputError("cannot infer alphabet size; pass num_symbols")
        num_symbols = sizes.pop()
    if num_states < 1 or num_symbols < 1:
        raise InputError("need at least one state and one symbol")
    if cfg.emission_floor >= 1.0 / num_symbols:
        raise InputError(
            f"emission_floor {cfg.emission_floor} must be below 1/K = {1.0 / num_symbols}"
        )
    seqs = [_as_symbols(s, num_symbols) for s in raw]
    if any(len(s) < 2 for s in seqs):
        raise InputError("every training sequence needs length >= 2")
    padded, lengths = _pad_sequences(seqs, num_symbols)

    model = initial_model(num_states, num_symbols, max_jump, cfg.seed)
    a, b = np.array(model.A), np.array(model.B)
    pi = np.array(model.pi)
    trace: list[float] = []
    for _ in range(cfg.max_iterations):
        bx = np.hstack([b, np.ones((num_states, 1))])
        trans_outer, emit_acc, occupancy, ll = _e_step(a, bx, pi, padded, lengths)
        trace.append(ll)
        if len(trace) >= 2 and trace[-1] - trace[-2] < cfg.ll_tolerance:
            break
        a_num = a * trans_outer  # structural zeros stay exactly zero
        row = a_num.sum(axis=1)
        a = np.where(row[:, None] > 0.0, a_num / np.where(row > 0, row, 1.0)[:, None], a)
        b_num = emit_acc[:num_symbols].T
        b_row = b_num.sum(axis=1)
        b = np.where(b_row[:, None] > 0.0, b_num / np.where(b_row > 0, b_row, 1.0)[:, None], b)
        b = _floor_emission_rows(b, cfg.emission_floor)
    return Hmm(pi=pi, A=a, B=b, max_jump=max_jump), trace


class LeftRightHmm(BaseEstimator):
    """Estimator facade over Baum-Welch training and forward scoring.

    ``X`` is a list of symbol sequences (anything ``baum_welch`` accepts:
    integer arrays or objects with ``.array()``). ``score_samples`` returns
    one log-likelihood per sequence; ``score`` averages them, matching the
    convention of the scikit-learn density estimators.
    """

    def __init__(
        self,
        num_states: int = DEFAULT_NUM_STATES,
        num_symbols: int | None = None,
        max_jump: int = DEFAULT_MAX_JUMP,
        max_iterations: int = 100,
        ll_tolerance: float = 1e-4,
        emission_floor: float = 1e-6,
        seed: int = 0,
    ):
        self.num_states = num_states
        self.num_symbols = num_symbols
        self.max_jump = max_jump
        self.max_iterations = max_iterations
        self.ll_tolerance = ll_tolerance
        self.emission_floor = emission_floor
        self.seed = seed

    def fit(self, X, y=None):
        cfg = TrainConfig(
            max_iterations=self.max_iterations,
            ll_tolerance=self.ll_tolerance,
            emission_floor=self.emission_floor,
            seed=self.seed,
        )
        self.model_, self.trace_ = baum_welch(
            X,
            num_states=self.num_states,
            num_symbols=self.num_symbols,
            max_jump=self.max_jump,
            cfg=cfg,
        )
        return self

    def score_samples(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        return np.array([forward_log_likelihood(self.model_, obs) for obs in X])

    def score(self, X, y=None) -> float:
        return float(self.score_samples(X).mean())
