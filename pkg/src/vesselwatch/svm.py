"""Soft-margin SVMs trained with sequential minimal optimization.

Binary subproblems solve the usual dual with a deterministic SMO loop:
sweep the multipliers in index order, pick the first KKT violator, pair it
with the partner maximizing |E_i - E_j| (sequential fallback when that pair
cannot move), and repeat until a sweep finds no violators. A finishing phase
then steps the maximal violating pair in an exactly recomputed error frame
until the optimality bracket closes inside the tolerance. Multi-class
classification is one-vs-one with majority voting; inputs are min/max scaled
to [-1, 1] per dimension using parameters learned from the training set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_X_y

from .errors import InputError

DEFAULT_C = 1.0
DEFAULT_KKT_TOL = 1e-3
# Hard problems of a few hundred points can need ~2000 sweeps to clear the
# KKT tolerance; sweeps are cheap, so the cap is a runaway guard, not a
# quality knob.
DEFAULT_MAX_PASSES = 10000
DEFAULT_IDLE_SWEEPS = 5
_PROGRESS_EPS = 1e-12
# Multipliers within this of a bound count as sitting on it. Box arithmetic
# leaves ulp-scale residue on multipliers that land on a bound; treating the
# residue as movable room misclassifies such points as free, which lets them
# pin the bias and masquerade as violators that no partner can fix.
_BOUND_EPS = 1e-12
# Relative dual gain below which a sweep counts as flat, and how many flat
# sweeps in a row hand the problem to the finishing phase.
_FLAT_GAIN = 1e-12
_FLAT_SWEEPS = 3


@dataclass(frozen=True)
class LabeledVector:
    x: tuple[float, ...]
    y: int

    def __post_init__(self):
        if not all(np.isfinite(self.x)):
            raise InputError("labeled vector has non-finite entries")


def labeled_to_arrays(data: Sequence[LabeledVector]) -> tuple[np.ndarray, np.ndarray]:
    if not data:
        raise InputError("no labeled vectors")
    x = np.array([v.x for v in data], dtype=float)
    y = np.array([v.y for v in data], dtype=int)
    return x, y


@dataclass(frozen=True)
class KernelSpec:
    name: str = "rbf"
    gamma: float | None = None

    def __post_init__(self):
        if self.name not in ("rbf", "linear"):
            raise InputError(f"unknown kernel: {self.name!r}")
        if self.gamma is not None and self.gamma <= 0:
            raise InputError(f"gamma must be positive, got {self.gamma}")

    def resolve(self, dim: int) -> "KernelSpec":
        """Fill in the data-dependent default gamma = 1/d."""
        if self.name == "rbf" and self.gamma is None:
            return KernelSpec("rbf", 1.0 / dim)
        return self


def kernel_matrix(spec: KernelSpec, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    x1 = np.atleast_2d(np.asarray(x1, dtype=float))
    x2 = np.atleast_2d(np.asarray(x2, dtype=float))
    if spec.name == "linear":
        return x1 @ x2.T
    if spec.gamma is None:
        raise InputError("rbf kernel used before gamma was resolved")
    d2 = (
        np.sum(x1**2, axis=1)[:, None]
        + np.sum(x2**2, axis=1)[None, :]
        - 2.0 * (x1 @ x2.T)
    )
    return np.exp(-spec.gamma * np.maximum(d2, 0.0))


@dataclass(frozen=True)
class SvmConfig:
    C: float = DEFAULT_C
    kernel: KernelSpec = field(default_factory=KernelSpec)
    kkt_tolerance: float = DEFAULT_KKT_TOL
    max_passes: int = DEFAULT_MAX_PASSES
    idle_sweeps: int = DEFAULT_IDLE_SWEEPS
    class_c_multipliers: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.C <= 0:
            raise InputError(f"C must be positive, got {self.C}")
        if self.kkt_tolerance <= 0:
            raise InputError("kkt_tolerance must be positive")
        if self.max_passes < 1 or self.idle_sweeps < 1:
            raise InputError("pass limits must be positive")
        if any(m <= 0 for m in self.class_c_multipliers.values()):
            raise InputError("class C multipliers must be positive")


@dataclass(frozen=True)
class ScaleParams:
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mins", np.asarray(self.mins, dtype=float))
        object.__setattr__(self, "maxs", np.asarray(self.maxs, dtype=float))
        if self.mins.shape != self.maxs.shape or self.mins.ndim != 1:
            raise InputError("malformed scale parameters")

    @property
    def dim(self) -> int:
        return len(self.mins)


def scale_fit(x: np.ndarray) -> ScaleParams:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.size == 0:
        raise InputError("cannot fit scaling on an empty set")
    return ScaleParams(mins=x.min(axis=0), maxs=x.max(axis=0))


def scale_apply(params: ScaleParams, x: np.ndarray) -> np.ndarray:
    """Affine map sending training min to -1 and max to +1 per dimension.

    Constant dimensions collapse to 0; out-of-range values extrapolate.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.shape[1] != params.dim:
        raise InputError(f"expected dimension {params.dim}, got {x2.shape[1]}")
    span = params.maxs - params.mins
    safe = np.where(span > 0, span, 1.0)
    out = 2.0 * (x2 - params.mins) / safe - 1.0
    out = np.where(span > 0, out, 0.0)
    return out[0] if single else out


@dataclass
class BinaryTrainResult:
    """Everything the solver knows at convergence, for audit and reuse.

    ``alpha`` covers every training point (zeros included) so KKT conditions
    can be re-checked against the full problem.
    """

    x: np.ndarray
    y: np.ndarray
    alpha: np.ndarray
    bias: float
    kernel: KernelSpec
    sample_c: np.ndarray
    sweeps: int
    converged: bool

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        k = kernel_matrix(self.kernel, np.atleast_2d(x), self.x)
        return k @ (self.alpha * self.y) + self.bias

    def dual_objective(self) -> float:
        k = kernel_matrix(self.kernel, self.x, self.x)
        ay = self.alpha * self.y
        return float(self.alpha.sum() - 0.5 * (ay @ k @ ay))

    def kkt_max_violation(self) -> float:
        """Largest complementary-slackness violation across all multipliers.

        For each point: margin slack yE must be >= -tol unless alpha is at
        its cap, and <= tol unless alpha is 0. Returns the worst overshoot
        (0 when every condition holds exactly).
        """
        k = kernel_matrix(self.kernel, self.x, self.x)
        e = k @ (self.alpha * self.y) + self.bias - self.y
        ye = self.y * e
        worst = 0.0
        at_cap = self.alpha >= self.sample_c - _BOUND_EPS
        at_zero = self.alpha <= _BOUND_EPS
        lower = np.where(~at_cap, np.maximum(0.0, -ye), 0.0)
        upper = np.where(~at_zero, np.maximum(0.0, ye), 0.0)
        worst = max(float(lower.max(initial=0.0)), float(upper.max(initial=0.0)))
        return worst


def _optimize_pair(i, j, k, y, alpha, sample_c, e, bias, tol, eps=None):
    """Platt's two-multiplier update. Returns (changed, new bias).

    Steps smaller than a relative progress threshold are rejected so the
    pair search moves on to a partner that makes real headway; the
    threshold shrinks with ``tol`` so tight tolerances stay reachable.
    ``eps=0.0`` disables the threshold (any strictly nonzero step counts),
    which the caller uses as a second chance when every partner was
    rejected for a multiplier that still violates its condition.
    """
    if i == j:
        return False, bias
    if eps is None:
        eps = min(1e-3, tol)
    ai, aj = alpha[i], alpha[j]
    yi, yj = y[i], y[j]
    ei, ej = e[i], e[j]
    s = yi * yj
    if yi != yj:
        low = max(0.0, aj - ai)
        high = min(sample_c[j], sample_c[i] + aj - ai)
    else:
        low = max(0.0, ai + aj - sample_c[i])
        high = min(sample_c[j], ai + aj)
    if low >= high:
        return False, bias
    kii, kjj, kij = k[i, i], k[j, j], k[i, j]
    eta = 2.0 * kij - kii - kjj
    if eta < 0.0:
        aj_new = aj - yj * (ei - ej) / eta
        aj_new = min(max(aj_new, low), high)
    else:
        # Degenerate direction: the restricted objective is linear, so the
        # optimum sits at an interval endpoint.
        f1 = yi * (ei - bias) - ai * kii - s * aj * kij
        f2 = yj * (ej - bias) - s * ai * kij - aj * kjj
        l1 = ai + s * (aj - low)
        h1 = ai + s * (aj - high)
        obj_low = (
            l1 * f1 + low * f2 + 0.5 * l1**2 * kii + 0.5 * low**2 * kjj + s * low * l1 * kij
        )
        obj_high = (
            h1 * f1 + high * f2 + 0.5 * h1**2 * kii + 0.5 * high**2 * kjj + s * high * h1 * kij
        )
        if obj_low < obj_high - _PROGRESS_EPS:
            aj_new = low
        elif obj_low > obj_high + _PROGRESS_EPS:
            aj_new = high
        else:
            return False, bias
    if aj_new == aj or abs(aj_new - aj) < eps * (aj_new + aj + eps):
        return False, bias
    # The linear constraint can spill a few ulp outside the box; clamp.
    ai_new = min(max(ai + s * (aj - aj_new), 0.0), sample_c[i])
    d_ai, d_aj = ai_new - ai, aj_new - aj

    b1 = bias - ei - yi * d_ai * kii - yj * d_aj * kij
    b2 = bias - ej - yi * d_ai * kij - yj * d_aj * kjj
    if 0.0 < ai_new < sample_c[i]:
        bias_new = b1
    elif 0.0 < aj_new < sample_c[j]:
        bias_new = b2
    else:
        bias_new = 0.5 * (b1 + b2)

    alpha[i], alpha[j] = ai_new, aj_new
    e += yi * d_ai * k[i, :] + yj * d_aj * k[j, :] + (bias_new - bias)
    return True, bias_new


def _recenter_bias(
    k: np.ndarray,
    y: np.ndarray,
    alpha: np.ndarray,
    sample_c: np.ndarray,
    bias: float,
    g: np.ndarray | None = None,
) -> float:
    """Center the bias inside the interval the multipliers leave open.

    For fixed alphas the stationarity conditions only bracket the bias:
    free multipliers pin it, bound ones give one-sided inequalities.  The
    midpoint of that bracket minimises the largest slack any sample can be
    charged with. Pass ``g = k @ (alpha * y)`` when already computed.
    """
    active = sample_c > 0.0
    if not active.any():
        return bias
    target = y - (g if g is not None else k @ (alpha * y))
    free = active & (alpha > 0.0) & (alpha < sample_c)
    at_zero = active & ~(alpha > 0.0)
    at_cap = active & ~(alpha < sample_c)
    lower = free | (at_zero & (y > 0)) | (at_cap & (y < 0))
    upper = free | (at_zero & (y < 0)) | (at_cap & (y > 0))
    if not lower.any() and not upper.any():
        return bias
    lo = float(target[lower].max()) if lower.any() else float(target[upper].min())
    hi = float(target[upper].min()) if upper.any() else lo
    return (lo + hi) / 2.0


def train_binary(
    x: np.ndarray,
    y: np.ndarray,
    cfg: SvmConfig = SvmConfig(),
    sample_c: np.ndarray | None = None,
) -> BinaryTrainResult:
    """SMO on one two-class problem. ``y`` entries must be -1 or +1.

    Deterministic for a fixed data order and configuration. Sweeps end when
    a pass finds no KKT violator (within kkt_tolerance), when ``idle_sweeps``
    consecutive passes change nothing, when accepted steps stop improving
    the dual, or at the ``max_passes`` cap; a maximal-violating-pair
    finishing phase then closes any residual violation.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or len(x) != len(y):
        raise InputError("training data shape mismatch")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise InputError("binary labels must be -1 or +1")
    if len(np.unique(y)) < 2:
        raise InputError("both classes must be present")
    n = len(y)
    if sample_c is None:
        sample_c = np.full(n, cfg.C)
    else:
        sample_c = np.asarray(sample_c, dtype=float)
        if sample_c.shape != (n,) or np.any(sample_c <= 0):
            raise InputError("per-sample C must be positive and match the data")

    kernel = cfg.kernel.resolve(x.shape[1])
    k = kernel_matrix(kernel, x, x)
    alpha = np.zeros(n)
    bias = 0.0
    e = -y.copy()  # decision function starts at zero
    tol = cfg.kkt_tolerance

    # Platt's outer loop: alternate full passes with passes over the
    # non-bound multipliers until a full pass changes nothing.
    sweeps = 0
    idle = 0
    flat = 0
    last_dual = -math.inf
    converged = False
    examine_all = True
    num_changed = 1
    while (num_changed > 0 or examine_all) and sweeps < cfg.max_passes:
        sweeps += 1
        num_changed = 0
        violators = 0
        if examine_all:
            candidates = range(n)
        else:
            candidates = np.flatnonzero((alpha > 0.0) & (alpha < sample_c))
        for i in candidates:
            ye = y[i] * e[i]
            if not ((ye < -tol and alpha[i] < sample_c[i]) or (ye > tol and alpha[i] > 0.0)):
                continue
            violators += 1
            # Second choice: largest error gap among non-bound partners,
            # falling back to a sequential scan over everything.
            gaps = np.abs(e[i] - e)
            gaps[(alpha <= 0.0) | (alpha >= sample_c)] = -1.0
            gaps[i] = -1.0
            ok = False
            if gaps.max() >= 0.0:
                j = int(np.argmax(gaps))
                ok, bias = _optimize_pair(i, j, k, y, alpha, sample_c, e, bias, tol)
            if not ok:
                for step in range(1, n):
                    ok, bias = _optimize_pair(
                        i, (i + step) % n, k, y, alpha, sample_c, e, bias, tol
                    )
                    if ok:
                        break
            if not ok:
                # Every partner was rejected by the progress threshold even
                # though i is a genuine violator; retake the scan accepting
                # any nonzero step so small corrections still land.
                for step in range(1, n):
                    ok, bias = _optimize_pair(
                        i, (i + step) % n, k, y, alpha, sample_c, e, bias, tol, eps=0.0
                    )
                    if ok:
                        break
            if ok:
                num_changed += 1
        # Between passes: recenter the bias inside its KKT bracket (pair
        # steps never depend on it, but the violator flags do, and they
        # must agree with the frame the final check uses), then rebuild
        # the error cache to kill accumulated float drift.
        g = k @ (alpha * y)
        bias = _recenter_bias(k, y, alpha, sample_c, bias, g=g)
        e = g + bias - y
        if examine_all and violators == 0:
            converged = True
            break
        # Sweeps that keep accepting steps without moving the objective are
        # orbiting the optimum at float resolution; stop early and let the
        # finishing phase close the remaining gap.
        dual = float(alpha.sum() - 0.5 * ((alpha * y) @ g))
        if num_changed > 0:
            flat = flat + 1 if dual - last_dual <= _FLAT_GAIN * (abs(dual) + 1.0) else 0
        last_dual = dual
        if flat >= _FLAT_SWEEPS:
            break
        if examine_all:
            examine_all = False
        elif num_changed == 0:
            examine_all = True
        idle = idle + 1 if num_changed == 0 else 0
        if idle >= cfg.idle_sweeps and not examine_all:
            break

    # Finishing phase. The pass structure above can stall an ulp-scale
    # orbit short of the tolerance; in the exact recentered frame the
    # maximal violating pair always admits an improving step while the
    # optimality bracket is wider than 2*tol, so drive that pair directly
    # until the bracket closes, a step collapses to float noise, or the
    # budget runs out.
    if not converged:
        for _ in range(max(1000, 10 * n)):
            g = k @ (alpha * y)
            bias = _recenter_bias(k, y, alpha, sample_c, bias, g=g)
            e = g + bias - y
            up = ((y > 0.0) & (alpha < sample_c)) | ((y < 0.0) & (alpha > 0.0))
            dn = ((y > 0.0) & (alpha > 0.0)) | ((y < 0.0) & (alpha < sample_c))
            b_up = float(e[up].min()) if up.any() else math.inf
            b_low = float(e[dn].max()) if dn.any() else -math.inf
            if b_low - b_up <= 2.0 * tol:
                converged = True
                break
            i = int(np.flatnonzero(up)[np.argmin(e[up])])
            j = int(np.flatnonzero(dn)[np.argmax(e[dn])])
            ok, bias = _optimize_pair(i, j, k, y, alpha, sample_c, e, bias, tol, eps=0.0)
            if not ok:
                break

    # The alpha vector pins the bias only to an interval; center it there so
    # the reported KKT slack is as small as the multipliers allow.
    bias = _recenter_bias(k, y, alpha, sample_c, bias)
    if not converged:
        ye = y * (k @ (alpha * y) + bias - y)
        still_bad = ((ye < -tol) & (alpha < sample_c)) | ((ye > tol) & (alpha > 0.0))
        converged = not bool(still_bad.any())
    return BinaryTrainResult(
        x=x,
        y=y,
        alpha=alpha,
        bias=bias,
        kernel=kernel,
        sample_c=sample_c,
        sweeps=sweeps,
        converged=converged,
    )


@dataclass(frozen=True)
class BinarySvm:
    """Compact one-vs-one member: support vectors only.

    A non-negative decision votes for ``class_pos`` (always the lower label
    of the pair), a negative one for ``class_neg``.
    """

    class_pos: int
    class_neg: int
    support_vectors: np.ndarray
    alpha: np.ndarray
    sv_y: np.ndarray
    bias: float
    kernel: KernelSpec

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        x2 = np.atleast_2d(np.asarray(x, dtype=float))
        if len(self.alpha) == 0:
            return np.full(len(x2), self.bias)
        k = kernel_matrix(self.kernel, x2, self.support_vectors)
        return k @ (self.alpha * self.sv_y) + self.bias


def compact_binary(result: BinaryTrainResult, class_pos: int, class_neg: int) -> BinarySvm:
    keep = result.alpha > 0.0
    return BinarySvm(
        class_pos=class_pos,
        class_neg=class_neg,
        support_vectors=result.x[keep],
        alpha=result.alpha[keep],
        sv_y=result.y[keep],
        bias=result.bias,
        kernel=result.kernel,
    )


@dataclass(frozen=True)
class SvmModel:
    classes: tuple[int, ...]
    scale: ScaleParams
    binaries: tuple[BinarySvm, ...]
    config: SvmConfig
    # Full per-pair solver states (all multipliers, not just support
    # vectors), kept only when train_multiclass is asked to. Useful for
    # auditing KKT conditions after the fact; never serialized.
    train_results: tuple[BinaryTrainResult, ...] | None = None

    @property
    def dim(self) -> int:
        return self.scale.dim


def train_multiclass(
    x: np.ndarray,
    y: np.ndarray,
    cfg: SvmConfig = SvmConfig(),
    keep_results: bool = False,
) -> SvmModel:
    """One-vs-one training over every unordered class pair.

    Scaling parameters come from the full training set and ride along in the
    model so prediction sees the same coordinates as training did.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=int)
    if x.ndim != 2 or len(x) != len(y):
        raise InputError("training data shape mismatch")
    if not np.all(np.isfinite(x)):
        raise InputError("training vectors must be finite")
    classes = tuple(int(c) for c in np.unique(y))
    if len(classes) < 2:
        raise InputError(f"need at least two classes, got {classes}")
    scale = scale_fit(x)
    xs = scale_apply(scale, x)
    binaries = []
    results = []
    for p, q in combinations(classes, 2):
        mask = (y == p) | (y == q)
        xp, yp = xs[mask], np.where(y[mask] == p, 1.0, -1.0)
        mult = cfg.class_c_multipliers
        sample_c = cfg.C * np.array([mult.get(int(lbl), 1.0) for lbl in y[mask]])
        result = train_binary(xp, yp, cfg, sample_c)
        binaries.append(compact_binary(result, p, q))
        if keep_results:
            results.append(result)
    return SvmModel(
        classes=classes,
        scale=scale,
        binaries=tuple(binaries),
        config=cfg,
        train_results=tuple(results) if keep_results else None,
    )


def vote_matrix(model: SvmModel, x: np.ndarray) -> np.ndarray:
    """Per-class one-vs-one vote counts, shape (n, num_classes)."""
    x2 = np.atleast_2d(np.asarray(x, dtype=float))
    xs = scale_apply(model.scale, x2)
    index = {c: i for i, c in enumerate(model.classes)}
    votes = np.zeros((len(x2), len(model.classes)), dtype=int)
    for binary in model.binaries:
        d = binary.decision_function(xs)
        votes[:, index[binary.class_pos]] += d >= 0.0
        votes[:, index[binary.class_neg]] += d < 0.0
    return votes


def predict(model: SvmModel, x: np.ndarray) -> np.ndarray | int:
    """Majority vote over the one-vs-one decisions; ties take the lowest label."""
    single = np.asarray(x).ndim == 1
    votes = vote_matrix(model, x)
    # argmax picks the first maximum and classes are sorted ascending,
    # so ties resolve to the lowest class label.
    labels = np.array([model.classes[i] for i in np.argmax(votes, axis=1)])
    return int(labels[0]) if single else labels


def predict_one(model: SvmModel, x: np.ndarray) -> tuple[int, dict[int, int]]:
    votes = vote_matrix(model, x)[0]
    label = model.classes[int(np.argmax(votes))]
    return int(label), {c: int(v) for c, v in zip(model.classes, votes)}


class SmoSvc(BaseEstimator, ClassifierMixin):
    """Estimator-style front end over the one-vs-one SMO trainer."""

    def __init__(
        self,
        C=DEFAULT_C,
        kernel="rbf",
        gamma=None,
        kkt_tolerance=DEFAULT_KKT_TOL,
        max_passes=DEFAULT_MAX_PASSES,
        idle_sweeps=DEFAULT_IDLE_SWEEPS,
        class_c_multipliers=None,
    ):
        self.C = C
        self.kernel = kernel
        self.gamma = gamma
        self.kkt_tolerance = kkt_tolerance
        self.max_passes = max_passes
        self.idle_sweeps = idle_sweeps
        self.class_c_multipliers = class_c_multipliers

    def _config(self) -> SvmConfig:
        return SvmConfig(
            C=self.C,
            kernel=KernelSpec(self.kernel, self.gamma),
            kkt_tolerance=self.kkt_tolerance,
            max_passes=self.max_passes,
            idle_sweeps=self.idle_sweeps,
            class_c_multipliers=self.class_c_multipliers or {},
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.model_ = train_multiclass(X, y, self._config())
        self.classes_ = np.array(self.model_.classes)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        X = check_array(X)
        return predict(self.model_, X)
