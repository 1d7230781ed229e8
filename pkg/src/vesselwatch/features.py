"""Pairwise kinematic features, observation sequences, and vector quantization.

A candidate pair's trajectories are turned into per-timestep feature vectors
(speeds, courses, turn rates of each vessel plus their differences and the
range between them), grouped into configurable observation types. Each
observation type gets its own k-means codebook so sequences can be quantized
into the discrete symbols the HMM layer consumes.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .engagement import CandidatePair
from .errors import InputError
from .geo import haversine_arrays, wrap180
from .ingest import Trajectory

DEFAULT_K = 16
KMEANS_MAX_ITER = 100
KMEANS_MOVE_TOL = 1e-6
SCALE_FLOOR = 1e-9


class FeatureKind(Enum):
    SOG_A = "sog_a"
    SOG_B = "sog_b"
    COG_A = "cog_a"
    COG_B = "cog_b"
    ROT_A = "rot_a"
    ROT_B = "rot_b"
    DISTANCE = "distance"
    DELTA_SOG = "delta_sog"
    DELTA_COG = "delta_cog"
    DELTA_ROT = "delta_rot"

    @classmethod
    def parse(cls, name: str) -> "FeatureKind":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise InputError(f"unknown feature kind: {name!r}") from None


@dataclass(frozen=True)
class ObservationType:
    """An ordered feature combination, indexed within the configured set."""

    id: int
    features: tuple[FeatureKind, ...]

    def __post_init__(self):
        if self.id < 0:
            raise InputError(f"observation type id must be >= 0, got {self.id}")
        if not self.features:
            raise InputError("observation type needs at least one feature")
        if len(set(self.features)) != len(self.features):
            raise InputError(f"duplicate features in observation type {self.id}")

    @property
    def dim(self) -> int:
        return len(self.features)


def default_observation_types() -> list[ObservationType]:
    combos = [
        (FeatureKind.DISTANCE, FeatureKind.DELTA_SOG),
        (FeatureKind.DELTA_COG, FeatureKind.DELTA_ROT),
        (FeatureKind.SOG_A, FeatureKind.SOG_B),
        (FeatureKind.DISTANCE, FeatureKind.DELTA_COG),
    ]
    return [ObservationType(i, feats) for i, feats in enumerate(combos)]


@dataclass(frozen=True)
class ObservationPoint:
    timestamp: int
    values: tuple[float, ...]

    def __post_init__(self):
        if not all(np.isfinite(self.values)):
            raise InputError(f"non-finite observation at t={self.timestamp}")


@dataclass(frozen=True)
class ObservationSequence:
    pair: CandidatePair
    obs_type: ObservationType
    points: tuple[ObservationPoint, ...]

    def __post_init__(self):
        if len(self.points) < 2:
            raise InputError("observation sequence needs at least two points")
        ts = np.array([p.timestamp for p in self.points], dtype=np.int64)
        if ts[0] < self.pair.t_start or ts[-1] > self.pair.t_end:
            raise InputError("observation timestamps outside the candidate interval")
        diffs = np.diff(ts)
        if len(set(diffs.tolist())) > 1 or (len(diffs) and diffs[0] <= 0):
            raise InputError("observation timestamps not on a uniform grid")

    def __len__(self) -> int:
        return len(self.points)

    def matrix(self) -> np.ndarray:
        """Points stacked as a (T, dim) array."""
        return np.array([p.values for p in self.points], dtype=float)


@dataclass(frozen=True)
class Codebook:
    """K-means centroids in standardized feature space.

    ``scale`` holds the per-dimension (mean, spread) applied to raw feature
    vectors before any distance computation.
    """

    obs_type: ObservationType
    centroids: np.ndarray
    scale: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "centroids", np.asarray(self.centroids, dtype=float))
        if self.centroids.ndim != 2 or self.centroids.shape[0] < 1:
            raise InputError("codebook needs at least one centroid")
        if self.centroids.shape[1] != len(self.scale):
            raise InputError("centroid dimension does not match scale")
        if len(np.unique(self.centroids, axis=0)) != self.centroids.shape[0]:
            raise InputError("codebook centroids must be distinct")
        if any(spread <= 0 for _, spread in self.scale):
            raise InputError("scale spread must be positive")

    @property
    def k(self) -> int:
        return int(self.centroids.shape[0])

    def standardize(self, x: np.ndarray) -> np.ndarray:
        mean = np.array([m for m, _ in self.scale])
        spread = np.array([s for _, s in self.scale])
        return (np.asarray(x, dtype=float) - mean) / spread

    def unstandardize(self, z: np.ndarray) -> np.ndarray:
        mean = np.array([m for m, _ in self.scale])
        spread = np.array([s for _, s in self.scale])
        return np.asarray(z, dtype=float) * spread + mean


@dataclass(frozen=True)
class SymbolSequence:
    symbols: tuple[int, ...]
    obs_type: ObservationType
    pair: CandidatePair
    alphabet_size: int

    def __post_init__(self):
        if any(not 0 <= s < self.alphabet_size for s in self.symbols):
            raise InputError("symbol outside the alphabet")

    def __len__(self) -> int:
        return len(self.symbols)

    def array(self) -> np.ndarray:
        return np.asarray(self.symbols, dtype=np.intp)


def _indices_for_grid(traj: Trajectory, grid: np.ndarray, label: str) -> np.ndarray:
    idx = np.searchsorted(traj.timestamps, grid)
    ok = (idx < len(traj)) & (traj.timestamps[np.minimum(idx, len(traj) - 1)] == grid)
    if not np.all(ok):
        missing = grid[~ok][:5].tolist()
        raise InputError(f"trajectory {label} missing grid timestamps {missing}")
    return idx


def _feature_arrays(
    traj_a: Trajectory,
    traj_b: Trajectory,
    ia: np.ndarray,
    ib: np.ndarray,
    kinds: Iterable[FeatureKind],
) -> dict[FeatureKind, np.ndarray]:
    out: dict[FeatureKind, np.ndarray] = {}
    for kind in kinds:
        if kind is FeatureKind.SOG_A:
            v = traj_a.sog[ia]
        elif kind is FeatureKind.SOG_B:
            v = traj_b.sog[ib]
        elif kind is FeatureKind.COG_A:
            v = traj_a.cog[ia]
        elif kind is FeatureKind.COG_B:
            v = traj_b.cog[ib]
        elif kind is FeatureKind.ROT_A:
            v = traj_a.rot[ia]
        elif kind is FeatureKind.ROT_B:
            v = traj_b.rot[ib]
        elif kind is FeatureKind.DISTANCE:
            v = haversine_arrays(traj_a.lat[ia], traj_a.lon[ia], traj_b.lat[ib], traj_b.lon[ib])
        elif kind is FeatureKind.DELTA_SOG:
            v = traj_a.sog[ia] - traj_b.sog[ib]
        elif kind is FeatureKind.DELTA_COG:
            v = wrap180(traj_a.cog[ia] - traj_b.cog[ib])
        elif kind is FeatureKind.DELTA_ROT:
            v = traj_a.rot[ia] - traj_b.rot[ib]
        else:  # pragma: no cover - closed enum
            raise InputError(f"unhandled feature kind {kind}")
        out[kind] = np.asarray(v, dtype=float)
    return out


def extract_features(
    traj_a: Trajectory, traj_b: Trajectory, pair: CandidatePair, t: int
) -> dict[FeatureKind, float]:
    """All feature values for one pair at one grid timestamp."""
    if not pair.t_start <= t <= pair.t_end:
        raise InputError(f"timestamp {t} outside candidate interval")
    ia = np.array([traj_a.index_of(t)])
    ib = np.array([traj_b.index_of(t)])
    arrays = _feature_arrays(traj_a, traj_b, ia, ib, list(FeatureKind))
    return {kind: float(v[0]) for kind, v in arrays.items()}


def build_observation(
    traj_a: Trajectory,
    traj_b: Trajectory,
    pair: CandidatePair,
    obs_type: ObservationType,
) -> ObservationSequence:
    """One observation point per grid step across the candidate interval."""
    step = traj_a.grid_step()
    if traj_b.grid_step() != step:
        raise InputError("pair trajectories on different grid steps")
    grid = np.arange(pair.t_start, pair.t_end + 1, step, dtype=np.int64)
    ia = _indices_for_grid(traj_a, grid, pair.vessel_a)
    ib = _indices_for_grid(traj_b, grid, pair.vessel_b)
    arrays = _feature_arrays(traj_a, traj_b, ia, ib, obs_type.features)
    stacked = np.column_stack([arrays[k] for k in obs_type.features])
    points = tuple(
        ObservationPoint(int(t), tuple(float(x) for x in row))
        for t, row in zip(grid, stacked)
    )
    return ObservationSequence(pair, obs_type, points)


def _kmeans_pp_init(z: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = z.shape[0]
    centroids = np.empty((k, z.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = z[first]
    d2 = np.sum((z - centroids[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            # All remaining points coincide with chosen centroids; any pick works.
            choice = int(rng.integers(n))
        else:
            choice = int(rng.choice(n, p=d2 / total))
        centroids[i] = z[choice]
        d2 = np.minimum(d2, np.sum((z - centroids[i]) ** 2, axis=1))
    return centroids


def _assign(z: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d2 = ((z[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def fit_codebook(
    training: np.ndarray | Sequence[Sequence[float]],
    k: int = DEFAULT_K,
    seed: int = 0,
    obs_type: ObservationType | None = None,
    wcss_trace: list | None = None,
) -> Codebook:
    """Standardize the training vectors and fit a k-means codebook.

    Lloyd iterations run until centroid movement drops below 1e-6 or 100
    rounds, whichever comes first. A cluster that loses all its points is
    re-seeded at the point currently farthest from its assigned centroid.
    """
    x = np.asarray(training, dtype=float)
    if x.ndim != 2:
        raise InputError("training data must be a 2-d array of vectors")
    n, dim = x.shape
    if n < k:
        raise InputError(f"need at least {k} training vectors, got {n}")
    if obs_type is None:
        obs_type = ObservationType(0, tuple(list(FeatureKind)[:dim]))
    if obs_type.dim != dim:
        raise InputError("observation type dimension does not match data")

    mean = x.mean(axis=0)
    spread = np.maximum(x.std(axis=0), SCALE_FLOOR)
    z = (x - mean) / spread

    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(z, k, rng)
    for _ in range(KMEANS_MAX_ITER):
        labels = _assign(z, centroids)
        point_d2 = ((z - centroids[labels]) ** 2).sum(axis=1)
        for j in range(k):
            if not np.any(labels == j):
                far = int(np.argmax(point_d2))
                centroids[j] = z[far]
                labels[far] = j
                point_d2[far] = -np.inf
        if wcss_trace is not None:
            wcss_trace.append(float(((z - centroids[labels]) ** 2).sum()))
        new_centroids = np.vstack([z[labels == j].mean(axis=0) for j in range(k)])
        move = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        if move < KMEANS_MOVE_TOL:
            break

    # Coincident centroids can only arise from duplicated training points;
    # nudge exact duplicates apart deterministically so the codebook is valid.
    centroids = _deduplicate(centroids)
    scale = tuple((float(m), float(s)) for m, s in zip(mean, spread))
    return Codebook(obs_type=obs_type, centroids=centroids, scale=scale)


def _deduplicate(centroids: np.ndarray) -> np.ndarray:
    out = centroids.copy()
    seen: dict[bytes, int] = {}
    for i in range(out.shape[0]):
        key = out[i].tobytes()
        bump = 0
        while key in seen:
            bump += 1
            out[i] = out[i] + 1e-9 * bump * (i + 1)
            key = out[i].tobytes()
        seen[key] = i
    return out


def wcss(z: np.ndarray, centroids: np.ndarray) -> float:
    """Within-cluster sum of squares of standardized points z under centroids."""
    d2 = ((z[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return float(d2.min(axis=1).sum())


def quantize(seq: ObservationSequence, cb: Codebook) -> SymbolSequence:
    """Map each observation point to its nearest centroid index.

    Distances are Euclidean in the codebook's standardized space; exact ties
    resolve to the lowest centroid index.
    """
    if cb.obs_type != seq.obs_type:
        raise InputError(
            f"codebook is for observation type {cb.obs_type.id}, sequence is {seq.obs_type.id}"
        )
    z = cb.standardize(seq.matrix())
    labels = _assign(z, cb.centroids)
    return SymbolSequence(
        symbols=tuple(int(s) for s in labels),
        obs_type=seq.obs_type,
        pair=seq.pair,
        alphabet_size=cb.k,
    )


class VectorQuantizer(BaseEstimator, TransformerMixin):
    """Estimator facade over the codebook: fit k-means, emit symbol columns.

    ``fit`` expects raw (unstandardized) feature vectors, one row per
    observation; ``transform`` returns the nearest-centroid index of each row
    as an ``(n, 1)`` integer column.
    """

    def __init__(self, k: int = DEFAULT_K, seed: int = 0):
        self.k = k
        self.seed = seed

    def fit(self, X, y=None):
        x = check_array(X, dtype=float)
        self.codebook_ = fit_codebook(x, k=self.k, seed=self.seed)
        self.n_features_in_ = x.shape[1]
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "codebook_")
        x = check_array(X, dtype=float)
        if x.shape[1] != self.n_features_in_:
            raise InputError(
                f"expected {self.n_features_in_} features, got {x.shape[1]}"
            )
        labels = _assign(self.codebook_.standardize(x), self.codebook_.centroids)
        return labels.reshape(-1, 1)
