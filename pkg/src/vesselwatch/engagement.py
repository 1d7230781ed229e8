"""Candidate detection: which vessel pairs are plausibly interacting, and when.

Works on resampled trajectories in three steps per grid timestamp: cluster
co-located vessels with DBSCAN (minPoints = 2, so clusters are exactly the
connected components of the distance-threshold graph), evaluate an engagement
predicate on every pair inside a cluster, then stitch consecutive true steps
into candidate intervals long enough to matter.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import InputError
from .geo import GeoPoint, cpa, haversine_distance, haversine_matrix, to_local, velocity_vector, wrap180
from .ingest import Trajectory

DEFAULT_DELTA_M = 2000.0
DEFAULT_DELTA_PRIME_M = 500.0
DEFAULT_TAU_S = 600.0
DEFAULT_THETA_KN = 10.0
DEFAULT_MIN_DURATION_S = 300.0


@dataclass(frozen=True)
class EngagementParams:
    """Thresholds for the engagement predicate and run assembly.

    ``theta`` maps vessel types to speed-over-ground ceilings in knots;
    types not listed fall back to ``theta_default``.
    """

    delta: float = DEFAULT_DELTA_M
    delta_prime: float = DEFAULT_DELTA_PRIME_M
    tau: float = DEFAULT_TAU_S
    theta: Mapping[str, float] = field(default_factory=dict)
    theta_default: float = DEFAULT_THETA_KN
    min_duration: float = DEFAULT_MIN_DURATION_S

    def __post_init__(self):
        if not 0 < self.delta_prime <= self.delta:
            raise InputError(
                f"require 0 < delta_prime <= delta, got {self.delta_prime}, {self.delta}"
            )
        if self.tau <= 0:
            raise InputError(f"tau must be positive, got {self.tau}")
        if self.theta_default <= 0 or any(v <= 0 for v in self.theta.values()):
            raise InputError("all speed thresholds must be positive")
        if self.min_duration < 0:
            raise InputError(f"min_duration must be >= 0, got {self.min_duration}")

    def theta_for(self, vessel_type: str) -> float:
        return float(self.theta.get(vessel_type, self.theta_default))


@dataclass(frozen=True)
class VesselState:
    """One vessel's kinematic state at a single timestamp."""

    vessel_id: str
    vessel_type: str
    point: GeoPoint
    sog: float
    cog: float
    timestamp: int


@dataclass(frozen=True)
class Snapshot:
    """All known vessel states at one grid timestamp."""

    timestamp: int
    entries: Mapping[str, VesselState]

    @classmethod
    def from_states(cls, timestamp: int, states: Iterable[VesselState]) -> "Snapshot":
        entries: dict[str, VesselState] = {}
        for s in states:
            if s.timestamp != timestamp:
                raise InputError(f"state for {s.vessel_id} is not at {timestamp}")
            if s.vessel_id in entries:
                raise InputError(f"duplicate vessel {s.vessel_id} at {timestamp}")
            entries[s.vessel_id] = s
        return cls(timestamp, entries)


@dataclass(frozen=True)
class Cluster:
    timestamp: int
    members: frozenset

    def __post_init__(self):
        if len(self.members) < 2:
            raise InputError("a cluster needs at least two members")


@dataclass(frozen=True)
class CandidatePair:
    """A vessel pair plus the interval over which the pair kept engaging."""

    vessel_a: str
    vessel_b: str
    t_start: int
    t_end: int

    def __post_init__(self):
        if not self.vessel_a < self.vessel_b:
            raise InputError(f"pair not ordered: {self.vessel_a!r}, {self.vessel_b!r}")
        if self.t_start > self.t_end:
            raise InputError(f"interval reversed: {self.t_start} > {self.t_end}")

    @property
    def pair(self) -> tuple[str, str]:
        return (self.vessel_a, self.vessel_b)

    @property
    def duration(self) -> int:
        return self.t_end - self.t_start


def _dbscan_labels(dist: np.ndarray, eps: float, min_points: int) -> np.ndarray:
    """Plain DBSCAN over a precomputed distance matrix; -1 marks noise.

    The query point counts toward its own neighborhood.
    """
    n = dist.shape[0]
    labels = np.full(n, -1, dtype=int)
    visited = np.zeros(n, dtype=bool)
    neighborhoods = [np.flatnonzero(dist[i] <= eps) for i in range(n)]
    next_label = 0
    for i in range(n):
        if visited[i]:
            continue
        visited[i] = True
        if len(neighborhoods[i]) < min_points:
            continue
        labels[i] = next_label
        seeds = list(neighborhoods[i])
        k = 0
        while k < len(seeds):
            j = seeds[k]
            k += 1
            if labels[j] == -1:
                labels[j] = next_label
            if not visited[j]:
                visited[j] = True
                if len(neighborhoods[j]) >= min_points:
                    seeds.extend(neighborhoods[j])
        next_label += 1
    return labels


def cluster_vessels(snap: Snapshot, delta: float, min_points: int = 2) -> set[Cluster]:
    """Group the snapshot's vessels into proximity clusters.

    With ``min_points`` = 2 every clustered point is core, so the clusters
    are the size->=2 connected components of the graph joining vessels within
    ``delta`` meters; isolated vessels are noise.
    """
    ids = sorted(snap.entries)
    if len(ids) < 2:
        return set()
    lat = np.array([snap.entries[v].point.lat for v in ids])
    lon = np.array([snap.entries[v].point.lon for v in ids])
    labels = _dbscan_labels(haversine_matrix(lat, lon), delta, min_points)
    clusters: set[Cluster] = set()
    for label in set(labels[labels >= 0].tolist()):
        members = frozenset(ids[i] for i in np.flatnonzero(labels == label))
        if len(members) >= 2:
            clusters.add(Cluster(snap.timestamp, members))
    return clusters


def _proximity(a: VesselState, b: VesselState, p: EngagementParams) -> bool:
    return haversine_distance(a.point, b.point) <= p.delta_prime


def _converging(a: VesselState, b: VesselState, p: EngagementParams) -> bool:
    mid = GeoPoint(
        (a.point.lat + b.point.lat) / 2.0,
        float(wrap180(a.point.lon + float(wrap180(b.point.lon - a.point.lon)) / 2.0)),
    )
    rel_pos = to_local(mid, b.point) - to_local(mid, a.point)
    rel_vel = velocity_vector(b.sog, b.cog) - velocity_vector(a.sog, a.cog)
    return cpa(rel_pos, rel_vel, p.tau).min_distance <= p.delta_prime


def slow_approach_condition(a: VesselState, b: VesselState, p: EngagementParams) -> bool:
    """Built-in engagement condition.

    Both vessels below their type's speed ceiling, and either already within
    delta_prime or on a closest-point-of-approach track that gets within
    delta_prime inside the tau horizon.
    """
    if not (a.sog < p.theta_for(a.vessel_type) and b.sog < p.theta_for(b.vessel_type)):
        return False
    return _proximity(a, b, p) or _converging(a, b, p)


Condition = Callable[[VesselState, VesselState, EngagementParams], bool]
DEFAULT_CONDITIONS: tuple[Condition, ...] = (slow_approach_condition,)


def is_engaging(
    a: VesselState,
    b: VesselState,
    p: EngagementParams,
    conditions: Sequence[Condition] = DEFAULT_CONDITIONS,
) -> bool:
    """True when any registered engagement condition holds for the pair."""
    if a.timestamp != b.timestamp:
        raise InputError(
            f"states not simultaneous: {a.timestamp} vs {b.timestamp}"
        )
    return any(cond(a, b, p) for cond in conditions)


def _states_by_time(trajectories: Sequence[Trajectory]) -> dict[int, list[VesselState]]:
    by_time: dict[int, list[VesselState]] = {}
    for traj in trajectories:
        vtype = traj.meta.vessel_type
        for i in range(len(traj)):
            t = int(traj.timestamps[i])
            by_time.setdefault(t, []).append(
                VesselState(
                    traj.vessel_id,
                    vtype,
                    GeoPoint(float(traj.lat[i]), float(traj.lon[i])),
                    float(traj.sog[i]),
                    float(traj.cog[i]),
                    t,
                )
            )
    return by_time


def detect_candidates(
    trajectories: Iterable[Trajectory],
    p: EngagementParams,
    conditions: Sequence[Condition] = DEFAULT_CONDITIONS,
) -> list[CandidatePair]:
    """Scan aligned trajectories for sustained pairwise engagements.

    At each timestamp, vessels are clustered at range ``p.delta`` and the
    engagement predicate is evaluated for every pair sharing a cluster.
    Maximal runs of consecutive true steps spanning at least
    ``p.min_duration`` seconds become candidates; any false (or missing)
    step ends the run.
    """
    trajs = sorted(trajectories, key=lambda t: (t.vessel_id, t.segment))
    steps = {t.grid_step() for t in trajs if len(t) >= 2}
    if len(steps) > 1:
        raise InputError(f"mixed grid steps: {sorted(steps)}")
    step = steps.pop() if steps else None

    by_time = _states_by_time(trajs)
    true_steps: dict[tuple[str, str], list[int]] = {}
    for t in sorted(by_time):
        snap = Snapshot.from_states(t, by_time[t])
        for cluster in sorted(cluster_vessels(snap, p.delta), key=lambda c: sorted(c.members)):
            for va, vb in combinations(sorted(cluster.members), 2):
                if is_engaging(snap.entries[va], snap.entries[vb], p, conditions):
                    true_steps.setdefault((va, vb), []).append(t)

    out: list[CandidatePair] = []
    for (va, vb), ts in sorted(true_steps.items()):
        run_start = prev = ts[0]
        for t in ts[1:]:
            if step is None or t - prev != step:
                if prev - run_start >= p.min_duration:
                    out.append(CandidatePair(va, vb, run_start, prev))
                run_start = t
            prev = t
        if prev - run_start >= p.min_duration:
            out.append(CandidatePair(va, vb, run_start, prev))
    out.sort(key=lambda c: (c.vessel_a, c.vessel_b, c.t_start))
    return out


CANDIDATE_CSV_COLUMNS = ["vessel_a", "vessel_b", "t_start", "t_end"]


def write_candidates_csv(candidates: Sequence[CandidatePair], header_lines: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    buf.write(",".join(CANDIDATE_CSV_COLUMNS) + "\n")
    for c in candidates:
        buf.write(f"{c.vessel_a},{c.vessel_b},{c.t_start},{c.t_end}\n")
    return buf.getvalue()


def read_candidates_csv(lines: Iterable[str]) -> list[CandidatePair]:
    rows = (ln for ln in lines if ln.strip() and not ln.lstrip().startswith("#"))
    reader = csv.reader(rows)
    header = next(reader, None)
    if header is None:
        raise InputError("empty candidate file")
    if [h.strip() for h in header] != CANDIDATE_CSV_COLUMNS:
        raise InputError("unrecognized candidate file header")
    return [CandidatePair(r[0], r[1], int(r[2]), int(r[3])) for r in reader]
