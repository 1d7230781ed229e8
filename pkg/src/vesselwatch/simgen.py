"""Synthetic two-vessel encounter generator.

Every sample is a scripted three-phase encounter laid out on a local tangent
plane: vessel ``a`` holds a base course, vessel ``b`` runs a straight
approach that ends at a fixed lateral offset from ``a``, both travel in
formation for the dwell phase, and finally ``b`` veers off. Phase speeds,
separation, durations and headings are drawn per sample from a class
template, so each scenario class gets a distinct kinematic texture:

* slow escort at close range with a long dwell (tug assistance),
* a fast inbound launch and a short, very close dwell (pilot transfer),
* two vessels nearly stopped alongside each other (transshipment),
* a wide steady formation at ferry speeds (passenger convoy),
* a staggered zigzag sweep with synchronized course reversals (search).

Positions are integrated from per-step velocities, converted to geographic
coordinates around a per-sample anchor, and degraded with Gaussian
measurement noise. Generation is deterministic: a sample is a pure function
of its template, seed, anchor and start time, and per-sample seeds are
derived from the corpus seed so any sample can be regenerated on its own.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .engagement import CandidatePair
from .errors import InputError
from .geo import KNOTS_TO_MPS, GeoPoint, LocalVector, from_local, wrap360
from .ingest import VESSEL_TYPES, Trajectory, VesselMeta, derive_rot
from .pipeline import LabeledCandidate, ScenarioClass, default_scenario_classes, subseed

__all__ = [
    "NoiseSpec",
    "NOISE_FREE",
    "ZigzagSpec",
    "ScenarioTemplate",
    "default_templates",
    "GeneratedScenario",
    "generate_scenario",
    "CorpusSpec",
    "generate_corpus",
    "ManifestRow",
    "manifest_rows",
    "write_manifest_csv",
    "read_manifest_csv",
    "AIS_CSV_COLUMNS",
    "write_ais_csv",
]


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian measurement noise added after the script is integrated.

    Position noise is applied independently to the east and north components
    before geographic conversion; speed noise is clipped so speeds stay
    non-negative; course noise wraps around.
    """

    pos_sigma_m: float = 15.0
    sog_sigma_kn: float = 0.3
    cog_sigma_deg: float = 2.0

    def __post_init__(self):
        for name in ("pos_sigma_m", "sog_sigma_kn", "cog_sigma_deg"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0.0):
                raise InputError(f"{name} must be finite and >= 0, got {value}")


NOISE_FREE = NoiseSpec(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class ZigzagSpec:
    """Course-reversal pattern overlaid on the dwell phase.

    Both vessels swing ``amplitude_deg`` either side of the base course on
    legs of ``leg_s`` seconds; the second vessel reverses ``stagger_s``
    seconds after the first, which puts a repeating spike into the course
    difference without letting the pair drift apart.
    """

    leg_s: int = 180
    amplitude_deg: float = 8.0
    stagger_s: int = 60

    def __post_init__(self):
        if self.leg_s <= 0:
            raise InputError(f"leg_s must be positive, got {self.leg_s}")
        if not 0.0 < self.amplitude_deg < 90.0:
            raise InputError(f"amplitude_deg must be in (0, 90), got {self.amplitude_deg}")
        if self.stagger_s < 0:
            raise InputError(f"stagger_s must be >= 0, got {self.stagger_s}")


Range = tuple[float, float]


def _check_range(name: str, rng: Range, low_ok: float = 0.0) -> None:
    lo, hi = rng
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise InputError(f"{name} bounds must be finite, got {rng}")
    if lo > hi:
        raise InputError(f"{name} range is inverted: {rng}")
    if lo < low_ok:
        raise InputError(f"{name} must stay >= {low_ok}, got {rng}")


@dataclass(frozen=True)
class ScenarioTemplate:
    """Sampling ranges for one scenario class.

    ``types_a``/``types_b`` are the vessel-type pools for the two roles and
    every combination must satisfy the class definition. All ``*_s`` ranges
    are durations in seconds; speed ranges are knots, separation meters.
    """

    scenario_class: ScenarioClass
    types_a: tuple[str, ...]
    types_b: tuple[str, ...]
    cruise_sog_a_kn: Range
    approach_sog_b_kn: Range
    dwell_sog_kn: Range
    separation_m: Range
    approach_s: Range
    dwell_s: Range
    depart_s: Range
    approach_bearing_deg: Range = (20.0, 40.0)
    depart_bearing_deg: float = 60.0
    zigzag: ZigzagSpec | None = None
    noise: NoiseSpec = NoiseSpec()

    def __post_init__(self):
        if not self.types_a or not self.types_b:
            raise InputError("both vessel type pools must be non-empty")
        for t in self.types_a + self.types_b:
            if t not in VESSEL_TYPES:
                raise InputError(f"unknown vessel type {t!r}")
        for ta, tb in product(self.types_a, self.types_b):
            if not self.scenario_class.matches(ta, tb):
                raise InputError(
                    f"type pair ({ta!r}, {tb!r}) is outside class {self.scenario_class.name}"
                )
        _check_range("cruise_sog_a_kn", self.cruise_sog_a_kn)
        _check_range("approach_sog_b_kn", self.approach_sog_b_kn)
        _check_range("dwell_sog_kn", self.dwell_sog_kn)
        _check_range("separation_m", self.separation_m, low_ok=1.0)
        _check_range("approach_s", self.approach_s, low_ok=1.0)
        _check_range("dwell_s", self.dwell_s, low_ok=1.0)
        _check_range("depart_s", self.depart_s, low_ok=1.0)
        _check_range("approach_bearing_deg", self.approach_bearing_deg)
        if not math.isfinite(self.depart_bearing_deg):
            raise InputError("depart_bearing_deg must be finite")

    def max_duration_s(self, dt: int) -> int:
        """Upper bound on the scripted scenario length for grid step ``dt``."""
        steps = sum(int(hi) // dt for _, hi in (self.approach_s, self.dwell_s, self.depart_s))
        return (max(steps, 3) + 1) * dt


def default_templates() -> tuple[ScenarioTemplate, ...]:
    """One template per stock scenario class, tuned to stay apart in feature space."""
    cls_a, cls_b, cls_c, cls_d, cls_e = default_scenario_classes()
    return (
        ScenarioTemplate(
            cls_a,
            types_a=("cargo", "tanker"),
            types_b=("towing", "tug"),
            cruise_sog_a_kn=(8.0, 10.0),
            approach_sog_b_kn=(6.0, 8.0),
            dwell_sog_kn=(3.0, 6.0),
            separation_m=(100.0, 160.0),
            approach_s=(600, 1200),
            dwell_s=(1200, 3600),
            depart_s=(480, 900),
        ),
        ScenarioTemplate(
            cls_b,
            types_a=("cargo", "tanker", "passenger"),
            types_b=("pilot",),
            cruise_sog_a_kn=(8.0, 10.0),
            approach_sog_b_kn=(14.0, 16.0),
            dwell_sog_kn=(4.5, 6.0),
            separation_m=(40.0, 80.0),
            approach_s=(480, 900),
            dwell_s=(480, 720),
            depart_s=(480, 900),
        ),
        ScenarioTemplate(
            cls_c,
            types_a=("tanker",),
            types_b=("tanker",),
            cruise_sog_a_kn=(4.0, 6.0),
            approach_sog_b_kn=(3.0, 5.0),
            dwell_sog_kn=(0.3, 1.2),
            separation_m=(60.0, 100.0),
            approach_s=(600, 1200),
            dwell_s=(1800, 3600),
            depart_s=(600, 900),
        ),
        ScenarioTemplate(
            cls_d,
            types_a=("passenger",),
            types_b=("passenger",),
            cruise_sog_a_kn=(10.0, 12.0),
            approach_sog_b_kn=(10.0, 12.0),
            dwell_sog_kn=(6.5, 7.5),
            separation_m=(300.0, 400.0),
            approach_s=(480, 900),
            dwell_s=(480, 1200),
            depart_s=(480, 900),
        ),
        ScenarioTemplate(
            cls_e,
            types_a=("search_rescue",),
            types_b=("search_rescue",),
            cruise_sog_a_kn=(10.0, 12.0),
            approach_sog_b_kn=(10.0, 12.0),
            dwell_sog_kn=(8.5, 9.5),
            separation_m=(300.0, 390.0),
            approach_s=(480, 900),
            dwell_s=(900, 2400),
            depart_s=(480, 900),
            zigzag=ZigzagSpec(),
        ),
    )


@dataclass(frozen=True)
class GeneratedScenario:
    """One synthetic encounter plus the label and seed that produced it."""

    sample_id: str
    seed: int
    candidate: LabeledCandidate

    @property
    def pair(self) -> CandidatePair:
        return self.candidate.pair

    @property
    def label(self) -> ScenarioClass:
        return self.candidate.label


def _draw(rng: np.random.Generator, bounds: Range) -> float:
    lo, hi = bounds
    return float(rng.uniform(lo, hi))


def _draw_steps(rng: np.random.Generator, bounds: Range, dt: int) -> int:
    lo, hi = bounds
    lo_steps = max(1, int(lo) // dt)
    hi_steps = max(lo_steps, int(hi) // dt)
    return int(rng.integers(lo_steps, hi_steps + 1))


def _dwell_courses(
    zigzag: ZigzagSpec | None, theta: float, nd: int, dt: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-step dwell courses (degrees, unwrapped) for both vessels."""
    if zigzag is None:
        base = np.full(nd, theta)
        return base, base.copy()
    leg = max(1, zigzag.leg_s // dt)
    stagger = zigzag.stagger_s // dt
    k = np.arange(nd)
    sign_a = 1.0 - 2.0 * ((k // leg) % 2)
    sign_b = 1.0 - 2.0 * ((np.maximum(k - stagger, 0) // leg) % 2)
    return theta + zigzag.amplitude_deg * sign_a, theta + zigzag.amplitude_deg * sign_b


def _velocities(speed_kn: np.ndarray, course_deg: np.ndarray) -> np.ndarray:
    """Per-step ground velocities, meters/second east and north."""
    v = speed_kn * KNOTS_TO_MPS
    rad = np.radians(course_deg)
    return np.column_stack([v * np.sin(rad), v * np.cos(rad)])


def _integrate(velocities: np.ndarray, dt: int) -> np.ndarray:
    """Positions from a zero start: one more row than there are steps."""
    pos = np.zeros((len(velocities) + 1, 2))
    np.cumsum(velocities * float(dt), axis=0, out=pos[1:])
    return pos


def _finish_track(
    vessel_id: str,
    vessel_type: str,
    pos: np.ndarray,
    speed_kn: np.ndarray,
    course_deg: np.ndarray,
    anchor: GeoPoint,
    t0: int,
    dt: int,
    noise: NoiseSpec,
    rng: np.random.Generator,
) -> Trajectory:
    """Apply measurement noise, convert to geographic, wrap as a trajectory."""
    t = len(pos)
    sog = np.append(speed_kn, speed_kn[-1])
    cog = np.append(course_deg, course_deg[-1])

    pos = pos + rng.standard_normal((t, 2)) * noise.pos_sigma_m
    sog = np.maximum(sog + rng.standard_normal(t) * noise.sog_sigma_kn, 0.0)
    cog = wrap360(cog + rng.standard_normal(t) * noise.cog_sigma_deg)
    # x % 360 can round up to exactly 360.0 for tiny negative x.
    cog[cog >= 360.0] = 0.0

    lat = np.empty(t)
    lon = np.empty(t)
    for i in range(t):
        p = from_local(anchor, LocalVector(float(pos[i, 0]), float(pos[i, 1])))
        lat[i] = p.lat
        lon[i] = p.lon

    traj = Trajectory(
        vessel_id=vessel_id,
        meta=VesselMeta(vessel_id=vessel_id, vessel_type=vessel_type),
        timestamps=t0 + np.arange(t, dtype=np.int64) * dt,
        lat=lat,
        lon=lon,
        sog=sog,
        cog=cog,
        rot=np.zeros(t),
    )
    return derive_rot(traj)


def generate_scenario(
    template: ScenarioTemplate,
    seed: int,
    *,
    anchor: GeoPoint,
    t0: int,
    sample_id: str,
    dt: int = 60,
) -> GeneratedScenario:
    """Script, integrate and noise one encounter.

    The draw order below is part of the determinism contract: the same
    template and seed always produce the same trajectories, and a template
    that only changes the noise spec reproduces the same underlying script.
    """
    if dt <= 0:
        raise InputError(f"dt must be positive, got {dt}")
    rng = np.random.default_rng(seed)

    type_a = template.types_a[int(rng.integers(len(template.types_a)))]
    type_b = template.types_b[int(rng.integers(len(template.types_b)))]
    theta = float(rng.uniform(0.0, 360.0))
    side = 1.0 if int(rng.integers(2)) == 0 else -1.0
    cruise_a = _draw(rng, template.cruise_sog_a_kn)
    approach_b = _draw(rng, template.approach_sog_b_kn)
    dwell_sog = _draw(rng, template.dwell_sog_kn)
    separation = _draw(rng, template.separation_m)
    na = _draw_steps(rng, template.approach_s, dt)
    nd = max(2, _draw_steps(rng, template.dwell_s, dt))
    nx = _draw_steps(rng, template.depart_s, dt)
    bearing = _draw(rng, template.approach_bearing_deg)

    dwell_a, dwell_b = _dwell_courses(template.zigzag, theta, nd, dt)
    course_a = np.concatenate([np.full(na, theta), dwell_a, np.full(nx, theta)])
    speed_a = np.concatenate(
        [np.full(na, cruise_a), np.full(nd, dwell_sog), np.full(nx, cruise_a)]
    )
    course_b = np.concatenate(
        [
            np.full(na, theta - side * bearing),
            dwell_b,
            np.full(nx, theta + side * template.depart_bearing_deg),
        ]
    )
    speed_b = np.concatenate(
        [np.full(na, approach_b), np.full(nd, dwell_sog), np.full(nx, approach_b)]
    )

    pos_a = _integrate(_velocities(speed_a, course_a), dt)
    raw_b = _integrate(_velocities(speed_b, course_b), dt)
    # b's dwell entry sits a fixed lateral offset off a's beam; shifting the
    # whole track pins that point exactly.
    rad = math.radians(theta)
    offset = separation * side * np.array([math.cos(rad), -math.sin(rad)])
    pos_b = raw_b + (pos_a[na] + offset - raw_b[na])

    vid_a = f"{sample_id}a"
    vid_b = f"{sample_id}b"
    traj_a = _finish_track(
        vid_a, type_a, pos_a, speed_a, course_a, anchor, t0, dt, template.noise, rng
    )
    traj_b = _finish_track(
        vid_b, type_b, pos_b, speed_b, course_b, anchor, t0, dt, template.noise, rng
    )

    # A point's reported speed belongs to the step it starts, so the last
    # formation point already carries the departure speed; the engagement
    # window covers the points whose speed and offset are both dwell-phase.
    pair = CandidatePair(vid_a, vid_b, t0 + na * dt, t0 + (na + nd - 1) * dt)
    candidate = LabeledCandidate(pair, traj_a, traj_b, label=template.scenario_class)
    return GeneratedScenario(sample_id=sample_id, seed=int(seed), candidate=candidate)


def _default_template_field() -> tuple[ScenarioTemplate, ...]:
    return default_templates()


@dataclass(frozen=True)
class CorpusSpec:
    """How many samples of each class to generate and where to put them.

    Samples are laid out on a coarse geographic grid and staggered in time
    so no two encounters ever share a timestamp or a neighborhood; detection
    over a generated corpus therefore sees each pair in isolation.
    """

    counts: Mapping[str, int]
    origin: GeoPoint = GeoPoint(36.0, -6.0)
    t0_base: int = 1_600_000_000
    spacing_s: int = 7200
    cell_deg: float = 0.25
    cells_per_row: int = 25
    dt: int = 60
    templates: tuple[ScenarioTemplate, ...] = field(default_factory=_default_template_field)

    def __post_init__(self):
        object.__setattr__(self, "counts", dict(self.counts))
        names = {t.scenario_class.name for t in self.templates}
        if len(names) != len(self.templates):
            raise InputError("templates must cover distinct scenario classes")
        for name, count in self.counts.items():
            if name not in names:
                raise InputError(f"no template for class {name!r}")
            if int(count) < 0:
                raise InputError(f"negative count for class {name!r}")
        if self.dt <= 0:
            raise InputError(f"dt must be positive, got {self.dt}")
        if self.cells_per_row < 1:
            raise InputError("cells_per_row must be >= 1")
        if self.cell_deg <= 0.0:
            raise InputError("cell_deg must be positive")
        longest = max(t.max_duration_s(self.dt) for t in self.templates)
        if self.spacing_s < longest:
            raise InputError(
                f"spacing_s {self.spacing_s} shorter than the longest scenario ({longest}s)"
            )

    @classmethod
    def uniform(cls, per_class: int, **kwargs) -> "CorpusSpec":
        """A spec with the same number of samples for every template class."""
        templates = kwargs.get("templates") or default_templates()
        counts = {t.scenario_class.name: per_class for t in templates}
        return cls(counts=counts, **kwargs)


def generate_corpus(spec: CorpusSpec, seed: int) -> list[GeneratedScenario]:
    """Generate the full corpus, class-major, deterministically.

    Each sample's seed is derived from the corpus seed plus its class name
    and index, so the kinematics of sample ``("C", 17)`` do not depend on
    how many other samples were requested.
    """
    out: list[GeneratedScenario] = []
    g = 0
    for template in sorted(spec.templates, key=lambda t: t.scenario_class.id):
        name = template.scenario_class.name
        for idx in range(int(spec.counts.get(name, 0))):
            anchor = GeoPoint(
                spec.origin.lat + (g // spec.cells_per_row) * spec.cell_deg,
                spec.origin.lon + (g % spec.cells_per_row) * spec.cell_deg,
            )
            out.append(
                generate_scenario(
                    template,
                    subseed(seed, "sample", name, idx),
                    anchor=anchor,
                    t0=spec.t0_base + g * spec.spacing_s,
                    sample_id=f"{name}{idx:03d}",
                    dt=spec.dt,
                )
            )
            g += 1
    return out


MANIFEST_COLUMNS = ["sample_id", "class", "seed", "vessel_a", "vessel_b", "t_start", "t_end"]


@dataclass(frozen=True)
class ManifestRow:
    """The labeling record for one generated sample."""

    sample_id: str
    class_name: str
    seed: int
    vessel_a: str
    vessel_b: str
    t_start: int
    t_end: int


def manifest_rows(scenarios: Sequence[GeneratedScenario]) -> list[ManifestRow]:
    return [
        ManifestRow(
            s.sample_id,
            s.label.name,
            s.seed,
            s.pair.vessel_a,
            s.pair.vessel_b,
            s.pair.t_start,
            s.pair.t_end,
        )
        for s in scenarios
    ]


def write_manifest_csv(rows: Sequence[ManifestRow], header_lines: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    buf.write(",".join(MANIFEST_COLUMNS) + "\n")
    for r in rows:
        buf.write(
            f"{r.sample_id},{r.class_name},{r.seed},{r.vessel_a},{r.vessel_b},"
            f"{r.t_start},{r.t_end}\n"
        )
    return buf.getvalue()


def read_manifest_csv(lines: Iterable[str]) -> list[ManifestRow]:
    rows: Iterator[str] = (ln for ln in lines if ln.strip() and not ln.lstrip().startswith("#"))
    reader = csv.reader(rows)
    header = next(reader, None)
    if header is None:
        raise InputError("empty manifest")
    if [h.strip() for h in header] != MANIFEST_COLUMNS:
        raise InputError("unrecognized manifest header")
    return [
        ManifestRow(r[0], r[1], int(r[2]), r[3], r[4], int(r[5]), int(r[6])) for r in reader
    ]


AIS_CSV_COLUMNS = ["MMSI", "BaseDateTime", "LAT", "LON", "SOG", "COG", "ROT", "VesselType"]


def write_ais_csv(trajectories: Sequence[Trajectory], header_lines: Sequence[str] = ()) -> str:
    """Serialize trajectories as raw AIS position reports.

    The column set matches the ingest defaults, so a generated file feeds
    straight back through the normal parsing and resampling path. Floats use
    the shortest round-trip repr.
    """
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    buf.write(",".join(AIS_CSV_COLUMNS) + "\n")
    for traj in trajectories:
        for i in range(len(traj)):
            buf.write(
                f"{traj.vessel_id},{int(traj.timestamps[i])},"
                f"{float(traj.lat[i])!r},{float(traj.lon[i])!r},"
                f"{float(traj.sog[i])!r},{float(traj.cog[i])!r},"
                f"{float(traj.rot[i])!r},{traj.meta.vessel_type}\n"
            )
    return buf.getvalue()
