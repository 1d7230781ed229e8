"""AIS CSV parsing, trajectory assembly, and uniform-grid resampling.

Records are validated strictly on parse: out-of-range values are rejected
with a logged reason, never clamped. Trajectories store their kinematic
columns as parallel numpy arrays so downstream feature extraction stays
vectorized; ``TrackPoint`` views are materialized on demand.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import InputError
from .geo import wrap180, wrap360

VESSEL_TYPES = frozenset(
    {"cargo", "tanker", "towing", "tug", "passenger", "pilot", "search_rescue", "other"}
)

# Canonical CSV header, marine-cadastre style. ROT and VesselType are optional.
DEFAULT_COLUMN_MAP = {
    "vessel_id": "MMSI",
    "timestamp": "BaseDateTime",
    "lat": "LAT",
    "lon": "LON",
    "sog": "SOG",
    "cog": "COG",
    "rot": "ROT",
    "vessel_type": "VesselType",
}
MANDATORY_FIELDS = ("vessel_id", "timestamp", "lat", "lon", "sog", "cog")

DEFAULT_STEP_S = 60
DEFAULT_GAP_THRESHOLD_S = 600


@dataclass(frozen=True)
class AisRecord:
    vessel_id: str
    timestamp: int
    lat: float
    lon: float
    sog: float
    cog: float
    rot: float | None = None
    vessel_type: str | None = None


@dataclass(frozen=True)
class TrackPoint:
    timestamp: int
    lat: float
    lon: float
    sog: float
    cog: float
    rot: float


@dataclass(frozen=True)
class VesselMeta:
    vessel_id: str
    vessel_type: str = "other"
    length: float | None = None
    cargo_class: str | None = None

    def __post_init__(self):
        if self.vessel_type not in VESSEL_TYPES:
            raise InputError(f"unknown vessel type: {self.vessel_type}")


@dataclass
class Trajectory:
    """Time-ordered kinematic state of one vessel (one gap-free segment)."""

    vessel_id: str
    meta: VesselMeta
    timestamps: np.ndarray  # int64 seconds, strictly increasing
    lat: np.ndarray
    lon: np.ndarray
    sog: np.ndarray
    cog: np.ndarray
    rot: np.ndarray
    segment: int = 0

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        for name in ("lat", "lon", "sog", "cog", "rot"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        n = len(self.timestamps)
        for name in ("lat", "lon", "sog", "cog", "rot"):
            if len(getattr(self, name)) != n:
                raise InputError(f"trajectory column {name} has wrong length")
        if n > 1 and not np.all(np.diff(self.timestamps) > 0):
            raise InputError(f"timestamps not strictly increasing for {self.vessel_id}")

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def t_start(self) -> int:
        return int(self.timestamps[0])

    @property
    def t_end(self) -> int:
        return int(self.timestamps[-1])

    def point(self, i: int) -> TrackPoint:
        return TrackPoint(
            int(self.timestamps[i]),
            float(self.lat[i]),
            float(self.lon[i]),
            float(self.sog[i]),
            float(self.cog[i]),
            float(self.rot[i]),
        )

    def points(self) -> list[TrackPoint]:
        return [self.point(i) for i in range(len(self))]

    def index_of(self, timestamp: int) -> int:
        i = int(np.searchsorted(self.timestamps, timestamp))
        if i >= len(self) or self.timestamps[i] != timestamp:
            raise InputError(f"timestamp {timestamp} not in trajectory {self.vessel_id}")
        return i

    def covers(self, t_start: int, t_end: int) -> bool:
        return self.t_start <= t_start and t_end <= self.t_end

    def grid_step(self) -> int:
        """Uniform step in seconds; raises if the spacing is not uniform."""
        if len(self) < 2:
            raise InputError("trajectory too short to have a grid step")
        diffs = np.diff(self.timestamps)
        step = int(diffs[0])
        if not np.all(diffs == step):
            raise InputError(f"trajectory {self.vessel_id} is not on a uniform grid")
        return step

    @classmethod
    def from_points(
        cls, vessel_id: str, meta: VesselMeta, points: Sequence[TrackPoint], segment: int = 0
    ) -> "Trajectory":
        return cls(
            vessel_id=vessel_id,
            meta=meta,
            timestamps=np.array([p.timestamp for p in points], dtype=np.int64),
            lat=np.array([p.lat for p in points]),
            lon=np.array([p.lon for p in points]),
            sog=np.array([p.sog for p in points]),
            cog=np.array([p.cog for p in points]),
            rot=np.array([p.rot for p in points]),
            segment=segment,
        )


@dataclass(frozen=True)
class Rejection:
    line: int
    reason: str

    def format(self) -> str:
        return f"line={self.line} reason={self.reason}"


def _parse_timestamp(text: str) -> int:
    """Epoch seconds from either a numeric epoch or an ISO-8601 UTC string."""
    text = text.strip()
    try:
        return int(float(text))
    except ValueError:
        pass
    iso = text[:-1] + "+00:00" if text.endswith("Z") else text
    dt = datetime.fromisoformat(iso)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def _parse_row(row: dict[str, str], line: int) -> AisRecord:
    vessel_id = row["vessel_id"].strip()
    if not vessel_id:
        raise ValueError("empty vessel id")
    try:
        timestamp = _parse_timestamp(row["timestamp"])
    except ValueError as exc:
        raise ValueError(f"bad timestamp {row['timestamp']!r}: {exc}") from None

    def num(field_name: str) -> float:
        raw = row[field_name].strip()
        value = float(raw)
        if not math.isfinite(value):
            raise ValueError(f"{field_name} not finite")
        return value

    lat, lon, sog, cog = num("lat"), num("lon"), num("sog"), num("cog")
    if not -90.0 <= lat <= 90.0:
        raise ValueError("lat out of range")
    if not -180.0 <= lon < 180.0:
        raise ValueError("lon out of range")
    if sog < 0.0:
        raise ValueError("sog negative")
    if not 0.0 <= cog < 360.0:
        raise ValueError("cog out of range")

    rot = None
    if row.get("rot", "").strip():
        rot = num("rot")
    vessel_type = None
    raw_type = row.get("vessel_type", "").strip().lower()
    if raw_type:
        if raw_type not in VESSEL_TYPES:
            raise ValueError(f"unknown vessel type {raw_type!r}")
        vessel_type = raw_type
    return AisRecord(vessel_id, timestamp, lat, lon, sog, cog, rot, vessel_type)


def parse_ais_csv(
    stream: Iterable[str] | io.TextIOBase,
    column_map: dict[str, str] | None = None,
) -> tuple[list[AisRecord], list[Rejection]]:
    """Parse a CSV of AIS position reports.

    Lines starting with ``#`` are comments and skipped, so files written by
    this package (which carry a comment header) read back in directly.
    Returns the accepted records and a rejection log. A missing mandatory
    column is a fatal configuration error; malformed rows are logged and
    skipped.
    """
    column_map = dict(column_map or DEFAULT_COLUMN_MAP)
    # Rejections must report physical line numbers, so remember which source
    # line each surviving csv row came from.
    source_lines: list[int] = []

    def data_lines() -> Iterator[str]:
        for physical_no, text in enumerate(stream, start=1):
            if text.lstrip().startswith("#"):
                continue
            source_lines.append(physical_no)
            yield text

    reader = csv.reader(data_lines())
    try:
        header = next(reader)
    except StopIteration:
        raise InputError("empty input: no header row") from None
    header = [h.strip() for h in header]
    col_index: dict[str, int] = {}
    for field_name, column_name in column_map.items():
        if column_name in header:
            col_index[field_name] = header.index(column_name)
    missing = [f for f in MANDATORY_FIELDS if f not in col_index]
    if missing:
        raise InputError(f"missing mandatory column(s): {', '.join(missing)}")

    records: list[AisRecord] = []
    rejections: list[Rejection] = []
    for row_no, row in enumerate(reader, start=1):
        line_no = source_lines[row_no] if row_no < len(source_lines) else row_no + 1
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if max(col_index.values()) >= len(row):
            rejections.append(Rejection(line_no, "too few columns"))
            continue
        mapped = {f: row[i] for f, i in col_index.items()}
        try:
            records.append(_parse_row(mapped, line_no))
        except ValueError as exc:
            rejections.append(Rejection(line_no, str(exc)))
    return records, rejections


def build_trajectories(
    records: Sequence[AisRecord], gap_threshold: float = DEFAULT_GAP_THRESHOLD_S
) -> list[Trajectory]:
    """Group records per vessel, split on time gaps, drop duplicate timestamps.

    Duplicates keep the first record seen in input order. A gap strictly
    greater than ``gap_threshold`` seconds starts a new segment.
    """
    by_vessel: dict[str, list[AisRecord]] = {}
    for rec in records:
        by_vessel.setdefault(rec.vessel_id, []).append(rec)

    out: list[Trajectory] = []
    for vessel_id in sorted(by_vessel):
        recs = sorted(by_vessel[vessel_id], key=lambda r: r.timestamp)
        deduped: list[AisRecord] = []
        for rec in recs:
            if deduped and rec.timestamp == deduped[-1].timestamp:
                continue
            deduped.append(rec)
        vtype = next((r.vessel_type for r in deduped if r.vessel_type), "other")
        meta = VesselMeta(vessel_id=vessel_id, vessel_type=vtype)
        segment_rows: list[AisRecord] = []
        segment_idx = 0

        def flush():
            nonlocal segment_idx, segment_rows
            if segment_rows:
                out.append(_trajectory_from_records(vessel_id, meta, segment_rows, segment_idx))
                segment_idx += 1
                segment_rows = []

        for rec in deduped:
            if segment_rows and rec.timestamp - segment_rows[-1].timestamp > gap_threshold:
                flush()
            segment_rows.append(rec)
        flush()
    return out


def _trajectory_from_records(
    vessel_id: str, meta: VesselMeta, recs: list[AisRecord], segment: int
) -> Trajectory:
    rot = np.array([r.rot if r.rot is not None else 0.0 for r in recs])
    return Trajectory(
        vessel_id=vessel_id,
        meta=meta,
        timestamps=np.array([r.timestamp for r in recs], dtype=np.int64),
        lat=np.array([r.lat for r in recs]),
        lon=np.array([r.lon for r in recs]),
        sog=np.array([r.sog for r in recs]),
        cog=np.array([r.cog for r in recs]),
        rot=rot,
        segment=segment,
    )


def resample(traj: Trajectory, step: int = DEFAULT_STEP_S) -> Trajectory:
    """Resample onto the absolute grid of multiples of ``step`` seconds.

    lat/lon/sog interpolate linearly, cog along the shorter circular arc,
    and rot is recomputed from the resampled cog. Grids anchored at absolute
    multiples keep different vessels' samples aligned at shared times.
    """
    if len(traj) < 2:
        raise InputError(f"trajectory {traj.vessel_id} too short to resample")
    if step <= 0:
        raise InputError("step must be positive")
    t0, t1 = traj.t_start, traj.t_end
    first = -(-t0 // step) * step  # ceil to grid
    last = (t1 // step) * step
    grid = np.arange(first, last + 1, step, dtype=np.int64)

    t_in = traj.timestamps.astype(float)
    t_out = grid.astype(float)
    lat = np.interp(t_out, t_in, traj.lat)
    lon = np.interp(t_out, t_in, traj.lon)
    sog = np.interp(t_out, t_in, traj.sog)
    # Shorter-arc circular interpolation: unwrap, interpolate, wrap back.
    cog_unwrapped = np.unwrap(traj.cog, period=360.0)
    cog = wrap360(np.interp(t_out, t_in, cog_unwrapped))

    resampled = Trajectory(
        vessel_id=traj.vessel_id,
        meta=traj.meta,
        timestamps=grid,
        lat=lat,
        lon=lon,
        sog=sog,
        cog=cog,
        rot=np.zeros(len(grid)),
        segment=traj.segment,
    )
    if len(resampled) >= 2:
        return derive_rot(resampled)
    return resampled


def derive_rot(traj: Trajectory) -> Trajectory:
    """Recompute rate of turn (deg/min) from course differences on the grid.

    rot(t) = wrap180(cog(t) - cog(t - dt)) / dt_minutes; the first point is 0.
    """
    step = traj.grid_step()
    minutes = step / 60.0
    rot = np.zeros(len(traj))
    rot[1:] = wrap180(np.diff(traj.cog)) / minutes
    return Trajectory(
        vessel_id=traj.vessel_id,
        meta=traj.meta,
        timestamps=traj.timestamps.copy(),
        lat=traj.lat.copy(),
        lon=traj.lon.copy(),
        sog=traj.sog.copy(),
        cog=traj.cog.copy(),
        rot=rot,
        segment=traj.segment,
    )


TRAJECTORY_CSV_COLUMNS = ["vessel_id", "vessel_type", "segment", "timestamp", "lat", "lon", "sog", "cog", "rot"]


def write_trajectories_csv(trajectories: Sequence[Trajectory], header_lines: Sequence[str] = ()) -> str:
    """Serialize trajectories to CSV text (floats via shortest round-trip repr)."""
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    buf.write(",".join(TRAJECTORY_CSV_COLUMNS) + "\n")
    for traj in trajectories:
        for i in range(len(traj)):
            buf.write(
                f"{traj.vessel_id},{traj.meta.vessel_type},{traj.segment},"
                f"{int(traj.timestamps[i])},{float(traj.lat[i])!r},{float(traj.lon[i])!r},"
                f"{float(traj.sog[i])!r},{float(traj.cog[i])!r},{float(traj.rot[i])!r}\n"
            )
    return buf.getvalue()


def read_trajectories_csv(lines: Iterable[str]) -> list[Trajectory]:
    """Inverse of :func:`write_trajectories_csv`."""
    rows: Iterator[str] = (ln for ln in lines if ln.strip() and not ln.lstrip().startswith("#"))
    reader = csv.reader(rows)
    header = next(reader, None)
    if header is None:
        raise InputError("empty trajectory store")
    if [h.strip() for h in header] != TRAJECTORY_CSV_COLUMNS:
        raise InputError("unrecognized trajectory store header")
    groups: dict[tuple[str, int], list[list[str]]] = {}
    types: dict[str, str] = {}
    for row in reader:
        key = (row[0], int(row[2]))
        groups.setdefault(key, []).append(row)
        types[row[0]] = row[1]
    out = []
    for (vessel_id, segment), grp in groups.items():
        meta = VesselMeta(vessel_id=vessel_id, vessel_type=types[vessel_id])
        out.append(
            Trajectory(
                vessel_id=vessel_id,
                meta=meta,
                timestamps=np.array([int(r[3]) for r in grp], dtype=np.int64),
                lat=np.array([float(r[4]) for r in grp]),
                lon=np.array([float(r[5]) for r in grp]),
                sog=np.array([float(r[6]) for r in grp]),
                cog=np.array([float(r[7]) for r in grp]),
                rot=np.array([float(r[8]) for r in grp]),
                segment=segment,
            )
        )
    out.sort(key=lambda t: (t.vessel_id, t.segment))
    return out
