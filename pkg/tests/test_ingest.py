import io

import numpy as np
import pytest

from vesselwatch.errors import InputError
from vesselwatch.ingest import (
    DEFAULT_COLUMN_MAP,
    AisRecord,
    Trajectory,
    VesselMeta,
    build_trajectories,
    derive_rot,
    parse_ais_csv,
    read_trajectories_csv,
    resample,
    write_trajectories_csv,
)

HEADER = "MMSI,BaseDateTime,LAT,LON,SOG,COG,ROT,VesselType"


def make_csv(rows):
    return io.StringIO(HEADER + "\n" + "\n".join(rows) + "\n")


def test_parse_accepts_well_formed_rows():
    records, rejections = parse_ais_csv(
        make_csv(
            [
                "111,2024-03-01T00:00:00Z,55.0,12.0,5.0,90.0,0.0,cargo",
                "111,2024-03-01T00:01:00Z,55.001,12.001,5.1,91.0,1.0,cargo",
                "222,1709251200,54.9,11.9,0.5,10.0,,tug",
            ]
        )
    )
    assert rejections == []
    assert len(records) == 3
    assert records[0].vessel_id == "111"
    assert records[0].timestamp == 1709251200
    assert records[1].timestamp == 1709251260
    assert records[2].rot is None
    assert records[2].vessel_type == "tug"


def test_parse_rejects_bad_rows_with_line_numbers():
    records, rejections = parse_ais_csv(
        make_csv(
            [
                "111,2024-03-01T00:00:00Z,95.0,12.0,5.0,90.0,,",  # bad lat
                "111,2024-03-01T00:01:00Z,55.0,12.0,-1.0,90.0,,",  # bad sog
                "111,2024-03-01T00:02:00Z,55.0,12.0,5.0,360.0,,",  # bad cog
                "111,not-a-time,55.0,12.0,5.0,90.0,,",
                "111,2024-03-01T00:04:00Z,55.0,12.0,5.0,90.0,,submarine",
                "111,2024-03-01T00:05:00Z,55.0,12.0,5.0,90.0,0.0,cargo",
            ]
        )
    )
    assert len(records) == 1
    assert [r.line for r in rejections] == [2, 3, 4, 5, 6]
    assert rejections[0].format().startswith("line=2 reason=")
    reasons = " | ".join(r.reason for r in rejections)
    assert "lat" in reasons and "sog" in reasons and "cog" in reasons


def test_parse_requires_mandatory_columns():
    with pytest.raises(InputError, match="missing mandatory column"):
        parse_ais_csv(io.StringIO("MMSI,LAT,LON\n111,55.0,12.0\n"))
    with pytest.raises(InputError, match="empty input"):
        parse_ais_csv(io.StringIO(""))


def test_parse_custom_column_map():
    cmap = dict(DEFAULT_COLUMN_MAP, vessel_id="ship", timestamp="when")
    records, rej = parse_ais_csv(
        io.StringIO("ship,when,LAT,LON,SOG,COG\nX,100,1.0,2.0,3.0,4.0\n"), column_map=cmap
    )
    assert rej == []
    assert records[0].vessel_id == "X"


def rec(vid, t, lat=55.0, lon=12.0, sog=5.0, cog=90.0, vtype="cargo"):
    return AisRecord(vid, t, lat, lon, sog, cog, 0.0, vtype)


def test_build_trajectories_splits_on_gap():
    records = [rec("A", 0), rec("A", 60), rec("A", 120), rec("A", 1200), rec("A", 1260)]
    trajs = build_trajectories(records, gap_threshold=600)
    assert [t.segment for t in trajs] == [0, 1]
    assert list(trajs[0].timestamps) == [0, 60, 120]
    assert list(trajs[1].timestamps) == [1200, 1260]


def test_build_trajectories_gap_boundary_is_inclusive():
    # A gap of exactly the threshold does not split.
    records = [rec("A", 0), rec("A", 600)]
    trajs = build_trajectories(records, gap_threshold=600)
    assert len(trajs) == 1


def test_build_trajectories_dedupes_keeping_first():
    records = [rec("A", 0, sog=1.0), rec("A", 60, sog=2.0), rec("A", 60, sog=9.0)]
    trajs = build_trajectories(records)
    assert len(trajs) == 1
    np.testing.assert_allclose(trajs[0].sog, [1.0, 2.0])


def test_build_trajectories_unsorted_input():
    records = [rec("A", 120), rec("A", 0), rec("A", 60)]
    (traj,) = build_trajectories(records)
    assert list(traj.timestamps) == [0, 60, 120]


def test_trajectory_rejects_nonmonotonic_timestamps():
    with pytest.raises(InputError):
        Trajectory(
            vessel_id="A",
            meta=VesselMeta("A"),
            timestamps=np.array([0, 60, 60]),
            lat=np.zeros(3),
            lon=np.zeros(3),
            sog=np.zeros(3),
            cog=np.zeros(3),
            rot=np.zeros(3),
        )


def test_vessel_meta_validates_type():
    with pytest.raises(InputError):
        VesselMeta("A", vessel_type="dirigible")


def test_resample_grid_is_absolute():
    records = [rec("A", 30), rec("A", 95), rec("A", 185)]
    (traj,) = build_trajectories(records)
    out = resample(traj, step=60)
    assert list(out.timestamps) == [60, 120, 180]


def test_resample_linear_interpolation():
    records = [
        rec("A", 0, lat=55.0, lon=12.0, sog=0.0),
        rec("A", 120, lat=55.2, lon=12.4, sog=4.0),
    ]
    (traj,) = build_trajectories(records)
    out = resample(traj, step=60)
    assert list(out.timestamps) == [0, 60, 120]
    assert out.lat[1] == pytest.approx(55.1)
    assert out.lon[1] == pytest.approx(12.2)
    assert out.sog[1] == pytest.approx(2.0)


def test_resample_course_takes_shorter_arc():
    # 350 deg to 10 deg should pass through 0, not 180.
    records = [rec("A", 0, cog=350.0), rec("A", 120, cog=10.0)]
    (traj,) = build_trajectories(records)
    out = resample(traj, step=60)
    assert out.cog[1] == pytest.approx(0.0, abs=1e-9)


def test_resample_too_short():
    (traj,) = build_trajectories([rec("A", 0)])
    with pytest.raises(InputError, match="too short"):
        resample(traj, step=60)


def test_derive_rot_from_course():
    traj = Trajectory(
        vessel_id="A",
        meta=VesselMeta("A"),
        timestamps=np.array([0, 60, 120, 180]),
        lat=np.zeros(4),
        lon=np.zeros(4),
        sog=np.zeros(4),
        cog=np.array([0.0, 10.0, 5.0, 355.0]),
        rot=np.zeros(4),
    )
    out = derive_rot(traj)
    # deg/min steps of +10, -5, then 355-5 = -10 along the shorter arc
    np.testing.assert_allclose(out.rot, [0.0, 10.0, -5.0, -10.0])


def test_trajectory_store_roundtrip():
    records = [rec("A", 0), rec("A", 60), rec("B", 0, vtype="tug"), rec("B", 60, vtype="tug")]
    trajs = build_trajectories(records)
    text = write_trajectories_csv(trajs, header_lines=["schema=test", "config=abc"])
    assert text.startswith("# schema=test\n# config=abc\n")
    back = read_trajectories_csv(io.StringIO(text))
    assert len(back) == len(trajs)
    for t_in, t_out in zip(trajs, back):
        assert t_in.vessel_id == t_out.vessel_id
        assert t_in.meta.vessel_type == t_out.meta.vessel_type
        np.testing.assert_array_equal(t_in.timestamps, t_out.timestamps)
        np.testing.assert_array_equal(t_in.lat, t_out.lat)
        np.testing.assert_array_equal(t_in.sog, t_out.sog)


def test_trajectory_helpers():
    records = [rec("A", 0), rec("A", 60), rec("A", 120)]
    (traj,) = build_trajectories(records)
    assert traj.t_start == 0 and traj.t_end == 120
    assert traj.grid_step() == 60
    assert traj.covers(0, 120) and traj.covers(60, 60)
    assert not traj.covers(0, 180)
    assert traj.index_of(60) == 1
    with pytest.raises(InputError):
        traj.index_of(90)
    p = traj.point(2)
    assert p.timestamp == 120 and p.lat == 55.0
