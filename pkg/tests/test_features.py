import itertools

import numpy as np
import pytest

from vesselwatch.engagement import CandidatePair
from vesselwatch.errors import InputError
from vesselwatch.features import (
    Codebook,
    VectorQuantizer,
    FeatureKind,
    ObservationPoint,
    ObservationSequence,
    ObservationType,
    build_observation,
    default_observation_types,
    extract_features,
    fit_codebook,
    quantize,
    wcss,
)
from vesselwatch.ingest import Trajectory, VesselMeta, resample

M_PER_DEG = 111194.92664455874


def make_traj(vid, n=11, step=60, lon_m=0.0, sog=5.0, cog=90.0, rot=0.0, sog_arr=None, cog_arr=None):
    ts = np.arange(n, dtype=np.int64) * step
    return Trajectory(
        vessel_id=vid,
        meta=VesselMeta(vid),
        timestamps=ts,
        lat=np.zeros(n),
        lon=np.full(n, lon_m / M_PER_DEG),
        sog=np.asarray(sog_arr, dtype=float) if sog_arr is not None else np.full(n, sog),
        cog=np.asarray(cog_arr, dtype=float) if cog_arr is not None else np.full(n, cog),
        rot=np.full(n, rot),
    )


def test_feature_kind_parse():
    assert FeatureKind.parse("Distance") is FeatureKind.DISTANCE
    assert FeatureKind.parse(" delta_sog ") is FeatureKind.DELTA_SOG
    with pytest.raises(InputError):
        FeatureKind.parse("altitude")


def test_observation_type_validation():
    with pytest.raises(InputError):
        ObservationType(0, ())
    with pytest.raises(InputError):
        ObservationType(0, (FeatureKind.SOG_A, FeatureKind.SOG_A))
    assert default_observation_types()[0].features == (
        FeatureKind.DISTANCE,
        FeatureKind.DELTA_SOG,
    )
    assert [ot.id for ot in default_observation_types()] == [0, 1, 2, 3]


def test_extract_features_basics():
    a = make_traj("A", sog=7.0, cog=10.0, rot=2.0)
    b = make_traj("B", lon_m=300.0, sog=4.0, cog=350.0, rot=-1.0)
    pair = CandidatePair("A", "B", 0, 600)
    f = extract_features(a, b, pair, 120)
    assert f[FeatureKind.DELTA_SOG] == pytest.approx(3.0)
    assert f[FeatureKind.DELTA_COG] == pytest.approx(20.0)  # wraps, not -340
    assert f[FeatureKind.DELTA_ROT] == pytest.approx(3.0)
    assert f[FeatureKind.DISTANCE] == pytest.approx(300.0, rel=1e-6)
    assert f[FeatureKind.SOG_A] == 7.0 and f[FeatureKind.COG_B] == 350.0


def test_extract_features_identity_pair():
    a = make_traj("A", sog=3.0, cog=45.0, rot=1.0)
    b = make_traj("B", sog=3.0, cog=45.0, rot=1.0)
    f = extract_features(a, b, CandidatePair("A", "B", 0, 600), 0)
    assert f[FeatureKind.DISTANCE] == 0.0
    assert f[FeatureKind.DELTA_SOG] == 0.0
    assert f[FeatureKind.DELTA_COG] == 0.0
    assert f[FeatureKind.DELTA_ROT] == 0.0


def test_extract_features_outside_interval():
    a, b = make_traj("A"), make_traj("B")
    with pytest.raises(InputError, match="outside"):
        extract_features(a, b, CandidatePair("A", "B", 0, 300), 360)


def test_delta_cog_antisymmetry():
    rng = np.random.default_rng(2)
    for _ in range(50):
        ca, cb = rng.uniform(0, 360, size=2)
        a = make_traj("A", cog=ca)
        b = make_traj("B", cog=cb)
        pair = CandidatePair("A", "B", 0, 600)
        ab = extract_features(a, b, pair, 0)[FeatureKind.DELTA_COG]
        ba = extract_features(b, a, pair, 0)[FeatureKind.DELTA_COG]
        assert abs(ab) == pytest.approx(abs(ba)) or (abs(ab) == 180.0 and abs(ba) == 180.0)


def test_build_observation_shape_and_order():
    a = make_traj("A", sog_arr=np.linspace(5, 7, 11))
    b = make_traj("B", lon_m=400.0, sog=4.0)
    pair = CandidatePair("A", "B", 0, 600)
    ot = default_observation_types()[0]  # distance, delta_sog
    seq = build_observation(a, b, pair, ot)
    assert len(seq) == 11
    m = seq.matrix()
    assert m.shape == (11, 2)
    np.testing.assert_allclose(m[:, 0], 400.0, rtol=1e-6)
    np.testing.assert_allclose(m[:, 1], np.linspace(5, 7, 11) - 4.0)


def test_build_observation_matches_pointwise_extraction():
    rng = np.random.default_rng(4)
    a = make_traj("A", sog_arr=rng.uniform(0, 10, 11), cog_arr=rng.uniform(0, 360, 11))
    b = make_traj("B", lon_m=250.0, sog_arr=rng.uniform(0, 10, 11), cog_arr=rng.uniform(0, 360, 11))
    pair = CandidatePair("A", "B", 60, 540)
    for ot in default_observation_types():
        seq = build_observation(a, b, pair, ot)
        for p in seq.points:
            f = extract_features(a, b, pair, p.timestamp)
            expected = tuple(f[k] for k in ot.features)
            assert p.values == pytest.approx(expected)


def test_build_observation_role_swap_negates_delta_sog():
    a = make_traj("A", sog=7.0)
    b = make_traj("B", lon_m=100.0, sog=4.0)
    pair = CandidatePair("A", "B", 0, 600)
    ot = ObservationType(0, (FeatureKind.DELTA_SOG,))
    fwd = build_observation(a, b, pair, ot).matrix()
    rev = build_observation(b, a, pair, ot).matrix()
    np.testing.assert_allclose(fwd, -rev)


def test_build_observation_reports_missing_timestamps():
    a = make_traj("A")
    short = make_traj("B", n=5)
    with pytest.raises(InputError, match=r"missing grid timestamps.*\[300"):
        build_observation(a, short, CandidatePair("A", "B", 0, 600), default_observation_types()[0])


def test_extraction_commutes_with_resampling():
    a = make_traj("A", sog_arr=np.linspace(2, 6, 11), cog_arr=np.linspace(10, 60, 11))
    b = make_traj("B", lon_m=300.0, sog=4.0)
    pair = CandidatePair("A", "B", 0, 600)
    ot = default_observation_types()[0]
    before = build_observation(a, b, pair, ot).matrix()
    after = build_observation(resample(a, 60), resample(b, 60), pair, ot).matrix()
    np.testing.assert_allclose(before, after, atol=1e-9)


def test_observation_sequence_validation():
    pair = CandidatePair("A", "B", 0, 600)
    ot = ObservationType(0, (FeatureKind.SOG_A,))
    with pytest.raises(InputError, match="at least two"):
        ObservationSequence(pair, ot, (ObservationPoint(0, (1.0,)),))
    with pytest.raises(InputError, match="uniform"):
        ObservationSequence(
            pair, ot, (ObservationPoint(0, (1.0,)), ObservationPoint(60, (1.0,)), ObservationPoint(180, (1.0,)))
        )
    with pytest.raises(InputError, match="non-finite"):
        ObservationPoint(0, (float("nan"),))


def exhaustive_two_means(x):
    """Globally optimal 2-means by enumerating all 2-partitions."""
    n = len(x)
    best_cost, best_labels = np.inf, None
    for bits in itertools.product([0, 1], repeat=n - 1):
        labels = np.array((0,) + bits)
        if labels.min() == labels.max():
            continue
        cost = 0.0
        for j in (0, 1):
            pts = x[labels == j]
            cost += ((pts - pts.mean(axis=0)) ** 2).sum()
        if cost < best_cost:
            best_cost, best_labels = cost, labels
    return best_cost, best_labels


def test_two_means_matches_exhaustive_oracle():
    rng = np.random.default_rng(0)
    x = np.vstack(
        [
            rng.normal(-10.0, 0.1, size=(8, 2)),
            rng.normal(+10.0, 0.1, size=(8, 2)),
        ]
    )
    order = rng.permutation(len(x))
    x = x[order]
    truth = (order >= 8).astype(int)

    cb = fit_codebook(x, k=2, seed=1)
    z = cb.standardize(x)
    d2 = ((z[:, None, :] - cb.centroids[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)

    best_cost, best_labels = exhaustive_two_means(z)
    assert wcss(z, cb.centroids) == pytest.approx(best_cost, rel=1e-9)
    # Same partition up to label swap, and it matches blob membership.
    agree = (labels == best_labels).all() or (labels == 1 - best_labels).all()
    assert agree
    assert (labels == truth).all() or (labels == 1 - truth).all()


def test_codebook_k1_is_standardized_mean():
    rng = np.random.default_rng(3)
    x = rng.normal(5.0, 2.0, size=(40, 3))
    cb = fit_codebook(x, k=1, seed=0)
    np.testing.assert_allclose(cb.centroids, np.zeros((1, 3)), atol=1e-12)
    np.testing.assert_allclose(cb.unstandardize(cb.centroids[0]), x.mean(axis=0), rtol=1e-12)


def test_codebook_determinism():
    rng = np.random.default_rng(7)
    x = rng.uniform(-5, 5, size=(200, 2))
    a = fit_codebook(x, k=8, seed=42)
    b = fit_codebook(x, k=8, seed=42)
    np.testing.assert_array_equal(a.centroids, b.centroids)
    assert a.scale == b.scale


def test_codebook_requires_enough_points():
    with pytest.raises(InputError, match="at least"):
        fit_codebook(np.zeros((3, 2)), k=4)


def test_codebook_wcss_monotone_descent():
    rng = np.random.default_rng(11)
    x = rng.uniform(-5, 5, size=(300, 2))
    trace: list = []
    fit_codebook(x, k=10, seed=3, wcss_trace=trace)
    assert len(trace) >= 1
    for earlier, later in zip(trace, trace[1:]):
        assert later <= earlier + 1e-9


def test_codebook_handles_constant_dimension():
    x = np.column_stack([np.linspace(0, 1, 50), np.full(50, 3.0)])
    cb = fit_codebook(x, k=4, seed=0)
    assert all(s > 0 for _, s in cb.scale)


def make_seq(values, pair=None, ot=None):
    pair = pair or CandidatePair("A", "B", 0, 60 * (len(values) - 1))
    ot = ot or ObservationType(0, tuple(list(FeatureKind)[: len(values[0])]))
    pts = tuple(ObservationPoint(60 * i, tuple(v)) for i, v in enumerate(values))
    return ObservationSequence(pair, ot, pts)


def test_quantize_exact_and_tie_rules():
    ot = ObservationType(0, (FeatureKind.SOG_A,))
    cb = Codebook(
        obs_type=ot,
        centroids=np.array([[0.0], [1.0], [2.0], [3.0], [10.0]]),
        scale=((0.0, 1.0),),
    )
    # exactly at centroid 3
    seq = make_seq([(3.0,), (0.5,)], ot=ot)
    out = quantize(seq, cb)
    assert out.symbols[0] == 3
    # 0.5 is equidistant to centroids 0 and 1 -> lowest index wins
    assert out.symbols[1] == 0


def test_quantize_centroids_identity():
    rng = np.random.default_rng(5)
    x = rng.uniform(-3, 3, size=(60, 2))
    cb = fit_codebook(x, k=6, seed=2)
    raw = cb.unstandardize(cb.centroids)
    seq = make_seq([tuple(row) for row in raw], ot=cb.obs_type)
    out = quantize(seq, cb)
    assert list(out.symbols) == list(range(6))


def test_quantize_type_mismatch():
    ot0 = ObservationType(0, (FeatureKind.SOG_A,))
    ot1 = ObservationType(1, (FeatureKind.SOG_B,))
    cb = Codebook(obs_type=ot1, centroids=np.array([[0.0]]), scale=((0.0, 1.0),))
    with pytest.raises(InputError, match="observation type"):
        quantize(make_seq([(1.0,), (2.0,)], ot=ot0), cb)


def test_vector_quantizer_estimator_matches_functional_path():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(60, 2)) * np.array([3.0, 0.5]) + np.array([10.0, -4.0])
    vq = VectorQuantizer(k=5, seed=3).fit(x)
    direct = fit_codebook(x, k=5, seed=3)
    np.testing.assert_array_equal(vq.codebook_.centroids, direct.centroids)
    out = vq.transform(x)
    assert out.shape == (60, 1)
    z = direct.standardize(x)
    d2 = ((z[:, None, :] - direct.centroids[None, :, :]) ** 2).sum(axis=2)
    np.testing.assert_array_equal(out[:, 0], d2.argmin(axis=1))


def test_vector_quantizer_estimator_contract():
    from sklearn.base import clone

    vq = VectorQuantizer(k=4, seed=9)
    assert clone(vq).get_params() == {"k": 4, "seed": 9}
    x = np.random.default_rng(0).normal(size=(30, 3))
    vq.fit(x)
    with pytest.raises(InputError):
        vq.transform(np.zeros((2, 2)))
