"""Release gate: the numbered checks this package must pass before shipping.

Each test is one acceptance criterion with its tolerance and time budget
pinned. The oracles here are deliberately independent of the implementation:
brute-force path enumeration for the forward algorithm, exhaustive
active-set enumeration for the SVM dual, union-find components for the
clusterer, naive bottom-up evaluation for the rule engine, and closed-form
geometry for the approach distance. Do not loosen a tolerance or swap an
oracle for a shortcut that shares code with the module under test.

The heavyweight fixture (a 1000-sample corpus and its stratified 10-fold
cross-validation) is shared by criteria 2, 6, and 9; everything else runs
from scratch inside its own budget.
"""

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np
import pytest

from vesselwatch.anomaly import (
    Alert,
    Fact,
    ImpactTable,
    Var,
    Verdict,
    Zone,
    calculate_impact,
    candidate_facts,
    default_rules,
    infer,
    rank_alerts,
    verify_context,
    write_alerts_csv,
)
from vesselwatch.engagement import (
    CandidatePair,
    EngagementParams,
    Snapshot,
    VesselState,
    cluster_vessels,
    detect_candidates,
    is_engaging,
)
from vesselwatch.geo import GeoPoint, LocalVector, cpa, haversine_matrix
from vesselwatch.hmm import (
    Hmm,
    TrainConfig,
    band_mask,
    baum_welch,
    forward_log_likelihood,
    validate,
)
from vesselwatch.ingest import write_trajectories_csv
from vesselwatch.pipeline import (
    ConfusionMatrix,
    cross_validate,
    default_scenario_classes,
    format_evaluation_report,
    metrics,
)
from vesselwatch.simgen import CorpusSpec, generate_corpus, manifest_rows, write_manifest_csv
from vesselwatch.svm import KernelSpec, SvmConfig, kernel_matrix, train_binary


# --------------------------------------------------------------------------
# shared heavyweight fixture


@dataclass
class FullRun:
    scenarios: list
    corpus: list
    cv: object
    elapsed_s: float
    trajectories_csv: str
    manifest_csv: str
    report: str


def _corpus_artifacts(scenarios, cv):
    trajs = []
    for s in scenarios:
        trajs.append(s.candidate.traj_a)
        trajs.append(s.candidate.traj_b)
    return (
        write_trajectories_csv(trajs),
        write_manifest_csv(manifest_rows(scenarios)),
        format_evaluation_report(cv.confusion, cv.summary),
    )


@pytest.fixture(scope="module")
def full_run():
    """Criterion 2's corpus and cross-validation, timed, with its artifacts."""
    t0 = time.perf_counter()
    scenarios = generate_corpus(CorpusSpec.uniform(200), 42)
    corpus = [s.candidate for s in scenarios]
    cv = cross_validate(corpus, k=10, seed=42, keep_fold_models=True)
    elapsed = time.perf_counter() - t0
    traj_csv, manifest_csv, report = _corpus_artifacts(scenarios, cv)
    return FullRun(
        scenarios=scenarios,
        corpus=corpus,
        cv=cv,
        elapsed_s=elapsed,
        trajectories_csv=traj_csv,
        manifest_csv=manifest_csv,
        report=report,
    )


# --------------------------------------------------------------------------
# criterion 1: the metric module reproduces the reference evaluation


REFERENCE_COUNTS = np.array(
    [
        [43592, 473, 31, 60, 32],
        [688, 1673, 1, 8, 2],
        [56, 0, 196, 0, 0],
        [89, 15, 0, 550, 17],
        [72, 13, 0, 23, 270],
    ],
    dtype=np.int64,
)
REFERENCE_PRECISION_PCT = (97.97, 76.95, 85.96, 85.80, 84.11)
REFERENCE_RECALL_PCT = (98.65, 70.53, 77.78, 81.97, 71.43)
REFERENCE_ACCURACY_PCT = 96.70


def test_criterion_1_reference_confusion_matrix_metrics():
    t0 = time.perf_counter()
    cm = ConfusionMatrix(classes=default_scenario_classes(), counts=REFERENCE_COUNTS)
    m = metrics(cm)
    for got, want in zip(m.precision, REFERENCE_PRECISION_PCT):
        assert got is not None
        assert abs(100.0 * got - want) <= 0.01
    for got, want in zip(m.recall, REFERENCE_RECALL_PCT):
        assert got is not None
        assert abs(100.0 * got - want) <= 0.01
    assert abs(100.0 * m.accuracy - REFERENCE_ACCURACY_PCT) <= 0.01
    assert time.perf_counter() - t0 < 1.0


# --------------------------------------------------------------------------
# criterion 2: end-to-end accuracy on the synthetic corpus


def test_criterion_2_synthetic_corpus_cross_validation(full_run):
    assert full_run.elapsed_s < 600.0
    assert len(full_run.corpus) == 5 * 200
    m = full_run.cv.summary
    assert m.accuracy >= 0.90
    assert len(m.recall) == 5
    for r in m.recall:
        assert r is not None
        assert r >= 0.80


# --------------------------------------------------------------------------
# criterion 3: scaled forward algorithm vs. brute-force path enumeration


def _brute_force_likelihood(model: Hmm, obs: np.ndarray) -> float:
    total = 0.0
    n, t = model.num_states, len(obs)
    for path in itertools.product(range(n), repeat=t):
        p = model.pi[path[0]] * model.B[path[0], obs[0]]
        for step in range(1, t):
            p *= model.A[path[step - 1], path[step]] * model.B[path[step], obs[step]]
        total += p
    return total


def _random_left_right_hmm(rng: np.random.Generator, n: int, k: int, jump: int) -> Hmm:
    mask = band_mask(n, jump)
    a = np.where(mask, rng.uniform(0.1, 1.0, size=(n, n)), 0.0)
    a /= a.sum(axis=1, keepdims=True)
    b = rng.uniform(0.1, 1.0, size=(n, k))
    b /= b.sum(axis=1, keepdims=True)
    pi = np.zeros(n)
    pi[0] = 1.0
    return Hmm(pi=pi, A=a, B=b, max_jump=jump)


def test_criterion_3_forward_likelihood_matches_path_enumeration():
    t0 = time.perf_counter()
    worst = 0.0
    for case in range(100):
        rng = np.random.default_rng(3000 + case)
        n = int(rng.integers(1, 4))
        k = int(rng.integers(1, 5))
        t = int(rng.integers(1, 7))
        jump = int(rng.integers(1, 3))
        model = _random_left_right_hmm(rng, n, k, jump)
        obs = rng.integers(0, k, size=t)
        want = _brute_force_likelihood(model, obs)
        got = math.exp(forward_log_likelihood(model, obs))
        assert want > 0.0
        worst = max(worst, abs(got - want) / want)
    assert worst <= 1e-9
    assert time.perf_counter() - t0 < 10.0


# --------------------------------------------------------------------------
# criterion 4: training improves likelihood monotonically, keeps structure


def test_criterion_4_baum_welch_monotone_and_structure_preserving():
    t0 = time.perf_counter()
    forbidden = ~band_mask(4, 2)
    for run in range(100):
        rng = np.random.default_rng(4000 + run)
        seqs = [rng.integers(0, 8, size=30) for _ in range(20)]
        cfg = TrainConfig(
            max_iterations=50, ll_tolerance=1e-300, emission_floor=1e-6, seed=run
        )
        model, trace = baum_welch(
            seqs, num_states=4, num_symbols=8, max_jump=2, cfg=cfg
        )
        assert len(trace) >= 2
        deltas = np.diff(trace)
        assert deltas.min() >= -1e-8
        assert validate(model) is None
        assert np.all(model.A[forbidden] == 0.0)
        assert model.pi[0] == 1.0 and np.all(model.pi[1:] == 0.0)
    assert time.perf_counter() - t0 < 60.0


# --------------------------------------------------------------------------
# criterion 5: clustering equals the connected-components oracle


def _component_oracle(ids, lat, lon, delta):
    """Size->=2 connected components of the threshold graph, by union-find."""
    dist = haversine_matrix(lat, lon)
    parent = list(range(len(ids)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            if dist[i, j] <= delta:
                parent[find(i)] = find(j)
    groups = {}
    for i in range(len(ids)):
        groups.setdefault(find(i), []).append(ids[i])
    return {frozenset(g) for g in groups.values() if len(g) >= 2}


def test_criterion_5_clustering_matches_component_oracle():
    t0 = time.perf_counter()
    delta = 2000.0
    for case in range(200):
        rng = np.random.default_rng(5000 + case)
        n = int(rng.integers(2, 301))
        spread = rng.uniform(500.0, 6000.0)
        lat = 40.0 + rng.normal(0.0, spread, size=n) / 111_320.0
        lon = -70.0 + rng.normal(0.0, spread, size=n) / (
            111_320.0 * math.cos(math.radians(40.0))
        )
        ids = [f"v{i:03d}" for i in range(n)]
        states = [
            VesselState(ids[i], "cargo", GeoPoint(lat[i], lon[i]), 1.0, 0.0, 0)
            for i in range(n)
        ]
        snap = Snapshot.from_states(0, states)
        got = {c.members for c in cluster_vessels(snap, delta)}
        # the oracle must see the same id order the clusterer uses
        order = sorted(ids)
        pos = {v: i for i, v in enumerate(ids)}
        want = _component_oracle(
            order,
            np.array([lat[pos[v]] for v in order]),
            np.array([lon[pos[v]] for v in order]),
            delta,
        )
        assert got == want
    assert time.perf_counter() - t0 < 30.0


# --------------------------------------------------------------------------
# criterion 6: the SMO solver reaches the QP optimum and honest KKT slack


def _qp_exhaustive(k: np.ndarray, y: np.ndarray, c: np.ndarray) -> float:
    """Globally maximal dual objective by enumerating active sets.

    Every point is pinned at zero, pinned at its cap, or free; free
    multipliers and the bias satisfy a linear system. Feasible solutions
    compete on the dual objective.
    """
    n = len(y)
    q = (y[:, None] * y[None, :]) * k
    best = None
    for states in itertools.product((0, 1, 2), repeat=n):
        alpha = np.zeros(n)
        free = [i for i in range(n) if states[i] == 2]
        capped = [i for i in range(n) if states[i] == 1]
        for i in capped:
            alpha[i] = c[i]
        if free:
            m = len(free)
            a_mat = np.zeros((m + 1, m + 1))
            rhs = np.zeros(m + 1)
            for r, i in enumerate(free):
                for s, j in enumerate(free):
                    a_mat[r, s] = y[j] * k[i, j]
                a_mat[r, m] = 1.0
                rhs[r] = y[i] - sum(c[j] * y[j] * k[i, j] for j in capped)
            for s, j in enumerate(free):
                a_mat[m, s] = y[j]
            rhs[m] = -sum(c[j] * y[j] for j in capped)
            sol, *_ = np.linalg.lstsq(a_mat, rhs, rcond=None)
            if not np.allclose(a_mat @ sol, rhs, atol=1e-9):
                continue
            for s, i in enumerate(free):
                alpha[i] = sol[s]
            if np.any(alpha < -1e-9) or np.any(alpha > c + 1e-9):
                continue
        else:
            if abs(np.dot(alpha, y)) > 1e-9:
                continue
        obj = alpha.sum() - 0.5 * alpha @ q @ alpha
        if best is None or obj > best:
            best = obj
    assert best is not None
    return best


QP_FIXTURES = (
    (np.array([[0.0], [1.0]]), np.array([-1.0, 1.0]), KernelSpec("linear"), 10.0),
    (
        np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 0.8]]),
        np.array([-1.0, -1.0, 1.0]),
        KernelSpec("rbf", 0.5),
        5.0,
    ),
    (
        np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]]),
        np.array([1.0, 1.0, -1.0, -1.0]),
        KernelSpec("rbf", 1.0),
        2.0,
    ),
    (
        np.array([[0.0], [1.0], [0.9], [0.1]]),
        np.array([-1.0, 1.0, -1.0, 1.0]),
        KernelSpec("linear"),
        0.5,
    ),
)


def test_criterion_6_smo_reaches_qp_optimum_and_kkt(full_run):
    t0 = time.perf_counter()
    for x, y, kernel, c in QP_FIXTURES:
        cfg = SvmConfig(C=c, kernel=kernel, kkt_tolerance=1e-9, max_passes=10000)
        result = train_binary(x, y, cfg)
        k = kernel_matrix(result.kernel, x, x)
        want = _qp_exhaustive(k, y, result.sample_c)
        assert abs(result.dual_objective() - want) <= 1e-6

    checked = 0
    for fold in full_run.cv.folds:
        assert fold.svm is not None and fold.svm.train_results is not None
        for r in fold.svm.train_results:
            assert r.kkt_max_violation() <= 1e-3
            checked += 1
    assert checked == 10 * 10  # 10 folds, one model per unordered class pair
    assert time.perf_counter() - t0 < 30.0


# --------------------------------------------------------------------------
# criterion 7: detected candidates re-validate pointwise; approach geometry


def _state_at(traj, t: int) -> VesselState:
    i = traj.index_of(t)
    return VesselState(
        traj.vessel_id,
        traj.meta.vessel_type,
        GeoPoint(float(traj.lat[i]), float(traj.lon[i])),
        float(traj.sog[i]),
        float(traj.cog[i]),
        t,
    )


def test_criterion_7_candidates_revalidate_and_cpa_closed_forms():
    t0 = time.perf_counter()
    params = EngagementParams()
    scenarios = generate_corpus(CorpusSpec.uniform(4), 42)
    trajs = []
    for s in scenarios:
        trajs.append(s.candidate.traj_a)
        trajs.append(s.candidate.traj_b)
    by_vessel = {t.vessel_id: t for t in trajs}
    candidates = detect_candidates(trajs, params)
    assert candidates
    step = trajs[0].grid_step()
    points = 0
    for cand in candidates:
        ta = by_vessel[cand.vessel_a]
        tb = by_vessel[cand.vessel_b]
        for t in range(cand.t_start, cand.t_end + step, step):
            assert is_engaging(_state_at(ta, t), _state_at(tb, t), params)
            points += 1
    assert points > 0

    # closed-form approach fixtures: static, head-on, diverging
    static = cpa(LocalVector(300.0, 400.0), LocalVector(0.0, 0.0), 600.0)
    assert static.t_star == 0.0
    assert abs(static.min_distance - 500.0) <= 1e-6
    head_on = cpa(LocalVector(1000.0, 0.0), LocalVector(-2.0, 0.0), 600.0)
    assert abs(head_on.t_star - 500.0) <= 1e-9
    assert abs(head_on.min_distance - 0.0) <= 1e-6
    diverging = cpa(LocalVector(600.0, 800.0), LocalVector(3.0, 4.0), 600.0)
    assert diverging.t_star == 0.0
    assert abs(diverging.min_distance - 1000.0) <= 1e-6
    assert time.perf_counter() - t0 < 60.0


# --------------------------------------------------------------------------
# criterion 8: context verification, impact arithmetic, alert ranking


def _naive_infer(facts, rules):
    """Bottom-up evaluation by enumerating every binding over the constants.

    Independent of the engine's matching strategy: ground each rule against
    the full constant universe, apply to a fixpoint, and read negation
    against the input facts only.
    """
    base = frozenset(facts)
    known = set(base)
    consts = {a for f in known for a in f.args}
    for rule in rules:
        for atom in [rule.head] + [lit.atom for lit in rule.body]:
            consts |= {a for a in atom.args if not isinstance(a, Var)}
    consts = sorted(consts)

    def ground(atom, binding):
        return Fact(
            atom.name,
            tuple(binding[a.name] if isinstance(a, Var) else a for a in atom.args),
        )

    changed = True
    while changed:
        changed = False
        for rule in rules:
            names = sorted(
                {v for lit in rule.body for v in lit.atom.variables()}
                | rule.head.variables()
            )
            for combo in itertools.product(consts, repeat=len(names)):
                binding = dict(zip(names, combo))
                ok = True
                for lit in rule.body:
                    f = ground(lit.atom, binding)
                    if lit.positive:
                        if f not in known:
                            ok = False
                            break
                    elif f in base:
                        ok = False
                        break
                if ok:
                    head = ground(rule.head, binding)
                    if head not in known:
                        known.add(head)
                        changed = True
    return known


def test_criterion_8_rule_verdicts_impact_and_ranking():
    t0 = time.perf_counter()
    classes = {c.name: c for c in default_scenario_classes()}
    rules = default_rules()

    # a pilot-transfer detection with no pilot-type vessel in the pair
    facts = {
        Fact("pair", ("p1:p2:100", "p1", "p2")),
        Fact("type", ("p1", "cargo")),
        Fact("type", ("p2", "tanker")),
        Fact("has_type", ("p1:p2:100", "cargo")),
        Fact("has_type", ("p1:p2:100", "tanker")),
        Fact("scenario", ("p1:p2:100", "class_b")),
    }
    verdict = verify_context(classes["B"], facts, rules)
    assert verdict.is_conflict
    assert verdict.reason == "no_pilot"

    # impact takes the larger of the class entry and the conflict floor
    low = ImpactTable(by_class={"A": 0.5, "B": 0.4, "C": 0.5, "D": 0.5, "E": 0.5},
                      conflict_impact=0.7)
    assert calculate_impact(verdict, classes["B"], low) == 0.7
    high = ImpactTable(by_class={"A": 0.5, "B": 0.9, "C": 0.5, "D": 0.5, "E": 0.5},
                       conflict_impact=0.5)
    assert calculate_impact(verdict, classes["B"], high) == 0.9

    # any conflict outranks every confirmed alert, impact notwithstanding
    ranked = rank_alerts(
        [
            Alert(CandidatePair("v1", "v2", 0, 600), classes["A"], Verdict.confirmed(), 1.0),
            Alert(CandidatePair("v3", "v4", 0, 600), classes["B"], verdict, 0.5),
            Alert(CandidatePair("v5", "v6", 0, 600), classes["C"], Verdict.confirmed(), 0.9),
        ]
    )
    assert [a.rank for a in ranked] == [1, 2, 3]
    assert ranked[0].verdict.is_conflict
    assert ranked[0].impact == 0.5
    assert not ranked[1].verdict.is_conflict

    # the engine agrees with naive bottom-up evaluation on shipped rules
    zone = Zone(
        "restricted",
        (GeoPoint(30.0, -10.0), GeoPoint(30.0, 5.0), GeoPoint(45.0, 5.0), GeoPoint(45.0, -10.0)),
    )
    scenarios = generate_corpus(CorpusSpec.uniform(2), 7)
    fact_sets = [facts]
    for s in scenarios:
        fact_sets.append(candidate_facts(s.candidate, s.label, zones=(zone,)))
    # mismatched detections and a merged multi-pair context
    fact_sets.append(candidate_facts(scenarios[0].candidate, classes["B"]))
    fact_sets.append(candidate_facts(scenarios[2].candidate, classes["A"]))
    fact_sets.append(fact_sets[1] | fact_sets[3])
    fact_sets.append(
        {
            Fact("scenario", ("q1", "class_b")),
            Fact("has_type", ("q1", "pilot")),
            Fact("scenario", ("q2", "class_b")),
            Fact("has_type", ("q2", "cargo")),
        }
    )
    for fs in fact_sets:
        assert infer(fs, rules) == _naive_infer(fs, rules)
    assert time.perf_counter() - t0 < 5.0


# --------------------------------------------------------------------------
# criterion 9: identical seeds make byte-identical outputs


def _ranked_alert_csv(seed: int) -> str:
    scenarios = generate_corpus(CorpusSpec.uniform(3), seed)
    rules = default_rules()
    table = ImpactTable()
    alerts = []
    for s in scenarios:
        facts = candidate_facts(s.candidate, s.label)
        verdict = verify_context(s.label, facts, rules)
        impact = calculate_impact(verdict, s.label, table)
        alerts.append(Alert(s.pair, s.label, verdict, impact))
    return write_alerts_csv(rank_alerts(alerts))


def test_criterion_9_reruns_are_byte_identical(full_run):
    scenarios = generate_corpus(CorpusSpec.uniform(200), 42)
    corpus = [s.candidate for s in scenarios]
    cv = cross_validate(corpus, k=10, seed=42, keep_fold_models=False)
    traj_csv, manifest_csv, report = _corpus_artifacts(scenarios, cv)
    assert traj_csv == full_run.trajectories_csv
    assert manifest_csv == full_run.manifest_csv
    assert report == full_run.report

    assert _ranked_alert_csv(77) == _ranked_alert_csv(77)
