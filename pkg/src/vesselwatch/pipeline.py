"""Scenario classification over candidate pairs, plus its evaluation protocol.

The classifier is a bank of left-to-right HMMs arranged as an m-by-n grid
(one model per scenario class and observation type) over shared per-type
codebooks. A candidate is scored by quantizing each of its n observation
sequences and evaluating all m models per type; the resulting grid of
length-normalized log-likelihoods, flattened class-major, is the feature
vector a one-vs-one SVM classifies.

Evaluation is stratified k-fold cross-validation with codebooks, HMMs, and
SVM all refit inside each fold from training data only, accumulating one
confusion matrix over the held-out folds.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .engagement import CandidatePair
from .errors import InputError, InvariantError
from .features import (
    Codebook,
    FeatureKind,
    ObservationType,
    SymbolSequence,
    build_observation,
    default_observation_types,
    fit_codebook,
    quantize,
)
from .hmm import (
    DEFAULT_MAX_JUMP,
    DEFAULT_NUM_STATES,
    Hmm,
    TrainConfig,
    baum_welch,
    forward_log_likelihood,
)
from .ingest import VESSEL_TYPES, Trajectory
from .svm import (
    BinarySvm,
    KernelSpec,
    ScaleParams,
    SvmConfig,
    SvmModel,
    predict,
    train_multiclass,
)

LOG_SENTINEL = -1e9


def subseed(master: int, *tags) -> int:
    """Derive an independent child seed from a master seed and a tag path.

    Hash-based so the result depends only on the arguments, never on how
    many other seeds were drawn first; that keeps corpus generation and
    fold training order-independent.
    """
    text = repr((int(master),) + tuple(tags))
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


@dataclass(frozen=True)
class ScenarioClass:
    """One engagement scenario: an unordered pair of vessel-type sets."""

    id: int
    name: str
    definition: tuple[frozenset[str], frozenset[str]]

    def __post_init__(self):
        if self.id < 0:
            raise InputError(f"class id must be non-negative, got {self.id}")
        if not self.name:
            raise InputError("class name must be non-empty")
        sides = tuple(
            sorted((frozenset(s) for s in self.definition), key=lambda s: sorted(s))
        )
        if len(sides) != 2:
            raise InputError("class definition needs exactly two vessel-type sides")
        for side in sides:
            if not side:
                raise InputError(f"class {self.name}: empty vessel-type side")
            unknown = side - VESSEL_TYPES
            if unknown:
                raise InputError(
                    f"class {self.name}: unknown vessel types {sorted(unknown)}"
                )
        object.__setattr__(self, "definition", sides)

    @property
    def atom(self) -> str:
        """The constant naming this class inside rule files."""
        return "class_" + self.name.lower()

    def matches(self, type_a: str, type_b: str) -> bool:
        d0, d1 = self.definition
        return (type_a in d0 and type_b in d1) or (type_a in d1 and type_b in d0)


def default_scenario_classes() -> tuple[ScenarioClass, ...]:
    """The five stock two-vessel scenario classes."""
    make = frozenset
    return (
        ScenarioClass(0, "A", (make({"cargo", "tanker"}), make({"towing", "tug"}))),
        ScenarioClass(1, "B", (make({"cargo", "tanker", "passenger"}), make({"pilot"}))),
        ScenarioClass(2, "C", (make({"tanker"}), make({"tanker"}))),
        ScenarioClass(3, "D", (make({"passenger"}), make({"passenger"}))),
        ScenarioClass(4, "E", (make({"search_rescue"}), make({"search_rescue"}))),
    )


@dataclass(frozen=True)
class Candidate:
    """A candidate pair together with the two resampled trajectories."""

    pair: CandidatePair
    traj_a: Trajectory
    traj_b: Trajectory

    def __post_init__(self):
        if self.traj_a.vessel_id != self.pair.vessel_a:
            raise InputError(
                f"first trajectory is {self.traj_a.vessel_id!r}, pair says "
                f"{self.pair.vessel_a!r}"
            )
        if self.traj_b.vessel_id != self.pair.vessel_b:
            raise InputError(
                f"second trajectory is {self.traj_b.vessel_id!r}, pair says "
                f"{self.pair.vessel_b!r}"
            )


@dataclass(frozen=True)
class LabeledCandidate(Candidate):
    label: ScenarioClass = None  # type: ignore[assignment]

    def __post_init__(self):
        super().__post_init__()
        if not isinstance(self.label, ScenarioClass):
            raise InputError("labeled candidate needs a ScenarioClass label")


@dataclass(frozen=True)
class HmmBank:
    """m-by-n grid of HMMs plus the n codebooks the symbols come from."""

    classes: tuple[ScenarioClass, ...]
    obs_types: tuple[ObservationType, ...]
    codebooks: tuple[Codebook, ...]
    models: tuple[tuple[Hmm, ...], ...]  # models[class_index][type_index]

    def __post_init__(self):
        if len(self.codebooks) != len(self.obs_types):
            raise InputError("one codebook per observation type required")
        for cb, ot in zip(self.codebooks, self.obs_types):
            if cb.obs_type != ot:
                raise InputError("codebook/observation-type order mismatch")
        if len(self.models) != len(self.classes):
            raise InputError("one model row per class required")
        for row in self.models:
            if len(row) != len(self.obs_types):
                raise InputError("one model per observation type required")
        for row in self.models:
            for model, cb in zip(row, self.codebooks):
                if model.B.shape[1] != cb.k:
                    raise InputError("model alphabet does not match codebook size")
        ids = [c.id for c in self.classes]
        if len(set(ids)) != len(ids):
            raise InputError("duplicate class ids in bank")

    @property
    def m(self) -> int:
        return len(self.classes)

    @property
    def n(self) -> int:
        return len(self.obs_types)

    def class_by_id(self, class_id: int) -> ScenarioClass:
        for c in self.classes:
            if c.id == class_id:
                return c
        raise InputError(f"bank has no class with id {class_id}")


@dataclass(frozen=True)
class LikelihoodVector:
    """Grid of length-normalized log-likelihoods for one candidate.

    ``values[y][x]`` is log P(O_x | model of class y) / T. Zero-probability
    sequences come through as the -1e9 sentinel so every entry is finite.
    """

    values: np.ndarray
    pair: CandidatePair

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise InputError("likelihood values must form an m-by-n grid")
        if np.isnan(v).any() or np.isposinf(v).any():
            raise InputError("likelihood values must not be NaN or +inf")
        v = np.where(np.isneginf(v), LOG_SENTINEL, v)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def vector(self) -> np.ndarray:
        """Class-major flattening: entry y*n + x is (class y, type x)."""
        return self.values.reshape(-1)


def train_bank(
    corpus: Sequence[LabeledCandidate],
    classes: Sequence[ScenarioClass] | None = None,
    obs_types: Sequence[ObservationType] | None = None,
    num_states: int = DEFAULT_NUM_STATES,
    codebook_size: int = 16,
    max_jump: int = DEFAULT_MAX_JUMP,
    train_cfg: TrainConfig = TrainConfig(),
    seed: int = 0,
) -> HmmBank:
    """Fit the codebooks and the full class-by-type model grid.

    Codebooks are fit per observation type on the pooled observation points
    of the whole training corpus; each class's models are then trained on
    that class's quantized sequences only.
    """
    classes = tuple(classes) if classes is not None else default_scenario_classes()
    obs_types = (
        tuple(obs_types) if obs_types is not None else tuple(default_observation_types())
    )
    if not obs_types:
        raise InputError("need at least one observation type")
    by_class: dict[int, list[int]] = {c.id: [] for c in classes}
    for i, cand in enumerate(corpus):
        if cand.label.id not in by_class:
            raise InputError(
                f"corpus label {cand.label.name} is not in the class table"
            )
        by_class[cand.label.id].append(i)
    for c in classes:
        count = len(by_class[c.id])
        if count < 2:
            raise InputError(f"class {c.name} has {count} samples, need at least 2")

    observations = [
        [build_observation(c.traj_a, c.traj_b, c.pair, ot) for c in corpus]
        for ot in obs_types
    ]
    codebooks = []
    symbols: list[list[SymbolSequence]] = []
    for x, ot in enumerate(obs_types):
        pooled = np.vstack([obs.matrix() for obs in observations[x]])
        cb = fit_codebook(
            pooled, k=codebook_size, seed=subseed(seed, "codebook", x), obs_type=ot
        )
        codebooks.append(cb)
        symbols.append([quantize(obs, cb) for obs in observations[x]])

    rows = []
    for y, c in enumerate(classes):
        row = []
        for x in range(len(obs_types)):
            seqs = [symbols[x][i] for i in by_class[c.id]]
            cfg = replace(train_cfg, seed=subseed(seed, "hmm", y, x))
            model, _ = baum_welch(
                seqs,
                num_states=num_states,
                num_symbols=codebook_size,
                max_jump=max_jump,
                cfg=cfg,
            )
            row.append(model)
        rows.append(tuple(row))
    return HmmBank(
        classes=classes,
        obs_types=obs_types,
        codebooks=tuple(codebooks),
        models=tuple(rows),
    )


def score(bank: HmmBank, candidate: Candidate) -> LikelihoodVector:
    """Score one candidate against every model in the bank."""
    pair = candidate.pair
    for traj, vid in ((candidate.traj_a, pair.vessel_a), (candidate.traj_b, pair.vessel_b)):
        if not traj.covers(pair.t_start, pair.t_end):
            raise InputError(
                f"trajectory of {vid!r} does not cover the candidate interval "
                f"[{pair.t_start}, {pair.t_end}]"
            )
    values = np.empty((bank.m, bank.n))
    for x in range(bank.n):
        obs = build_observation(
            candidate.traj_a, candidate.traj_b, pair, bank.obs_types[x]
        )
        seq = quantize(obs, bank.codebooks[x])
        t = len(seq)
        for y in range(bank.m):
            values[y, x] = forward_log_likelihood(bank.models[y][x], seq) / t
    return LikelihoodVector(values=values, pair=pair)


def classify(bank: HmmBank, svm_model: SvmModel, candidate: Candidate) -> ScenarioClass:
    """score -> flatten -> one-vs-one vote; returns the winning class."""
    if svm_model.dim != bank.m * bank.n:
        raise InputError(
            f"svm expects dimension {svm_model.dim}, bank produces {bank.m * bank.n}"
        )
    unknown = set(svm_model.classes) - {c.id for c in bank.classes}
    if unknown:
        raise InputError(f"svm predicts class ids {sorted(unknown)} absent from bank")
    label = predict(svm_model, score(bank, candidate).vector())
    return bank.class_by_id(int(label))


def train_models(
    corpus: Sequence[LabeledCandidate],
    classes: Sequence[ScenarioClass] | None = None,
    obs_types: Sequence[ObservationType] | None = None,
    num_states: int = DEFAULT_NUM_STATES,
    codebook_size: int = 16,
    max_jump: int = DEFAULT_MAX_JUMP,
    train_cfg: TrainConfig = TrainConfig(),
    svm_cfg: SvmConfig = SvmConfig(),
    seed: int = 0,
    keep_svm_results: bool = False,
) -> tuple[HmmBank, SvmModel]:
    """Train the bank, then the SVM on the corpus's likelihood vectors."""
    bank = train_bank(
        corpus,
        classes=classes,
        obs_types=obs_types,
        num_states=num_states,
        codebook_size=codebook_size,
        max_jump=max_jump,
        train_cfg=train_cfg,
        seed=subseed(seed, "bank"),
    )
    vectors = np.array([score(bank, c).vector() for c in corpus])
    labels = np.array([c.label.id for c in corpus], dtype=int)
    svm_model = train_multiclass(vectors, labels, svm_cfg, keep_results=keep_svm_results)
    return bank, svm_model


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts[true_index][predicted_index], aligned with ``classes``."""

    classes: tuple[ScenarioClass, ...]
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        m = len(self.classes)
        if c.shape != (m, m):
            raise InputError(f"confusion matrix must be {m}x{m}, got {c.shape}")
        if (c < 0).any():
            raise InputError("confusion matrix counts must be non-negative")
        c.flags.writeable = False
        object.__setattr__(self, "counts", c)

    def total(self) -> int:
        return int(self.counts.sum())

    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def column_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)


@dataclass(frozen=True)
class Metrics:
    """Per-class precision/recall (None where undefined) plus accuracy."""

    precision: tuple[float | None, ...]
    recall: tuple[float | None, ...]
    accuracy: float


def metrics(cm: ConfusionMatrix) -> Metrics:
    """Fractions, not percentages; a zero denominator yields None."""
    total = cm.total()
    if total == 0:
        raise InputError("empty confusion matrix")
    diag = np.diag(cm.counts)
    cols = cm.column_sums()
    rows = cm.row_sums()
    precision = tuple(
        float(d) / int(c) if c > 0 else None for d, c in zip(diag, cols)
    )
    recall = tuple(float(d) / int(r) if r > 0 else None for d, r in zip(diag, rows))
    accuracy = float(diag.sum()) / total
    return Metrics(precision=precision, recall=recall, accuracy=accuracy)


@dataclass(frozen=True)
class FoldResult:
    """Everything one cross-validation fold trained and predicted."""

    index: int
    test_indices: tuple[int, ...]
    predicted: tuple[int, ...]
    bank: HmmBank | None
    svm: SvmModel | None


@dataclass(frozen=True)
class CvResult:
    confusion: ConfusionMatrix
    summary: Metrics
    folds: tuple[FoldResult, ...]


def stratified_folds(
    labels: Sequence[int], k: int, seed: int
) -> list[list[int]]:
    """Per class: shuffle indices under a derived seed, deal round-robin.

    Fold sizes within each class differ by at most one, so class
    proportions match across folds as closely as integer counts allow.
    """
    if k < 2:
        raise InputError(f"need at least 2 folds, got {k}")
    folds: list[list[int]] = [[] for _ in range(k)]
    for class_id in sorted(set(labels)):
        idxs = np.array([i for i, lbl in enumerate(labels) if lbl == class_id])
        if len(idxs) < k:
            raise InputError(
                f"class id {class_id} has {len(idxs)} samples, fewer than {k} folds"
            )
        rng = np.random.default_rng(subseed(seed, "fold", int(class_id)))
        perm = idxs[rng.permutation(len(idxs))]
        for f in range(k):
            folds[f].extend(int(i) for i in perm[f::k])
    return [sorted(f) for f in folds]


def cross_validate(
    corpus: Sequence[LabeledCandidate],
    k: int = 10,
    seed: int = 0,
    obs_types: Sequence[ObservationType] | None = None,
    num_states: int = DEFAULT_NUM_STATES,
    codebook_size: int = 16,
    max_jump: int = DEFAULT_MAX_JUMP,
    train_cfg: TrainConfig = TrainConfig(),
    svm_cfg: SvmConfig = SvmConfig(),
    keep_fold_models: bool = True,
) -> CvResult:
    """Stratified k-fold evaluation with full per-fold refits.

    Codebooks, HMMs, and the SVM (scaling included) are fit inside each
    fold from its training split only, so nothing about the held-out
    samples leaks into the models that classify them.
    """
    corpus = list(corpus)
    present = sorted({c.label.id for c in corpus})
    classes = []
    for cid in present:
        classes.append(next(c.label for c in corpus if c.label.id == cid))
    classes = tuple(classes)
    labels = [c.label.id for c in corpus]
    folds = stratified_folds(labels, k, seed)

    index_of = {c.id: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    fold_results = []
    for f, test_idx in enumerate(folds):
        test_set = set(test_idx)
        train_corpus = [c for i, c in enumerate(corpus) if i not in test_set]
        bank, svm_model = train_models(
            train_corpus,
            classes=classes,
            obs_types=obs_types,
            num_states=num_states,
            codebook_size=codebook_size,
            max_jump=max_jump,
            train_cfg=train_cfg,
            svm_cfg=svm_cfg,
            seed=subseed(seed, "train", f),
            keep_svm_results=keep_fold_models,
        )
        predicted = []
        for i in test_idx:
            got = classify(bank, svm_model, corpus[i])
            predicted.append(got.id)
            counts[index_of[labels[i]], index_of[got.id]] += 1
        fold_results.append(
            FoldResult(
                index=f,
                test_indices=tuple(test_idx),
                predicted=tuple(predicted),
                bank=bank if keep_fold_models else None,
                svm=svm_model if keep_fold_models else None,
            )
        )
    cm = ConfusionMatrix(classes=classes, counts=counts)
    return CvResult(confusion=cm, summary=metrics(cm), folds=tuple(fold_results))


def format_evaluation_report(cm: ConfusionMatrix, m: Metrics) -> str:
    """CSV confusion matrix followed by a metrics block, percentages at 2 dp."""

    def pct(v: float | None) -> str:
        return "" if v is None else f"{100.0 * v:.2f}"

    lines = ["true_class," + ",".join(f"pred_{c.name}" for c in cm.classes)]
    for i, c in enumerate(cm.classes):
        lines.append(c.name + "," + ",".join(str(int(v)) for v in cm.counts[i]))
    lines.append("metric,class,value_percent")
    for i, c in enumerate(cm.classes):
        lines.append(f"precision,{c.name},{pct(m.precision[i])}")
    for i, c in enumerate(cm.classes):
        lines.append(f"recall,{c.name},{pct(m.recall[i])}")
    lines.append(f"accuracy,,{pct(m.accuracy)}")
    return "\n".join(lines) + "\n"


MODEL_SCHEMA = "vesselwatch-model/1"


def _emit_json(value) -> str:
    """Deterministic JSON text with floats at 17 significant digits.

    The stock encoder writes shortest-round-trip floats; the model file
    contract pins full precision instead so the bytes are stable across
    emitter evolution. Dict insertion order is preserved.
    """
    if isinstance(value, dict):
        items = (f"{json.dumps(str(k))}:{_emit_json(v)}" for k, v in value.items())
        return "{" + ",".join(items) + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_emit_json(v) for v in value) + "]"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if not np.isfinite(value):
            raise InvariantError(f"non-finite number in model document: {value}")
        return format(float(value), ".17g")
    if value is None:
        return "null"
    raise InvariantError(f"cannot serialize {type(value).__name__} in model document")


def _kernel_doc(kernel) -> dict:
    return {"name": kernel.name, "gamma": kernel.gamma}


def model_to_document(bank: HmmBank, svm_model: SvmModel) -> dict:
    """Self-describing dict holding everything prediction needs."""
    if svm_model.dim != bank.m * bank.n:
        raise InputError("svm dimension does not match the bank grid")
    classes = [
        {
            "id": c.id,
            "name": c.name,
            "definition": [sorted(side) for side in c.definition],
        }
        for c in bank.classes
    ]
    obs_types = [
        {"id": ot.id, "features": [f.value for f in ot.features]}
        for ot in bank.obs_types
    ]
    codebooks = [
        {
            "obs_type_id": cb.obs_type.id,
            "scale": [[m, s] for m, s in cb.scale],
            "centroids": cb.centroids.tolist(),
        }
        for cb in bank.codebooks
    ]
    hmms = [
        [
            {
                "pi": model.pi.tolist(),
                "A": model.A.tolist(),
                "B": model.B.tolist(),
                "max_jump": model.max_jump,
            }
            for model in row
        ]
        for row in bank.models
    ]
    cfg = svm_model.config
    svm_doc = {
        "classes": list(svm_model.classes),
        "config": {
            "C": cfg.C,
            "kernel": _kernel_doc(cfg.kernel),
            "kkt_tolerance": cfg.kkt_tolerance,
            "max_passes": cfg.max_passes,
            "idle_sweeps": cfg.idle_sweeps,
            "class_c_multipliers": {
                str(k): cfg.class_c_multipliers[k]
                for k in sorted(cfg.class_c_multipliers)
            },
        },
        "scale": {
            "mins": svm_model.scale.mins.tolist(),
            "maxs": svm_model.scale.maxs.tolist(),
        },
        "binaries": [
            {
                "class_pos": b.class_pos,
                "class_neg": b.class_neg,
                "support_vectors": b.support_vectors.tolist(),
                "alpha": b.alpha.tolist(),
                "sv_y": b.sv_y.tolist(),
                "bias": b.bias,
                "kernel": _kernel_doc(b.kernel),
            }
            for b in svm_model.binaries
        ],
    }
    return {
        "schema": MODEL_SCHEMA,
        "classes": classes,
        "obs_types": obs_types,
        "codebooks": codebooks,
        "hmms": hmms,
        "svm": svm_doc,
    }


def model_from_document(doc: Mapping) -> tuple[HmmBank, SvmModel]:
    schema = doc.get("schema")
    if schema != MODEL_SCHEMA:
        raise InputError(
            f"unsupported model schema {schema!r}, expected {MODEL_SCHEMA!r}"
        )
    classes = tuple(
        ScenarioClass(
            id=int(c["id"]),
            name=str(c["name"]),
            definition=(frozenset(c["definition"][0]), frozenset(c["definition"][1])),
        )
        for c in doc["classes"]
    )
    obs_types = tuple(
        ObservationType(
            id=int(o["id"]),
            features=tuple(FeatureKind.parse(f) for f in o["features"]),
        )
        for o in doc["obs_types"]
    )
    codebooks = []
    for ot, cdoc in zip(obs_types, doc["codebooks"]):
        if int(cdoc["obs_type_id"]) != ot.id:
            raise InputError("codebook order does not match observation types")
        codebooks.append(
            Codebook(
                obs_type=ot,
                centroids=np.array(cdoc["centroids"], dtype=float),
                scale=tuple((float(m), float(s)) for m, s in cdoc["scale"]),
            )
        )
    models = tuple(
        tuple(
            Hmm(
                pi=np.array(h["pi"], dtype=float),
                A=np.array(h["A"], dtype=float),
                B=np.array(h["B"], dtype=float),
                max_jump=int(h["max_jump"]),
            )
            for h in row
        )
        for row in doc["hmms"]
    )
    bank = HmmBank(
        classes=classes,
        obs_types=obs_types,
        codebooks=tuple(codebooks),
        models=models,
    )

    sdoc = doc["svm"]
    cdoc = sdoc["config"]
    cfg = SvmConfig(
        C=float(cdoc["C"]),
        kernel=KernelSpec(
            name=str(cdoc["kernel"]["name"]),
            gamma=None if cdoc["kernel"]["gamma"] is None else float(cdoc["kernel"]["gamma"]),
        ),
        kkt_tolerance=float(cdoc["kkt_tolerance"]),
        max_passes=int(cdoc["max_passes"]),
        idle_sweeps=int(cdoc["idle_sweeps"]),
        class_c_multipliers={
            int(k): float(v) for k, v in cdoc["class_c_multipliers"].items()
        },
    )
    scale = ScaleParams(
        mins=np.array(sdoc["scale"]["mins"], dtype=float),
        maxs=np.array(sdoc["scale"]["maxs"], dtype=float),
    )
    binaries = []
    for b in sdoc["binaries"]:
        alpha = np.array(b["alpha"], dtype=float)
        sv = np.array(b["support_vectors"], dtype=float).reshape(len(alpha), scale.dim)
        binaries.append(
            BinarySvm(
                class_pos=int(b["class_pos"]),
                class_neg=int(b["class_neg"]),
                support_vectors=sv,
                alpha=alpha,
                sv_y=np.array(b["sv_y"], dtype=float),
                bias=float(b["bias"]),
                kernel=KernelSpec(
                    name=str(b["kernel"]["name"]),
                    gamma=None if b["kernel"]["gamma"] is None else float(b["kernel"]["gamma"]),
                ),
            )
        )
    svm_model = SvmModel(
        classes=tuple(int(c) for c in sdoc["classes"]),
        scale=scale,
        binaries=tuple(binaries),
        config=cfg,
    )
    if svm_model.dim != bank.m * bank.n:
        raise InputError("model file inconsistent: svm dimension vs bank grid")
    return bank, svm_model


def save_model(path, bank: HmmBank, svm_model: SvmModel, header: Sequence[str] = ()) -> None:
    """Write the model document; ``header`` lines are '#'-prefixed on top."""
    text = _emit_json(model_to_document(bank, svm_model))
    with open(path, "w", encoding="utf-8") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write(text)
        fh.write("\n")


def load_model(path) -> tuple[HmmBank, SvmModel]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    try:
        doc = json.loads("".join(lines))
    except json.JSONDecodeError as exc:
        raise InputError(f"model file is not valid JSON: {exc}") from None
    return model_from_document(doc)
