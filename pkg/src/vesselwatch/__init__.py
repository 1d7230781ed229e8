"""Maritime two-vessel situation analysis.

Detects engagements between vessel pairs from AIS tracks, classifies the
interaction scenario with a bank of discrete HMMs feeding a multi-class SVM,
and raises ranked alerts when a detected scenario conflicts with declarative
context rules.

The package layers as ingest -> engagement -> features/hmm/svm -> pipeline ->
anomaly, with ``simgen`` producing labeled synthetic corpora and ``cli``
wiring the stages into batch commands. The most commonly combined entry
points are re-exported here; everything else lives in its module.
"""

__version__ = "0.1.0"

from .anomaly import (
    Alert,
    Fact,
    ImpactTable,
    Rule,
    Verdict,
    Zone,
    calculate_impact,
    candidate_facts,
    default_rules,
    infer,
    parse_rules,
    rank_alerts,
    verify_context,
)
from .config import AppConfig, config_hash, load_config
from .engagement import (
    CandidatePair,
    EngagementParams,
    VesselState,
    cluster_vessels,
    detect_candidates,
    is_engaging,
)
from .errors import InputError, InvariantError, VesselWatchError
from .features import Codebook, ObservationType, build_observation, fit_codebook, quantize
from .geo import GeoPoint, LocalVector, cpa, haversine_distance
from .hmm import Hmm, TrainConfig, baum_welch, forward_log_likelihood
from .ingest import Trajectory, build_trajectories, parse_ais_csv, resample
from .pipeline import (
    Candidate,
    ConfusionMatrix,
    HmmBank,
    LabeledCandidate,
    ScenarioClass,
    classify,
    cross_validate,
    default_scenario_classes,
    load_model,
    metrics,
    save_model,
    score,
    train_models,
)
from .simgen import CorpusSpec, ScenarioTemplate, default_templates, generate_corpus
from .svm import KernelSpec, SvmConfig, SvmModel, predict, train_binary, train_multiclass

__all__ = [
    "Alert",
    "AppConfig",
    "Candidate",
    "CandidatePair",
    "Codebook",
    "ConfusionMatrix",
    "CorpusSpec",
    "EngagementParams",
    "Fact",
    "GeoPoint",
    "Hmm",
    "HmmBank",
    "ImpactTable",
    "InputError",
    "InvariantError",
    "KernelSpec",
    "LabeledCandidate",
    "LocalVector",
    "ObservationType",
    "Rule",
    "ScenarioClass",
    "ScenarioTemplate",
    "SvmConfig",
    "SvmModel",
    "TrainConfig",
    "Trajectory",
    "Verdict",
    "VesselState",
    "VesselWatchError",
    "Zone",
    "__version__",
    "baum_welch",
    "build_observation",
    "build_trajectories",
    "calculate_impact",
    "candidate_facts",
    "classify",
    "cluster_vessels",
    "config_hash",
    "cpa",
    "cross_validate",
    "default_rules",
    "default_scenario_classes",
    "default_templates",
    "detect_candidates",
    "fit_codebook",
    "forward_log_likelihood",
    "generate_corpus",
    "haversine_distance",
    "infer",
    "is_engaging",
    "load_config",
    "load_model",
    "metrics",
    "parse_ais_csv",
    "parse_rules",
    "predict",
    "quantize",
    "rank_alerts",
    "resample",
    "save_model",
    "score",
    "train_binary",
    "train_models",
    "train_multiclass",
    "verify_context",
]
