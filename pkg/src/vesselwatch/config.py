"""Run configuration: one document that pins every tunable constant.

Thresholds and sizes that the underlying method leaves open (proximity radii,
speed ceilings, grid step, model sizes, SVM parameters, impact values) all
live here with explicit defaults, so a run is reproducible from its config
file and seed alone. The config hash stamped into every output header is the
digest of the fully resolved configuration, not of the file text, so two
files that spell the same settings differently hash the same.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Mapping

import yaml

from .anomaly import ImpactTable, Zone
from .engagement import EngagementParams
from .errors import InputError
from .features import DEFAULT_K
from .geo import GeoPoint
from .hmm import DEFAULT_MAX_JUMP, DEFAULT_NUM_STATES, TrainConfig
from .ingest import DEFAULT_COLUMN_MAP, DEFAULT_GAP_THRESHOLD_S, DEFAULT_STEP_S
from .svm import KernelSpec, SvmConfig

__all__ = ["AppConfig", "load_config", "config_from_mapping", "config_to_mapping", "config_hash"]


@dataclass(frozen=True)
class AppConfig:
    """Everything a command needs besides its input files."""

    seed: int = 0
    step_s: int = DEFAULT_STEP_S
    gap_threshold_s: int = DEFAULT_GAP_THRESHOLD_S
    column_map: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_COLUMN_MAP))
    engagement: EngagementParams = field(default_factory=EngagementParams)
    num_states: int = DEFAULT_NUM_STATES
    codebook_size: int = DEFAULT_K
    max_jump: int = DEFAULT_MAX_JUMP
    train: TrainConfig = field(default_factory=TrainConfig)
    svm: SvmConfig = field(default_factory=SvmConfig)
    folds: int = 10
    samples_per_class: int = 200
    impact: ImpactTable = field(default_factory=ImpactTable)
    rules_path: str | None = None
    zones: tuple[Zone, ...] = ()

    def __post_init__(self):
        if self.seed < 0:
            raise InputError(f"seed must be >= 0, got {self.seed}")
        if self.step_s <= 0 or self.gap_threshold_s <= 0:
            raise InputError("step_s and gap_threshold_s must be positive")
        if self.folds < 2:
            raise InputError(f"folds must be >= 2, got {self.folds}")
        if self.samples_per_class < 2:
            raise InputError("samples_per_class must be >= 2")
        object.__setattr__(self, "column_map", dict(self.column_map))


def _take(section: Mapping, allowed: dict, where: str) -> dict:
    """Pop known keys with defaults; unknown keys are configuration typos."""
    if not isinstance(section, Mapping):
        raise InputError(f"config section {where!r} must be a mapping")
    unknown = set(section) - set(allowed)
    if unknown:
        raise InputError(f"unknown config key(s) in {where}: {', '.join(sorted(unknown))}")
    return {k: section.get(k, default) for k, default in allowed.items()}


def config_from_mapping(data: Mapping) -> AppConfig:
    top = _take(
        data,
        {
            "seed": 0,
            "ingest": {},
            "engagement": {},
            "model": {},
            "svm": {},
            "evaluate": {},
            "simulate": {},
            "anomaly": {},
        },
        "top level",
    )

    ing = _take(
        top["ingest"] or {},
        {
            "step_s": DEFAULT_STEP_S,
            "gap_threshold_s": DEFAULT_GAP_THRESHOLD_S,
            "column_map": dict(DEFAULT_COLUMN_MAP),
        },
        "ingest",
    )
    eng = _take(
        top["engagement"] or {},
        {
            "delta_m": EngagementParams().delta,
            "delta_prime_m": EngagementParams().delta_prime,
            "tau_s": EngagementParams().tau,
            "theta_default_kn": EngagementParams().theta_default,
            "theta_kn": {},
            "min_duration_s": EngagementParams().min_duration,
        },
        "engagement",
    )
    model = _take(
        top["model"] or {},
        {
            "num_states": DEFAULT_NUM_STATES,
            "codebook_size": DEFAULT_K,
            "max_jump": DEFAULT_MAX_JUMP,
            "max_iterations": TrainConfig().max_iterations,
            "ll_tolerance": TrainConfig().ll_tolerance,
            "emission_floor": TrainConfig().emission_floor,
        },
        "model",
    )
    svm = _take(
        top["svm"] or {},
        {
            "c": SvmConfig().C,
            "kernel": KernelSpec().name,
            "gamma": None,
            "kkt_tolerance": SvmConfig().kkt_tolerance,
            "max_passes": SvmConfig().max_passes,
            "idle_sweeps": SvmConfig().idle_sweeps,
        },
        "svm",
    )
    ev = _take(top["evaluate"] or {}, {"folds": 10}, "evaluate")
    sim = _take(top["simulate"] or {}, {"samples_per_class": 200}, "simulate")
    anom = _take(
        top["anomaly"] or {},
        {
            "impact": None,
            "conflict_impact": ImpactTable().conflict_impact,
            "rules_path": None,
            "zones": [],
        },
        "anomaly",
    )

    zones = []
    for z in anom["zones"] or []:
        zspec = _take(z, {"name": None, "vertices": None}, "anomaly.zones entry")
        if not zspec["name"] or not zspec["vertices"]:
            raise InputError("every zone needs a name and vertices")
        vertices = tuple(GeoPoint(float(lat), float(lon)) for lat, lon in zspec["vertices"])
        zones.append(Zone(str(zspec["name"]), vertices))

    impact_values = anom["impact"]
    impact = ImpactTable(
        by_class={str(k): float(v) for k, v in impact_values.items()}
        if impact_values is not None
        else ImpactTable().by_class,
        conflict_impact=float(anom["conflict_impact"]),
    )

    return AppConfig(
        seed=int(top["seed"]),
        step_s=int(ing["step_s"]),
        gap_threshold_s=int(ing["gap_threshold_s"]),
        column_map={str(k): str(v) for k, v in (ing["column_map"] or {}).items()},
        engagement=EngagementParams(
            delta=float(eng["delta_m"]),
            delta_prime=float(eng["delta_prime_m"]),
            tau=float(eng["tau_s"]),
            theta={str(k): float(v) for k, v in (eng["theta_kn"] or {}).items()},
            theta_default=float(eng["theta_default_kn"]),
            min_duration=float(eng["min_duration_s"]),
        ),
        num_states=int(model["num_states"]),
        codebook_size=int(model["codebook_size"]),
        max_jump=int(model["max_jump"]),
        train=TrainConfig(
            max_iterations=int(model["max_iterations"]),
            ll_tolerance=float(model["ll_tolerance"]),
            emission_floor=float(model["emission_floor"]),
        ),
        svm=SvmConfig(
            C=float(svm["c"]),
            kernel=KernelSpec(
                name=str(svm["kernel"]),
                gamma=None if svm["gamma"] is None else float(svm["gamma"]),
            ),
            kkt_tolerance=float(svm["kkt_tolerance"]),
            max_passes=int(svm["max_passes"]),
            idle_sweeps=int(svm["idle_sweeps"]),
        ),
        folds=int(ev["folds"]),
        samples_per_class=int(sim["samples_per_class"]),
        impact=impact,
        rules_path=None if anom["rules_path"] is None else str(anom["rules_path"]),
        zones=tuple(zones),
    )


def load_config(path=None) -> AppConfig:
    """Defaults when no path is given; otherwise strict YAML parsing."""
    if path is None:
        return AppConfig()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise InputError(f"config {path} is not valid YAML: {exc}") from None
    if data is None:
        return AppConfig()
    if not isinstance(data, Mapping):
        raise InputError(f"config {path} must hold a mapping at the top level")
    return config_from_mapping(data)


def config_to_mapping(cfg: AppConfig) -> dict:
    """The resolved settings as one plain, serializable document."""
    return {
        "seed": cfg.seed,
        "ingest": {
            "step_s": cfg.step_s,
            "gap_threshold_s": cfg.gap_threshold_s,
            "column_map": dict(sorted(cfg.column_map.items())),
        },
        "engagement": {
            "delta_m": cfg.engagement.delta,
            "delta_prime_m": cfg.engagement.delta_prime,
            "tau_s": cfg.engagement.tau,
            "theta_default_kn": cfg.engagement.theta_default,
            "theta_kn": dict(sorted(cfg.engagement.theta.items())),
            "min_duration_s": cfg.engagement.min_duration,
        },
        "model": {
            "num_states": cfg.num_states,
            "codebook_size": cfg.codebook_size,
            "max_jump": cfg.max_jump,
            "max_iterations": cfg.train.max_iterations,
            "ll_tolerance": cfg.train.ll_tolerance,
            "emission_floor": cfg.train.emission_floor,
        },
        "svm": {
            "c": cfg.svm.C,
            "kernel": cfg.svm.kernel.name,
            "gamma": cfg.svm.kernel.gamma,
            "kkt_tolerance": cfg.svm.kkt_tolerance,
            "max_passes": cfg.svm.max_passes,
            "idle_sweeps": cfg.svm.idle_sweeps,
        },
        "evaluate": {"folds": cfg.folds},
        "simulate": {"samples_per_class": cfg.samples_per_class},
        "anomaly": {
            "impact": dict(sorted(cfg.impact.by_class.items())),
            "conflict_impact": cfg.impact.conflict_impact,
            "rules_path": cfg.rules_path,
            "zones": [
                {"name": z.name, "vertices": [[p.lat, p.lon] for p in z.vertices]}
                for z in cfg.zones
            ],
        },
    }


def config_hash(cfg: AppConfig) -> str:
    """Short digest of the resolved configuration."""
    text = json.dumps(config_to_mapping(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]
