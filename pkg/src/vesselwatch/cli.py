"""Batch command-line interface.

Seven subcommands cover the workflow end to end: ``ingest`` raw position
reports into a trajectory store, ``engage`` to detect candidate pairs,
``simulate`` to generate a labeled synthetic corpus, ``train`` and
``classify`` for the scenario models, ``evaluate`` for cross-validated
metrics, and ``alert`` to turn classifications into ranked alerts.

Contract shared by all commands:

* exit code 0 on success, 1 on bad input (unknown flag, unreadable file,
  schema mismatch), 2 on an internal invariant violation;
* failures print a single diagnostic line to stderr;
* output files are written atomically (temp file, then rename) and start
  with a comment header naming their schema plus the config hash and seed,
  so any file identifies the run that produced it;
* a run report (command, config hash, input digests, outputs, timings)
  goes to stdout on success. Timing lives only in the report, never in the
  files, so rerunning a command with the same inputs and seed reproduces
  the output files byte for byte.

``--jobs`` is accepted for interface stability but execution is currently
single-process; no command here is long enough to justify worker fan-out.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import os
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from . import __version__
from .anomaly import (
    Alert,
    Fact,
    calculate_impact,
    candidate_facts,
    default_rules,
    parse_rules,
    rank_alerts,
    verify_context,
    write_alerts_csv,
)
from .config import AppConfig, config_hash, load_config
from .engagement import (
    CandidatePair,
    detect_candidates,
    read_candidates_csv,
    write_candidates_csv,
)
from .errors import InputError, InvariantError
from .ingest import (
    Trajectory,
    build_trajectories,
    parse_ais_csv,
    read_trajectories_csv,
    resample,
    write_trajectories_csv,
)
from .pipeline import (
    Candidate,
    LabeledCandidate,
    ScenarioClass,
    classify,
    cross_validate,
    default_scenario_classes,
    format_evaluation_report,
    load_model,
    save_model,
    score,
    train_models,
)
from .simgen import (
    CorpusSpec,
    generate_corpus,
    manifest_rows,
    read_manifest_csv,
    write_ais_csv,
    write_manifest_csv,
)

__all__ = ["main"]

SCHEMA_TRAJECTORIES = "vesselwatch-trajectories/1"
SCHEMA_CANDIDATES = "vesselwatch-candidates/1"
SCHEMA_AIS = "vesselwatch-ais/1"
SCHEMA_MANIFEST = "vesselwatch-manifest/1"
SCHEMA_MODEL = "vesselwatch-model/1"
SCHEMA_CLASSIFICATIONS = "vesselwatch-classifications/1"
SCHEMA_EVALUATION = "vesselwatch-evaluation/1"
SCHEMA_ALERTS = "vesselwatch-alerts/1"

CLASSIFICATION_FIXED_COLUMNS = ["vessel_a", "vessel_b", "t_start", "t_end", "predicted_class"]


@dataclass
class RunReport:
    """What a successful command tells the caller about itself."""

    command: str
    config_digest: str
    seed: int
    inputs: list[tuple[str, str]] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    elapsed_s: float = 0.0

    def render(self) -> str:
        lines = [
            f"command: {self.command}",
            f"config: {self.config_digest}",
            f"seed: {self.seed}",
        ]
        lines += [f"input: {path} sha256={digest}" for path, digest in self.inputs]
        lines += list(self.notes)
        lines += [f"output: {path}" for path in self.outputs]
        lines.append(f"elapsed_s: {self.elapsed_s:.3f}")
        return "\n".join(lines)


class _Parser(argparse.ArgumentParser):
    """argparse that reports problems through the normal error path."""

    def error(self, message):
        raise InputError(message)


def _digest(path) -> str:
    h = hashlib.sha256()
    try:
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 16), b""):
                h.update(chunk)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    return h.hexdigest()[:12]


def _read_lines(path) -> list[str]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.readlines()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _header(schema: str, cfg: AppConfig) -> list[str]:
    return [f"{schema} config={config_hash(cfg)} seed={cfg.seed}"]


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _store_index(trajectories: Sequence[Trajectory]) -> dict[str, list[Trajectory]]:
    index: dict[str, list[Trajectory]] = {}
    for traj in trajectories:
        index.setdefault(traj.vessel_id, []).append(traj)
    return index


def _covering(index: dict[str, list[Trajectory]], vessel_id: str, t_start: int, t_end: int) -> Trajectory:
    for traj in index.get(vessel_id, ()):
        if traj.covers(t_start, t_end):
            return traj
    raise InputError(
        f"no trajectory for {vessel_id} covers [{t_start}, {t_end}]; "
        "candidates and store do not belong together"
    )


def _candidate(index: dict[str, list[Trajectory]], pair: CandidatePair) -> Candidate:
    return Candidate(
        pair=pair,
        traj_a=_covering(index, pair.vessel_a, pair.t_start, pair.t_end),
        traj_b=_covering(index, pair.vessel_b, pair.t_start, pair.t_end),
    )


def _classes_by_name() -> dict[str, ScenarioClass]:
    return {c.name: c for c in default_scenario_classes()}


def _labeled_from_manifest(store, rows) -> list[LabeledCandidate]:
    classes = _classes_by_name()
    index = _store_index(store)
    out = []
    for row in rows:
        if row.class_name not in classes:
            raise InputError(f"manifest sample {row.sample_id}: unknown class {row.class_name!r}")
        out.append(
            LabeledCandidate(
                pair=CandidatePair(row.vessel_a, row.vessel_b, row.t_start, row.t_end),
                traj_a=_covering(index, row.vessel_a, row.t_start, row.t_end),
                traj_b=_covering(index, row.vessel_b, row.t_start, row.t_end),
                label=classes[row.class_name],
            )
        )
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(args, cfg: AppConfig, report: RunReport) -> None:
    lines = _read_lines(args.csv)
    report.inputs.append((str(args.csv), _digest(args.csv)))
    records, rejections = parse_ais_csv(lines, column_map=cfg.column_map)
    raw = build_trajectories(records, gap_threshold=cfg.gap_threshold_s)
    resampled = [resample(t, cfg.step_s) for t in raw if len(t) >= 2]
    out = _out_dir(args) / "trajectories.csv"
    _write_atomic(out, write_trajectories_csv(resampled, _header(SCHEMA_TRAJECTORIES, cfg)))
    report.outputs.append(str(out))
    report.notes.append(f"records: {len(records)}")
    report.notes.append(f"rejected: {len(rejections)}")
    report.notes.append(f"trajectories: {len(resampled)}")
    for rej in rejections[:20]:
        report.notes.append(f"rejection: {rej.format()}")


def cmd_engage(args, cfg: AppConfig, report: RunReport) -> None:
    store = read_trajectories_csv(_read_lines(args.store))
    report.inputs.append((str(args.store), _digest(args.store)))
    candidates = detect_candidates(store, cfg.engagement)
    out = _out_dir(args) / "candidates.csv"
    _write_atomic(out, write_candidates_csv(candidates, _header(SCHEMA_CANDIDATES, cfg)))
    report.outputs.append(str(out))
    report.notes.append(f"candidates: {len(candidates)}")


def cmd_simulate(args, cfg: AppConfig, report: RunReport) -> None:
    per_class = args.per_class if args.per_class is not None else cfg.samples_per_class
    if per_class < 1:
        raise InputError(f"--per-class must be >= 1, got {per_class}")
    spec = CorpusSpec.uniform(per_class, dt=cfg.step_s)
    scenarios = generate_corpus(spec, cfg.seed)
    trajectories = []
    for s in scenarios:
        trajectories.append(s.candidate.traj_a)
        trajectories.append(s.candidate.traj_b)
    out_dir = _out_dir(args)
    ais_path = out_dir / "ais.csv"
    manifest_path = out_dir / "manifest.csv"
    store_path = out_dir / "trajectories.csv"
    _write_atomic(ais_path, write_ais_csv(trajectories, _header(SCHEMA_AIS, cfg)))
    _write_atomic(
        manifest_path, write_manifest_csv(manifest_rows(scenarios), _header(SCHEMA_MANIFEST, cfg))
    )
    # The store duplicates the AIS file's content in resampled form so the
    # detection and training commands can run on simulated data directly.
    _write_atomic(store_path, write_trajectories_csv(trajectories, _header(SCHEMA_TRAJECTORIES, cfg)))
    report.outputs += [str(ais_path), str(manifest_path), str(store_path)]
    report.notes.append(f"samples: {len(scenarios)}")


def _join_candidates(candidates, rows):
    """Label detected candidates against manifest truth.

    A candidate takes the label of the manifest row with the same vessel
    pair and the largest time overlap; candidates overlapping no row and
    rows matched by no candidate are counted, not errors, since detection
    on noisy data legitimately misses or fragments some encounters.
    """
    matched = []
    used = set()
    for cand in candidates:
        best = None
        best_overlap = -1
        for i, row in enumerate(rows):
            if (row.vessel_a, row.vessel_b) != (cand.vessel_a, cand.vessel_b):
                continue
            overlap = min(cand.t_end, row.t_end) - max(cand.t_start, row.t_start)
            if overlap >= 0 and overlap > best_overlap:
                best, best_overlap = i, overlap
        if best is None:
            continue
        used.add(best)
        matched.append((cand, rows[best]))
    return matched, len(candidates) - len(matched), len(rows) - len(used)


def cmd_train(args, cfg: AppConfig, report: RunReport) -> None:
    store = read_trajectories_csv(_read_lines(args.store))
    rows = read_manifest_csv(_read_lines(args.manifest))
    report.inputs.append((str(args.store), _digest(args.store)))
    report.inputs.append((str(args.manifest), _digest(args.manifest)))
    if args.candidates is not None:
        candidates = read_candidates_csv(_read_lines(args.candidates))
        report.inputs.append((str(args.candidates), _digest(args.candidates)))
        matched, unmatched_cands, unmatched_rows = _join_candidates(candidates, rows)
        classes = _classes_by_name()
        index = _store_index(store)
        corpus = []
        for cand, row in matched:
            if row.class_name not in classes:
                raise InputError(
                    f"manifest sample {row.sample_id}: unknown class {row.class_name!r}"
                )
            corpus.append(
                LabeledCandidate(
                    pair=cand,
                    traj_a=_covering(index, cand.vessel_a, cand.t_start, cand.t_end),
                    traj_b=_covering(index, cand.vessel_b, cand.t_start, cand.t_end),
                    label=classes[row.class_name],
                )
            )
        report.notes.append(f"matched: {len(matched)}")
        report.notes.append(f"unmatched_candidates: {unmatched_cands}")
        report.notes.append(f"unmatched_manifest_rows: {unmatched_rows}")
    else:
        corpus = _labeled_from_manifest(store, rows)
        report.notes.append(f"matched: {len(corpus)}")
    if not corpus:
        raise InputError("no labeled candidates to train on")
    bank, svm_model = train_models(
        corpus,
        num_states=cfg.num_states,
        codebook_size=cfg.codebook_size,
        max_jump=cfg.max_jump,
        train_cfg=cfg.train,
        svm_cfg=cfg.svm,
        seed=cfg.seed,
    )
    out = _out_dir(args) / "model.json"
    tmp = out.with_name(out.name + ".tmp")
    save_model(tmp, bank, svm_model, header=_header(SCHEMA_MODEL, cfg))
    os.replace(tmp, out)
    report.outputs.append(str(out))
    report.notes.append(f"trained_on: {len(corpus)}")


def cmd_classify(args, cfg: AppConfig, report: RunReport) -> None:
    bank, svm_model = load_model(args.model)
    store = read_trajectories_csv(_read_lines(args.store))
    candidates = read_candidates_csv(_read_lines(args.candidates))
    report.inputs.append((str(args.model), _digest(args.model)))
    report.inputs.append((str(args.store), _digest(args.store)))
    report.inputs.append((str(args.candidates), _digest(args.candidates)))
    index = _store_index(store)
    n_types = len(bank.obs_types)
    score_cols = [f"score_{c.name}_{x}" for c in bank.classes for x in range(n_types)]
    lines = ["# " + h for h in _header(SCHEMA_CLASSIFICATIONS, cfg)]
    lines.append(",".join(CLASSIFICATION_FIXED_COLUMNS + score_cols))
    for pair in candidates:
        cand = _candidate(index, pair)
        vec = score(bank, cand)
        predicted = classify(bank, svm_model, cand)
        values = ",".join(repr(float(v)) for v in vec.vector())
        lines.append(
            f"{pair.vessel_a},{pair.vessel_b},{pair.t_start},{pair.t_end},"
            f"{predicted.name},{values}"
        )
    out = _out_dir(args) / "classifications.csv"
    _write_atomic(out, "\n".join(lines) + "\n")
    report.outputs.append(str(out))
    report.notes.append(f"classified: {len(candidates)}")


def cmd_evaluate(args, cfg: AppConfig, report: RunReport) -> None:
    store = read_trajectories_csv(_read_lines(args.store))
    rows = read_manifest_csv(_read_lines(args.manifest))
    report.inputs.append((str(args.store), _digest(args.store)))
    report.inputs.append((str(args.manifest), _digest(args.manifest)))
    corpus = _labeled_from_manifest(store, rows)
    k = args.folds if args.folds is not None else cfg.folds
    result = cross_validate(
        corpus,
        k=k,
        seed=cfg.seed,
        num_states=cfg.num_states,
        codebook_size=cfg.codebook_size,
        max_jump=cfg.max_jump,
        train_cfg=cfg.train,
        svm_cfg=cfg.svm,
        keep_fold_models=False,
    )
    text = format_evaluation_report(result.confusion, result.summary)
    header = "".join(f"# {h}\n" for h in _header(SCHEMA_EVALUATION, cfg))
    out = _out_dir(args) / "evaluation.csv"
    _write_atomic(out, header + text)
    report.outputs.append(str(out))
    report.notes.append(f"samples: {len(corpus)}")
    report.notes.append(f"folds: {k}")
    if result.summary.accuracy is not None:
        report.notes.append(f"accuracy: {result.summary.accuracy:.4f}")


def _read_classifications(lines) -> list[tuple[CandidatePair, str]]:
    rows = (ln for ln in lines if ln.strip() and not ln.lstrip().startswith("#"))
    reader = csv.reader(rows)
    header = next(reader, None)
    if header is None:
        raise InputError("empty classifications file")
    if [h.strip() for h in header[: len(CLASSIFICATION_FIXED_COLUMNS)]] != CLASSIFICATION_FIXED_COLUMNS:
        raise InputError("unrecognized classifications header")
    out = []
    for row in reader:
        out.append((CandidatePair(row[0], row[1], int(row[2]), int(row[3])), row[4]))
    return out


def _facts_from_file(path) -> set[Fact]:
    """Extra context facts, written with the rule syntax but bodies empty."""
    clauses = parse_rules(_read_lines(path))
    facts = set()
    for clause in clauses:
        if clause.body:
            raise InputError(f"facts file {path}: only ground facts allowed, found a rule")
        facts.add(Fact(clause.head.name, tuple(str(a) for a in clause.head.args)))
    return facts


def cmd_alert(args, cfg: AppConfig, report: RunReport) -> None:
    classified = _read_classifications(_read_lines(args.classifications))
    store = read_trajectories_csv(_read_lines(args.store))
    report.inputs.append((str(args.classifications), _digest(args.classifications)))
    report.inputs.append((str(args.store), _digest(args.store)))

    rules_path = args.rules if args.rules is not None else cfg.rules_path
    if rules_path is not None:
        rules = parse_rules(_read_lines(rules_path))
        report.inputs.append((str(rules_path), _digest(rules_path)))
    else:
        rules = default_rules()

    extra_facts: set[Fact] = set()
    if args.facts is not None:
        extra_facts = _facts_from_file(args.facts)
        report.inputs.append((str(args.facts), _digest(args.facts)))

    classes = _classes_by_name()
    index = _store_index(store)
    alerts = []
    for pair, class_name in classified:
        if class_name not in classes:
            raise InputError(f"classifications name unknown class {class_name!r}")
        detected = classes[class_name]
        cand = _candidate(index, pair)
        facts = candidate_facts(cand, detected, zones=cfg.zones) | extra_facts
        verdict = verify_context(detected, facts, rules)
        impact = calculate_impact(verdict, detected, cfg.impact)
        alerts.append(Alert(pair=pair, detected_class=detected, verdict=verdict, impact=impact))
    ranked = rank_alerts(alerts)
    out = _out_dir(args) / "alerts.csv"
    _write_atomic(out, write_alerts_csv(ranked, _header(SCHEMA_ALERTS, cfg)))
    report.outputs.append(str(out))
    report.notes.append(f"alerts: {len(ranked)}")
    report.notes.append(f"conflicts: {sum(1 for a in ranked if a.verdict.status == 'conflict')}")


# ---------------------------------------------------------------------------
# wiring


def _build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="FILE", default=None, help="YAML config file")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory")
    common.add_argument(
        "--jobs",
        type=int,
        default=1,
        help="worker count (accepted for compatibility; runs single-process)",
    )

    parser = _Parser(prog="vesselwatch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"vesselwatch {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", parents=[common], help="AIS CSV to trajectory store")
    p.add_argument("csv", help="raw AIS position reports")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("engage", parents=[common], help="detect candidate pairs in a store")
    p.add_argument("store", help="trajectory store CSV")
    p.set_defaults(func=cmd_engage)

    p = sub.add_parser("simulate", parents=[common], help="generate a labeled synthetic corpus")
    p.add_argument("--per-class", type=int, default=None, help="samples per scenario class")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", parents=[common], help="fit the model bank and classifier")
    p.add_argument("store", help="trajectory store CSV")
    p.add_argument("manifest", help="label manifest CSV")
    p.add_argument(
        "--candidates",
        default=None,
        help="detected candidates to label by overlap (default: manifest windows)",
    )
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", parents=[common], help="classify candidate pairs")
    p.add_argument("model", help="trained model file")
    p.add_argument("store", help="trajectory store CSV")
    p.add_argument("candidates", help="candidate pairs CSV")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate", parents=[common], help="cross-validated metrics on a corpus")
    p.add_argument("store", help="trajectory store CSV")
    p.add_argument("manifest", help="label manifest CSV")
    p.add_argument("--folds", type=int, default=None, help="override the fold count")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("alert", parents=[common], help="rank classified candidates by impact")
    p.add_argument("classifications", help="classifications CSV")
    p.add_argument("store", help="trajectory store CSV")
    p.add_argument("--rules", default=None, help="rule file (default: built-in rules)")
    p.add_argument("--facts", default=None, help="extra ground facts, rule syntax")
    p.set_defaults(func=cmd_alert)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        if args.jobs < 1:
            raise InputError(f"--jobs must be >= 1, got {args.jobs}")
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        report = RunReport(command=args.command, config_digest=config_hash(cfg), seed=cfg.seed)
        if args.config is not None:
            report.inputs.append((str(args.config), _digest(args.config)))
        started = time.perf_counter()
        args.func(args, cfg, report)
        report.elapsed_s = time.perf_counter() - started
        print(report.render())
        return 0
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, IndexError, KeyError) as exc:
        print(f"error: malformed input: {exc!r}", file=sys.stderr)
        return 1
    except InvariantError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
