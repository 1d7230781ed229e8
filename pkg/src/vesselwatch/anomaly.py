"""Context verification, impact scoring, and alert ranking.

The detected scenario class is checked against contextual facts with a small
rule engine: range-restricted Horn clauses with negation over input facts
only, evaluated bottom-up to a fixpoint. That fragment is decidable and
deterministic while still expressing the checks that matter here, such as
vessel-type compatibility and restricted zones. A derived ``conflict/2``
atom means the kinematic classification disagrees with the context; those
alerts outrank every confirmed one, and within each group alerts are ordered
by impact.

Rule syntax, one clause per line::

    # comment
    head.
    head :- lit1, lit2, not lit3.

Identifiers starting with an uppercase letter are variables; everything else
is a constant (single quotes allow constants that would otherwise look like
variables). Every head variable must occur in a positive body literal, every
variable of a negated literal too, and a negated predicate must never occur
in any rule head.
"""
from __future__ import annotations

import io
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .engagement import CandidatePair
from .errors import InputError
from .geo import GeoPoint
from .ingest import Trajectory
from .pipeline import Candidate, ScenarioClass, default_scenario_classes

__all__ = [
    "Fact",
    "Var",
    "Atom",
    "Literal",
    "Rule",
    "parse_rules",
    "validate_ruleset",
    "infer",
    "Verdict",
    "verify_context",
    "ImpactTable",
    "calculate_impact",
    "Alert",
    "rank_alerts",
    "Zone",
    "point_in_polygon",
    "candidate_facts",
    "DEFAULT_RULES_TEXT",
    "default_rules",
    "ALERT_CSV_COLUMNS",
    "write_alerts_csv",
]


@dataclass(frozen=True)
class Fact:
    """A ground atom: predicate name plus constant arguments."""

    name: str
    args: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.name:
            raise InputError("fact needs a predicate name")
        object.__setattr__(self, "args", tuple(str(a) for a in self.args))

    def __str__(self) -> str:
        return f"{self.name}({', '.join(self.args)})" if self.args else self.name


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Atom:
    """A predicate applied to constants and variables."""

    name: str
    args: tuple = ()

    def variables(self) -> set[str]:
        return {a.name for a in self.args if isinstance(a, Var)}


@dataclass(frozen=True)
class Literal:
    atom: Atom
    positive: bool = True


@dataclass(frozen=True)
class Rule:
    """``head :- body``; an empty body makes the head an unconditional fact."""

    head: Atom
    body: tuple[Literal, ...] = ()

    def __post_init__(self):
        positive_vars: set[str] = set()
        for lit in self.body:
            if lit.positive:
                positive_vars |= lit.atom.variables()
        unbound = self.head.variables() - positive_vars
        if unbound:
            raise InputError(
                f"head variables {sorted(unbound)} not bound by any positive body literal"
            )
        for lit in self.body:
            if not lit.positive:
                loose = lit.atom.variables() - positive_vars
                if loose:
                    raise InputError(
                        f"negated literal {lit.atom.name} uses unbound variables {sorted(loose)}"
                    )


def validate_ruleset(rules: Sequence[Rule]) -> None:
    """Negation is only allowed over predicates that no rule derives."""
    heads = {r.head.name for r in rules}
    for r in rules:
        for lit in r.body:
            if not lit.positive and lit.atom.name in heads:
                raise InputError(
                    f"negation over derived predicate {lit.atom.name!r} is not allowed"
                )


_TOKEN = re.compile(r"[A-Za-z_][A-Za-z0-9_]*|'[^']*'|[0-9][A-Za-z0-9_.:+-]*")


def _parse_term(text: str, where: str):
    text = text.strip()
    if not text or not _TOKEN.fullmatch(text):
        raise InputError(f"{where}: bad term {text!r}")
    if text.startswith("'"):
        return text[1:-1]
    if text[0].isupper():
        return Var(text)
    return text


def _parse_atom(text: str, where: str) -> Atom:
    text = text.strip()
    m = re.fullmatch(r"([a-z_][A-Za-z0-9_]*)\s*(?:\((.*)\))?", text, re.DOTALL)
    if not m:
        raise InputError(f"{where}: bad atom {text!r}")
    name, inner = m.group(1), m.group(2)
    if inner is None:
        return Atom(name)
    args = tuple(_parse_term(part, where) for part in inner.split(","))
    return Atom(name, args)


def _split_literals(text: str, where: str) -> list[str]:
    """Split on commas that are not inside parentheses."""
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise InputError(f"{where}: unbalanced parentheses")
        elif ch == "," and depth == 0:
            parts.append(text[start:i])
            start = i + 1
    if depth != 0:
        raise InputError(f"{where}: unbalanced parentheses")
    parts.append(text[start:])
    return parts


def parse_rules(text: str | Iterable[str]) -> list[Rule]:
    """Parse a rule file; a bad clause reports its line number."""
    lines = text.splitlines() if isinstance(text, str) else list(text)
    rules: list[Rule] = []
    for no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        where = f"line {no}"
        if not line.endswith("."):
            raise InputError(f"{where}: clause does not end with '.'")
        line = line[:-1].strip()
        if ":-" in line:
            head_text, body_text = line.split(":-", 1)
            body = []
            for part in _split_literals(body_text, where):
                part = part.strip()
                positive = True
                if part.startswith("not "):
                    positive = False
                    part = part[4:]
                body.append(Literal(_parse_atom(part, where), positive))
            body_t = tuple(body)
        else:
            head_text, body_t = line, ()
        try:
            rule = Rule(_parse_atom(head_text, where), body_t)
        except InputError as exc:
            raise InputError(f"{where}: {exc}") from None
        rules.append(rule)
    validate_ruleset(rules)
    return rules


def _match(atom: Atom, fact: Fact, binding: dict) -> dict | None:
    if atom.name != fact.name or len(atom.args) != len(fact.args):
        return None
    out = binding
    for term, value in zip(atom.args, fact.args):
        if isinstance(term, Var):
            bound = out.get(term.name)
            if bound is None:
                if out is binding:
                    out = dict(binding)
                out[term.name] = value
            elif bound != value:
                return None
        elif term != value:
            return None
    return out if out is not binding else dict(binding)


def _ground(atom: Atom, binding: Mapping) -> Fact:
    args = []
    for term in atom.args:
        if isinstance(term, Var):
            args.append(binding[term.name])
        else:
            args.append(term)
    return Fact(atom.name, tuple(args))


def _satisfy(
    body: Sequence[Literal], known: set, base: frozenset, binding: dict
) -> Iterator[dict]:
    if not body:
        yield binding
        return
    first, rest = body[0], body[1:]
    if first.positive:
        for fact in known:
            extended = _match(first.atom, fact, binding)
            if extended is not None:
                yield from _satisfy(rest, known, base, extended)
    else:
        if _ground(first.atom, binding) not in base:
            yield from _satisfy(rest, known, base, binding)


def infer(facts: Iterable[Fact], rules: Sequence[Rule]) -> set[Fact]:
    """Forward chain to the least fixpoint.

    Negated literals are checked against the input fact set only; together
    with the ruleset validation this keeps the semantics stratified and
    order-independent.
    """
    validate_ruleset(rules)
    base = frozenset(facts)
    known = set(base)
    changed = True
    while changed:
        changed = False
        for rule in rules:
            for binding in list(_satisfy(rule.body, known, base, {})):
                fact = _ground(rule.head, binding)
                if fact not in known:
                    known.add(fact)
                    changed = True
    return known


@dataclass(frozen=True)
class Verdict:
    """Either ``confirmed`` or ``conflict`` with the derived reason atom."""

    status: str
    reason: str | None = None

    def __post_init__(self):
        if self.status not in ("confirmed", "conflict"):
            raise InputError(f"unknown verdict status {self.status!r}")
        if self.status == "conflict" and not self.reason:
            raise InputError("conflict verdict needs a reason")
        if self.status == "confirmed" and self.reason is not None:
            raise InputError("confirmed verdict carries no reason")

    @property
    def is_conflict(self) -> bool:
        return self.status == "conflict"

    @classmethod
    def confirmed(cls) -> "Verdict":
        return cls("confirmed")

    @classmethod
    def conflict(cls, reason: str) -> "Verdict":
        return cls("conflict", reason)


def verify_context(
    detected: ScenarioClass, facts: Iterable[Fact], rules: Sequence[Rule]
) -> Verdict:
    """Run the rules; any derived ``conflict(pair, Reason)`` beats confirmed.

    When several conflict atoms are derived for the pair, the
    lexicographically smallest reason is reported, so the verdict does not
    depend on rule order.
    """
    facts = set(facts)
    scenario = [
        f for f in facts if f.name == "scenario" and len(f.args) == 2 and f.args[1] == detected.atom
    ]
    if not scenario:
        raise InputError(
            f"facts lack scenario(pair, {detected.atom}) for the detected class"
        )
    pairs = {f.args[0] for f in scenario}
    if len(pairs) > 1:
        raise InputError("facts mention more than one pair for the detected class")
    pair = pairs.pop()
    derived = infer(facts, rules)
    reasons = sorted(
        f.args[1]
        for f in derived
        if f.name == "conflict" and len(f.args) == 2 and f.args[0] == pair
    )
    if reasons:
        return Verdict.conflict(reasons[0])
    return Verdict.confirmed()


def _default_impact_values() -> dict:
    return {c.name: 0.5 for c in default_scenario_classes()}


@dataclass(frozen=True)
class ImpactTable:
    """Expert-assigned severity per class plus the conflict floor.

    The shipped defaults are deliberately flat placeholders; operators are
    expected to edit them, since no defensible per-class numbers exist
    a priori.
    """

    by_class: Mapping[str, float] = field(default_factory=_default_impact_values)
    conflict_impact: float = 0.5

    def __post_init__(self):
        values = dict(self.by_class)
        for name, value in values.items():
            if not 0.0 <= float(value) <= 1.0:
                raise InputError(f"impact for class {name} out of [0, 1]: {value}")
            values[name] = float(value)
        if not 0.0 <= self.conflict_impact <= 1.0:
            raise InputError(f"conflict_impact out of [0, 1]: {self.conflict_impact}")
        object.__setattr__(self, "by_class", values)


def calculate_impact(verdict: Verdict, detected: ScenarioClass, table: ImpactTable) -> float:
    """Confirmed scenarios score their class; conflicts at least the floor."""
    if detected.name not in table.by_class:
        raise InputError(f"class {detected.name} missing from the impact table")
    base = table.by_class[detected.name]
    if verdict.is_conflict:
        return max(base, table.conflict_impact)
    return base


@dataclass(frozen=True)
class Alert:
    """One ranked report line for a classified candidate."""

    pair: CandidatePair
    detected_class: ScenarioClass
    verdict: Verdict
    impact: float
    rank: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.impact <= 1.0:
            raise InputError(f"impact out of [0, 1]: {self.impact}")
        if self.rank is not None and self.rank < 1:
            raise InputError(f"rank must be positive, got {self.rank}")

    @property
    def candidate_id(self) -> str:
        p = self.pair
        return f"{p.vessel_a}:{p.vessel_b}:{p.t_start}"


def rank_alerts(alerts: Iterable[Alert]) -> list[Alert]:
    """Conflicts first, then impact descending, then candidate id."""
    ordered = sorted(
        alerts,
        key=lambda a: (0 if a.verdict.is_conflict else 1, -a.impact, a.candidate_id),
    )
    return [replace(a, rank=i) for i, a in enumerate(ordered, start=1)]


@dataclass(frozen=True)
class Zone:
    """A named polygon in geographic coordinates."""

    name: str
    vertices: tuple[GeoPoint, ...]

    def __post_init__(self):
        if len(self.vertices) < 3:
            raise InputError(f"zone {self.name!r} needs at least 3 vertices")


def point_in_polygon(lat: float, lon: float, vertices: Sequence[GeoPoint]) -> bool:
    """Ray casting in plain lat/lon coordinates; the boundary counts as inside.

    Zones are assumed small enough that treating degrees as planar is fine,
    and must not cross the antimeridian.
    """
    n = len(vertices)
    inside = False
    for i in range(n):
        a = vertices[i]
        b = vertices[(i + 1) % n]
        # boundary check: point on segment a-b
        cross = (b.lon - a.lon) * (lat - a.lat) - (b.lat - a.lat) * (lon - a.lon)
        if (
            abs(cross) < 1e-12
            and min(a.lat, b.lat) - 1e-12 <= lat <= max(a.lat, b.lat) + 1e-12
            and min(a.lon, b.lon) - 1e-12 <= lon <= max(a.lon, b.lon) + 1e-12
        ):
            return True
        if (a.lat > lat) != (b.lat > lat):
            x = a.lon + (lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat)
            if lon < x:
                inside = not inside
    return inside


def _window_indices(traj: Trajectory, t_start: int, t_end: int):
    i0 = int(np.searchsorted(traj.timestamps, t_start))
    i1 = int(np.searchsorted(traj.timestamps, t_end, side="right"))
    return range(i0, i1)


def candidate_facts(
    candidate: Candidate,
    detected: ScenarioClass,
    zones: Sequence[Zone] = (),
) -> set[Fact]:
    """The standard context facts for one classified candidate.

    ``pair/3``, ``type/2`` and ``has_type/2`` describe the vessels;
    ``scenario/2`` carries the kinematic classification; ``in_zone/2`` is
    added for every zone either vessel enters during the interval.
    """
    pair = candidate.pair
    pid = f"{pair.vessel_a}:{pair.vessel_b}:{pair.t_start}"
    type_a = candidate.traj_a.meta.vessel_type
    type_b = candidate.traj_b.meta.vessel_type
    facts = {
        Fact("pair", (pid, pair.vessel_a, pair.vessel_b)),
        Fact("type", (pair.vessel_a, type_a)),
        Fact("type", (pair.vessel_b, type_b)),
        Fact("has_type", (pid, type_a)),
        Fact("has_type", (pid, type_b)),
        Fact("scenario", (pid, detected.atom)),
    }
    for zone in zones:
        hit = False
        for traj in (candidate.traj_a, candidate.traj_b):
            for i in _window_indices(traj, pair.t_start, pair.t_end):
                if point_in_polygon(float(traj.lat[i]), float(traj.lon[i]), zone.vertices):
                    hit = True
                    break
            if hit:
                break
        if hit:
            facts.add(Fact("in_zone", (pid, zone.name)))
    return facts


DEFAULT_RULES_TEXT = """\
# Context checks applied to every classified candidate.
# A derived conflict(Pair, Reason) atom flags the classification as suspect.

# A pilot-transfer classification without any pilot vessel in the pair.
conflict(P, no_pilot) :- scenario(P, class_b), not has_type(P, pilot).

# A tug-assistance classification without a tug or towing vessel.
conflict(P, no_service_vessel) :- scenario(P, class_a), not has_type(P, tug), not has_type(P, towing).

# Transshipment inside a restricted zone.
conflict(P, restricted_zone) :- scenario(P, class_c), in_zone(P, restricted).
"""


def default_rules() -> list[Rule]:
    return parse_rules(DEFAULT_RULES_TEXT)


ALERT_CSV_COLUMNS = ["rank", "pair", "detected_class", "verdict", "reason", "impact"]


def write_alerts_csv(alerts: Sequence[Alert], header_lines: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    buf.write(",".join(ALERT_CSV_COLUMNS) + "\n")
    for a in alerts:
        reason = a.verdict.reason or ""
        buf.write(
            f"{a.rank if a.rank is not None else ''},{a.candidate_id},"
            f"{a.detected_class.name},{a.verdict.status},{reason},{float(a.impact)!r}\n"
        )
    return buf.getvalue()
