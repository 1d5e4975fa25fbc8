"""Backward attribution traces over data snapshots.

A trace starts at a trigger question, walks its chains from Results toward
Long-term, fires the dual-track rules each dimension is allowed to fire,
and records what it saw. It never writes prose of its own beyond fixed
labels; every sentence in a report comes from a rule output, a template or
a snapshot value.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from datetime import date, datetime
from decimal import Decimal
from pathlib import Path
from typing import Any, Iterable, Mapping, Union

from .conditions import ConditionEvalError, evaluate
from .loader import load_yaml
from .model import Authority, Dimension, FourDSpec, authority_for

Value = Union[Decimal, str, bool]

IDENTIFIER = re.compile(r"^[a-z][a-z0-9_]*$")

NOTE = "Strategic resource allocation decisions require management review."

DIMENSION_HEADINGS = {
    Dimension.RESULTS: "Results",
    Dimension.PROCESS: "Process Attribution",
    Dimension.SUPPORT: "Support Context",
    Dimension.LONGTERM: "Long-term Context",
}

PERIOD_DAYS = {"daily": 1, "weekly": 7, "monthly": 31, "quarterly": 92}

_SLA = re.compile(r"^[TMQ]\+(\d+)$")


class SnapshotError(ValueError):
    pass


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class DataSnapshot:
    snapshot_id: str
    bindings: Mapping[str, Mapping[str, Value]]
    context: Mapping[str, Value] = field(default_factory=dict)
    as_of: Mapping[str, date] = field(default_factory=dict)
    evaluated_on: date | None = None

    def has(self, qid: str) -> bool:
        return qid in self.bindings

    def scope(self, qid: str) -> dict[str, Value]:
        """Context merged with the question's own bindings (question wins)."""
        out = dict(self.context)
        out.update(self.bindings.get(qid, {}))
        return out


def _value(raw: Any, where: str) -> Value:
    if isinstance(raw, bool):
        return raw
    if isinstance(raw, int):
        return Decimal(raw)
    if isinstance(raw, Decimal):
        if not raw.is_finite():
            raise SnapshotError(f"{where}: non-finite number")
        return raw
    if isinstance(raw, float):
        return Decimal(repr(raw))
    if isinstance(raw, str):
        return raw
    raise SnapshotError(f"{where}: expected number, string or boolean, got {type(raw).__name__}")


def _bindings(raw: Any, where: str) -> dict[str, Value]:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise SnapshotError(f"{where}: expected a mapping of variable to value")
    out = {}
    for k, v in raw.items():
        if not isinstance(k, str) or not IDENTIFIER.match(k):
            raise SnapshotError(f"{where}: invalid variable name {k!r}")
        out[k] = _value(v, f"{where}.{k}")
    return out


def _date(raw: Any, where: str) -> date:
    if isinstance(raw, datetime):
        return raw.date()
    if isinstance(raw, date):
        return raw
    try:
        return date.fromisoformat(str(raw))
    except ValueError:
        raise SnapshotError(f"{where}: expected an ISO-8601 date, got {raw!r}") from None


def snapshot_from_dict(doc: Any, default_id: str = "snapshot") -> DataSnapshot:
    if not isinstance(doc, dict):
        raise SnapshotError("snapshot must be a mapping")
    default_as_of = _date(doc["as_of"], "as_of") if doc.get("as_of") is not None else None
    evaluated = _date(doc["evaluated_on"], "evaluated_on") if doc.get("evaluated_on") is not None else None
    questions = doc.get("questions", {})
    if not isinstance(questions, dict):
        raise SnapshotError("questions: expected a mapping of question id to bindings")
    bindings: dict[str, dict[str, Value]] = {}
    as_of: dict[str, date] = {}
    for qid, entry in questions.items():
        where = f"questions.{qid}"
        qid = str(qid)
        if isinstance(entry, dict) and isinstance(entry.get("values"), dict):
            bindings[qid] = _bindings(entry["values"], f"{where}.values")
            when = entry.get("as_of", default_as_of)
        else:
            bindings[qid] = _bindings(entry, where)
            when = default_as_of
        if when is not None:
            as_of[qid] = _date(when, f"{where}.as_of")
    return DataSnapshot(
        snapshot_id=str(doc.get("snapshot_id", default_id)),
        bindings=bindings,
        context=_bindings(doc.get("context"), "context"),
        as_of=as_of,
        evaluated_on=evaluated,
    )


def load_snapshot(path: str | Path) -> DataSnapshot:
    p = Path(path)
    try:
        doc = load_yaml(p.read_text(encoding="utf-8"))
    except OSError as exc:
        raise SnapshotError(f"cannot read snapshot {p}: {exc}") from None
    except Exception as exc:  # yaml errors
        raise SnapshotError(f"malformed snapshot {p.name}: {exc}") from None
    return snapshot_from_dict(doc, default_id=p.stem)


def format_value(v: Value) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, Decimal):
        return format(v, "f")
    return v


# ---------------------------------------------------------------- report types


@dataclass(frozen=True)
class TraceStep:
    kind: str  # Thought | Action | Observation
    text: str

    def __str__(self) -> str:
        return f"{self.kind}: {self.text}"


@dataclass(frozen=True)
class QuestionFinding:
    question_id: str
    dimension: Dimension
    label: str
    group: str
    available: bool
    values: tuple[tuple[str, Value], ...] = ()
    interpretations: tuple[str, ...] = ()
    recommendations: tuple[str, ...] = ()
    open_suggestion: str | None = None
    as_of: date | None = None

    @property
    def heading(self) -> str:
        return f"{self.question_id} ({self.label})" if self.label else self.question_id

    def observation(self) -> str:
        if not self.available:
            return "data unavailable"
        return ", ".join(f"{k} {format_value(v)}" for k, v in self.values) or "no values"


@dataclass(frozen=True)
class AttributionReport:
    trigger: str
    queried_dimension: Dimension
    snapshot_id: str
    findings: tuple[QuestionFinding, ...]
    covered_dimensions: tuple[Dimension, ...]
    caveats: tuple[str, ...] = ()
    step_log: tuple[TraceStep, ...] = ()
    note: str = NOTE

    def finding(self, qid: str) -> QuestionFinding:
        for f in self.findings:
            if f.question_id == qid:
                return f
        raise KeyError(qid)

    def interpretations(self) -> list[str]:
        return [t for f in self.findings for t in f.interpretations]

    def recommendations(self) -> list[tuple[str, str]]:
        return [(f.question_id, t) for f in self.findings for t in f.recommendations]


@dataclass(frozen=True)
class ReportMetrics:
    dimensions_covered: int
    causal_factors: int
    actionable_recommendations: int


# ---------------------------------------------------------------- rule firing


def fire_rules(
    spec: FourDSpec, qid: str, bindings: Mapping[str, Value], caveats: list[str] | None = None
) -> tuple[list[str], list[str]]:
    """Fire every matching rule of ``qid`` that its dimension may fire.

    Returns (interpretations, recommendations). An open-ended recommendation
    yields its template as the single entry. Rules that cannot be evaluated
    are skipped; a note goes to ``caveats`` when given.
    """
    q = spec.question(qid)
    p = q.dual_track
    if p is None:
        return [], []
    prof = authority_for(q.dimension)
    interps: list[str] = []
    recs: list[str] = []

    def run(rules, out: list[str], track: str) -> None:
        for rule in rules:
            try:
                hit = evaluate(rule.condition, bindings)
            except ConditionEvalError as exc:
                if caveats is not None:
                    caveats.append(f"{q.id} ({q.label}): a {track} rule was skipped ({exc})")
                continue
            if hit:
                out.append(rule.output)

    if p.interpretation_enabled and prof.allows_interpretation():
        run(p.interpretation_rules, interps, "interpretation")
    if p.recommendation_enabled and prof.allows_recommendation(p.recommendation_kind):
        if p.recommendation_kind is Authority.OPEN_ENDED:
            if p.open_template:
                recs.append(p.open_template.rstrip("\n"))
        else:
            run(p.recommendation_rules, recs, "recommendation")
    return interps, recs


# ---------------------------------------------------------------- tracing


def visit_plan(spec: FourDSpec, trigger: str) -> list[tuple[str, str]]:
    """(question id, group key) in visiting order, trigger first."""
    order: list[tuple[str, str]] = [(trigger, "trigger")]
    seen = {trigger}
    for chain in spec.graph.chains_for(trigger):
        for seg in chain.segments:
            for m in seg.members:
                if m not in seen:
                    seen.add(m)
                    order.append((m, seg.key))
    depth = {q.id: q.dimension.depth for q in spec.questions}
    head, rest = order[:1], order[1:]
    return head + sorted(rest, key=lambda item: depth[item[0]])  # stable


def _sla_days(sla: str) -> int:
    m = _SLA.match(sla or "")
    return int(m.group(1)) if m else 0


def _freshness_caveats(spec: FourDSpec, visited: list[QuestionFinding], when: date | None) -> list[str]:
    out: list[str] = []
    by_date: dict[date, list[str]] = {}
    for f in visited:
        if f.available and f.as_of is not None:
            by_date.setdefault(f.as_of, []).append(f.question_id)
    for d in sorted(by_date):
        out.append(f"Data as of {d.isoformat()}: {', '.join(by_date[d])}")
    undated = [f.question_id for f in visited if f.available and f.as_of is None]
    if undated:
        out.append(f"Data freshness not stated for {', '.join(undated)}")
    if when is None:
        return out
    for f in visited:
        if not f.available or f.as_of is None:
            continue
        m = spec.question(f.question_id).data_mapping
        if m is None:
            continue
        allowed = PERIOD_DAYS[m.update_frequency] + _sla_days(m.freshness_sla)
        if (when - f.as_of).days > allowed:
            out.append(
                f"{f.heading} data as of {f.as_of.isoformat()} may be stale "
                f"({m.update_frequency} source, SLA {m.freshness_sla})"
            )
    return out


def trace(spec: FourDSpec, trigger: str, snapshot: DataSnapshot, as_of: date | None = None) -> AttributionReport:
    if not spec.has_question(trigger):
        raise TraceError(f"unknown trigger question {trigger}")
    if not spec.graph.chains_for(trigger):
        raise TraceError(f"{trigger} has no attribution chain")
    if not snapshot.has(trigger):
        raise TraceError(f"snapshot {snapshot.snapshot_id!r} has no bindings for trigger {trigger}")

    caveats: list[str] = []
    findings: list[QuestionFinding] = []
    for qid, group in visit_plan(spec, trigger):
        q = spec.question(qid)
        if not snapshot.has(qid):
            findings.append(QuestionFinding(qid, q.dimension, q.short_name, group, False))
            caveats.append(f"{q.id} ({q.label}): data unavailable; not traced")
            continue
        interps, recs = fire_rules(spec, qid, snapshot.scope(qid), caveats)
        open_text = None
        if q.dimension is not Dimension.PROCESS:
            interps = []
            open_text = recs[0] if recs and authority_for(q.dimension).recommendation is Authority.OPEN_ENDED else None
            recs = []
        findings.append(QuestionFinding(
            qid, q.dimension, q.short_name, group, True,
            values=tuple(snapshot.bindings[qid].items()),
            interpretations=tuple(interps),
            recommendations=tuple(recs),
            open_suggestion=open_text,
            as_of=snapshot.as_of.get(qid),
        ))

    covered = {spec.question(trigger).dimension} | {f.dimension for f in findings if f.available}
    caveats = _freshness_caveats(spec, findings, as_of or snapshot.evaluated_on) + caveats
    report = AttributionReport(
        trigger=trigger,
        queried_dimension=spec.question(trigger).dimension,
        snapshot_id=snapshot.snapshot_id,
        findings=tuple(findings),
        covered_dimensions=tuple(sorted(covered, key=lambda d: d.depth)),
        caveats=tuple(caveats),
    )
    return replace(report, step_log=tuple(emit_react_log(report)))


def _plan_text(report: AttributionReport) -> str:
    dims: list[str] = []
    for f in report.findings[1:]:
        if f.dimension.title not in dims:
            dims.append(f.dimension.title)
    return " -> ".join([report.trigger, *dims])


def emit_react_log(report: AttributionReport) -> list[TraceStep]:
    steps = [TraceStep("Thought", f"Per attribution model, trace {_plan_text(report)}.")]
    prev: Dimension | None = None
    for f in report.findings:
        if prev is not None and f.dimension is not prev:
            steps.append(TraceStep("Thought", f"Check {f.dimension.title} factors per attribution chain."))
        prev = f.dimension
        steps.append(TraceStep("Action", f"Query {f.heading}"))
        obs = f.observation()
        if f.interpretations:
            obs += "; data indicates: " + "; ".join(f.interpretations)
        steps.append(TraceStep("Observation", obs))
    covered = ", ".join(d.title for d in report.covered_dimensions)
    steps.append(TraceStep("Thought", f"Covered dimensions: {covered}."))
    return steps


def compute_metrics(report: AttributionReport) -> ReportMetrics:
    return ReportMetrics(
        dimensions_covered=len(report.covered_dimensions),
        causal_factors=sum(len(f.interpretations) for f in report.findings),
        actionable_recommendations=sum(len(f.recommendations) for f in report.findings),
    )


# ---------------------------------------------------------------- rendering


def render_report_text(report: AttributionReport) -> str:
    head = next(f for f in report.findings if f.question_id == report.trigger)
    lines = [f"Attribution report for {head.heading}, snapshot {report.snapshot_id}", ""]
    for d in report.covered_dimensions:
        lines.append(f"{DIMENSION_HEADINGS[d]}:")
        for f in (f for f in report.findings if f.dimension is d):
            lines.append(f"- {f.heading}: {f.observation()}")
            lines += [f"  Data indicates: {t}" for t in f.interpretations]
            if f.open_suggestion:
                lines += ["  " + ln for ln in f.open_suggestion.split("\n")]
    lines.append("Recommendations:")
    recs = report.recommendations()
    lines += [f"- {t} ({qid})" for qid, t in recs] or ["- none from rule-based tracks"]
    lines.append(f"Note: {report.note}")
    lines.append("Caveats:")
    lines += [f"- {c}" for c in report.caveats] or ["- none"]
    return "\n".join(lines) + "\n"


def render_react_text(steps: Iterable[TraceStep]) -> str:
    return "".join(f"{s}\n" for s in steps)


def _json(obj: Any) -> str:
    """JSON with decimals written as exact number literals."""
    if isinstance(obj, Decimal):
        return format(obj, "f")
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_json(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_json(v) for v in obj) + "]"
    return json.dumps(obj, ensure_ascii=False)


def report_records(report: AttributionReport) -> list[dict]:
    recs: list[dict] = [{
        "record": "report",
        "trigger": report.trigger,
        "queried_dimension": report.queried_dimension.value,
        "snapshot_id": report.snapshot_id,
        "covered_dimensions": [d.value for d in report.covered_dimensions],
        "note": report.note,
    }]
    for f in report.findings:
        recs.append({
            "record": "finding",
            "question_id": f.question_id,
            "dimension": f.dimension.value,
            "label": f.label,
            "group": f.group,
            "available": f.available,
            "as_of": f.as_of.isoformat() if f.as_of else None,
            "values": dict(f.values),
            "interpretations": list(f.interpretations),
            "recommendations": list(f.recommendations),
            "open_suggestion": f.open_suggestion,
        })
    recs += [{"record": "caveat", "text": c} for c in report.caveats]
    recs += [{"record": "step", "kind": s.kind, "text": s.text} for s in report.step_log]
    return recs


def report_to_jsonl(report: AttributionReport) -> str:
    return "".join(_json(r) + "\n" for r in report_records(report))


def report_from_jsonl(text: str) -> AttributionReport:
    head: dict | None = None
    findings: list[QuestionFinding] = []
    caveats: list[str] = []
    steps: list[TraceStep] = []
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line, parse_float=Decimal, parse_int=Decimal)
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {n}: not a JSON record ({exc.msg})") from None
        kind = rec.get("record")
        if kind == "report":
            head = rec
        elif kind == "finding":
            findings.append(QuestionFinding(
                question_id=rec["question_id"],
                dimension=Dimension(rec["dimension"]),
                label=rec["label"],
                group=rec["group"],
                available=rec["available"],
                values=tuple(rec["values"].items()),
                interpretations=tuple(rec["interpretations"]),
                recommendations=tuple(rec["recommendations"]),
                open_suggestion=rec["open_suggestion"],
                as_of=date.fromisoformat(rec["as_of"]) if rec["as_of"] else None,
            ))
        elif kind == "caveat":
            caveats.append(rec["text"])
        elif kind == "step":
            steps.append(TraceStep(rec["kind"], rec["text"]))
        else:
            raise ValueError(f"line {n}: unknown record type {kind!r}")
    if head is None:
        raise ValueError("no report record found")
    return AttributionReport(
        trigger=head["trigger"],
        queried_dimension=Dimension(head["queried_dimension"]),
        snapshot_id=head["snapshot_id"],
        findings=tuple(findings),
        covered_dimensions=tuple(Dimension(d) for d in head["covered_dimensions"]),
        caveats=tuple(caveats),
        step_log=tuple(steps),
        note=head["note"],
    )
