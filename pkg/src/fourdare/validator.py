"""Cross-layer checks over an assembled spec.

Each ``check_*`` function is pure and returns findings in a deterministic
order; :func:`validate` concatenates them in :data:`CHECK_ORDER`.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Callable, Iterable

from .conditions import free_variables
from .model import (
    DIMENSIONS,
    FRESHNESS_SLA,
    Authority,
    AttributionGraph,
    Dimension,
    FourDSpec,
    authority_for,
    question_key,
)

ERROR = "error"
WARNING = "warning"

# Closed set of finding codes.
CODES = {
    "E_CYCLE": "attribution graph contains a cycle",
    "E_DEPTH": "chain or edge runs against the dimension order",
    "E_GROUP": "chain group member belongs to a different dimension than its group",
    "E_AUTHORITY": "dual-track policy exceeds the dimension's authority",
    "E_POLICY": "dual-track policy is internally inconsistent",
    "E_RATIONALE": "Process track neither enabled nor disabled with a rationale",
    "E_UNMAPPED": "question used by a chain or rule has no data mapping",
    "E_UNBOUND_VAR": "rule variable is neither exported by the question's source nor a context variable",
    "W_NO_BOUNDARY": "dimension has no boundary statements",
    "E_INCOMPLETE_CHAIN": "chain skips a dimension between its trigger and Long-term",
    "E_FRESHNESS": "freshness SLA is missing or malformed",
    "E_UNDECLARED_PARAM": "locator placeholder is neither declared nor built in",
    "E_DANGLING": "reference to an undeclared question",
}

# Placeholders every data source may use without declaring them.
BUILTIN_PLACEHOLDERS = frozenset(
    {"date", "start_date", "end_date", "period", "value", "month", "year", "current_year", "YYYY", "MM", "Q"}
)


@dataclass(frozen=True)
class Finding:
    code: str
    severity: str
    subject: str
    message: str

    def __post_init__(self) -> None:
        if self.code not in CODES:
            raise ValueError(f"unknown finding code {self.code}")

    def __str__(self) -> str:
        return f"{self.severity.upper()} {self.code} [{self.subject}] {self.message}"

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False)


def _err(code: str, subject: str, message: str) -> Finding:
    return Finding(code, ERROR, subject, message)


def _strongly_connected(nodes: Iterable[str], edges: Iterable[tuple[str, str]]) -> list[list[str]]:
    """Tarjan's algorithm, iterative so deep graphs cannot overflow the stack."""
    succ: dict[str, list[str]] = {}
    for a, b in edges:
        succ.setdefault(a, []).append(b)
        succ.setdefault(b, [])
    for n in nodes:
        succ.setdefault(n, [])
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    out: list[list[str]] = []
    counter = 0
    for root in sorted(succ, key=question_key):
        if root in index:
            continue
        work = [(root, 0)]
        while work:
            v, i = work.pop()
            if i == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack.add(v)
            recurse = False
            children = succ[v]
            while i < len(children):
                w = children[i]
                i += 1
                if w not in index:
                    work.append((v, i))
                    work.append((w, 0))
                    recurse = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if recurse:
                continue
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                out.append(sorted(comp, key=question_key))
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
    return out


def check_graph_acyclic(graph: AttributionGraph) -> list[Finding]:
    loops = {a for a, b in graph.edges if a == b}
    findings = []
    for comp in _strongly_connected(graph.nodes, graph.edges):
        if len(comp) > 1 or comp[0] in loops:
            findings.append(_err("E_CYCLE", ",".join(comp), f"cycle through {', '.join(comp)}"))
    findings.sort(key=lambda f: [question_key(q) for q in f.subject.split(",")])
    return findings


def _dims(spec: FourDSpec) -> dict[str, Dimension]:
    return {q.id: q.dimension for q in spec.questions}


def check_dimension_monotonicity(spec: FourDSpec) -> list[Finding]:
    dims = _dims(spec)
    findings: list[Finding] = []
    for i, chain in enumerate(spec.graph.chains):
        if chain.trigger not in dims:
            continue
        subject = f"chain[{i}]:{chain.trigger}"
        top = dims[chain.trigger]
        prev = top
        for seg in chain.segments:
            if seg.dimension.depth <= top.depth:
                findings.append(_err(
                    "E_DEPTH", subject,
                    f"group {seg.key!r} is {seg.dimension.title}, not deeper than trigger {chain.trigger} ({top.title})",
                ))
            elif seg.dimension.depth < prev.depth:
                findings.append(_err(
                    "E_DEPTH", subject, f"group {seg.key!r} ({seg.dimension.title}) follows a {prev.title} group",
                ))
            prev = max(prev, seg.dimension, key=lambda d: d.depth)
            for m in seg.members:
                if m in dims and not seg.ordered and dims[m] is not seg.dimension:
                    findings.append(_err(
                        "E_GROUP", subject, f"{m} is {dims[m].title} but listed under {seg.key!r} ({seg.dimension.title})",
                    ))
    # Causal edges must point from a deeper (or equal) dimension to a shallower one.
    for cause, effect in spec.graph.edges:
        if cause in dims and effect in dims and dims[cause].depth < dims[effect].depth:
            findings.append(_err(
                "E_DEPTH", f"{cause}->{effect}",
                f"{cause} ({dims[cause].title}) cannot explain {effect} ({dims[effect].title})",
            ))
    return findings


def check_authority_compliance(spec: FourDSpec) -> list[Finding]:
    findings: list[Finding] = []
    for q in spec.questions:
        p = q.dual_track
        if p is None:
            continue
        prof = authority_for(q.dimension)
        if p.interpretation_enabled and not prof.allows_interpretation():
            findings.append(_err("E_AUTHORITY", q.id, f"interpretation is not permitted on {q.dimension.title} questions"))
        if p.recommendation_enabled and not prof.allows_recommendation(p.recommendation_kind):
            if prof.recommendation is Authority.NONE:
                msg = f"recommendation is not permitted on {q.dimension.title} questions"
            else:
                msg = (
                    f"{q.dimension.title} recommendations must be {prof.recommendation.value}, "
                    f"not {p.recommendation_kind.value}"
                )
            findings.append(_err("E_AUTHORITY", q.id, msg))
    return findings


def check_policy_shape(spec: FourDSpec) -> list[Finding]:
    findings: list[Finding] = []
    for q in spec.questions:
        p = q.dual_track
        if p is None:
            if q.dimension is Dimension.PROCESS:
                findings.append(_err("E_RATIONALE", q.id, "Process question has no dual-track policy"))
            continue
        if not p.interpretation_enabled and p.interpretation_rules:
            findings.append(_err("E_POLICY", q.id, "interpretation is disabled but declares rules"))
        if not p.recommendation_enabled and p.recommendation_rules:
            findings.append(_err("E_POLICY", q.id, "recommendation is disabled but declares rules"))
        open_ended = p.recommendation_enabled and p.recommendation_kind is Authority.OPEN_ENDED
        if open_ended and not p.open_template:
            findings.append(_err("E_POLICY", q.id, "open-ended recommendation needs a template"))
        if p.open_template and not open_ended:
            findings.append(_err("E_POLICY", q.id, "template given but recommendation is not enabled as open_ended"))
        if open_ended and p.recommendation_rules:
            findings.append(_err("E_POLICY", q.id, "open-ended recommendation cannot carry rules"))
        if q.dimension is Dimension.PROCESS:
            for track, enabled, why in (
                ("interpretation", p.interpretation_enabled, p.interpretation_rationale),
                ("recommendation", p.recommendation_enabled, p.recommendation_rationale),
            ):
                if not enabled and not why:
                    findings.append(_err("E_RATIONALE", q.id, f"{track} disabled without a rationale"))
    return findings


def check_coverage(spec: FourDSpec) -> list[Finding]:
    findings: list[Finding] = []
    dims = _dims(spec)
    used: set[str] = set()
    for chain in spec.graph.chains:
        used.add(chain.trigger)
        used.update(chain.members())
    for q in spec.questions:
        if q.dual_track and any(True for _ in q.dual_track.rules()):
            used.add(q.id)
    for q in spec.questions:
        if q.id in used and q.data_mapping is None:
            findings.append(_err("E_UNMAPPED", q.id, f"{q.id} is used by a chain or rule but has no data mapping"))

    context = set(spec.context_variables)
    for q in spec.questions:
        if q.dual_track is None:
            continue
        exported = set(q.data_mapping.exported_variables) if q.data_mapping else set()
        missing: list[str] = []
        for _, _, rule in q.dual_track.rules():
            for name in free_variables(rule.condition):
                if name not in exported and name not in context and name not in missing:
                    missing.append(name)
        for name in sorted(missing):
            findings.append(_err("E_UNBOUND_VAR", q.id, f"rule variable {name!r} has no source"))

    b = spec.boundaries
    has_global = bool(b.prohibitions) or any(items for _, items in b.global_rules)
    for d in DIMENSIONS:
        qs = spec.by_dimension(d)
        if not qs or has_global or b.for_dimension(d) or any(b.for_question(q.id) for q in qs):
            continue
        findings.append(Finding("W_NO_BOUNDARY", WARNING, d.value, f"no boundary statements cover {d.title} questions"))

    for i, chain in enumerate(spec.graph.chains):
        if chain.trigger not in dims:
            continue
        present = {seg.dimension for seg in chain.segments if seg.members}
        need = [d for d in DIMENSIONS if d.depth > dims[chain.trigger].depth]
        gaps = [d.title for d in need if d not in present]
        if gaps:
            findings.append(_err(
                "E_INCOMPLETE_CHAIN", f"chain[{i}]:{chain.trigger}", f"chain has no {', '.join(gaps)} group",
            ))
    return findings


def check_data_mappings(spec: FourDSpec) -> list[Finding]:
    findings: list[Finding] = []
    for q in spec.questions:
        m = q.data_mapping
        if m is None:
            continue
        if not FRESHNESS_SLA.match(m.freshness_sla):
            shown = repr(m.freshness_sla) if m.freshness_sla else "missing"
            findings.append(_err("E_FRESHNESS", q.id, f"freshness_sla {shown} does not match T+n, M+n or Q+n"))
        declared = set(m.parameters)
        for ph in m.placeholders():
            if ph not in declared and ph not in BUILTIN_PLACEHOLDERS:
                findings.append(_err("E_UNDECLARED_PARAM", q.id, f"placeholder {{{ph}}} is not declared"))
    return findings


def check_references(spec: FourDSpec) -> list[Finding]:
    """Guards specs built in code, which bypass the loader's reference checks."""
    known = {q.id for q in spec.questions}
    findings: list[Finding] = []
    seen: set[str] = set()

    def miss(qid: str, where: str) -> None:
        if qid not in known and (qid, where) not in seen:
            seen.add((qid, where))  # type: ignore[arg-type]
            findings.append(_err("E_DANGLING", qid, f"{where} references undeclared question {qid}"))

    for n in spec.graph.nodes:
        miss(n, "graph node")
    for a, b in spec.graph.edges:
        miss(a, "edge")
        miss(b, "edge")
    for chain in spec.graph.chains:
        miss(chain.trigger, "chain trigger")
        for m in chain.members():
            miss(m, "chain")
    for qid, _ in spec.boundaries.per_question:
        miss(qid, "boundary")
    return findings


CHECK_ORDER: tuple[tuple[str, Callable[[FourDSpec], list[Finding]]], ...] = (
    ("references", check_references),
    ("acyclic", lambda s: check_graph_acyclic(s.graph)),
    ("monotonicity", check_dimension_monotonicity),
    ("authority", check_authority_compliance),
    ("policy", check_policy_shape),
    ("coverage", check_coverage),
    ("data_mappings", check_data_mappings),
)


def validate(spec: FourDSpec) -> list[Finding]:
    out: list[Finding] = []
    for _, check in CHECK_ORDER:
        out.extend(check(spec))
    return out


def errors(findings: Iterable[Finding]) -> list[Finding]:
    return [f for f in findings if f.severity == ERROR]


def render_findings(findings: list[Finding]) -> str:
    if not findings:
        return "OK: no findings\n"
    n_err = len(errors(findings))
    lines = [str(f) for f in findings]
    lines.append(f"{n_err} error(s), {len(findings) - n_err} warning(s)")
    return "\n".join(lines) + "\n"
