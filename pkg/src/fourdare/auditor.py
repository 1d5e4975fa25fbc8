"""Audits of reports and free-text responses.

Four questions are asked of every response: does it cover each dimension on
the backward path, does it cross a boundary, is its language calibrated, and
can every number in it be traced to the snapshot?
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal, InvalidOperation, localcontext
from functools import lru_cache
from typing import Iterable

from .model import DIMENSIONS, Dimension, FourDSpec, Lexicons
from .tracer import AttributionReport, DataSnapshot, ReportMetrics, compute_metrics, render_report_text

# Section labels a structured response may use, and the dimension each covers.
# ``None`` marks labels that carry no dimension of their own.
LABELS: dict[str, Dimension | None] = {
    "direct answer": None,
    "attribution trace": None,
    "interpretation": None,
    "recommendations": None,
    "recommendation": None,
    "caveats": None,
    "note": None,
    "final answer": None,
    "thought": None,
    "action": None,
    "observation": None,
    "results": Dimension.RESULTS,
    "process": Dimension.PROCESS,
    "process attribution": Dimension.PROCESS,
    "support": Dimension.SUPPORT,
    "support context": Dimension.SUPPORT,
    "long-term": Dimension.LONGTERM,
    "long-term context": Dimension.LONGTERM,
    "longterm": Dimension.LONGTERM,
}

DIRECT_ANSWER = "direct answer"

# Categories counted as boundary violations, in report order.
VIOLATION_CATEGORIES = ("personnel", "unfounded_claim", "overconfidence")

_LABEL_LINE = re.compile(
    r"^\s*(?:#+\s*)?(?:[-*]\s+)?(?:\*\*)?(?P<label>[A-Za-z][A-Za-z -]*?)(?:\*\*)?\s*:(?:\*\*)?[ \t]*(?P<rest>.*)$"
)


class AuditError(ValueError):
    pass


@dataclass(frozen=True)
class Violation:
    category: str  # personnel | unfounded_claim | overconfidence | unhedged
    term: str
    span: tuple[int, int]
    text: str


@dataclass(frozen=True)
class NumberToken:
    raw: str
    value: Decimal  # normalized: percent and points as ratios, K/M/B expanded
    plain: Decimal  # the digits as written
    start: int
    end: int


@dataclass(frozen=True)
class StructuredResponse:
    queried: str
    sections: tuple[tuple[str, str], ...]
    text: str
    numbers: tuple[NumberToken, ...] = ()

    def section(self, label: str) -> str:
        return "\n".join(body for lab, body in self.sections if lab == label)


@dataclass(frozen=True)
class AuditFindings:
    complete: bool
    missing_dimensions: tuple[Dimension, ...]
    boundary_violations: tuple[tuple[str, str], ...]
    overconfident_terms: tuple[str, ...]
    unhedged_claims: tuple[str, ...]
    fabricated_values: tuple[tuple[str, str], ...]
    metrics: ReportMetrics
    covered_dimensions: tuple[Dimension, ...] = ()

    @property
    def exit_code(self) -> int:
        if not self.complete:
            return 2
        if self.boundary_violations or self.unhedged_claims:
            return 3
        if self.fabricated_values:
            return 4
        return 0

    def to_record(self) -> dict:
        return {
            "complete": self.complete,
            "missing_dimensions": [d.value for d in self.missing_dimensions],
            "boundary_violations": [list(v) for v in self.boundary_violations],
            "overconfident_terms": list(self.overconfident_terms),
            "unhedged_claims": list(self.unhedged_claims),
            "fabricated_values": [list(v) for v in self.fabricated_values],
            "metrics": {
                "dimensions_covered": self.metrics.dimensions_covered,
                "causal_factors": self.metrics.causal_factors,
                "actionable_recommendations": self.metrics.actionable_recommendations,
            },
            "covered_dimensions": [d.value for d in self.covered_dimensions],
            "exit_code": self.exit_code,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), ensure_ascii=False)

    def render(self) -> str:
        m = self.metrics
        lines = [
            f"complete: {'yes' if self.complete else 'no'}",
            "missing dimensions: " + (", ".join(d.title for d in self.missing_dimensions) or "none"),
            f"dimensions covered: {m.dimensions_covered}",
            f"causal factors: {m.causal_factors}",
            f"actionable recommendations: {m.actionable_recommendations}",
            f"boundary violations: {len(self.boundary_violations)}",
        ]
        lines += [f"  [{cat}] {span}" for cat, span in self.boundary_violations]
        lines.append(f"unhedged claims: {len(self.unhedged_claims)}")
        lines += [f"  {s}" for s in self.unhedged_claims]
        lines.append(f"fabricated values: {len(self.fabricated_values)}")
        lines += [f"  {raw} at {where}" for raw, where in self.fabricated_values]
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- completeness


def required_dimensions(spec: FourDSpec, queried: str) -> set[Dimension]:
    q = spec.question(queried)
    need = {q.dimension}
    for chain in spec.graph.chains_for(queried):
        for seg in chain.segments:
            if seg.members and seg.dimension.depth >= q.dimension.depth:
                need.add(seg.dimension)
    return need


def check_completeness(spec: FourDSpec, queried: str, covered: Iterable[Dimension]) -> tuple[bool, set[Dimension]]:
    if not spec.has_question(queried):
        raise AuditError(f"unknown question {queried}")
    missing = required_dimensions(spec, queried) - set(covered)
    return not missing, missing


# ---------------------------------------------------------------- lexicons


def term_pattern(term: str) -> str:
    """Regex for ``term`` with common inflections of its last word."""
    words = term.lower().split()
    head = [re.escape(w) for w in words[:-1]]
    last = words[-1]
    if not last.isalpha() or len(last) < 3:
        tail = re.escape(last)
    elif last.endswith("e"):
        tail = re.escape(last[:-1]) + "(?:e|es|ed|ing|ion|ions)"
    elif last.endswith("y"):
        tail = re.escape(last[:-1]) + "(?:y|ies|ied|ying)"
    else:
        tail = re.escape(last) + "(?:s|es|ed|ing|ment|ments)?"
    return r"(?<![\w-])" + r"\s+".join(head + [tail]) + r"(?![\w-])"


@lru_cache(maxsize=256)
def _compiled(terms: tuple[str, ...]) -> tuple[tuple[str, re.Pattern], ...]:
    return tuple((t, re.compile(term_pattern(t), re.IGNORECASE)) for t in terms if t.strip())


def find_terms(terms: Iterable[str], text: str) -> list[tuple[str, int, int]]:
    """Non-overlapping (term, start, end) matches; longer spans win ties."""
    hits = []
    for term, pat in _compiled(tuple(terms)):
        for m in pat.finditer(text):
            hits.append((m.start(), -(m.end() - m.start()), term, m.end()))
    hits.sort()
    out: list[tuple[str, int, int]] = []
    last_end = -1
    for start, _, term, end in hits:
        if start >= last_end:
            out.append((term, start, end))
            last_end = end
    return out


def _lexicon_for(category: str, lex: Lexicons) -> tuple[str, ...]:
    return {
        "personnel": lex.prohibited_topics,
        "unfounded_claim": lex.unfounded_claims,
        "overconfidence": lex.overconfident_terms,
    }[category]


# ---------------------------------------------------------------- parsing


def parse_sections(text: str) -> list[tuple[str, str, int]]:
    """Split text into (label, body, offset) by label lines; leading text is the direct answer."""
    sections: list[list] = []
    cur_label, cur_lines, cur_off = DIRECT_ANSWER, [], 0
    pos = 0
    for line in text.splitlines(keepends=True):
        m = _LABEL_LINE.match(line.rstrip("\n"))
        label = m.group("label").strip().lower() if m else None
        if label in LABELS:
            sections.append([cur_label, "".join(cur_lines), cur_off])
            rest = m.group("rest")
            cur_label, cur_lines = label, [rest + ("\n" if line.endswith("\n") else "")]
            cur_off = pos + line.index(rest) if rest else pos + len(line)
        else:
            cur_lines.append(line)
        pos += len(line)
    sections.append([cur_label, "".join(cur_lines), cur_off])
    return [(lab, body, off) for lab, body, off in sections if body.strip() or lab != DIRECT_ANSWER]


def parse_response(text: str, queried: str) -> StructuredResponse:
    secs = parse_sections(text)
    return StructuredResponse(
        queried=queried,
        sections=tuple((lab, body) for lab, body, _ in secs),
        text=text,
        numbers=tuple(extract_numbers(text)),
    )


def covered_dimensions(spec: FourDSpec, response: StructuredResponse) -> set[Dimension]:
    out: set[Dimension] = set()
    for label, body in response.sections:
        if not body.strip():
            continue
        if label == DIRECT_ANSWER:
            out.add(spec.dimension_of(response.queried))
        elif LABELS[label] is not None:
            out.add(LABELS[label])  # type: ignore[arg-type]
    return out


_SENTENCE_END = re.compile(r"(?<=[.!?])\s+|\n+")


def sentences(text: str) -> list[tuple[str, int]]:
    out = []
    pos = 0
    for m in _SENTENCE_END.finditer(text):
        chunk = text[pos:m.start()]
        if chunk.strip():
            out.append((chunk.strip(), pos + len(chunk) - len(chunk.lstrip())))
        pos = m.end()
    chunk = text[pos:]
    if chunk.strip():
        out.append((chunk.strip(), pos + len(chunk) - len(chunk.lstrip())))
    return out


# ---------------------------------------------------------------- linting


def lint_boundaries(spec: FourDSpec, text: str) -> list[Violation]:
    """Lexical boundary lint: prohibited topics, unfounded claims, overconfidence,
    and unhedged sentences inside Interpretation sections."""
    lex = spec.boundaries.lexicons
    out: list[Violation] = []
    for cat in VIOLATION_CATEGORIES:
        for term, s, e in find_terms(_lexicon_for(cat, lex), text):
            out.append(Violation(cat, term, (s, e), text[s:e]))
    for label, body, off in parse_sections(text):
        if label != "interpretation":
            continue
        for sent, at in sentences(body):
            if not find_terms(lex.hedging_terms, sent):
                out.append(Violation("unhedged", "", (off + at, off + at + len(sent)), sent))
    out.sort(key=lambda v: (v.span, v.category))
    return out


# ---------------------------------------------------------------- provenance

_ISO_DATE = re.compile(r"\b\d{4}-\d{2}-\d{2}\b")
_ENUMERATOR = re.compile(r"\(\d+\)")
_NUMBER = re.compile(
    r"(?<![\w.+/])(?<!\w-)(?P<cur>\$)?(?P<int>\d{1,3}(?:,\d{3})+|\d+)(?:\.(?P<frac>\d+))?"
    r"(?:\s?(?P<pct>%|pp\b|percentage points?\b|percent\b)|(?P<mag>[KMB])\b)?(?![\w.]*\d)(?![A-Za-z_])"
)
_MAGNITUDE = {"K": 3, "M": 6, "B": 9}


def _mask(text: str, pattern: re.Pattern) -> str:
    return pattern.sub(lambda m: " " * len(m.group(0)), text)


def extract_numbers(text: str) -> list[NumberToken]:
    """Numeric claims in ``text``; dates, list enumerators and identifiers like Q2 or T+1 are skipped."""
    clean = _mask(_mask(text, _ISO_DATE), _ENUMERATOR)
    out: list[NumberToken] = []
    for m in _NUMBER.finditer(clean):
        digits = m.group("int").replace(",", "")
        plain = Decimal(digits + (f".{m.group('frac')}" if m.group("frac") else ""))
        value = plain
        if m.group("pct"):
            value = plain.scaleb(-2)
        elif m.group("mag"):
            value = plain.scaleb(_MAGNITUDE[m.group("mag")])
        out.append(NumberToken(text[m.start():m.end()], value, plain, m.start(), m.end()))
    return out


def _numeric(values: Iterable) -> list[Decimal]:
    return [v for v in values if isinstance(v, Decimal) and not isinstance(v, bool)]


def snapshot_values(snapshot: DataSnapshot) -> set[Decimal]:
    vals = set(_numeric(snapshot.context.values()))
    for b in snapshot.bindings.values():
        vals.update(_numeric(b.values()))
    return vals


def derivations(snapshot: DataSnapshot) -> set[Decimal]:
    """Values a response may state without a direct binding.

    gap to unity |1 - v| for any value; for a question value v and a
    comparator c (same question or context): |v - c| and |1 - v/c|.
    """
    out: set[Decimal] = set()
    ctx = _numeric(snapshot.context.values())
    with localcontext() as c:
        c.prec = 50
        for v in snapshot_values(snapshot):
            out.add(abs(1 - v))
        for b in snapshot.bindings.values():
            own = _numeric(b.values())
            for v in own:
                for comp in own + ctx:
                    if comp == v:
                        continue
                    out.add(abs(v - comp))
                    if comp != 0:
                        out.add(abs(1 - v / comp))
    return out


def _matches(token: NumberToken, exact: set[Decimal], derived: set[Decimal]) -> bool:
    for cand in (token.value, token.plain):
        if cand in exact:
            return True
        quantum = Decimal(1).scaleb(cand.as_tuple().exponent)
        for d in derived:
            try:
                if d.quantize(quantum, rounding=ROUND_HALF_UP) == cand:
                    return True
            except InvalidOperation:
                continue
    return False


def _location(text: str, pos: int) -> str:
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return f"{line}:{col}"


def check_data_provenance(response: StructuredResponse | str, snapshot: DataSnapshot) -> list[tuple[str, str]]:
    text = response.text if isinstance(response, StructuredResponse) else response
    tokens = response.numbers if isinstance(response, StructuredResponse) else extract_numbers(text)
    exact = snapshot_values(snapshot)
    derived = derivations(snapshot)
    return [(t.raw, _location(text, t.start)) for t in tokens if not _matches(t, exact, derived)]


# ---------------------------------------------------------------- metrics for free text

_ITEM_SPLIT = re.compile(r"\(\d+\)|(?:^|\n)\s*(?:\d+[.)]|[-*])\s+|;")
_DIRECTIVE = re.compile(r"\b(?:should|consider|recommend\w*|suggest(?:ed)? (?:that|to))\b", re.IGNORECASE)


def _recommendation_items(response: StructuredResponse) -> list[str]:
    body = "\n".join(b for lab, b in response.sections if lab in ("recommendations", "recommendation"))
    if body.strip():
        items = [i.strip(" .\n\t") for i in _ITEM_SPLIT.split(body)]
        return [i for i in items if re.search(r"[A-Za-z]", i) and not i.lower().startswith("none")]
    return [s for s, _ in sentences(response.text) if _DIRECTIVE.search(s)]


def text_metrics(spec: FourDSpec, response: StructuredResponse) -> ReportMetrics:
    lex = spec.boundaries.lexicons
    recs = [i for i in _recommendation_items(response) if not find_terms(lex.generic_advice, i)]
    causal = [s for s, _ in sentences(response.text) if find_terms(lex.causal_markers, s)]
    return ReportMetrics(
        dimensions_covered=len(covered_dimensions(spec, response)),
        causal_factors=len(causal),
        actionable_recommendations=len(recs),
    )


# ---------------------------------------------------------------- composition


def audit_report(
    spec: FourDSpec,
    response: AttributionReport | StructuredResponse | str,
    snapshot: DataSnapshot,
    queried: str | None = None,
) -> AuditFindings:
    if isinstance(response, AttributionReport):
        queried = response.trigger
        text = render_report_text(response)
        covered = set(response.covered_dimensions)
        metrics = compute_metrics(response)
        structured = parse_response(text, queried)
    else:
        if isinstance(response, str):
            if queried is None:
                raise AuditError("a question id is needed to audit free text")
            structured = parse_response(response, queried)
        else:
            structured = response
        queried = structured.queried
        text = structured.text
        covered = covered_dimensions(spec, structured)
        metrics = text_metrics(spec, structured)
    complete, missing = check_completeness(spec, queried, covered)
    violations = lint_boundaries(spec, text)
    boundary = tuple((v.category, v.text) for v in violations if v.category in VIOLATION_CATEGORIES)
    return AuditFindings(
        complete=complete,
        missing_dimensions=tuple(d for d in DIMENSIONS if d in missing),
        boundary_violations=boundary,
        overconfident_terms=tuple(v.text for v in violations if v.category == "overconfidence"),
        unhedged_claims=tuple(v.text for v in violations if v.category == "unhedged"),
        fabricated_values=tuple(check_data_provenance(structured, snapshot)),
        metrics=metrics,
        covered_dimensions=tuple(d for d in DIMENSIONS if d in covered),
    )
