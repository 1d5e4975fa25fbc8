"""Compile a validated spec into a sectioned system prompt.

The output is a pure function of the canonical spec: same spec, same bytes.
"""

from __future__ import annotations

import hashlib
import json
import re
import textwrap
from dataclasses import dataclass

from .model import (
    AUTHORITY_CAPTIONS,
    DIMENSIONS,
    Authority,
    AttributionChain,
    Dimension,
    FourDSpec,
    Question,
    question_key,
)
from .conditions import render
from .validator import errors, validate

SECTION_IDS = ("identity", "perception", "reasoning", "data_access", "rules", "boundaries", "response_structure")

SECTION_TITLES = {
    "identity": "Identity and Purpose",
    "perception": "PERCEPTION SCOPE: Questions You Monitor",
    "reasoning": "REASONING FRAMEWORK: Attribution Chains",
    "data_access": "DATA ACCESS: Tools and Sources",
    "rules": "INTERPRETATION & RECOMMENDATION RULES",
    "boundaries": "BOUNDARIES: What You Must NOT Do",
    "response_structure": "RESPONSE STRUCTURE",
}

SEPARATOR = "\n---\n\n"
WRAP = 80
HARD_LIMIT = 100
NONE_DECLARED = "(none declared)"

RESPONSE_STEPS = (
    "Direct Answer: State the metric/status requested",
    "Attribution Trace: Walk through Results->Process->Support->Long-term",
    "Interpretation: For Process dimension, provide rule-based interpretation",
    "Recommendations: For Process dimension, provide actionable suggestions",
    "Caveats: Note data freshness, limitations, alternative explanations",
)

SOURCE_LABELS = {
    "core_banking_system": "Core Banking System",
    "crm_system": "CRM System",
    "erp": "ERP",
    "database": "Database",
    "analytics_platform": "Analytics Platform",
    "analytics_api": "Analytics API",
    "knowledge_base": "Knowledge Base",
    "knowledge_base_file": "Knowledge Base",
}

_VERBS = {"database": "query", "analytics_api": "query", "knowledge_base": "read"}

_PARAM_NAMES = {"YYYY": "year", "MM": "month", "Q": "quarter"}

_DIMENSION_LIMITS = {
    Dimension.RESULTS: "Display only. No interpretation. No recommendations.",
    Dimension.PROCESS: "Interpret and recommend within the declared rules.",
    Dimension.SUPPORT: "Display + open considerations. No rule-based recommendations.",
    Dimension.LONGTERM: "Display for context only. No interpretation. No recommendations.",
}


class CompileError(Exception):
    pass


@dataclass(frozen=True)
class Section:
    id: str
    title: str
    start: int  # byte offsets into the UTF-8 encoding of full_text
    end: int


@dataclass(frozen=True)
class PromptDocument:
    full_text: str
    sections: tuple[Section, ...]
    checksum: str

    def section_text(self, section_id: str) -> str:
        for s in self.sections:
            if s.id == section_id:
                return self.full_text.encode("utf-8")[s.start:s.end].decode("utf-8")
        raise KeyError(section_id)

    def index_records(self) -> list[dict]:
        recs: list[dict] = [
            {"section": s.id, "title": s.title, "start": s.start, "end": s.end} for s in self.sections
        ]
        recs.append({"checksum": self.checksum, "bytes": len(self.full_text.encode("utf-8"))})
        return recs

    def index_jsonl(self) -> str:
        return "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in self.index_records())


def checksum(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------- helpers


def snake(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", text.lower()).strip("_")


def _id_range(qs: list[Question]) -> str:
    if not qs:
        return ""
    if len(qs) == 1:
        return qs[0].id
    return f"{qs[0].id}-{qs[-1].id}"


def _bullet(text: str, prefix: str = "- ", indent: str = "  ") -> list[str]:
    return textwrap.wrap(
        text, width=WRAP, initial_indent=prefix, subsequent_indent=indent,
        break_long_words=False, break_on_hyphens=False,
    ) or [prefix.rstrip()]


_ATOM = re.compile(r'"[^"]*"|\S+')


def wrap_atoms(text: str, prefix: str = "- ", indent: str = "  ") -> list[str]:
    """Greedy fill that keeps double-quoted phrases on one line when possible."""
    lines: list[str] = []
    cur = prefix.rstrip() if not text else prefix
    fresh = True
    for atom in _ATOM.findall(text):
        pieces = [atom]
        if len(indent) + len(atom) > HARD_LIMIT:
            pieces = atom.split(" ")
        for piece in pieces:
            candidate = cur + ("" if fresh else " ") + piece
            if len(candidate) <= WRAP or fresh:
                cur, fresh = candidate, False
            else:
                lines.append(cur)
                cur = indent + piece
    lines.append(cur)
    return lines


def _tool_names(spec: FourDSpec) -> dict[str, str]:
    base: dict[str, str] = {}
    for q in spec.questions:
        m = q.data_mapping
        if m is None:
            continue
        noun = snake(q.short_name or m.name or q.text) or q.id.lower()
        base[q.id] = f"{_VERBS[m.source_kind]}_{noun}"
    counts: dict[str, int] = {}
    for name in base.values():
        counts[name] = counts.get(name, 0) + 1
    return {qid: (f"{n}_{qid.lower()}" if counts[n] > 1 else n) for qid, n in base.items()}


def _tool_params(q: Question) -> list[str]:
    m = q.data_mapping
    assert m is not None
    out: list[str] = []
    for ph in m.placeholders():
        name = _PARAM_NAMES.get(ph, ph)
        if name not in out:
            out.append(name)
    return out


def chain_title(spec: FourDSpec, chain: AttributionChain) -> str:
    if chain.name:
        return chain.name
    q = spec.question(chain.trigger)
    label = q.short_name or (q.data_mapping.name if q.data_mapping and q.data_mapping.name else q.text.rstrip("?"))
    return f"{label} Gap"


def _node(spec: FourDSpec, qid: str) -> str:
    q = spec.question(qid)
    return f"{qid} ({q.short_name})" if q.short_name else qid


def _join_path(head: str, nodes: list[str], cont: str) -> list[str]:
    lines: list[str] = []
    cur = head
    for n in nodes:
        candidate = cur + (" " if cur.endswith("->") else " -> ") + n
        if len(candidate) > WRAP and cur != head:
            lines.append(cur)
            cur = cont + n
        else:
            cur = candidate
    lines.append(cur)
    return lines


def render_chain(spec: FourDSpec, chain: AttributionChain) -> list[str]:
    lines = [f"{chain_title(spec, chain)} ({chain.trigger}):"]
    cont = "      -> "
    first = True
    by_path: dict[int, list] = {}
    for seg in chain.segments:
        by_path.setdefault(seg.path_index, []).append(seg)
    for _, segs in sorted(by_path.items()):
        if segs[0].ordered:
            nodes = [_node(spec, m) for s in segs for m in s.members]
            if first:
                lines.extend(_join_path(f"  {chain.trigger}", nodes, cont))
            else:
                lines.extend(_join_path(cont.rstrip(), nodes, cont))
        else:
            for s in segs:
                members = ", ".join(s.members)
                lines.append(f"{cont}{s.dimension.title}: {members}" if not first else f"  {chain.trigger} -> {s.dimension.title}: {members}")
        first = False
    if first:
        lines.append(f"  {chain.trigger}")
    return lines


# ---------------------------------------------------------------- sections


def _article(word: str) -> str:
    return "an" if word[:1].lower() in "aeiou" else "a"


def _identity(spec: FourDSpec) -> list[str]:
    a = spec.agent
    para = f"You are {_article(a.name)} {a.name} for {a.organization}. Your purpose is to {a.purpose}."
    return [
        f"# {a.name} - System Prompt",
        "",
        f"## {SECTION_TITLES['identity']}",
        *textwrap.wrap(para, width=75, break_long_words=False, break_on_hyphens=False),
        "",
        "## Core Principle: Attribution-Complete Responses",
        f"When answering questions about {a.subject}, always trace causality through:",
        "1. Results -> What outcomes are we seeing?",
        "2. Process -> What activities are driving these outcomes?",
        "3. Support -> What resources are enabling/constraining activities?",
        "4. Long-term -> What strategic factors are shaping the environment?",
        "",
        'Never stop at "what" - always help users understand "why".',
    ]


def _perception(spec: FourDSpec) -> list[str]:
    lines = [f"## {SECTION_TITLES['perception']}"]
    for d in DIMENSIONS:
        lines += ["", f"### {d.title} Dimension ({AUTHORITY_CAPTIONS[d]})"]
        qs = spec.by_dimension(d)
        if not qs:
            lines.append(f"- {NONE_DECLARED}")
        for q in qs:
            lines += _bullet(f"{q.id}: {q.text}")
    return lines


def _reasoning(spec: FourDSpec) -> list[str]:
    lines = [f"## {SECTION_TITLES['reasoning']}"]
    if not spec.graph.chains:
        lines += ["", NONE_DECLARED]
    for chain in spec.graph.chains:
        lines += ["", *render_chain(spec, chain)]
    return lines


def _data_access(spec: FourDSpec) -> list[str]:
    lines = [f"## {SECTION_TITLES['data_access']}"]
    names = _tool_names(spec)
    groups: dict[str, list[Question]] = {}
    for q in spec.questions:
        if q.data_mapping is not None:
            label = SOURCE_LABELS.get(q.data_mapping.source_type, q.data_mapping.source_type)
            groups.setdefault(label, []).append(q)
    if not groups:
        lines += ["", NONE_DECLARED]
    for label, qs in groups.items():
        lines += ["", f"### {label}"]
        for q in qs:
            m = q.data_mapping
            assert m is not None
            sig = f"{names[q.id]}({', '.join(_tool_params(q))}) -> {q.id}"
            fresh = f"{m.update_frequency}, {m.freshness_sla}" if m.freshness_sla else m.update_frequency
            lines += _bullet(f"{sig} [{fresh}]")
    return lines


def _rule_lines(q: Question) -> list[str]:
    p = q.dual_track
    assert p is not None
    merged: dict[str, dict[str, list[str]]] = {}
    if p.interpretation_enabled:
        for r in p.interpretation_rules:
            merged.setdefault(render(r.condition), {"interpret": [], "recommend": []})["interpret"].append(r.output)
    if p.recommendation_enabled and p.recommendation_kind is Authority.RULE_BASED:
        for r in p.recommendation_rules:
            merged.setdefault(render(r.condition), {"interpret": [], "recommend": []})["recommend"].append(r.output)
    out: list[str] = []
    for cond, outputs in merged.items():
        parts = [f'interpret: "{o}"' for o in outputs["interpret"]]
        parts += [f'recommend: "{o}"' for o in outputs["recommend"]]
        out += wrap_atoms(f"IF {cond} THEN " + " AND ".join(parts))
    return out


def _rules(spec: FourDSpec) -> list[str]:
    lines = [f"## {SECTION_TITLES['rules']}"]
    proc = spec.by_dimension(Dimension.PROCESS)
    lines += ["", f"### Process Dimension ({_id_range(proc)}): Full Dual-Track" if proc else "### Process Dimension: Full Dual-Track"]
    if not proc:
        lines.append(NONE_DECLARED)
    for q in proc:
        body = _rule_lines(q) if q.dual_track else []
        lines += ["", f"**{q.id} - {q.label}:**", *(body or [f"- {NONE_DECLARED}"])]

    sup = spec.by_dimension(Dimension.SUPPORT)
    lines += ["", f"### Support Dimension ({_id_range(sup)}): Open-ended Only" if sup else "### Support Dimension: Open-ended Only"]
    if not sup:
        lines.append(NONE_DECLARED)
    for q in sup:
        p = q.dual_track
        lines += ["", f"**{q.id} - {q.label}:**"]
        if p and p.recommendation_enabled and p.open_template:
            lines += p.open_template.rstrip("\n").split("\n")
        else:
            lines.append("Display only.")

    lines += [
        "",
        "### Results & Long-term Dimensions: Display Only",
        "No interpretation. No recommendations. Data presentation only.",
    ]
    for q in spec.by_dimension(Dimension.RESULTS) + spec.by_dimension(Dimension.LONGTERM):
        if q.dual_track and q.dual_track.display_note:
            lines += _bullet(f"{q.id}: {q.dual_track.display_note}")
    return lines


def _category_title(key: str) -> str:
    return key.replace("_", " ").title()


def _items(items) -> list[str]:
    out: list[str] = []
    for s in items:
        out += _bullet(s)
    return out or [NONE_DECLARED]


def _boundaries(spec: FourDSpec) -> list[str]:
    b = spec.boundaries
    lines = [f"## {SECTION_TITLES['boundaries']}", "", "### Absolute Prohibitions", *_items(b.prohibitions)]
    calibration: list[str] = []
    for cat, items in b.global_rules:
        if cat == "confidence_calibration":
            calibration += items
            continue
        lines += ["", f"### {_category_title(cat)}", *_items(items)]

    lines += ["", "### Dimension-Specific Limits"]
    for d in DIMENSIONS:
        qs = spec.by_dimension(d)
        scope = f" ({_id_range(qs)})" if qs else ""
        extra = " ".join(s if s.endswith(".") else s + "." for s in b.for_dimension(d))
        lines += _bullet(f"{d.title}{scope}: {_DIMENSION_LIMITS[d]}" + (f" {extra}" if extra else ""))

    per_q = [(qid, items) for qid, items in b.per_question if items]
    if per_q:
        lines += ["", "### Question-Specific Limits"]
        for qid, items in per_q:
            for s in items:
                lines += _bullet(f"{qid}: {s}")

    if b.interaction_rules:
        lines += ["", "### Interaction Rules"]
        for cat, items in b.interaction_rules:
            lines.append(f"- {cat.replace('_', ' ').capitalize()}:")
            for s in items:
                lines += _bullet(s, prefix="  - ", indent="    ")

    lines += ["", "### Language Discipline"]
    if calibration:
        lines += _items(calibration)
    else:
        hedges = ", ".join(f'"{h}"' for h in b.lexicons.hedging_terms[:3])
        lines += _items([f"Use hedged language: {hedges}"] if hedges else [])
    return lines


def _response_structure(spec: FourDSpec) -> list[str]:
    return [f"## {SECTION_TITLES['response_structure']}", *(f"{i}. {s}" for i, s in enumerate(RESPONSE_STEPS, 1))]


_BUILDERS = {
    "identity": _identity,
    "perception": _perception,
    "reasoning": _reasoning,
    "data_access": _data_access,
    "rules": _rules,
    "boundaries": _boundaries,
    "response_structure": _response_structure,
}


def _assemble(spec: FourDSpec) -> PromptDocument:
    chunks: list[tuple[str, str]] = []
    for i, sid in enumerate(SECTION_IDS):
        body = "\n".join(_BUILDERS[sid](spec)) + "\n"
        if i < len(SECTION_IDS) - 1:
            body += SEPARATOR
        chunks.append((sid, body))
    sections: list[Section] = []
    pos = 0
    for sid, body in chunks:
        n = len(body.encode("utf-8"))
        sections.append(Section(sid, SECTION_TITLES[sid], pos, pos + n))
        pos += n
    text = "".join(body for _, body in chunks)
    return PromptDocument(text, tuple(sections), checksum(text))


def compile_prompt(spec: FourDSpec) -> PromptDocument:
    """Compile a spec with no error findings; raises :class:`CompileError` otherwise."""
    errs = errors(validate(spec))
    if errs:
        raise CompileError(f"spec has {len(errs)} error finding(s); first: {errs[0]}")
    return _assemble(spec)


def render_section(spec: FourDSpec, section_id: str) -> str:
    if section_id not in SECTION_IDS:
        raise KeyError(f"unknown section {section_id!r}; expected one of {', '.join(SECTION_IDS)}")
    return compile_prompt(spec).section_text(section_id)


def tool_signatures(spec: FourDSpec) -> dict[str, str]:
    """Question id to rendered tool signature, as listed in the data access section."""
    names = _tool_names(spec)
    return {
        q.id: f"{names[q.id]}({', '.join(_tool_params(q))})"
        for q in sorted(spec.questions, key=lambda q: question_key(q.id))
        if q.data_mapping is not None
    }
