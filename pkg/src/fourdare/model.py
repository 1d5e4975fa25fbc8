"""Domain types shared across the toolchain.

Everything here is immutable once built. Mappings are stored as tuples of
pairs so that specs hash, compare and serialize deterministically.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterator

from .conditions import ConditionAst


class Dimension(enum.Enum):
    RESULTS = "results"
    PROCESS = "process"
    SUPPORT = "support"
    LONGTERM = "longterm"

    @property
    def depth(self) -> int:
        return dimension_depth(self)

    @property
    def title(self) -> str:
        return _TITLES[self]

    def __lt__(self, other: "Dimension") -> bool:
        if not isinstance(other, Dimension):
            return NotImplemented
        return self.depth < other.depth

    @classmethod
    def parse(cls, raw: str) -> "Dimension":
        key = re.sub(r"[\s_-]+", "", str(raw).strip().lower())
        key = key.removesuffix("dimension")
        try:
            return _ALIASES[key]
        except KeyError:
            raise ValueError(f"unknown dimension {raw!r}") from None


_TITLES = {
    Dimension.RESULTS: "Results",
    Dimension.PROCESS: "Process",
    Dimension.SUPPORT: "Support",
    Dimension.LONGTERM: "Long-term",
}

_ALIASES = {
    "results": Dimension.RESULTS,
    "result": Dimension.RESULTS,
    "process": Dimension.PROCESS,
    "support": Dimension.SUPPORT,
    "longterm": Dimension.LONGTERM,
}

_DEPTH = {
    Dimension.RESULTS: 0,
    Dimension.PROCESS: 1,
    Dimension.SUPPORT: 2,
    Dimension.LONGTERM: 3,
}

DIMENSIONS: tuple[Dimension, ...] = tuple(sorted(Dimension, key=_DEPTH.__getitem__))


def dimension_depth(d: Dimension) -> int:
    """Position of ``d`` on the backward trace: Results 0 through Long-term 3."""
    return _DEPTH[d]


class Authority(enum.Enum):
    NONE = "none"
    RULE_BASED = "rule_based"
    OPEN_ENDED = "open_ended"


@dataclass(frozen=True)
class AuthorityProfile:
    interpretation: Authority
    recommendation: Authority

    def allows_interpretation(self) -> bool:
        return self.interpretation is Authority.RULE_BASED

    def allows_recommendation(self, kind: Authority) -> bool:
        if self.recommendation is Authority.NONE:
            return False
        return kind is self.recommendation


_AUTHORITY = {
    Dimension.RESULTS: AuthorityProfile(Authority.NONE, Authority.NONE),
    Dimension.PROCESS: AuthorityProfile(Authority.RULE_BASED, Authority.RULE_BASED),
    Dimension.SUPPORT: AuthorityProfile(Authority.NONE, Authority.OPEN_ENDED),
    Dimension.LONGTERM: AuthorityProfile(Authority.NONE, Authority.NONE),
}

# Prompt captions for each dimension's authority.
AUTHORITY_CAPTIONS = {
    Dimension.RESULTS: "Display Only",
    Dimension.PROCESS: "Interpret + Recommend",
    Dimension.SUPPORT: "Display + Open Suggestions",
    Dimension.LONGTERM: "Display Only",
}


def authority_for(d: Dimension) -> AuthorityProfile:
    """Fixed permission matrix. Specs may restrict it but never widen it."""
    return _AUTHORITY[d]


QUESTION_ID = re.compile(r"^Q(\d+)$")


def question_key(qid: str) -> tuple[int, str]:
    """Sort key ordering ``Q2`` before ``Q10``; malformed ids sort last."""
    m = QUESTION_ID.match(qid)
    if m:
        return (int(m.group(1)), qid)
    return (10**9, qid)


SOURCE_KINDS = ("database", "knowledge_base", "analytics_api")

# Source labels seen in practice, normalized to the three access kinds.
SOURCE_KIND_ALIASES = {
    "database": "database",
    "core_banking_system": "database",
    "crm_system": "database",
    "erp": "database",
    "knowledge_base": "knowledge_base",
    "knowledge_base_file": "knowledge_base",
    "analytics_api": "analytics_api",
    "analytics_platform": "analytics_api",
}

UPDATE_FREQUENCIES = ("daily", "weekly", "monthly", "quarterly")

FRESHNESS_SLA = re.compile(r"^[TMQ]\+\d+$")


@dataclass(frozen=True)
class DataMapping:
    source_type: str
    source_kind: str
    locator: str
    locator_kind: str  # query_template | file_pattern | endpoint
    update_frequency: str
    freshness_sla: str
    parameters: tuple[str, ...] = ()
    exported_variables: tuple[str, ...] = ()
    name: str = ""
    connection: str = ""

    def placeholders(self) -> tuple[str, ...]:
        seen: list[str] = []
        for m in re.finditer(r"\{([^{}]*)\}", self.locator):
            if m.group(1) not in seen:
                seen.append(m.group(1))
        return tuple(seen)


@dataclass(frozen=True)
class Rule:
    condition: ConditionAst
    output: str
    source: str = ""  # condition text as written, before alias expansion


@dataclass(frozen=True)
class DualTrackPolicy:
    interpretation_enabled: bool = False
    interpretation_rules: tuple[Rule, ...] = ()
    recommendation_enabled: bool = False
    recommendation_kind: Authority = Authority.RULE_BASED
    recommendation_rules: tuple[Rule, ...] = ()
    open_template: str | None = None
    interpretation_rationale: str = ""
    recommendation_rationale: str = ""
    display_note: str = ""

    def rules(self) -> Iterator[tuple[str, int, Rule]]:
        for i, r in enumerate(self.interpretation_rules):
            yield "interpretation", i, r
        for i, r in enumerate(self.recommendation_rules):
            yield "recommendation", i, r


@dataclass(frozen=True)
class Question:
    id: str
    text: str
    dimension: Dimension
    short_name: str = ""
    data_mapping: DataMapping | None = None
    dual_track: DualTrackPolicy | None = None
    boundaries: tuple[str, ...] = ()

    @property
    def label(self) -> str:
        return self.short_name or self.text


@dataclass(frozen=True)
class ChainSegment:
    """One run of chain members within a single dimension.

    ``ordered`` segments come from path lists (each member explains the one
    before it); unordered ones are factor/context sets.
    """

    key: str
    dimension: Dimension
    members: tuple[str, ...]
    ordered: bool = True
    path_index: int = 0


@dataclass(frozen=True)
class AttributionChain:
    trigger: str
    segments: tuple[ChainSegment, ...]
    name: str = ""

    @property
    def groups(self) -> dict[Dimension, list[str]]:
        out: dict[Dimension, list[str]] = {}
        for seg in self.segments:
            bucket = out.setdefault(seg.dimension, [])
            bucket.extend(m for m in seg.members if m not in bucket)
        return out

    def members(self) -> list[str]:
        seen: list[str] = []
        for seg in self.segments:
            seen.extend(m for m in seg.members if m not in seen)
        return seen


@dataclass(frozen=True)
class AttributionGraph:
    nodes: tuple[str, ...] = ()
    # (cause, effect): effect causally depends on cause.
    edges: tuple[tuple[str, str], ...] = ()
    chains: tuple[AttributionChain, ...] = ()

    def chains_for(self, trigger: str) -> list[AttributionChain]:
        return [c for c in self.chains if c.trigger == trigger]


GLOBAL_CATEGORIES = ("data_integrity", "scope_limits", "confidence_calibration", "attribution_discipline")


@dataclass(frozen=True)
class Lexicons:
    prohibited_topics: tuple[str, ...] = ()
    unfounded_claims: tuple[str, ...] = ()
    overconfident_terms: tuple[str, ...] = ()
    hedging_terms: tuple[str, ...] = ()
    generic_advice: tuple[str, ...] = ()
    causal_markers: tuple[str, ...] = ()


@dataclass(frozen=True)
class BoundarySet:
    global_rules: tuple[tuple[str, tuple[str, ...]], ...] = ()
    prohibitions: tuple[str, ...] = ()
    per_dimension: tuple[tuple[Dimension, tuple[str, ...]], ...] = ()
    per_question: tuple[tuple[str, tuple[str, ...]], ...] = ()
    interaction_rules: tuple[tuple[str, tuple[str, ...]], ...] = ()
    lexicons: Lexicons = field(default_factory=Lexicons)

    def statement_count(self) -> int:
        n = len(self.prohibitions)
        for group in (self.global_rules, self.per_dimension, self.per_question, self.interaction_rules):
            n += sum(len(items) for _, items in group)
        return n

    def global_statements(self) -> list[str]:
        return [s for _, items in self.global_rules for s in items]

    def for_question(self, qid: str) -> tuple[str, ...]:
        return dict(self.per_question).get(qid, ())

    def for_dimension(self, d: Dimension) -> tuple[str, ...]:
        return dict(self.per_dimension).get(d, ())


@dataclass(frozen=True)
class AgentProfile:
    name: str = "Attribution Agent"
    organization: str = "[Organization]"
    purpose: str = "help decision-makers understand performance through causal attribution"
    subject: str = "performance"


@dataclass(frozen=True)
class FourDSpec:
    agent: AgentProfile
    questions: tuple[Question, ...]
    graph: AttributionGraph
    boundaries: BoundarySet
    context_variables: tuple[str, ...] = ()
    provenance: tuple[tuple[int, str], ...] = ()

    @property
    def agent_name(self) -> str:
        return self.agent.name

    def question(self, qid: str) -> Question:
        for q in self.questions:
            if q.id == qid:
                return q
        raise KeyError(qid)

    def has_question(self, qid: str) -> bool:
        return any(q.id == qid for q in self.questions)

    def by_dimension(self, d: Dimension) -> list[Question]:
        return [q for q in self.questions if q.dimension is d]

    def dimension_of(self, qid: str) -> Dimension:
        return self.question(qid).dimension
