"""Load the five layer documents into a :class:`FourDSpec`.

Accepted inputs:

* a directory holding one file per layer (routed by file name, then by
  top-level key),
* a single bundle file with keys ``layer1`` .. ``layer5`` (or with the layer
  top-level keys merged into one document),
* an explicit sequence of five file paths in layer order.

Loading never raises on bad input. Problems come back as
:class:`LoadDiagnostic` records; any error-severity diagnostic means no spec.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from datetime import date
from decimal import Decimal
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Sequence

import yaml

from .conditions import ConditionAst, ConditionSyntaxError, expand_aliases, parse_condition, render
from .model import (
    GLOBAL_CATEGORIES,
    QUESTION_ID,
    SOURCE_KIND_ALIASES,
    UPDATE_FREQUENCIES,
    AgentProfile,
    AttributionChain,
    AttributionGraph,
    Authority,
    BoundarySet,
    ChainSegment,
    DataMapping,
    Dimension,
    DualTrackPolicy,
    FourDSpec,
    Lexicons,
    Question,
    Rule,
    question_key,
)

LAYER_KEYS = {
    1: ("question_inventory",),
    2: ("attribution_model", "attribution_chains"),
    3: ("data_mapping",),
    4: ("dual_track_logic",),
    5: ("boundary_constraints",),
}

_LAYER_FILE = re.compile(r"(?:^|[^a-z0-9])(?:layer|l)[_-]?([1-5])(?:[^0-9]|$)", re.IGNORECASE)


@dataclass(frozen=True)
class LoadDiagnostic:
    severity: str  # "error" | "warning"
    layer: int
    path: str
    message: str

    def __str__(self) -> str:
        where = f"layer {self.layer}" + (f" {self.path}" if self.path else "")
        return f"{self.severity}: {where}: {self.message}"


@dataclass(frozen=True)
class LayerBundle:
    layers: tuple[Any, Any, Any, Any, Any]
    sources: tuple[str, str, str, str, str]

    def layer(self, n: int) -> Any:
        return self.layers[n - 1]


@dataclass
class LoadResult:
    spec: FourDSpec | None
    diagnostics: list[LoadDiagnostic] = field(default_factory=list)

    @property
    def errors(self) -> list[LoadDiagnostic]:
        return [d for d in self.diagnostics if d.severity == "error"]

    @property
    def warnings(self) -> list[LoadDiagnostic]:
        return [d for d in self.diagnostics if d.severity == "warning"]

    @property
    def ok(self) -> bool:
        return self.spec is not None


class SpecLoadError(Exception):
    def __init__(self, diagnostics: Sequence[LoadDiagnostic]):
        self.diagnostics = list(diagnostics)
        first = next((d for d in self.diagnostics if d.severity == "error"), None)
        super().__init__(str(first) if first else "spec could not be loaded")


# --------------------------------------------------------------------------
# YAML reading
# --------------------------------------------------------------------------


class _Loader(yaml.SafeLoader):
    """Safe loader with exact decimals and duplicate-key detection."""


def _construct_decimal(loader: _Loader, node: yaml.ScalarNode) -> Decimal:
    raw = loader.construct_scalar(node).replace("_", "").lower()
    if raw in (".inf", "+.inf"):
        return Decimal("Infinity")
    if raw == "-.inf":
        return Decimal("-Infinity")
    if raw == ".nan":
        return Decimal("NaN")
    return Decimal(raw)


def _construct_mapping(loader: _Loader, node: yaml.MappingNode, deep: bool = False) -> dict:
    seen: dict[Any, Any] = {}
    for key_node, _ in node.value:
        key = loader.construct_object(key_node, deep=deep)
        if key in seen:
            raise yaml.constructor.ConstructorError(
                "while constructing a mapping", node.start_mark, f"found duplicate key {key!r}", key_node.start_mark
            )
        seen[key] = True
    return yaml.SafeLoader.construct_mapping(loader, node, deep=deep)


_Loader.add_constructor("tag:yaml.org,2002:float", _construct_decimal)
_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def load_yaml(text: str) -> Any:
    """Parse YAML (or JSON) text with floats kept as exact decimals."""
    return yaml.load(text, Loader=_Loader)


def _read_document(path: Path, layer: int, diags: list[LoadDiagnostic]) -> tuple[bool, Any]:
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        diags.append(LoadDiagnostic("error", layer, "", f"missing file {path}"))
        return False, None
    except (OSError, UnicodeDecodeError) as exc:
        diags.append(LoadDiagnostic("error", layer, "", f"cannot read {path}: {exc}"))
        return False, None
    try:
        return True, load_yaml(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        problem = getattr(exc, "problem", None) or str(exc)
        diags.append(LoadDiagnostic("error", layer, where, f"malformed document {path.name}: {problem}"))
        return False, None


def _layer_of_doc(doc: Any) -> int | None:
    if not isinstance(doc, dict):
        return None
    for n, keys in LAYER_KEYS.items():
        if any(k in doc for k in keys):
            return n
    return None


def _split_bundle(doc: Any) -> dict[int, Any] | None:
    """Split a single-file bundle into per-layer documents."""
    if not isinstance(doc, dict):
        return None
    if any(f"layer{n}" in doc for n in range(1, 6)):
        return {n: doc.get(f"layer{n}") for n in range(1, 6) if f"layer{n}" in doc}
    parts: dict[int, Any] = {}
    for n, keys in LAYER_KEYS.items():
        present = {k: doc[k] for k in keys if k in doc}
        if present:
            parts[n] = present
    if len(parts) < 2:
        return None
    # Companion keys travel with their layer.
    if "agent" in doc:
        parts.setdefault(1, {})["agent"] = doc["agent"]
    if "context_variables" in doc:
        parts.setdefault(3, {})["context_variables"] = doc["context_variables"]
    if "aliases" in doc:
        parts.setdefault(4, {})["aliases"] = doc["aliases"]
    return parts


def read_bundle(source: str | Path | Sequence[str | Path]) -> tuple[LayerBundle | None, list[LoadDiagnostic]]:
    """Read raw layer documents without interpreting them."""
    diags: list[LoadDiagnostic] = []
    docs: dict[int, Any] = {}
    sources: dict[int, str] = {}

    if isinstance(source, (list, tuple)):
        if len(source) != 5:
            diags.append(LoadDiagnostic("error", 1, "", f"expected 5 layer files, got {len(source)}"))
            return None, diags
        for n, p in enumerate(source, start=1):
            ok, doc = _read_document(Path(p), n, diags)
            if ok:
                docs[n], sources[n] = doc, str(p)
    else:
        path = Path(source)
        if path.is_dir():
            _read_directory(path, docs, sources, diags)
        elif path.exists():
            ok, doc = _read_document(path, 1, diags)
            if ok:
                parts = _split_bundle(doc)
                if parts is None:
                    diags.append(LoadDiagnostic("error", 1, "", f"{path.name} is not a bundle (expected keys layer1..layer5)"))
                else:
                    for n, part in parts.items():
                        docs[n], sources[n] = part, f"{path}#layer{n}"
        else:
            diags.append(LoadDiagnostic("error", 1, "", f"missing bundle {path}"))
            return None, diags

    for n in range(1, 6):
        if n not in docs and not any(d.layer == n and d.severity == "error" for d in diags):
            diags.append(LoadDiagnostic("error", n, "", f"layer {n} ({LAYER_KEYS[n][0]}) not found"))
    if any(d.severity == "error" for d in diags):
        return None, diags
    bundle = LayerBundle(
        tuple(docs[n] for n in range(1, 6)),  # type: ignore[arg-type]
        tuple(sources[n] for n in range(1, 6)),  # type: ignore[arg-type]
    )
    return bundle, diags


def _read_directory(path: Path, docs: dict, sources: dict, diags: list[LoadDiagnostic]) -> None:
    files = sorted(p for p in path.iterdir() if p.is_file() and p.suffix.lower() in (".yaml", ".yml", ".json"))
    for p in files:
        m = _LAYER_FILE.search(p.stem)
        named = int(m.group(1)) if m else None
        ok, doc = _read_document(p, named or 1, diags)
        if not ok:
            continue
        if named is None:
            named = _layer_of_doc(doc)
            if named is None:
                parts = _split_bundle(doc)
                if parts:
                    for n, part in parts.items():
                        _claim(n, part, f"{p}#layer{n}", docs, sources, diags)
                else:
                    diags.append(LoadDiagnostic("warning", 1, "", f"ignored {p.name}: not a layer document"))
                continue
        _claim(named, doc, str(p), docs, sources, diags)


def _claim(n: int, doc: Any, src: str, docs: dict, sources: dict, diags: list[LoadDiagnostic]) -> None:
    if n in docs:
        diags.append(LoadDiagnostic("error", n, "", f"layer {n} declared twice ({sources[n]} and {src})"))
        return
    docs[n], sources[n] = doc, src


# --------------------------------------------------------------------------
# Layer interpretation
# --------------------------------------------------------------------------


class _Ctx:
    """Collects diagnostics while one layer is being interpreted."""

    def __init__(self, layer: int, diags: list[LoadDiagnostic]):
        self.layer = layer
        self.diags = diags

    def error(self, path: str, message: str) -> None:
        self.diags.append(LoadDiagnostic("error", self.layer, path, message))

    def warn(self, path: str, message: str) -> None:
        self.diags.append(LoadDiagnostic("warning", self.layer, path, message))

    def unknown_keys(self, path: str, doc: dict, known: Iterable[str]) -> None:
        known = set(known)
        for k in doc:
            if k not in known:
                self.warn(f"{path}.{k}" if path else str(k), f"unknown key {k!r} ignored")

    def mapping(self, path: str, value: Any, *, required: bool = True) -> dict | None:
        if value is None and not required:
            return None
        if not isinstance(value, dict):
            self.error(path, f"expected a mapping, got {type(value).__name__}")
            return None
        return value

    def str_list(self, path: str, value: Any) -> list[str]:
        if value is None:
            return []
        if isinstance(value, str):
            return [value.strip()]
        if not isinstance(value, list):
            self.error(path, f"expected a list, got {type(value).__name__}")
            return []
        out = []
        for i, item in enumerate(value):
            if isinstance(item, (dict, list)) or item is None:
                self.error(f"{path}[{i}]", "expected a scalar")
            else:
                out.append(_text(item))
        return out


def _text(value: Any) -> str:
    if isinstance(value, str):
        return value.strip()
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Decimal):
        return format(value, "f")
    if isinstance(value, date):
        return value.isoformat()
    return str(value)


_QUESTION_KEYS = {"id", "question", "text", "short", "name", "data_source", "interpretation", "recommendation", "notes"}
_AGENT_KEYS = {"name", "organization", "purpose", "subject"}


def _parse_layer1(doc: Any, ctx: _Ctx) -> tuple[AgentProfile, list[dict]]:
    agent = AgentProfile()
    doc = ctx.mapping("", doc)
    if doc is None:
        return agent, []
    ctx.unknown_keys("", doc, {"question_inventory", "agent"})
    if "agent" in doc:
        a = ctx.mapping("agent", doc["agent"])
        if a is not None:
            ctx.unknown_keys("agent", a, _AGENT_KEYS)
            agent = AgentProfile(**{k: _text(v) for k, v in a.items() if k in _AGENT_KEYS})
    inv = ctx.mapping("question_inventory", doc.get("question_inventory"))
    if inv is None:
        return agent, []
    out: list[dict] = []
    seen: set[str] = set()
    for dim_key, entries in inv.items():
        path = f"question_inventory.{dim_key}"
        try:
            dim = Dimension.parse(dim_key)
        except ValueError:
            ctx.error(path, f"unknown dimension {dim_key!r}; expected results, process, support or longterm")
            continue
        if entries is None:
            continue
        if not isinstance(entries, list):
            ctx.error(path, "expected a list of questions")
            continue
        for i, entry in enumerate(entries):
            epath = f"{path}[{i}]"
            if not isinstance(entry, dict):
                ctx.error(epath, "expected a mapping with id and question")
                continue
            ctx.unknown_keys(epath, entry, _QUESTION_KEYS)
            qid = _text(entry.get("id", ""))
            if not QUESTION_ID.match(qid):
                ctx.error(f"{epath}.id", f"invalid question id {qid!r}; expected Q<digits>")
                continue
            if qid in seen:
                ctx.error(f"{epath}.id", f"duplicate question id {qid}")
                continue
            seen.add(qid)
            text = _text(entry.get("question", entry.get("text", "")))
            if not text:
                ctx.error(f"{epath}.question", f"{qid} has no question text")
                continue
            out.append({"id": qid, "text": text, "dimension": dim, "short": _text(entry.get("short", ""))})
    if not out and not any(d.layer == 1 and d.severity == "error" for d in ctx.diags):
        ctx.error("question_inventory", "no questions declared")
    return agent, out


_PATH_KEY = re.compile(r"^(trace|path|.*_path)$")
_SET_KEY = re.compile(r"^(.*?)(?:_factors|_context)?$")
_CHAIN_META = {"trigger", "name", "label", "description"}


def _set_key_dimension(key: str) -> Dimension | None:
    m = _SET_KEY.match(key)
    try:
        return Dimension.parse(m.group(1)) if m else None
    except ValueError:
        return None


def _parse_layer2(doc: Any, ctx: _Ctx, dims: dict[str, Dimension]):
    doc = ctx.mapping("", doc)
    chains: list[AttributionChain] = []
    explicit: list[tuple[str, str]] = []
    if doc is None:
        return chains, explicit
    ctx.unknown_keys("", doc, {"attribution_model", "attribution_chains"})
    model = doc.get("attribution_model")
    raw_chains: Any = doc.get("attribution_chains")
    base = "attribution_chains"
    if model is not None:
        model = ctx.mapping("attribution_model", model)
        if model is not None:
            ctx.unknown_keys("attribution_model", model, {"chains", "edges", "dimension_mapping"})
            if raw_chains is None:
                raw_chains, base = model.get("chains"), "attribution_model.chains"
            explicit = _parse_edges(model.get("edges"), ctx, dims)
            _check_dimension_mapping(model.get("dimension_mapping"), ctx, dims)
    if raw_chains is None:
        ctx.warn(base, "no attribution chains declared")
        return chains, explicit
    if not isinstance(raw_chains, list):
        ctx.error(base, "expected a list of chains")
        return chains, explicit
    for i, raw in enumerate(raw_chains):
        path = f"{base}[{i}]"
        if not isinstance(raw, dict):
            ctx.error(path, "expected a mapping")
            continue
        trigger = _text(raw.get("trigger", ""))
        if trigger not in dims:
            ctx.error(f"{path}.trigger", f"trigger references undeclared question {trigger or '(missing)'}")
            continue
        segments: list[ChainSegment] = []
        path_index = 0
        for key, members in raw.items():
            if key in _CHAIN_META:
                continue
            kpath = f"{path}.{key}"
            ids = ctx.str_list(kpath, members)
            bad = [m for m in ids if m not in dims]
            for m in bad:
                ctx.error(kpath, f"chain member references undeclared question {m}")
            ids = [m for m in ids if m in dims]
            if _PATH_KEY.match(key):
                # Split a path into runs of equal dimension, keeping order.
                run: list[str] = []
                for m in ids:
                    if run and dims[run[-1]] is not dims[m]:
                        segments.append(ChainSegment(key, dims[run[0]], tuple(run), True, path_index))
                        run = []
                    run.append(m)
                if run:
                    segments.append(ChainSegment(key, dims[run[0]], tuple(run), True, path_index))
                path_index += 1
            else:
                dim = _set_key_dimension(key)
                if dim is None:
                    ctx.warn(kpath, f"unknown chain key {key!r} ignored")
                    continue
                if ids:
                    segments.append(ChainSegment(key, dim, tuple(ids), False, path_index))
                    path_index += 1
        name = _text(raw.get("name", raw.get("label", "")))
        chains.append(AttributionChain(trigger, tuple(segments), name))
    return chains, explicit


def _parse_edges(raw: Any, ctx: _Ctx, dims: dict[str, Dimension]) -> list[tuple[str, str]]:
    if raw is None:
        return []
    if not isinstance(raw, list):
        ctx.error("attribution_model.edges", "expected a list of [cause, effect] pairs")
        return []
    out = []
    for i, e in enumerate(raw):
        path = f"attribution_model.edges[{i}]"
        if isinstance(e, dict):
            pair = (_text(e.get("from", "")), _text(e.get("to", "")))
        elif isinstance(e, list) and len(e) == 2:
            pair = (_text(e[0]), _text(e[1]))
        elif isinstance(e, str) and "->" in e:
            a, b = e.split("->", 1)
            pair = (a.strip(), b.strip())
        else:
            ctx.error(path, "expected [cause, effect]")
            continue
        missing = [q for q in pair if q not in dims]
        if missing:
            ctx.error(path, f"edge references undeclared question {missing[0]}")
            continue
        out.append(pair)
    return out


def _check_dimension_mapping(raw: Any, ctx: _Ctx, dims: dict[str, Dimension]) -> None:
    if raw is None:
        return
    raw = ctx.mapping("attribution_model.dimension_mapping", raw)
    if raw is None:
        return
    for key, ids in raw.items():
        path = f"attribution_model.dimension_mapping.{key}"
        try:
            dim = Dimension.parse(key)
        except ValueError:
            ctx.error(path, f"unknown dimension {key!r}")
            continue
        for qid in ctx.str_list(path, ids):
            if qid not in dims:
                ctx.error(path, f"dimension mapping references undeclared question {qid}")
            elif dims[qid] is not dim:
                ctx.error(path, f"{qid} is {dims[qid].title} in the question inventory, not {dim.title}")


def _derive_edges(chains: Iterable[AttributionChain]) -> list[tuple[str, str]]:
    """Causal edges implied by chains: each path member explains its predecessor."""
    edges: list[tuple[str, str]] = []
    for chain in chains:
        by_path: dict[int, list[ChainSegment]] = {}
        for seg in chain.segments:
            by_path.setdefault(seg.path_index, []).append(seg)
        for segs in by_path.values():
            if segs[0].ordered:
                seq = [m for s in segs for m in s.members]
                prev = chain.trigger
                for m in seq:
                    edges.append((m, prev))
                    prev = m
            else:
                edges.extend((m, chain.trigger) for s in segs for m in s.members)
    return edges


_MAPPING_KEYS = {
    "name", "source_type", "connection", "query_template", "file_pattern", "endpoint", "parameters",
    "update_frequency", "freshness_sla", "parse_method", "notes", "exported_variables",
}
_LOCATOR_KEYS = ("query_template", "file_pattern", "endpoint")


def _parse_layer3(doc: Any, ctx: _Ctx, dims: dict[str, Dimension]) -> tuple[dict[str, DataMapping], list[str]]:
    doc = ctx.mapping("", doc)
    out: dict[str, DataMapping] = {}
    if doc is None:
        return out, []
    ctx.unknown_keys("", doc, {"data_mapping", "context_variables"})
    context = ctx.str_list("context_variables", doc.get("context_variables"))
    raw = doc.get("data_mapping")
    if raw is None:
        ctx.warn("data_mapping", "no data mappings declared")
        return out, context
    raw = ctx.mapping("data_mapping", raw)
    if raw is None:
        return out, context
    for qid, entry in raw.items():
        qid = _text(qid)
        path = f"data_mapping.{qid}"
        if qid not in dims:
            ctx.error(path, f"data mapping references undeclared question {qid}")
            continue
        entry = ctx.mapping(path, entry)
        if entry is None:
            continue
        ctx.unknown_keys(path, entry, _MAPPING_KEYS)
        source_type = _text(entry.get("source_type", ""))
        kind = SOURCE_KIND_ALIASES.get(source_type)
        if kind is None:
            ctx.error(f"{path}.source_type", f"unknown source_type {source_type or '(missing)'!r}")
            continue
        locators = [k for k in _LOCATOR_KEYS if k in entry]
        if len(locators) != 1:
            ctx.error(path, "expected exactly one of query_template, file_pattern or endpoint")
            continue
        freq = _text(entry.get("update_frequency", ""))
        if freq not in UPDATE_FREQUENCIES:
            ctx.error(f"{path}.update_frequency", f"unknown update_frequency {freq or '(missing)'!r}")
            continue
        params = entry.get("parameters")
        names = list(params) if isinstance(params, dict) else ctx.str_list(f"{path}.parameters", params)
        out[qid] = DataMapping(
            source_type=source_type,
            source_kind=kind,
            locator=_text(entry[locators[0]]),
            locator_kind=locators[0],
            update_frequency=freq,
            freshness_sla=_text(entry.get("freshness_sla", "")),
            parameters=tuple(_text(n) for n in names),
            exported_variables=tuple(ctx.str_list(f"{path}.exported_variables", entry.get("exported_variables"))),
            name=_text(entry.get("name", "")),
            connection=_text(entry.get("connection", "")),
        )
    return out, context


_TRACK_KEYS = {"enabled", "rationale", "rules", "type", "template"}


def _iter_rule_entries(doc: Any):
    """Yield (qid, track, index, path, raw rule) for every Layer-4 rule entry."""
    if not isinstance(doc, dict) or not isinstance(doc.get("dual_track_logic"), dict):
        return
    for qid, policy in doc["dual_track_logic"].items():
        if not isinstance(policy, dict):
            continue
        for track in ("interpretation", "recommendation"):
            block = policy.get(track)
            if not isinstance(block, dict) or not isinstance(block.get("rules"), list):
                continue
            for i, rule in enumerate(block["rules"]):
                yield _text(qid), track, i, f"dual_track_logic.{qid}.{track}.rules[{i}]", rule


def _aliases(doc: Any, ctx: _Ctx | None = None) -> dict[str, str]:
    raw = doc.get("aliases") if isinstance(doc, dict) else None
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        if ctx:
            ctx.error("aliases", "expected a mapping of phrase to condition")
        return {}
    return {_text(k): _text(v) for k, v in raw.items()}


def _parse_rule_condition(text: str, aliases: dict[str, str]) -> tuple[ConditionAst, list[str]]:
    expanded, used = expand_aliases(text, aliases)
    return parse_condition(expanded), used


def parse_condition_fields(bundle: LayerBundle) -> list[tuple[str, str, int, ConditionAst | LoadDiagnostic]]:
    """Parse every Layer-4 rule condition, reporting failures by location."""
    doc = bundle.layer(4)
    aliases = _aliases(doc)
    out: list[tuple[str, str, int, ConditionAst | LoadDiagnostic]] = []
    for qid, track, i, path, rule in _iter_rule_entries(doc):
        cond = rule.get("condition") if isinstance(rule, dict) else None
        if not isinstance(cond, str):
            out.append((qid, track, i, LoadDiagnostic("error", 4, f"{path}.condition", "missing condition text")))
            continue
        try:
            ast, _ = _parse_rule_condition(cond, aliases)
        except ConditionSyntaxError as exc:
            out.append((qid, track, i, LoadDiagnostic("error", 4, f"{path}.condition", f"{exc.message} in {cond!r}")))
        else:
            out.append((qid, track, i, ast))
    return out


def _parse_track(block: Any, path: str, ctx: _Ctx, aliases: dict[str, str]) -> dict:
    out: dict[str, Any] = {"enabled": False, "rules": [], "rationale": "", "type": "rule_based", "template": None}
    if block is None:
        return out
    block = ctx.mapping(path, block)
    if block is None:
        return out
    ctx.unknown_keys(path, block, _TRACK_KEYS)
    enabled = block.get("enabled", False)
    if not isinstance(enabled, bool):
        ctx.error(f"{path}.enabled", f"expected true or false, got {enabled!r}")
        enabled = False
    out["enabled"] = enabled
    out["rationale"] = _text(block.get("rationale", ""))
    kind = _text(block.get("type", "rule_based"))
    if kind not in ("rule_based", "open_ended"):
        ctx.error(f"{path}.type", f"unknown recommendation type {kind!r}")
    out["type"] = kind
    if block.get("template") is not None:
        out["template"] = _text(block["template"])
    rules = block.get("rules") or []
    if not isinstance(rules, list):
        ctx.error(f"{path}.rules", "expected a list of rules")
        rules = []
    for i, raw in enumerate(rules):
        rpath = f"{path}.rules[{i}]"
        if not isinstance(raw, dict):
            ctx.error(rpath, "expected a mapping with condition and output")
            continue
        ctx.unknown_keys(rpath, raw, {"condition", "output"})
        cond = raw.get("condition")
        output = _text(raw.get("output", ""))
        if not isinstance(cond, str) or not cond.strip():
            ctx.error(f"{rpath}.condition", "missing condition text")
            continue
        if not output:
            ctx.error(f"{rpath}.output", "rule output must be non-empty")
            continue
        try:
            ast, used = _parse_rule_condition(cond, aliases)
        except ConditionSyntaxError as exc:
            ctx.error(f"{rpath}.condition", f"{exc.message} in {cond!r}")
            continue
        for phrase in used:
            ctx.warn(f"{rpath}.condition", f"prose condition resolved through alias {phrase!r} -> {render(ast)!r}")
        out["rules"].append(Rule(ast, output, cond.strip()))
    return out


def _parse_layer4(doc: Any, ctx: _Ctx, dims: dict[str, Dimension]) -> dict[str, DualTrackPolicy]:
    doc = ctx.mapping("", doc)
    out: dict[str, DualTrackPolicy] = {}
    if doc is None:
        return out
    ctx.unknown_keys("", doc, {"dual_track_logic", "aliases"})
    aliases = _aliases(doc, ctx)
    raw = doc.get("dual_track_logic")
    if raw is None:
        ctx.warn("dual_track_logic", "no dual-track policies declared")
        return out
    raw = ctx.mapping("dual_track_logic", raw)
    if raw is None:
        return out
    for qid, entry in raw.items():
        qid = _text(qid)
        path = f"dual_track_logic.{qid}"
        if qid not in dims:
            ctx.error(path, f"dual-track policy references undeclared question {qid}")
            continue
        entry = ctx.mapping(path, entry)
        if entry is None:
            continue
        ctx.unknown_keys(path, entry, {"interpretation", "recommendation", "display_note"})
        interp = _parse_track(entry.get("interpretation"), f"{path}.interpretation", ctx, aliases)
        rec = _parse_track(entry.get("recommendation"), f"{path}.recommendation", ctx, aliases)
        out[qid] = DualTrackPolicy(
            interpretation_enabled=interp["enabled"],
            interpretation_rules=tuple(interp["rules"]),
            recommendation_enabled=rec["enabled"],
            recommendation_kind=Authority.OPEN_ENDED if rec["type"] == "open_ended" else Authority.RULE_BASED,
            recommendation_rules=tuple(rec["rules"]),
            open_template=rec["template"],
            interpretation_rationale=interp["rationale"],
            recommendation_rationale=rec["rationale"],
            display_note=_text(entry.get("display_note", "")),
        )
    return out


_LEXICON_FIELDS = ("prohibited_topics", "unfounded_claims", "overconfident_terms", "hedging_terms", "generic_advice", "causal_markers")


@lru_cache(maxsize=1)
def default_lexicons() -> Lexicons:
    text = resources.files("fourdare").joinpath("data/lexicons.yaml").read_text(encoding="utf-8")
    raw = load_yaml(text) or {}
    return Lexicons(**{f: tuple(_text(t) for t in raw.get(f, [])) for f in _LEXICON_FIELDS})


def _merge_terms(base: tuple[str, ...], extra: Iterable[str]) -> tuple[str, ...]:
    out = list(base)
    lowered = {t.lower() for t in out}
    for t in extra:
        if t.lower() not in lowered:
            out.append(t)
            lowered.add(t.lower())
    return tuple(out)


def _categorized(raw: Any, path: str, ctx: _Ctx) -> list[tuple[str, tuple[str, ...]]]:
    if raw is None:
        return []
    if isinstance(raw, list):
        return [("general", tuple(ctx.str_list(path, raw)))]
    raw = ctx.mapping(path, raw)
    if raw is None:
        return []
    return [(_text(k), tuple(ctx.str_list(f"{path}.{k}", v))) for k, v in raw.items()]


def _parse_layer5(doc: Any, ctx: _Ctx, dims: dict[str, Dimension]) -> BoundarySet:
    lex = default_lexicons()
    if doc is None or (isinstance(doc, dict) and not doc.get("boundary_constraints")):
        if isinstance(doc, dict):
            ctx.unknown_keys("", doc, {"boundary_constraints"})
        ctx.warn("boundary_constraints", "no boundaries declared")
        return BoundarySet(lexicons=lex)
    doc = ctx.mapping("", doc)
    if doc is None:
        return BoundarySet(lexicons=lex)
    ctx.unknown_keys("", doc, {"boundary_constraints"})
    bc = ctx.mapping("boundary_constraints", doc.get("boundary_constraints"))
    if bc is None:
        return BoundarySet(lexicons=lex)
    base = "boundary_constraints"
    global_rules = _categorized(bc.get("global"), f"{base}.global", ctx)
    prohibitions = ctx.str_list(f"{base}.absolute_prohibitions", bc.get("absolute_prohibitions"))
    interaction = _categorized(bc.get("interaction_rules"), f"{base}.interaction_rules", ctx)
    per_dim: dict[Dimension, list[str]] = {}
    per_q: dict[str, list[str]] = {}

    def add_question(qid: str, value: Any, path: str) -> None:
        if qid not in dims:
            ctx.error(path, f"boundary references undeclared question {qid}")
            return
        per_q.setdefault(qid, []).extend(ctx.str_list(path, value))

    for key, value in bc.items():
        path = f"{base}.{key}"
        if key in ("global", "absolute_prohibitions", "interaction_rules"):
            continue
        if key == "per_question":
            m = ctx.mapping(path, value)
            for qid, items in (m or {}).items():
                add_question(_text(qid), items, f"{path}.{qid}")
        elif key == "lexicons":
            m = ctx.mapping(path, value) or {}
            ctx.unknown_keys(path, m, _LEXICON_FIELDS)
            lex = Lexicons(**{
                f: _merge_terms(getattr(lex, f), ctx.str_list(f"{path}.{f}", m.get(f))) for f in _LEXICON_FIELDS
            })
        elif key.endswith("_dimension"):
            try:
                dim = Dimension.parse(key)
            except ValueError:
                ctx.error(path, f"unknown dimension {key!r}")
                continue
            if isinstance(value, dict):
                for qid, items in value.items():
                    qid = _text(qid)
                    if qid in dims and dims[qid] is not dim:
                        ctx.warn(f"{path}.{qid}", f"{qid} is a {dims[qid].title} question listed under {dim.title}")
                    add_question(qid, items, f"{path}.{qid}")
            else:
                per_dim.setdefault(dim, []).extend(ctx.str_list(path, value))
        else:
            ctx.warn(path, f"unknown key {key!r} ignored")
    if not prohibitions and not global_rules and not per_dim and not per_q and not interaction:
        ctx.warn(base, "no boundaries declared")
    return BoundarySet(
        global_rules=tuple(global_rules),
        prohibitions=tuple(prohibitions),
        per_dimension=tuple((d, tuple(v)) for d, v in per_dim.items()),
        per_question=tuple((q, tuple(v)) for q, v in per_q.items()),
        interaction_rules=tuple(interaction),
        lexicons=lex,
    )


# --------------------------------------------------------------------------
# Assembly
# --------------------------------------------------------------------------


def build_spec(bundle: LayerBundle) -> LoadResult:
    """Interpret raw layer documents and assemble a canonical spec."""
    diags: list[LoadDiagnostic] = []
    agent, entries = _parse_layer1(bundle.layer(1), _Ctx(1, diags))
    dims = {e["id"]: e["dimension"] for e in entries}
    chains, explicit_edges = _parse_layer2(bundle.layer(2), _Ctx(2, diags), dims)
    mappings, context = _parse_layer3(bundle.layer(3), _Ctx(3, diags), dims)
    policies = _parse_layer4(bundle.layer(4), _Ctx(4, diags), dims)
    boundaries = _parse_layer5(bundle.layer(5), _Ctx(5, diags), dims)
    if any(d.severity == "error" for d in diags):
        return LoadResult(None, diags)

    per_q = dict(boundaries.per_question)
    questions = tuple(
        Question(
            id=e["id"],
            text=e["text"],
            dimension=e["dimension"],
            short_name=e["short"],
            data_mapping=mappings.get(e["id"]),
            dual_track=policies.get(e["id"]),
            boundaries=tuple(per_q.get(e["id"], ())),
        )
        for e in entries
    )
    edges = list(dict.fromkeys(explicit_edges + _derive_edges(chains)))
    graph = AttributionGraph(tuple(e["id"] for e in entries), tuple(edges), tuple(chains))
    spec = FourDSpec(
        agent=agent,
        questions=questions,
        graph=graph,
        boundaries=boundaries,
        context_variables=tuple(context),
        provenance=tuple((n, src) for n, src in enumerate(bundle.sources, start=1)),
    )
    return LoadResult(canonicalize(spec), diags)


def load(source: str | Path | Sequence[str | Path]) -> LoadResult:
    """Read and assemble a spec, collecting every diagnostic. Never raises."""
    try:
        bundle, diags = read_bundle(source)
        if bundle is None:
            return LoadResult(None, diags)
        result = build_spec(bundle)
        result.diagnostics[:0] = diags
        return result
    except Exception as exc:  # noqa: BLE001 - totality guarantee
        return LoadResult(None, [LoadDiagnostic("error", 1, "", f"internal loader failure: {exc!r}")])


def load_spec(source: str | Path | Sequence[str | Path]) -> FourDSpec:
    """Like :func:`load` but raises :class:`SpecLoadError` on errors."""
    result = load(source)
    if result.spec is None:
        raise SpecLoadError(result.diagnostics)
    return result.spec


# --------------------------------------------------------------------------
# Canonical form
# --------------------------------------------------------------------------


def _edge_key(e: tuple[str, str]) -> tuple:
    return (question_key(e[0]), question_key(e[1]))


def canonicalize(spec: FourDSpec) -> FourDSpec:
    """Fixed ordering for every unordered collection. Idempotent."""
    b = spec.boundaries
    fixed = [(c, items) for c in GLOBAL_CATEGORIES for cat, items in b.global_rules if cat == c]
    extra = sorted((c, items) for c, items in b.global_rules if c not in GLOBAL_CATEGORIES)
    boundaries = replace(
        b,
        global_rules=tuple(fixed + extra),
        per_dimension=tuple(sorted(b.per_dimension, key=lambda kv: kv[0].depth)),
        per_question=tuple(sorted(b.per_question, key=lambda kv: question_key(kv[0]))),
        interaction_rules=tuple(sorted(b.interaction_rules)),
    )
    order = {c: i for i, c in enumerate(spec.graph.chains)}
    graph = AttributionGraph(
        nodes=tuple(sorted(spec.graph.nodes, key=question_key)),
        edges=tuple(sorted(set(spec.graph.edges), key=_edge_key)),
        chains=tuple(sorted(spec.graph.chains, key=lambda c: (question_key(c.trigger), _chain_sig(c), order[c]))),
    )
    return replace(
        spec,
        questions=tuple(sorted(spec.questions, key=lambda q: question_key(q.id))),
        graph=graph,
        boundaries=boundaries,
        context_variables=tuple(sorted(set(spec.context_variables))),
    )


def _chain_sig(c: AttributionChain) -> str:
    return json.dumps([[s.key, list(s.members)] for s in c.segments])


def spec_to_dict(spec: FourDSpec) -> dict:
    """Plain-data form of a spec, in canonical field order."""

    def rules(rs):
        return [{"condition": render(r.condition), "source": r.source, "output": r.output} for r in rs]

    def mapping(m: DataMapping | None):
        if m is None:
            return None
        return {
            "name": m.name,
            "source_type": m.source_type,
            "source_kind": m.source_kind,
            "connection": m.connection,
            "locator_kind": m.locator_kind,
            "locator": m.locator,
            "parameters": list(m.parameters),
            "update_frequency": m.update_frequency,
            "freshness_sla": m.freshness_sla,
            "exported_variables": list(m.exported_variables),
        }

    def policy(p: DualTrackPolicy | None):
        if p is None:
            return None
        return {
            "interpretation": {
                "enabled": p.interpretation_enabled,
                "rationale": p.interpretation_rationale,
                "rules": rules(p.interpretation_rules),
            },
            "recommendation": {
                "enabled": p.recommendation_enabled,
                "kind": p.recommendation_kind.value,
                "rationale": p.recommendation_rationale,
                "rules": rules(p.recommendation_rules),
                "template": p.open_template,
            },
            "display_note": p.display_note,
        }

    b = spec.boundaries
    return {
        "agent": {
            "name": spec.agent.name,
            "organization": spec.agent.organization,
            "purpose": spec.agent.purpose,
            "subject": spec.agent.subject,
        },
        "questions": [
            {
                "id": q.id,
                "text": q.text,
                "short": q.short_name,
                "dimension": q.dimension.value,
                "data_mapping": mapping(q.data_mapping),
                "dual_track": policy(q.dual_track),
                "boundaries": list(q.boundaries),
            }
            for q in spec.questions
        ],
        "graph": {
            "nodes": list(spec.graph.nodes),
            "edges": [list(e) for e in spec.graph.edges],
            "chains": [
                {
                    "trigger": c.trigger,
                    "name": c.name,
                    "segments": [
                        {
                            "key": s.key,
                            "dimension": s.dimension.value,
                            "members": list(s.members),
                            "ordered": s.ordered,
                            "path": s.path_index,
                        }
                        for s in c.segments
                    ],
                }
                for c in spec.graph.chains
            ],
        },
        "boundaries": {
            "global": [[c, list(items)] for c, items in b.global_rules],
            "prohibitions": list(b.prohibitions),
            "per_dimension": [[d.value, list(items)] for d, items in b.per_dimension],
            "per_question": [[q, list(items)] for q, items in b.per_question],
            "interaction_rules": [[c, list(items)] for c, items in b.interaction_rules],
            "lexicons": {f: list(getattr(b.lexicons, f)) for f in _LEXICON_FIELDS},
        },
        "context_variables": list(spec.context_variables),
        "provenance": [[n, src] for n, src in spec.provenance],
    }


def serialize_spec(spec: FourDSpec) -> str:
    return json.dumps(spec_to_dict(spec), indent=2, ensure_ascii=False) + "\n"
