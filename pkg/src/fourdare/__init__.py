"""Specify, compile, trace and audit four-dimensional attribution agents."""

from .auditor import AuditFindings, StructuredResponse, audit_report, check_completeness, check_data_provenance, lint_boundaries, parse_response
from .compiler import PromptDocument, compile_prompt, render_section
from .conditions import evaluate, parse_condition
from .loader import LoadResult, SpecLoadError, canonicalize, load, load_spec
from .model import DIMENSIONS, Dimension, FourDSpec, authority_for
from .tracer import AttributionReport, DataSnapshot, ReportMetrics, compute_metrics, emit_react_log, fire_rules, load_snapshot, trace
from .validator import Finding, validate

__all__ = [
    "AttributionReport",
    "AuditFindings",
    "DIMENSIONS",
    "DataSnapshot",
    "Dimension",
    "Finding",
    "FourDSpec",
    "LoadResult",
    "PromptDocument",
    "ReportMetrics",
    "SpecLoadError",
    "StructuredResponse",
    "audit_report",
    "authority_for",
    "canonicalize",
    "check_completeness",
    "check_data_provenance",
    "compile_prompt",
    "compute_metrics",
    "emit_react_log",
    "evaluate",
    "fire_rules",
    "lint_boundaries",
    "load",
    "load_snapshot",
    "load_spec",
    "parse_condition",
    "parse_response",
    "render_section",
    "trace",
    "validate",
]
