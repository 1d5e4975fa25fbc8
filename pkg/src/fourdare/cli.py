"""Command-line entry point: ``fourdare validate|compile|trace|audit``.

Exit codes are a stable contract:

    0  ok
    1  I/O, parse or usage error
    2  validation error, incomplete response, or unknown trigger
    3  boundary or language violation
    4  fabricated value
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Sequence, TextIO

from .auditor import AuditError, audit_report
from .compiler import compile_prompt
from .loader import LoadResult, load
from .tracer import (
    SnapshotError,
    TraceError,
    emit_react_log,
    load_snapshot,
    render_react_text,
    render_report_text,
    report_from_jsonl,
    report_to_jsonl,
    trace,
)
from .validator import ERROR, errors, render_findings, validate

EXIT_OK = 0
EXIT_IO = 1
EXIT_INVALID = 2
EXIT_BOUNDARY = 3
EXIT_FABRICATION = 4

BUNDLE_ENV = "FOURDARE_BUNDLE"


class _Parser(argparse.ArgumentParser):
    # usage errors share the I/O code so that 2 keeps meaning "invalid spec"
    def error(self, message: str):  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_IO, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class CliConfig:
    layers: tuple[str, ...] | None
    bundle: str | None
    snapshot: str | None
    out: str | None
    fmt: str
    as_of: date | None
    strict: bool

    @property
    def source(self) -> str | list[str]:
        return list(self.layers) if self.layers else self.bundle  # type: ignore[return-value]


def _config(args: argparse.Namespace) -> CliConfig:
    bundle = args.bundle
    if not args.layers and not bundle:
        bundle = os.environ.get(BUNDLE_ENV)
    if not args.layers and not bundle:
        raise _UsageError(f"one of --bundle or --layers is required (or set {BUNDLE_ENV})")
    return CliConfig(
        layers=tuple(args.layers) if args.layers else None,
        bundle=None if args.layers else bundle,
        snapshot=getattr(args, "snapshot", None),
        out=getattr(args, "out", None),
        fmt=args.format,
        as_of=getattr(args, "as_of", None),
        strict=getattr(args, "strict", False),
    )


class _UsageError(Exception):
    pass


def _emit(out: TextIO, text: str) -> None:
    out.write(text if text.endswith("\n") or not text else text + "\n")


def _load(cfg: CliConfig, err: TextIO, warnings: bool = False) -> LoadResult | None:
    result = load(cfg.source)
    for d in result.diagnostics if warnings else result.errors:
        _emit(err, str(d))
    return result if result.ok else None


def _spec_or_exit(cfg: CliConfig, err: TextIO):
    """Load and validate; returns (spec, None) or (None, exit_code)."""
    result = _load(cfg, err)
    if result is None:
        return None, EXIT_IO
    findings = validate(result.spec)
    if errors(findings):
        _print_findings(findings, cfg.fmt, err)
        return None, EXIT_INVALID
    return result.spec, None


def _print_findings(findings, fmt: str, out: TextIO) -> None:
    if fmt == "machine":
        for f in findings:
            _emit(out, f.to_json())
    else:
        _emit(out, render_findings(findings))


# ---------------------------------------------------------------- commands


def cmd_validate(cfg: CliConfig, out: TextIO, err: TextIO) -> int:
    result = _load(cfg, err, warnings=True)
    if result is None:
        return EXIT_IO
    findings = validate(result.spec)
    _print_findings(findings, cfg.fmt, out)
    if any(f.severity == ERROR for f in findings):
        return EXIT_INVALID
    if cfg.strict and findings:
        return EXIT_INVALID
    return EXIT_OK


def cmd_compile(cfg: CliConfig, out: TextIO, err: TextIO) -> int:
    spec, code = _spec_or_exit(cfg, err)
    if spec is None:
        return code
    doc = compile_prompt(spec)
    target = Path(cfg.out or "prompt.txt")
    index = target.with_name(target.stem + ".index.jsonl")
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(doc.full_text.encode("utf-8"))
        index.write_bytes(doc.index_jsonl().encode("utf-8"))
    except OSError as exc:
        _emit(err, f"error: cannot write {target}: {exc.strerror}")
        return EXIT_IO
    if cfg.fmt == "machine":
        _emit(out, json.dumps({"prompt": str(target), "index": str(index), "checksum": doc.checksum}))
    else:
        _emit(out, f"wrote {target} ({len(doc.full_text.encode('utf-8'))} bytes)")
        _emit(out, f"wrote {index}")
        _emit(out, f"sha256 {doc.checksum}")
    return EXIT_OK


def _snapshot_or_exit(cfg: CliConfig, err: TextIO):
    if not cfg.snapshot:
        _emit(err, "error: --snapshot is required")
        return None
    try:
        return load_snapshot(cfg.snapshot)
    except SnapshotError as exc:
        _emit(err, f"error: {exc}")
        return None


def cmd_trace(cfg: CliConfig, trigger: str, react: bool, out: TextIO, err: TextIO) -> int:
    spec, code = _spec_or_exit(cfg, err)
    if spec is None:
        return code
    snapshot = _snapshot_or_exit(cfg, err)
    if snapshot is None:
        return EXIT_IO
    try:
        report = trace(spec, trigger, snapshot, as_of=cfg.as_of)
    except TraceError as exc:
        _emit(err, f"error: {exc}")
        return EXIT_INVALID
    text = render_report_text(report)
    machine = report_to_jsonl(report)
    react_text = render_react_text(emit_react_log(report)) if react else ""
    if cfg.out:
        from .plotting import plot_report

        folder = Path(cfg.out)
        try:
            folder.mkdir(parents=True, exist_ok=True)
            written = [folder / "report.txt", folder / "report.jsonl"]
            written[0].write_bytes(text.encode("utf-8"))
            written[1].write_bytes(machine.encode("utf-8"))
            if react:
                written.append(folder / "react.txt")
                written[-1].write_bytes(react_text.encode("utf-8"))
            written.append(plot_report(report, folder / "trace.png"))
        except OSError as exc:
            _emit(err, f"error: cannot write to {folder}: {exc.strerror}")
            return EXIT_IO
        for p in written:
            _emit(out, f"wrote {p}")
        return EXIT_OK
    if react:
        _emit(out, react_text)
        if cfg.fmt == "text":
            out.write("\n")
    _emit(out, machine if cfg.fmt == "machine" else text)
    return EXIT_OK


def _read_response(path: str, err: TextIO):
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        _emit(err, f"error: cannot read response {path}: {exc}")
        return None
    first = raw.lstrip().splitlines()[0] if raw.strip() else ""
    if first.startswith("{") and '"record"' in first:
        try:
            return report_from_jsonl(raw)
        except ValueError as exc:
            _emit(err, f"error: {path}: {exc}")
            return None
    return raw


def cmd_audit(cfg: CliConfig, response_path: str, question: str | None, out: TextIO, err: TextIO) -> int:
    spec, code = _spec_or_exit(cfg, err)
    if spec is None:
        return code
    snapshot = _snapshot_or_exit(cfg, err)
    if snapshot is None:
        return EXIT_IO
    response = _read_response(response_path, err)
    if response is None:
        return EXIT_IO
    try:
        findings = audit_report(spec, response, snapshot, queried=question)
    except AuditError as exc:
        _emit(err, f"error: {exc}")
        return EXIT_INVALID if question else EXIT_IO
    _emit(out, findings.to_json() if cfg.fmt == "machine" else findings.render())
    return findings.exit_code


# ---------------------------------------------------------------- parser


def _date_arg(text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO date: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--bundle", help=f"bundle file or directory (default: ${BUNDLE_ENV})")
    src.add_argument("--layers", nargs=5, metavar="PATH", help="the five layer files in order")
    common.add_argument("--format", choices=("text", "machine"), default="text")

    parser = _Parser(prog="fourdare", description="Validate, compile, trace and audit attribution agent specs.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", parents=[common], help="check a spec and print findings")
    p.add_argument("--strict", action="store_true", help="treat warnings as errors")

    p = sub.add_parser("compile", parents=[common], help="compile a spec into a system prompt")
    p.add_argument("--out", help="prompt file (default prompt.txt); the index goes beside it")

    p = sub.add_parser("trace", parents=[common], help="trace a question against a data snapshot")
    p.add_argument("trigger", help="question id, e.g. Q2")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--out", help="directory for report.txt, report.jsonl, react.txt and trace.png")
    p.add_argument("--react", action="store_true", help="include the Thought/Action/Observation log")
    p.add_argument("--as-of", type=_date_arg, help="evaluation date for freshness caveats")

    p = sub.add_parser("audit", parents=[common], help="audit a report or free-text response")
    p.add_argument("--response", required=True, help="report JSONL or sectioned text")
    p.add_argument("--question", help="queried question id (needed for free text)")
    p.add_argument("--snapshot", required=True)
    return parser


def main(argv: Sequence[str] | None = None, out: TextIO | None = None, err: TextIO | None = None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _config(args)
    except _UsageError as exc:
        _emit(err, f"fourdare: error: {exc}")
        return EXIT_IO
    if args.command == "validate":
        return cmd_validate(cfg, out, err)
    if args.command == "compile":
        return cmd_compile(cfg, out, err)
    if args.command == "trace":
        return cmd_trace(cfg, args.trigger, args.react, out, err)
    return cmd_audit(cfg, args.response, args.question, out, err)


if __name__ == "__main__":
    sys.exit(main())
