"""Acceptance criteria, one test each.

Run ``pytest tests/test_acceptance.py -v``; the terminal summary lists a
PASS/FAIL line per criterion with its wall time.
"""

from __future__ import annotations

import io
import json
import time
from collections import Counter
from decimal import Decimal

import pytest

import test_properties as props
from conftest import BANK, DATA, EASTERN, bank_layers, mutated_bank, write_layers
from fourdare.auditor import audit_report, lint_boundaries
from fourdare.cli import main
from fourdare.compiler import SECTION_IDS, compile_prompt
from fourdare.loader import load_spec
from fourdare.model import Dimension
from fourdare.tracer import compute_metrics, load_snapshot, trace
from fourdare.validator import errors, validate
from mutations import MUTATIONS

PERSONNEL = "Never recommend hiring, firing, promotion, or compensation"
BETWEEN_RULE = "IF conversion_rate BETWEEN 0.1 AND 0.2"


@pytest.mark.criterion(1, "fixture round-trip")
def test_fixture_round_trip():
    started = time.perf_counter()
    spec = load_spec(BANK)
    findings = validate(spec)
    doc = compile_prompt(spec)
    elapsed = time.perf_counter() - started

    counts = Counter(q.dimension for q in spec.questions)
    assert len(spec.questions) == 12
    assert [counts[d] for d in Dimension] == [2, 5, 2, 3]
    assert errors(findings) == []
    assert tuple(s.id for s in doc.sections) == SECTION_IDS and len(SECTION_IDS) == 7
    assert PERSONNEL in doc.full_text
    assert BETWEEN_RULE in doc.full_text
    assert elapsed < 1.0, f"{elapsed:.3f}s"


@pytest.mark.criterion(2, "deterministic compilation")
def test_deterministic_compilation(tmp_path):
    first = compile_prompt(load_spec(BANK))
    second = compile_prompt(load_spec(BANK))

    layers = bank_layers()
    inv = layers[1]["question_inventory"]
    for dim in inv:
        inv[dim] = list(reversed(inv[dim]))
    for layer, key in ((3, "data_mapping"), (4, "dual_track_logic")):
        layers[layer][key] = dict(reversed(list(layers[layer][key].items())))
    model = layers[2]["attribution_model"]
    model["chains"] = list(reversed(model["chains"]))
    model["dimension_mapping"] = dict(reversed(list(model["dimension_mapping"].items())))
    shuffled = compile_prompt(load_spec(write_layers(tmp_path / "shuffled", layers)))

    assert first.checksum == second.checksum == shuffled.checksum
    assert first.full_text.encode() == second.full_text.encode() == shuffled.full_text.encode()


@pytest.mark.criterion(3, "Eastern region reproduction")
def test_eastern_reproduction():
    spec = load_spec(BANK)
    snap = load_snapshot(EASTERN)
    assert snap.bindings["Q2"]["aum_ratio"] == Decimal("0.88")
    assert snap.bindings["Q4"]["penetration_rate"] == Decimal("0.24")
    assert snap.bindings["Q9"]["campaign_coverage"] == Decimal("0.67")
    assert snap.bindings["Q11"]["new_entrants"] == Decimal("3")

    report = trace(spec, "Q2", snap)
    assert compute_metrics(report).dimensions_covered == 4
    assert "Low penetration in high-value segment" in report.finding("Q4").interpretations

    findings = audit_report(spec, report, snap)
    assert findings.complete
    assert findings.boundary_violations == () and findings.unhedged_claims == ()
    assert findings.fabricated_values == ()
    assert findings.exit_code == 0


@pytest.mark.criterion(4, "baseline contrast")
def test_baseline_contrast():
    spec = load_spec(BANK)
    text = (DATA / "baseline_response.txt").read_text(encoding="utf-8")
    findings = audit_report(spec, text, load_snapshot(EASTERN), "Q2")
    assert findings.metrics.dimensions_covered == 1
    assert findings.metrics.actionable_recommendations == 0


@pytest.mark.criterion(5, "violation detection")
def test_violation_detection():
    spec = load_spec(BANK)
    rows = [
        line.split("\t")
        for line in (DATA / "violations.txt").read_text(encoding="utf-8").splitlines()
        if line and not line.startswith("#")
    ]
    assert len(rows) == 10
    assert {category for category, _ in rows} == {"personnel", "unfounded_claim", "overconfidence"}
    missed = [sentence for _, sentence in rows if not lint_boundaries(spec, sentence)]
    assert missed == []

    clean = (DATA / "clean_response.md").read_text(encoding="utf-8")
    assert lint_boundaries(spec, clean) == []
    findings = audit_report(spec, clean, load_snapshot(EASTERN), "Q2")
    assert findings.boundary_violations == () and findings.unhedged_claims == ()


PROPERTY_SUITES = {
    "a": props.test_evaluator_matches_reference_interpreter,
    "b": props.test_between_is_inclusive_conjunction,
    "c": props.test_cycle_detector_matches_path_oracle,
    "d": props.test_tracer_reports_audit_clean,
    "e": props.test_no_rule_output_on_display_only_dimensions,
}


@pytest.mark.criterion(6, "property suites")
def test_property_suites():
    props.RUNS.clear()
    started = time.perf_counter()
    for suite in PROPERTY_SUITES.values():
        suite()
    elapsed = time.perf_counter() - started

    for key, suite in PROPERTY_SUITES.items():
        ran = props.RUNS[suite.__name__]
        assert ran >= 1000, f"({key}) ran {ran} cases"
    assert elapsed < 30.0, f"{elapsed:.1f}s"


@pytest.mark.criterion(7, "mutation suite")
def test_mutation_suite(tmp_path):
    for i, (name, mutate, code, subject) in enumerate(MUTATIONS):
        folder = mutated_bank(tmp_path / f"m{i}", mutate)
        found = errors(validate(load_spec(folder)))
        assert {f.code for f in found} == {code}, name
        if subject is not None:
            assert any(f.subject == subject for f in found), name

        out = io.StringIO()
        exit_code = main(["validate", "--bundle", str(folder), "--format", "machine"], out=out, err=io.StringIO())
        assert exit_code == 2, name
        assert {json.loads(line)["code"] for line in out.getvalue().splitlines()} >= {code}, name
    assert len(MUTATIONS) == 8

