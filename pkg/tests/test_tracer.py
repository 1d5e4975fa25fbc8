from datetime import date
from decimal import Decimal

import pytest

from fourdare.model import Dimension
from fourdare.tracer import (
    SnapshotError,
    TraceError,
    compute_metrics,
    emit_react_log,
    fire_rules,
    load_snapshot,
    render_react_text,
    render_report_text,
    report_from_jsonl,
    report_to_jsonl,
    snapshot_from_dict,
    trace,
    visit_plan,
)

D = Decimal
R, P, S, L = Dimension.RESULTS, Dimension.PROCESS, Dimension.SUPPORT, Dimension.LONGTERM

# Every Process value sits outside every threshold of its rules:
# Q3 5 >= 5.83*0.7 and 5 < 5.83, quality 0.6 in [0.5, 0.7); Q4 0.4 in [0.3, 0.5) on a non
# high-value segment; Q5 100 >= 1.0*0.8, branch channel; Q6 10 <= 1000*0.15, 0.3 <= 0.6,
# 5 <= 50*1.5, 10 <= 15; Q7 0.22 in (0.2, 0.25].
ALL_FALSE = {
    "snapshot_id": "quiet",
    "as_of": "2024-06-30",
    "context": {"branch_avg": 5.83, "target": 1.0, "last_period": 50, "total_customers": 1000, "regional_avg": 5.83},
    "questions": {
        "Q1": {"completion_rate": 0.93, "target_amount": 100, "actual_amount": 93},
        "Q3": {"visit_frequency": 5, "quality_score": 0.6, "total_visits": 120},
        "Q4": {"penetration_rate": 0.4, "segment": "mass", "benchmark_rate": 0.41},
        "Q5": {"new_customers": 100, "channel": "branch", "volume": 50},
        "Q6": {"churned_customers": 5, "high_risk_customers": 10, "avg_risk_score": 0.3},
        "Q7": {"conversion_rate": 0.22},
        "Q8": {"staffing_ratio": 0.9},
        "Q9": {"campaign_coverage": 0.8, "coverage_target": 0.8, "response_rate": 0.05},
        "Q10": {"clv_growth_rate": 0.02},
        "Q11": {"new_entrants": 1, "window_months": 6},
    },
}


def test_fire_rules_multi_match(bank_spec):
    interps, recs = fire_rules(bank_spec, "Q4", {"penetration_rate": D("0.18"), "segment": "high_value"})
    assert interps == ["Low penetration in high-value segment", "Product penetration below threshold"]
    assert recs == ["Consider targeted bundling campaigns", "Consider systematic needs assessment"]


def test_fire_rules_open_template(bank_spec):
    interps, recs = fire_rules(bank_spec, "Q8", {})
    assert interps == []
    assert len(recs) == 1 and recs[0].startswith("Staffing considerations for management review")


def test_fire_rules_disabled(bank_spec):
    assert fire_rules(bank_spec, "Q1", {"completion_rate": D("0.5")}) == ([], [])


def test_fire_rules_between_edges(bank_spec):
    for v in ("0.1", "0.2"):
        interps, _ = fire_rules(bank_spec, "Q7", {"conversion_rate": D(v)})
        assert interps == ["Conversion acceptable but improvable"]


def test_unbound_rule_skipped_with_caveat(bank_spec):
    notes: list[str] = []
    interps, recs = fire_rules(bank_spec, "Q3", {"visit_frequency": D(1)}, notes)
    assert interps == [] and recs == []
    assert notes and all(n.startswith("Q3 (Visit): a ") for n in notes)


def test_eastern_trace(bank_spec, eastern):
    report = trace(bank_spec, "Q2", eastern)
    assert report.covered_dimensions == (R, P, S, L)
    assert "Low penetration in high-value segment" in report.finding("Q4").interpretations
    assert report.finding("Q7").interpretations == ("Conversion below benchmark",)
    assert report.finding("Q8").open_suggestion.startswith("Staffing considerations")
    assert report.finding("Q2").interpretations == ()
    m = compute_metrics(report)
    assert (m.dimensions_covered, m.causal_factors, m.actionable_recommendations) == (4, 2, 2)


def test_findings_ordered_by_depth(bank_spec, eastern):
    report = trace(bank_spec, "Q2", eastern)
    depths = [f.dimension.depth for f in report.findings]
    assert depths == sorted(depths)
    assert [f.question_id for f in report.findings] == ["Q2", "Q4", "Q7", "Q5", "Q6", "Q8", "Q9", "Q10", "Q11", "Q12"]


def test_missing_members_become_caveats(bank_spec, eastern):
    report = trace(bank_spec, "Q2", eastern)
    missing = [c for c in report.caveats if "data unavailable" in c]
    assert missing == [
        "Q5 (Acquisition): data unavailable; not traced",
        "Q6 (Churn): data unavailable; not traced",
        "Q10 (Lifecycle): data unavailable; not traced",
        "Q12 (Digital Adoption): data unavailable; not traced",
    ]
    assert report.caveats[0].startswith("Data as of 2024-06-30: ")


def test_trigger_only_snapshot(bank_spec):
    snap = snapshot_from_dict({"questions": {"Q2": {"aum_ratio": 0.9}}})
    report = trace(bank_spec, "Q2", snap)
    assert report.covered_dimensions == (R,)
    assert sum("data unavailable" in c for c in report.caveats) == 9
    steps = emit_react_log(report)
    assert steps[0].kind == "Thought"
    unavailable = [s for s in steps if s.kind == "Observation" and s.text == "data unavailable"]
    assert len(unavailable) == 9


def test_all_false_snapshot(bank_spec):
    report = trace(bank_spec, "Q1", snapshot_from_dict(ALL_FALSE))
    assert compute_metrics(report).causal_factors == 0
    assert report.recommendations() == []
    assert all(f.available and f.values for f in report.findings)


def test_react_log_shape(bank_spec, eastern):
    report = trace(bank_spec, "Q2", eastern)
    steps = report.step_log
    assert steps[0].text == "Per attribution model, trace Q2 -> Process -> Support -> Long-term."
    visited = len(report.findings)
    transitions = sum(
        1 for a, b in zip(report.findings, report.findings[1:]) if a.dimension is not b.dimension
    )
    assert len(steps) == 1 + 2 * visited + transitions + 1 == 25
    assert steps[-1].text == "Covered dimensions: Results, Process, Support, Long-term."
    assert render_react_text(steps).startswith("Thought: Per attribution model, trace Q2")


def test_trace_is_pure(bank_spec, eastern):
    assert trace(bank_spec, "Q2", eastern) == trace(bank_spec, "Q2", eastern)


def test_trace_errors(bank_spec, eastern):
    with pytest.raises(TraceError, match="unknown"):
        trace(bank_spec, "Q99", eastern)
    with pytest.raises(TraceError, match="no attribution chain"):
        trace(bank_spec, "Q4", eastern)
    with pytest.raises(TraceError, match="no bindings"):
        trace(bank_spec, "Q1", eastern)


def test_stale_data_caveat(bank_spec, eastern):
    report = trace(bank_spec, "Q2", eastern, as_of=date(2024, 9, 30))
    stale = [c for c in report.caveats if "may be stale" in c]
    assert any(c.startswith("Q2 (AUM Growth)") for c in stale)
    # quarterly source with Q+30 grace: 92 + 30 days covers the gap
    assert not any(c.startswith("Q11") for c in stale)


def test_jsonl_round_trip(bank_spec, eastern):
    report = trace(bank_spec, "Q2", eastern)
    text = report_to_jsonl(report)
    assert report_from_jsonl(text) == report
    assert '"aum_ratio": 0.88' in text


def test_text_layout(bank_spec, eastern):
    text = render_report_text(trace(bank_spec, "Q2", eastern))
    lines = text.splitlines()
    for heading in ("Results:", "Process Attribution:", "Support Context:", "Long-term Context:", "Recommendations:"):
        assert heading in lines
    assert "- Consider targeted bundling campaigns (Q4)" in lines
    assert "Note: Strategic resource allocation decisions require management review." in lines


def test_snapshot_file_loads(eastern):
    assert eastern.snapshot_id == "eastern"
    assert eastern.bindings["Q4"]["segment"] == "high_value"
    assert eastern.context["rm_count"] == D(45)
    assert eastern.as_of["Q2"] == date(2024, 6, 30)


def test_snapshot_rejects_bad_values(tmp_path):
    with pytest.raises(SnapshotError):
        snapshot_from_dict({"questions": {"Q1": {"x": [1, 2]}}})
    with pytest.raises(SnapshotError):
        load_snapshot(tmp_path / "none.yaml")


def test_visit_plan_dedupes(bank_spec):
    plan = visit_plan(bank_spec, "Q1")
    ids = [q for q, _ in plan]
    assert len(ids) == len(set(ids))
    assert ids[0] == "Q1"
