from dataclasses import replace

import pytest

from fourdare.loader import load_spec
from fourdare.model import AttributionGraph
from fourdare.validator import (
    CODES,
    Finding,
    check_graph_acyclic,
    errors,
    render_findings,
    validate,
)

from conftest import RETAIL, mutated_bank
from mutations import MUTATIONS


def test_fixtures_validate_clean(bank_spec, retail_spec):
    assert validate(bank_spec) == []
    assert validate(retail_spec) == []


@pytest.mark.parametrize("name, mutate, code, subject", MUTATIONS, ids=[m[0] for m in MUTATIONS])
def test_single_mutation_raises_one_code(tmp_path, name, mutate, code, subject):
    spec = load_spec(mutated_bank(tmp_path / "bank", mutate))
    found = errors(validate(spec))
    assert {f.code for f in found} == {code}
    if subject is not None:
        assert any(f.subject == subject for f in found)


def test_cycle_on_retail_reports_members(tmp_path):
    import yaml

    doc = yaml.safe_load(RETAIL.read_text(encoding="utf-8"))
    # Q10 -> Q8 -> Q4 -> Q1 already; closing the loop from Q1 back to Q10
    doc["layer2"]["attribution_model"]["edges"] = [["Q1", "Q10"]]
    path = tmp_path / "bundle.yaml"
    path.write_text(yaml.safe_dump(doc, sort_keys=False), encoding="utf-8")
    found = errors(validate(load_spec(path)))
    cycles = [f for f in found if f.code == "E_CYCLE"]
    assert len(cycles) == 1
    assert cycles[0].subject == "Q1,Q4,Q8,Q10"
    # the same edge also runs Results -> Long-term, against the depth order
    assert {f.code for f in found} == {"E_CYCLE", "E_DEPTH"}


def test_acyclic_graph():
    g = AttributionGraph(("A", "B", "C"), (("A", "B"), ("B", "C")))
    assert check_graph_acyclic(g) == []


def test_self_loop_is_a_cycle():
    g = AttributionGraph(("A",), (("A", "A"),))
    assert [f.code for f in check_graph_acyclic(g)] == ["E_CYCLE"]


def test_two_separate_cycles():
    g = AttributionGraph(("A", "B", "C", "D"), (("A", "B"), ("B", "A"), ("C", "D"), ("D", "C")))
    assert sorted(f.subject for f in check_graph_acyclic(g)) == ["A,B", "C,D"]


def test_group_member_in_wrong_dimension(bank_spec):
    chain = bank_spec.graph.chains[0]
    segs = list(chain.segments)
    i = next(k for k, s in enumerate(segs) if not s.ordered and s.dimension.value == "support")
    segs[i] = replace(segs[i], members=segs[i].members + ("Q10",))
    graph = replace(bank_spec.graph, chains=(replace(chain, segments=tuple(segs)),) + bank_spec.graph.chains[1:])
    codes = {f.code for f in validate(replace(bank_spec, graph=graph))}
    assert "E_GROUP" in codes


def test_dangling_reference(bank_spec):
    graph = replace(bank_spec.graph, edges=bank_spec.graph.edges + (("Q99", "Q1"),))
    found = validate(replace(bank_spec, graph=graph))
    assert any(f.code == "E_DANGLING" and f.subject == "Q99" for f in found)


def test_undeclared_placeholder(bank_spec):
    q = bank_spec.question("Q3")
    m = replace(q.data_mapping, locator=q.data_mapping.locator + " AND region = {region_code}", parameters=())
    qs = tuple(replace(x, data_mapping=m) if x.id == "Q3" else x for x in bank_spec.questions)
    found = validate(replace(bank_spec, questions=qs))
    assert [f.code for f in errors(found)] == ["E_UNDECLARED_PARAM"]


def test_process_disable_needs_rationale(bank_spec):
    q = bank_spec.question("Q7")
    p = replace(q.dual_track, recommendation_enabled=False, recommendation_rules=(), recommendation_rationale="")
    qs = tuple(replace(x, dual_track=p) if x.id == "Q7" else x for x in bank_spec.questions)
    assert [f.code for f in validate(replace(bank_spec, questions=qs))] == ["E_RATIONALE"]


def test_no_boundary_warning(retail_spec):
    b = replace(retail_spec.boundaries, global_rules=(), prohibitions=(), per_question=(), per_dimension=())
    found = validate(replace(retail_spec, boundaries=b))
    assert found and all(f.code == "W_NO_BOUNDARY" and f.severity == "warning" for f in found)
    assert errors(found) == []


def test_finding_rejects_unknown_code():
    with pytest.raises(ValueError):
        Finding("E_NOPE", "error", "x", "y")


def test_codes_are_closed():
    assert len(CODES) == 13


def test_render_findings():
    assert render_findings([]) == "OK: no findings\n"
    text = render_findings([Finding("E_CYCLE", "error", "Q1,Q2", "cycle")])
    assert text.splitlines()[-1] == "1 error(s), 0 warning(s)"


def test_validate_is_deterministic(bank_spec, tmp_path):
    spec = load_spec(mutated_bank(tmp_path / "b", MUTATIONS[0][1]))
    assert validate(spec) == validate(spec)
