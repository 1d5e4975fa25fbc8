from dataclasses import replace
from decimal import Decimal

import pytest
import yaml

from fourdare.conditions import render
from fourdare.loader import (
    SpecLoadError,
    canonicalize,
    load,
    load_spec,
    load_yaml,
    read_bundle,
    serialize_spec,
)
from fourdare.model import Authority, Dimension

from conftest import BANK, BANK_FILES, RETAIL, bank_layers, write_layers


def test_bank_loads_with_only_alias_warnings():
    result = load(BANK)
    assert result.ok
    assert result.errors == []
    assert len(result.warnings) == 2
    assert all("alias" in w.message for w in result.warnings)


def test_yaml_floats_become_decimals():
    assert load_yaml("x: 0.1") == {"x": Decimal("0.1")}


def test_duplicate_keys_rejected():
    with pytest.raises(Exception, match="duplicate"):
        load_yaml("a: 1\na: 2\n")


def test_five_paths_in_order_match_directory():
    paths = [BANK / BANK_FILES[n] for n in range(1, 6)]
    assert serialize_spec(load_spec(paths)) == serialize_spec(load_spec(BANK))


def test_single_file_bundle(retail_spec):
    assert [q.id for q in retail_spec.questions] == ["Q1", "Q2", "Q3", "Q4", "Q8", "Q10"]
    assert set(retail_spec.graph.edges) == {("Q4", "Q1"), ("Q8", "Q4"), ("Q10", "Q8")}


def test_missing_layer_file_is_an_error(tmp_path):
    paths = [BANK / BANK_FILES[n] for n in range(1, 5)] + [tmp_path / "nope.yaml"]
    result = load(paths)
    assert not result.ok
    assert any(d.layer == 5 for d in result.errors)


def test_load_never_raises_on_garbage(tmp_path):
    bad = tmp_path / "bundle.yaml"
    bad.write_text("layer1: [unclosed\n", encoding="utf-8")
    result = load(bad)
    assert not result.ok and result.errors


def test_load_spec_raises_with_diagnostics(tmp_path):
    with pytest.raises(SpecLoadError) as info:
        load_spec(tmp_path / "missing.yaml")
    assert info.value.diagnostics


def test_rules_parsed(bank_spec):
    p = bank_spec.question("Q7").dual_track
    assert p.interpretation_enabled
    assert [render(r.condition) for r in p.interpretation_rules][1] == "conversion_rate BETWEEN 0.1 AND 0.2"
    q8 = bank_spec.question("Q8").dual_track
    assert q8.recommendation_kind is Authority.OPEN_ENDED
    assert q8.open_template.startswith("Staffing considerations for management review")


def test_alias_expansion_recorded(bank_spec):
    rules = bank_spec.question("Q5").dual_track.recommendation_rules
    aliased = [r for r in rules if r.source.strip().endswith("volume declining")]
    assert aliased
    assert "last_period" in render(aliased[0].condition)


def test_data_mapping_fields(bank_spec):
    m = bank_spec.question("Q3").data_mapping
    assert m.update_frequency in ("daily", "weekly", "monthly", "quarterly")
    assert m.exported_variables == ("visit_frequency", "quality_score", "total_visits")
    assert "branch_avg" in bank_spec.context_variables


def test_boundaries_loaded(bank_spec):
    b = bank_spec.boundaries
    assert "Never recommend hiring, firing, promotion, or compensation" in b.prohibitions
    assert b.statement_count() > 10
    assert "reassign" in b.lexicons.prohibited_topics


def test_canonicalize_is_idempotent(bank_spec, retail_spec):
    for spec in (bank_spec, retail_spec):
        once = canonicalize(spec)
        assert canonicalize(once) == once


def test_declaration_order_does_not_matter(tmp_path):
    layers = bank_layers()
    inv = layers[1]["question_inventory"]
    for dim in inv:
        inv[dim] = list(reversed(inv[dim]))
    layers[3]["data_mapping"] = dict(reversed(list(layers[3]["data_mapping"].items())))
    layers[4]["dual_track_logic"] = dict(reversed(list(layers[4]["dual_track_logic"].items())))
    shuffled = write_layers(tmp_path / "shuffled", layers)
    a = replace(load_spec(shuffled), provenance=())
    b = replace(load_spec(BANK), provenance=())
    assert serialize_spec(a) == serialize_spec(b)


def test_unknown_dimension_key_reported(tmp_path):
    layers = bank_layers()
    layers[1]["question_inventory"]["strategy"] = [{"id": "Q99", "question": "x"}]
    result = load(write_layers(tmp_path / "b", layers))
    assert not result.ok
    assert any("strategy" in d.message for d in result.errors)


def test_dimension_mapping_cross_check(tmp_path):
    layers = bank_layers()
    layers[2]["attribution_model"]["dimension_mapping"]["support"] = ["Q8", "Q9", "Q10"]
    result = load(write_layers(tmp_path / "b", layers))
    assert any("Q10" in d.message and "Long-term" in d.message for d in result.errors)


def test_locator_exclusivity(tmp_path):
    layers = bank_layers()
    layers[3]["data_mapping"]["Q3"]["endpoint"] = "/api/visits"
    result = load(write_layers(tmp_path / "b", layers))
    assert not result.ok


def test_read_bundle_routes_by_filename():
    bundle, diags = read_bundle(BANK)
    assert bundle is not None and not [d for d in diags if d.severity == "error"]
    assert all(src.endswith(BANK_FILES[n]) for n, src in enumerate(bundle.sources, start=1))


def test_path_members_split_by_dimension(retail_spec):
    (chain,) = retail_spec.graph.chains_for("Q1")
    assert [(s.dimension, s.members) for s in chain.segments] == [
        (Dimension.PROCESS, ("Q4",)),
        (Dimension.SUPPORT, ("Q8",)),
        (Dimension.LONGTERM, ("Q10",)),
    ]
    assert len({s.path_index for s in chain.segments}) == 1


def test_serialize_is_json(bank_spec):
    import json

    doc = json.loads(serialize_spec(bank_spec))
    assert [q["id"] for q in doc["questions"]][:3] == ["Q1", "Q2", "Q3"]


def test_retail_bundle_is_yaml():
    doc = yaml.safe_load(RETAIL.read_text(encoding="utf-8"))
    assert set(doc) == {"layer1", "layer2", "layer3", "layer4", "layer5"}
