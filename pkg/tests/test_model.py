import pytest

from fourdare.model import (
    DIMENSIONS,
    Authority,
    Dimension,
    authority_for,
    question_key,
)


def test_dimension_order_follows_depth():
    assert [d.depth for d in DIMENSIONS] == [0, 1, 2, 3]
    assert DIMENSIONS == (Dimension.RESULTS, Dimension.PROCESS, Dimension.SUPPORT, Dimension.LONGTERM)
    assert Dimension.RESULTS < Dimension.LONGTERM


@pytest.mark.parametrize(
    "raw, dim",
    [
        ("results", Dimension.RESULTS),
        ("Process", Dimension.PROCESS),
        ("support_dimension", Dimension.SUPPORT),
        ("long-term", Dimension.LONGTERM),
        ("Long term", Dimension.LONGTERM),
        ("longterm", Dimension.LONGTERM),
    ],
)
def test_dimension_parse(raw, dim):
    assert Dimension.parse(raw) is dim


def test_dimension_parse_rejects_unknown():
    with pytest.raises(ValueError):
        Dimension.parse("strategy")


def test_authority_matrix():
    assert authority_for(Dimension.RESULTS).interpretation is Authority.NONE
    assert authority_for(Dimension.RESULTS).recommendation is Authority.NONE
    p = authority_for(Dimension.PROCESS)
    assert p.allows_interpretation() and p.allows_recommendation(Authority.RULE_BASED)
    s = authority_for(Dimension.SUPPORT)
    assert not s.allows_interpretation()
    assert s.allows_recommendation(Authority.OPEN_ENDED)
    assert not s.allows_recommendation(Authority.RULE_BASED)
    lt = authority_for(Dimension.LONGTERM)
    assert not lt.allows_interpretation()
    assert not lt.allows_recommendation(Authority.OPEN_ENDED)


def test_question_key_orders_numerically():
    assert sorted(["Q10", "Q2", "Q1", "X"], key=question_key) == ["Q1", "Q2", "Q10", "X"]


def test_bank_spec_shape(bank_spec):
    counts = {d: len(bank_spec.by_dimension(d)) for d in DIMENSIONS}
    assert counts == {Dimension.RESULTS: 2, Dimension.PROCESS: 5, Dimension.SUPPORT: 2, Dimension.LONGTERM: 3}
    assert bank_spec.question("Q4").label == "Penetration"
    assert bank_spec.dimension_of("Q11") is Dimension.LONGTERM


def test_chain_groups(bank_spec):
    (chain,) = bank_spec.graph.chains_for("Q2")
    groups = chain.groups
    assert groups[Dimension.PROCESS] == ["Q4", "Q7", "Q5", "Q6"]
    assert groups[Dimension.SUPPORT] == ["Q8", "Q9"]
    assert groups[Dimension.LONGTERM] == ["Q10", "Q11", "Q12"]
    assert Dimension.RESULTS not in groups
