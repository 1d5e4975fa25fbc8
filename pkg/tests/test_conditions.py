from decimal import Decimal

import pytest

from fourdare.conditions import (
    And,
    Between,
    Compare,
    ConditionSyntaxError,
    DivisionByZeroError,
    Ident,
    Num,
    Or,
    TypeMismatchError,
    UnboundVariableError,
    evaluate,
    expand_aliases,
    free_variables,
    parse_condition,
    render,
)

D = Decimal


def test_parse_simple_comparison():
    ast = parse_condition("visit_frequency < branch_avg * 0.7")
    assert isinstance(ast, Compare)
    assert ast.op == "<"
    assert ast.left == Ident("visit_frequency")


def test_between_is_inclusive_at_both_ends():
    ast = parse_condition("conversion_rate BETWEEN 0.1 AND 0.2")
    assert isinstance(ast, Between)
    assert evaluate(ast, {"conversion_rate": D("0.1")})
    assert evaluate(ast, {"conversion_rate": D("0.2")})
    assert not evaluate(ast, {"conversion_rate": D("0.2000001")})


def test_and_binds_tighter_than_or():
    ast = parse_condition("a > 1 OR b > 1 AND c > 1")
    assert isinstance(ast, Or)
    assert isinstance(ast.operands[1], And)
    # a true alone is enough
    assert evaluate(ast, {"a": D(2), "b": D(0), "c": D(0)})
    assert not evaluate(ast, {"a": D(0), "b": D(2), "c": D(0)})


def test_keywords_are_case_insensitive():
    assert render(parse_condition("x between 1 and 2 or y = 'v'")) == "x BETWEEN 1 AND 2 OR y = 'v'"


def test_string_equality():
    ast = parse_condition("penetration_rate < 0.3 AND segment = 'high_value'")
    assert evaluate(ast, {"penetration_rate": D("0.24"), "segment": "high_value"})
    assert not evaluate(ast, {"penetration_rate": D("0.24"), "segment": "mass"})


@pytest.mark.parametrize(
    "text",
    [
        "visit_frequency < branch_avg * 0.7",
        "conversion_rate BETWEEN 0.1 AND 0.2",
        "(a + b) * c >= 3 AND d != 'x'",
        "a - (b - c) > 0",
        "a / b / c = 1",
        "(a > 1 OR b > 1) AND c > 1",
    ],
)
def test_render_round_trips(text):
    ast = parse_condition(text)
    assert parse_condition(render(ast)) == ast
    assert render(parse_condition(render(ast))) == render(ast)


def test_render_keeps_needed_parentheses():
    assert render(parse_condition("a - (b - c) > 0")) == "a - (b - c) > 0"
    assert render(parse_condition("(a * b) + c > 0")) == "a * b + c > 0"


@pytest.mark.parametrize(
    "text, position",
    [
        ("a <", 3),
        ("a < 1 AND", 9),
        ("a # 1", 2),
        ("segment = 'high", 10),
        ("a BETWEEN 1 2", 12),
        ("", 0),
    ],
)
def test_syntax_errors_carry_position(text, position):
    with pytest.raises(ConditionSyntaxError) as info:
        parse_condition(text)
    assert info.value.position == position


def test_unbound_variable_raises():
    with pytest.raises(UnboundVariableError):
        evaluate(parse_condition("x > 1"), {})


def test_short_circuit_skips_unbound_branch():
    ast = parse_condition("x > 1 OR y > 1")
    assert evaluate(ast, {"x": D(2)})
    with pytest.raises(UnboundVariableError):
        evaluate(ast, {"x": D(0)})


def test_type_mismatch():
    with pytest.raises(TypeMismatchError):
        evaluate(parse_condition("segment < 1"), {"segment": "mass"})
    with pytest.raises(TypeMismatchError):
        evaluate(parse_condition("x = 'a'"), {"x": D(1)})


def test_division_by_zero():
    with pytest.raises(DivisionByZeroError):
        evaluate(parse_condition("a / b > 1"), {"a": D(1), "b": D(0)})


def test_decimal_arithmetic_is_exact():
    # 0.1 + 0.2 = 0.3 fails in binary floating point
    assert evaluate(parse_condition("a + b = 0.3"), {"a": D("0.1"), "b": D("0.2")})


def test_bindings_are_not_modified():
    b = {"x": D("1.5")}
    evaluate(parse_condition("x * 2 = 3"), b)
    assert b == {"x": D("1.5")}


def test_free_variables_sorted_and_unique():
    ast = parse_condition("volume < last_period * 0.9 AND channel = 'referral' AND volume > 0")
    assert free_variables(ast) == ["channel", "last_period", "volume"]


def test_expand_aliases_wraps_expansion_in_parentheses():
    aliases = {"volume declining": "volume < last_period * 0.9"}
    text, used = expand_aliases("channel = 'referral' AND volume declining", aliases)
    assert text == "channel = 'referral' AND (volume < last_period * 0.9)"
    assert used == ["volume declining"]
    same, none_used = expand_aliases("x > 1", aliases)
    assert same == "x > 1" and none_used == []


def test_numbers_parse_as_decimals():
    ast = parse_condition("x > 0.15")
    assert ast.right == Num(D("0.15"))
