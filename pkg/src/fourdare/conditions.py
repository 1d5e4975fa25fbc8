"""Rule-condition language: parsing, canonical rendering and evaluation.

Grammar (keywords case-insensitive)::

    expr   := and ("OR" and)*
    and    := cmp ("AND" cmp)*
    cmp    := term op term | term "BETWEEN" term "AND" term | "(" expr ")"
    term   := factor (("+" | "-") factor)*
    factor := atom (("*" | "/") atom)*
    atom   := number | 'string' | identifier | "(" term ")"

Numbers are exact decimals. There is no negation operator.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Decimal, DivisionByZero as _DecimalDivisionByZero, InvalidOperation, localcontext
from typing import Mapping, Union

__all__ = [
    "And",
    "Arith",
    "Between",
    "Compare",
    "ConditionError",
    "ConditionEvalError",
    "ConditionSyntaxError",
    "DivisionByZeroError",
    "Ident",
    "Num",
    "Or",
    "Str",
    "TypeMismatchError",
    "UnboundVariableError",
    "evaluate",
    "expand_aliases",
    "free_variables",
    "parse_condition",
    "render",
]

COMPARE_OPS = ("<", "<=", ">", ">=", "=", "!=")
ARITH_OPS = ("+", "-", "*", "/")
IDENTIFIER = re.compile(r"^[a-z][a-z0-9_]*$")


@dataclass(frozen=True)
class Num:
    value: Decimal


@dataclass(frozen=True)
class Str:
    value: str


@dataclass(frozen=True)
class Ident:
    name: str


@dataclass(frozen=True)
class Arith:
    op: str
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Compare:
    op: str
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Between:
    subject: "Term"
    low: "Term"
    high: "Term"


@dataclass(frozen=True)
class And:
    operands: tuple["ConditionAst", ...]


@dataclass(frozen=True)
class Or:
    operands: tuple["ConditionAst", ...]


Term = Union[Num, Str, Ident, Arith]
ConditionAst = Union[Or, And, Compare, Between]
Value = Union[Decimal, int, str, bool]


class ConditionError(Exception):
    pass


class ConditionSyntaxError(ConditionError):
    def __init__(self, message: str, position: int, token: str = ""):
        super().__init__(f"{message} (at position {position})")
        self.message = message
        self.position = position
        self.token = token


class ConditionEvalError(ConditionError):
    pass


class UnboundVariableError(ConditionEvalError):
    def __init__(self, name: str):
        super().__init__(f"unbound identifier '{name}'")
        self.name = name


class TypeMismatchError(ConditionEvalError):
    pass


class DivisionByZeroError(ConditionEvalError):
    pass


# --------------------------------------------------------------------------
# Lexer
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class _Tok:
    kind: str  # num, str, ident, kw, op, lparen, rparen, eof
    text: str
    pos: int


_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>\d+(?:\.\d+)?|\.\d+)
  | (?P<str>'[^']*')
  | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|!=|[<>=+\-*/])
  | (?P<lparen>\()
  | (?P<rparen>\))
    """,
    re.VERBOSE,
)

_KEYWORDS = {"AND", "OR", "BETWEEN"}


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            ch = text[pos]
            if ch == "'":
                raise ConditionSyntaxError("unterminated string literal", pos, ch)
            raise ConditionSyntaxError(f"unexpected character {ch!r}", pos, ch)
        kind = m.lastgroup
        val = m.group()
        if kind == "word":
            if val.upper() in _KEYWORDS:
                toks.append(_Tok("kw", val.upper(), pos))
            elif IDENTIFIER.match(val):
                toks.append(_Tok("ident", val, pos))
            else:
                raise ConditionSyntaxError(f"invalid identifier {val!r}", pos, val)
        elif kind != "ws":
            toks.append(_Tok(kind, val, pos))
        pos = m.end()
    toks.append(_Tok("eof", "", len(text)))
    return toks


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def _describe(self, tok: _Tok) -> str:
        return "end of input" if tok.kind == "eof" else repr(tok.text)

    def fail(self, message: str, tok: _Tok | None = None):
        tok = tok or self.tok
        raise ConditionSyntaxError(message, tok.pos, tok.text)

    def accept_kw(self, word: str) -> bool:
        if self.tok.kind == "kw" and self.tok.text == word:
            self.i += 1
            return True
        return False

    def parse(self) -> ConditionAst:
        if self.tok.kind == "eof":
            self.fail("empty condition")
        node = self.expr()
        if self.tok.kind == "rparen":
            self.fail("unbalanced parenthesis: unexpected ')'")
        if self.tok.kind != "eof":
            self.fail(f"unexpected token {self._describe(self.tok)}")
        return node

    def expr(self) -> ConditionAst:
        items = [self.conj()]
        while self.accept_kw("OR"):
            items.append(self.conj())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def conj(self) -> ConditionAst:
        items = [self.cmp()]
        while self.accept_kw("AND"):
            items.append(self.cmp())
        return items[0] if len(items) == 1 else And(tuple(items))

    def cmp(self) -> ConditionAst:
        start = self.i
        if self.tok.kind == "lparen":
            # "(" may open a parenthesized term or a nested condition.
            try:
                return self._comparison()
            except ConditionSyntaxError:
                self.i = start
            self.i += 1
            inner = self.expr()
            if self.tok.kind != "rparen":
                self.fail(f"unbalanced parenthesis: expected ')' but found {self._describe(self.tok)}")
            self.i += 1
            return inner
        return self._comparison()

    def _comparison(self) -> ConditionAst:
        left = self.term()
        tok = self.tok
        if tok.kind == "op" and tok.text in COMPARE_OPS:
            self.i += 1
            right = self.term()
            self._check_compare(tok, left, right)
            return Compare(tok.text, left, right)
        if self.accept_kw("BETWEEN"):
            low = self.term()
            if not self.accept_kw("AND"):
                self.fail(f"expected AND in BETWEEN but found {self._describe(self.tok)}")
            high = self.term()
            for side, node in (("subject", left), ("lower bound", low), ("upper bound", high)):
                if isinstance(node, Str):
                    self.fail(f"BETWEEN {side} must be numeric", tok)
            return Between(left, low, high)
        if isinstance(left, Ident):
            self.fail(f"expected operator after identifier '{left.name}'")
        self.fail(f"expected comparison operator but found {self._describe(tok)}")

    def _check_compare(self, tok: _Tok, left: Term, right: Term) -> None:
        if tok.text in ("=", "!="):
            if isinstance(left, Str) and isinstance(right, (Num, Arith)):
                self.fail("cannot compare string with number", tok)
            if isinstance(right, Str) and isinstance(left, (Num, Arith)):
                self.fail("cannot compare string with number", tok)
            return
        if isinstance(left, Str) or isinstance(right, Str):
            self.fail(f"operator '{tok.text}' requires numeric operands", tok)

    def term(self) -> Term:
        node = self.factor()
        while self.tok.kind == "op" and self.tok.text in ("+", "-"):
            op = self.tok
            self.i += 1
            node = self._arith(op, node, self.factor())
        return node

    def factor(self) -> Term:
        node = self.atom()
        while self.tok.kind == "op" and self.tok.text in ("*", "/"):
            op = self.tok
            self.i += 1
            right = self.atom()
            if op.text == "/" and isinstance(right, Num) and right.value == 0:
                self.fail("division by literal zero", op)
            node = self._arith(op, node, right)
        return node

    def _arith(self, op: _Tok, left: Term, right: Term) -> Arith:
        if isinstance(left, Str) or isinstance(right, Str):
            self.fail(f"operator '{op.text}' requires numeric operands", op)
        return Arith(op.text, left, right)

    def atom(self) -> Term:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Num(Decimal(tok.text))
        if tok.kind == "str":
            self.i += 1
            return Str(tok.text[1:-1])
        if tok.kind == "ident":
            self.i += 1
            return Ident(tok.text)
        if tok.kind == "lparen":
            self.i += 1
            inner = self.term()
            if self.tok.kind != "rparen":
                self.fail(f"unbalanced parenthesis: expected ')' but found {self._describe(self.tok)}")
            self.i += 1
            return inner
        if tok.kind == "eof":
            self.fail("unexpected end of input")
        if tok.kind == "rparen":
            self.fail("unbalanced parenthesis: unexpected ')'")
        self.fail(f"unexpected token {self._describe(tok)}")


def parse_condition(text: str) -> ConditionAst:
    """Parse condition text. Raises ConditionSyntaxError with a position."""
    if not isinstance(text, str) or not text.strip():
        raise ConditionSyntaxError("empty condition", 0)
    return _Parser(text).parse()


def expand_aliases(text: str, aliases: Mapping[str, str]) -> tuple[str, list[str]]:
    """Replace whole-phrase alias keys with their parenthesized expansion.

    Returns the rewritten text and the alias keys that were applied. Longer
    phrases are tried first so overlapping keys resolve predictably.
    """
    used: list[str] = []
    for phrase in sorted(aliases, key=lambda p: (-len(p), p)):
        pattern = re.compile(r"(?<![\w'])" + re.escape(phrase) + r"(?![\w'])")
        if pattern.search(text):
            text = pattern.sub(lambda _m: f"({aliases[phrase]})", text)
            used.append(phrase)
    return text, used


# --------------------------------------------------------------------------
# Rendering
# --------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _fmt_number(d: Decimal) -> str:
    return format(d, "f")


def _render_term(node: Term) -> str:
    if isinstance(node, Num):
        return _fmt_number(node.value)
    if isinstance(node, Str):
        return f"'{node.value}'"
    if isinstance(node, Ident):
        return node.name
    prec = _PREC[node.op]
    left = _render_term(node.left)
    if isinstance(node.left, Arith) and _PREC[node.left.op] < prec:
        left = f"({left})"
    right = _render_term(node.right)
    if isinstance(node.right, Arith) and _PREC[node.right.op] <= prec:
        right = f"({right})"
    return f"{left} {node.op} {right}"


def render(node: ConditionAst) -> str:
    """Canonical text form; ``parse_condition(render(a)) == a``."""
    if isinstance(node, Compare):
        return f"{_render_term(node.left)} {node.op} {_render_term(node.right)}"
    if isinstance(node, Between):
        return f"{_render_term(node.subject)} BETWEEN {_render_term(node.low)} AND {_render_term(node.high)}"
    if isinstance(node, And):
        return " AND ".join(f"({render(o)})" if isinstance(o, (Or, And)) else render(o) for o in node.operands)
    if isinstance(node, Or):
        return " OR ".join(f"({render(o)})" if isinstance(o, Or) else render(o) for o in node.operands)
    raise TypeError(f"not a condition node: {node!r}")


def free_variables(node) -> list[str]:
    """Identifier leaves of ``node``, deduplicated and sorted."""
    names: set[str] = set()

    def walk(n) -> None:
        if isinstance(n, Ident):
            names.add(n.name)
        elif isinstance(n, (Arith, Compare)):
            walk(n.left)
            walk(n.right)
        elif isinstance(n, Between):
            walk(n.subject)
            walk(n.low)
            walk(n.high)
        elif isinstance(n, (And, Or)):
            for o in n.operands:
                walk(o)

    walk(node)
    return sorted(names)


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------


def _as_number(v: Value, where: str) -> Decimal:
    if isinstance(v, bool) or not isinstance(v, (int, Decimal)):
        raise TypeMismatchError(f"expected a number in {where}, got {v!r}")
    return Decimal(v)


def _term_value(node: Term, b: Mapping[str, Value]) -> Value:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Str):
        return node.value
    if isinstance(node, Ident):
        try:
            v = b[node.name]
        except KeyError:
            raise UnboundVariableError(node.name) from None
        if isinstance(v, float):
            v = Decimal(repr(v))
        return v
    left = _as_number(_term_value(node.left, b), f"'{node.op}'")
    right = _as_number(_term_value(node.right, b), f"'{node.op}'")
    with localcontext() as ctx:
        ctx.prec = 50
        ctx.traps[_DecimalDivisionByZero] = True
        if node.op == "+":
            return left + right
        if node.op == "-":
            return left - right
        if node.op == "*":
            return left * right
        if right == 0:
            raise DivisionByZeroError(f"division by zero in '{_render_term(node)}'")
        try:
            return left / right
        except (InvalidOperation, _DecimalDivisionByZero):
            raise DivisionByZeroError(f"division by zero in '{_render_term(node)}'") from None


def _compare(op: str, left: Value, right: Value) -> bool:
    if op in ("=", "!="):
        lstr, rstr = isinstance(left, str), isinstance(right, str)
        if lstr and rstr:
            eq = left == right
        elif lstr or rstr:
            raise TypeMismatchError(f"cannot compare {left!r} with {right!r}")
        else:
            eq = _as_number(left, "'='") == _as_number(right, "'='")
        return eq if op == "=" else not eq
    a = _as_number(left, f"'{op}'")
    c = _as_number(right, f"'{op}'")
    if op == "<":
        return a < c
    if op == "<=":
        return a <= c
    if op == ">":
        return a > c
    return a >= c


def evaluate(node: ConditionAst, bindings: Mapping[str, Value]) -> bool:
    """Evaluate with short-circuit AND/OR. ``bindings`` is never modified."""
    if isinstance(node, Compare):
        return _compare(node.op, _term_value(node.left, bindings), _term_value(node.right, bindings))
    if isinstance(node, Between):
        x = _as_number(_term_value(node.subject, bindings), "BETWEEN")
        lo = _as_number(_term_value(node.low, bindings), "BETWEEN")
        hi = _as_number(_term_value(node.high, bindings), "BETWEEN")
        return lo <= x <= hi
    if isinstance(node, And):
        return all(evaluate(o, bindings) for o in node.operands)
    if isinstance(node, Or):
        return any(evaluate(o, bindings) for o in node.operands)
    raise TypeError(f"not a condition node: {node!r}")
