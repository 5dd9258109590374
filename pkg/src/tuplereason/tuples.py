"""Relation-tuple grammar: parsing, rendering, extraction, and arithmetic checking.

A relation tuple is a parenthesized record summarizing one reasoning step,
e.g. ``(total clips, 48 + 24 = 72)``. Fields are split on top-level commas
and classified as Label, Quantity, or Arithmetic. The embedded arithmetic
gives a deterministic, model-free way to check a chain of steps.

Grammar (canonical form; ``x``, ``×``, ``÷`` and ``−`` also accepted on input):

    tuple      := '(' field (',' field)* ')'
    field      := arithmetic | quantity | label
    arithmetic := expr ('=' signed_number)?      -- only tried when the field
                                                    contains one of + - * / =
    quantity   := signed_number unit_text?
    label      := free text without commas or parentheses
    expr       := term (('+' | '-') term)*
    term       := factor (('*' | '/') factor)*
    factor     := signed_number | identifier | '(' expr ')'
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Iterator, Mapping, Union


class ParseError(ValueError):
    """Raised when text violates the tuple grammar."""

    def __init__(self, message: str, position: int, expected: tuple[str, ...] = ()):
        self.position = position
        self.expected = expected
        detail = f"{message} at position {position}"
        if expected:
            detail += f" (expected {' or '.join(expected)})"
        super().__init__(detail)


class EvalError(Exception):
    """Base class for expression-evaluation failures."""


class UnboundIdentifier(EvalError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unbound identifier '{name}'")


class DivisionByZero(EvalError):
    def __init__(self):
        super().__init__("division by zero")


# ---------------------------------------------------------------------------
# Expression AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: Fraction


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "Expr"
    right: "Expr"


Expr = Union[Num, Var, BinOp]

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2}


def eval_expr(expr: Expr, env: Mapping[str, Fraction]) -> Fraction:
    """Evaluate ``expr`` exactly over rationals.

    Raises UnboundIdentifier for names missing from ``env`` and
    DivisionByZero when a divisor evaluates to zero.
    """
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Var):
        try:
            return env[expr.name]
        except KeyError:
            raise UnboundIdentifier(expr.name) from None
    left = eval_expr(expr.left, env)
    right = eval_expr(expr.right, env)
    if expr.op == "+":
        return left + right
    if expr.op == "-":
        return left - right
    if expr.op == "*":
        return left * right
    if expr.op == "/":
        if right == 0:
            raise DivisionByZero()
        return left / right
    raise AssertionError(f"unknown operator {expr.op!r}")


def format_decimal(value: Fraction) -> str:
    """Render a rational as plain decimal text (``72``, ``0.5``, ``-3.25``)."""
    if value.denominator == 1:
        return str(value.numerator)
    den = value.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        # Non-terminating decimal; only reachable for evaluation results,
        # never for parsed literals.
        try:
            return repr(float(value))
        except OverflowError:
            return str(value.numerator // value.denominator)
    places = max(twos, fives)
    scaled = value * 10**places
    digits = str(abs(int(scaled))).rjust(places + 1, "0")
    sign = "-" if value < 0 else ""
    text = f"{sign}{digits[:-places]}.{digits[-places:]}".rstrip("0").rstrip(".")
    return text


def render_expr(expr: Expr) -> str:
    """Render with canonical operators; parentheses reflect tree structure."""
    return _render(expr, parent_prec=0, right_side=False)


def _render(expr: Expr, parent_prec: int, right_side: bool) -> str:
    if isinstance(expr, Num):
        return format_decimal(expr.value)
    if isinstance(expr, Var):
        return expr.name
    prec = _PRECEDENCE[expr.op]
    text = (
        f"{_render(expr.left, prec, False)} {expr.op} {_render(expr.right, prec, True)}"
    )
    # Parenthesize whenever reparsing would otherwise regroup the tree.
    if prec < parent_prec or (prec == parent_prec and right_side):
        return f"({text})"
    return text


# ---------------------------------------------------------------------------
# Tuple fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Label:
    text: str


@dataclass(frozen=True)
class Quantity:
    value: Fraction
    unit: str | None = None


@dataclass(frozen=True)
class Arithmetic:
    expr: Expr
    result: Fraction | None = None


TupleField = Union[Label, Quantity, Arithmetic]


@dataclass(frozen=True)
class RelationTuple:
    fields: tuple[TupleField, ...]
    source_span: tuple[int, int] = field(default=(0, 0), compare=False)

    def __post_init__(self):
        if len(self.fields) < 2:
            raise ValueError("a relation tuple needs at least two fields")
        if sum(isinstance(f, Arithmetic) for f in self.fields) > 1:
            raise ValueError("a relation tuple allows at most one arithmetic field")


def render_field(f: TupleField) -> str:
    if isinstance(f, Label):
        return f.text
    if isinstance(f, Quantity):
        text = format_decimal(f.value)
        return f"{text} {f.unit}" if f.unit else text
    text = render_expr(f.expr)
    if f.result is not None:
        text += f" = {format_decimal(f.result)}"
    return text


def render_tuple(t: RelationTuple) -> str:
    return "(" + ", ".join(render_field(f) for f in t.fields) + ")"


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

# Unicode operator spellings are normalized before lexing.
_OP_ALIASES = {"×": "*", "÷": "/", "−": "-"}

_NUMBER_RE = re.compile(r"(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")

# Characters that make a field a candidate for arithmetic parsing.
_ARITH_TRIGGERS = set("+-*/=") | set(_OP_ALIASES)


@dataclass(frozen=True)
class _Token:
    kind: str  # NUMBER | IDENT | OP | LPAREN | RPAREN | EQ | END
    text: str
    pos: int
    value: Fraction | None = None


def _lex(text: str, base: int) -> list[_Token]:
    tokens: list[_Token] = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        ch = _OP_ALIASES.get(ch, ch)
        if ch in "+-*/":
            tokens.append(_Token("OP", ch, base + i))
            i += 1
            continue
        if ch == "(":
            tokens.append(_Token("LPAREN", ch, base + i))
            i += 1
            continue
        if ch == ")":
            tokens.append(_Token("RPAREN", ch, base + i))
            i += 1
            continue
        if ch == "=":
            tokens.append(_Token("EQ", ch, base + i))
            i += 1
            continue
        m = _NUMBER_RE.match(text, i)
        if m:
            tokens.append(_Token("NUMBER", m.group(), base + i, Fraction(m.group())))
            i = m.end()
            continue
        m = _IDENT_RE.match(text, i)
        if m:
            tokens.append(_Token("IDENT", m.group(), base + i))
            i = m.end()
            continue
        raise ParseError(f"unexpected character {text[i]!r}", base + i)
    tokens.append(_Token("END", "", base + len(text)))
    return tokens


class _ExprParser:
    """Recursive-descent parser over a token list."""

    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str, what: str) -> _Token:
        tok = self.peek()
        if tok.kind != kind:
            raise ParseError(f"unexpected {tok.text or 'end of field'!r}", tok.pos, (what,))
        return self.advance()

    def parse_expr(self) -> Expr:
        node = self.parse_term()
        while self.peek().kind == "OP" and self.peek().text in "+-":
            op = self.advance().text
            node = BinOp(op, node, self.parse_term())
        return node

    def parse_term(self) -> Expr:
        node = self.parse_factor()
        while True:
            tok = self.peek()
            if tok.kind == "OP" and tok.text in "*/":
                self.advance()
                node = BinOp(tok.text, node, self.parse_factor())
            elif (
                tok.kind == "IDENT"
                and tok.text in ("x", "X")
                and self.tokens[self.i + 1].kind in ("NUMBER", "IDENT", "LPAREN")
            ):
                # Standalone 'x' between operands is multiplication.
                self.advance()
                node = BinOp("*", node, self.parse_factor())
            else:
                return node

    def parse_factor(self) -> Expr:
        tok = self.peek()
        if tok.kind == "OP" and tok.text == "-":
            self.advance()
            nxt = self.peek()
            if nxt.kind == "NUMBER":
                self.advance()
                return Num(-nxt.value)
            # Fold other negations into a zero-minus subtraction node.
            return BinOp("-", Num(Fraction(0)), self.parse_factor())
        if tok.kind == "NUMBER":
            self.advance()
            return Num(tok.value)
        if tok.kind == "IDENT":
            self.advance()
            return Var(tok.text)
        if tok.kind == "LPAREN":
            self.advance()
            inner = self.parse_expr()
            self.expect("RPAREN", "')'")
            return inner
        raise ParseError(
            f"unexpected {tok.text or 'end of field'!r}",
            tok.pos,
            ("number", "identifier", "'('"),
        )

    def parse_signed_number(self) -> Fraction:
        tok = self.peek()
        sign = 1
        if tok.kind == "OP" and tok.text in "+-":
            sign = -1 if tok.text == "-" else 1
            self.advance()
        num = self.expect("NUMBER", "number")
        return sign * num.value


# ---------------------------------------------------------------------------
# Field and tuple parsing
# ---------------------------------------------------------------------------


def _parse_arithmetic(text: str, base: int) -> Arithmetic:
    parser = _ExprParser(_lex(text, base))
    expr = parser.parse_expr()
    result = None
    if parser.peek().kind == "EQ":
        parser.advance()
        result = parser.parse_signed_number()
    tok = parser.peek()
    if tok.kind != "END":
        raise ParseError(f"trailing {tok.text!r}", tok.pos, ("'='", "operator", "end of field"))
    return Arithmetic(expr, result)


_QUANTITY_RE = re.compile(
    r"^(-?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?)"  # signed number
    r"(?:\s+([^\s\d()+\-*/=.][^()]*))?$"  # unit text, not operator- or digit-led
)


def _parse_field(text: str, base: int) -> TupleField:
    stripped = text.strip()
    offset = base + (len(text) - len(text.lstrip()))
    if not stripped:
        raise ParseError("empty field", base, ("field",))
    arith_error: ParseError | None = None
    if any(c in _ARITH_TRIGGERS for c in stripped):
        try:
            arith = _parse_arithmetic(stripped, offset)
        except ParseError as exc:
            arith_error = exc
        else:
            # A bare number with no asserted result is a quantity, not a
            # degenerate computation ("(loss, -3)" should bind a value).
            if arith.result is None and isinstance(arith.expr, Num):
                return Quantity(arith.expr.value)
            return arith
    m = _QUANTITY_RE.match(stripped.translate(str.maketrans(_OP_ALIASES)))
    if m:
        unit = m.group(2).strip() if m.group(2) else None
        return Quantity(Fraction(m.group(1)), unit)
    if "(" in stripped or ")" in stripped:
        # Labels cannot hold parentheses, so report the arithmetic failure
        # when there was one; it points at the real problem.
        if arith_error is not None:
            raise arith_error
        pos = offset + min(stripped.find(c) for c in "()" if c in stripped)
        raise ParseError("parenthesis in label field", pos, ("arithmetic expression",))
    return Label(stripped)


def _split_top_level(interior: str, base: int) -> Iterator[tuple[str, int]]:
    depth = 0
    start = 0
    for i, ch in enumerate(interior):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise ParseError("unbalanced ')'", base + i, ("','", "field text"))
        elif ch == "," and depth == 0:
            yield interior[start:i], base + start
            start = i + 1
    if depth != 0:
        raise ParseError("unbalanced '('", base + len(interior), ("')'",))
    yield interior[start:], base + start


def parse_tuple(text: str) -> RelationTuple:
    """Parse one complete relation tuple, e.g. ``(total clips, 48 + 24 = 72)``.

    The text must start with ``(`` and end with ``)``. Raises ParseError on
    any grammar or invariant violation; division by zero is an evaluation
    concern and parses fine.
    """
    stripped = text.strip()
    offset = len(text) - len(text.lstrip())
    if not stripped.startswith("("):
        raise ParseError("tuple must start with '('", offset, ("'('",))
    if not stripped.endswith(")"):
        raise ParseError("tuple must end with ')'", offset + len(stripped), ("')'",))
    interior = stripped[1:-1]
    fields = [
        _parse_field(part, pos) for part, pos in _split_top_level(interior, offset + 1)
    ]
    try:
        return RelationTuple(tuple(fields), source_span=(0, len(text)))
    except ValueError as exc:
        raise ParseError(str(exc), offset) from None


def extract_tuples(text: str) -> list[RelationTuple]:
    """Collect every parseable relation tuple from free text, in document order.

    Balanced-parenthesis segments that fail to parse are skipped; their
    nested segments are then tried independently.
    """
    out: list[RelationTuple] = []
    i = 0
    while True:
        start = text.find("(", i)
        if start == -1:
            return out
        end = _matching_paren(text, start)
        if end is None:
            i = start + 1
            continue
        try:
            parsed = parse_tuple(text[start : end + 1])
        except ParseError:
            i = start + 1
            continue
        out.append(replace(parsed, source_span=(start, end + 1)))
        i = end + 1


def _matching_paren(text: str, start: int) -> int | None:
    depth = 0
    for i in range(start, len(text)):
        if text[i] == "(":
            depth += 1
        elif text[i] == ")":
            depth -= 1
            if depth == 0:
                return i
    return None


# ---------------------------------------------------------------------------
# Trace consistency
# ---------------------------------------------------------------------------

# Relative tolerance for comparing an evaluated expression to its asserted
# result; generous against float round-trips, far below answer granularity.
CONSISTENCY_REL_TOL = Fraction(1, 10**6)


class Verdict(Enum):
    CONSISTENT = "consistent"
    INCONSISTENT = "inconsistent"
    NOT_CHECKABLE = "not_checkable"


@dataclass(frozen=True)
class TupleVerdict:
    verdict: Verdict
    computed: Fraction | None = None  # evaluated value, when evaluation succeeded
    reason: str | None = None  # why a tuple was not checkable


def slug_name(label: str) -> str:
    """Normalize a label into a binding identifier: lowercase, spaces to underscores."""
    return "_".join(label.lower().split())


def first_label(t: RelationTuple) -> Label | None:
    for f in t.fields:
        if isinstance(f, Label):
            return f
    return None


def check_trace_consistency(tuples: list[RelationTuple]) -> list[TupleVerdict]:
    """Check each tuple's asserted arithmetic against the running environment.

    The environment is built left to right: a tuple whose last field is a
    Quantity or a result-bearing Arithmetic binds its first label
    (slug-normalized) to that value. Later bindings shadow earlier ones.
    """
    env: dict[str, Fraction] = {}
    verdicts: list[TupleVerdict] = []
    for t in tuples:
        arith = next((f for f in t.fields if isinstance(f, Arithmetic)), None)
        if arith is None:
            verdicts.append(TupleVerdict(Verdict.NOT_CHECKABLE, reason="no arithmetic field"))
        elif arith.result is None:
            verdicts.append(TupleVerdict(Verdict.NOT_CHECKABLE, reason="no asserted result"))
        else:
            try:
                value = eval_expr(arith.expr, env)
            except EvalError as exc:
                verdicts.append(TupleVerdict(Verdict.NOT_CHECKABLE, reason=str(exc)))
            else:
                tol = CONSISTENCY_REL_TOL * max(Fraction(1), abs(arith.result))
                ok = abs(value - arith.result) <= tol
                verdicts.append(
                    TupleVerdict(
                        Verdict.CONSISTENT if ok else Verdict.INCONSISTENT,
                        computed=value,
                    )
                )
        last = t.fields[-1]
        bound: Fraction | None = None
        if isinstance(last, Quantity):
            bound = last.value
        elif isinstance(last, Arithmetic) and last.result is not None:
            bound = last.result
        if bound is not None:
            label = first_label(t)
            if label is not None:
                env[slug_name(label.text)] = bound
    return verdicts
