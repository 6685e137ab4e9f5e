"""Expression language for generating functions, polarizations and sources.

Grammar (whitespace-insensitive)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" unary)?          # right associative
    atom   := number | name | name "(" expr ")" | "(" expr ")"

Names are coordinates (``r``/``x1``, ``theta``/``x2``, ``v``/``phi``,
``t``), functions (only in call position) or free parameters resolved by
:func:`bind`.  Exponents may not contain coordinates.
"""

from __future__ import annotations

import difflib
import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np

from . import jets as J
from .fields import ScalarField
from .jets import Jet

VARIABLES = {"r": 0, "x1": 0, "theta": 1, "x2": 1, "v": 2, "phi": 2, "t": 3}

FUNCTIONS = {
    "sin": J.sin,
    "cos": J.cos,
    "tan": J.tan,
    "sinh": J.sinh,
    "cosh": J.cosh,
    "tanh": J.tanh,
    "sech": J.sech,
    "exp": J.exp,
    "ln": J.log,
    "sqrt": J.sqrt,
    "abs": J.absolute,
}


@dataclass(frozen=True)
class SourceSpan:
    start: int
    end: int


def line_col(text: str, offset: int) -> tuple[int, int]:
    """1-based line and column of ``offset``."""
    line = text.count("\n", 0, offset) + 1
    col = offset - (text.rfind("\n", 0, offset) + 1) + 1
    return line, col


class DSLError(ValueError):
    pass


class DSLSyntaxError(DSLError):
    """Parse failure at ``offset`` (0-based); ``line``/``column`` are 1-based."""

    def __init__(self, message: str, text: str, offset: int, expected: frozenset[str] = frozenset(),
                 candidates: tuple[str, ...] = ()):
        self.offset = offset
        self.line, self.column = line_col(text, offset)
        self.expected = expected
        self.candidates = candidates
        self.span = SourceSpan(offset, offset)
        detail = f" (expected {', '.join(sorted(expected))})" if expected else ""
        hint = f"; did you mean {', '.join(candidates)}?" if candidates else ""
        super().__init__(f"line {self.line}, column {self.column}: {message}{detail}{hint}")


class DSLBindError(DSLError):
    def __init__(self, message: str, name: str, span: SourceSpan | None, candidates: tuple[str, ...] = ()):
        self.name = name
        self.span = span
        self.candidates = candidates
        hint = f"; did you mean {', '.join(candidates)}?" if candidates else ""
        super().__init__(message + hint)


# ---------------------------------------------------------------------------
# AST (spans are excluded from structural equality)


@dataclass(frozen=True)
class Num:
    value: float
    span: SourceSpan | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Var:
    name: str
    span: SourceSpan | None = field(default=None, compare=False, repr=False)

    @property
    def slot(self) -> int:
        return VARIABLES[self.name]


@dataclass(frozen=True)
class Param:
    name: str
    span: SourceSpan | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Neg:
    operand: "Expr"
    span: SourceSpan | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"
    span: SourceSpan | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"
    span: SourceSpan | None = field(default=None, compare=False, repr=False)


Expr = Union[Num, Var, Param, Neg, BinOp, Call]


def variables(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    return set().union(*(variables(c) for c in _children(e))) if _children(e) else set()


def parameters(e: Expr) -> set[str]:
    if isinstance(e, Param):
        return {e.name}
    return set().union(*(parameters(c) for c in _children(e))) if _children(e) else set()


def _children(e: Expr) -> tuple:
    if isinstance(e, Neg):
        return (e.operand,)
    if isinstance(e, BinOp):
        return (e.left, e.right)
    if isinstance(e, Call):
        return (e.arg,)
    return ()


# ---------------------------------------------------------------------------
# tokenizer and parser

_TOKEN = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    start: int
    end: int


def _tokenize(text: str) -> list[_Tok]:
    toks, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise DSLSyntaxError(f"unexpected character {text[pos]!r}", text, pos,
                                 frozenset({"number", "name", "operator"}))
        if m.lastgroup != "ws":
            toks.append(_Tok(m.lastgroup, m.group(), m.start(), m.end()))
        pos = m.end()
    toks.append(_Tok("eof", "", len(text), len(text)))
    return toks


_ATOM_START = frozenset({"number", "name", "(", "-"})


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, message: str, expected=frozenset(), tok: _Tok | None = None, candidates=()):
        tok = tok or self.tok
        raise DSLSyntaxError(message, self.text, tok.start, frozenset(expected), tuple(candidates))

    def is_op(self, *ops) -> bool:
        return self.tok.kind == "op" and self.tok.text in ops

    def parse(self) -> Expr:
        if self.tok.kind == "eof":
            self.error("empty expression", _ATOM_START)
        e = self.expr()
        if self.tok.kind != "eof":
            self.error(f"unexpected {self.tok.text!r}", {"+", "-", "*", "/", "^", "end of input"})
        return e

    def expr(self) -> Expr:
        left = self.term()
        while self.is_op("+", "-"):
            op = self.advance().text
            right = self.term()
            left = BinOp(op, left, right, SourceSpan(left.span.start, right.span.end))
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.is_op("*", "/"):
            op = self.advance().text
            right = self.unary()
            left = BinOp(op, left, right, SourceSpan(left.span.start, right.span.end))
        return left

    def unary(self) -> Expr:
        if self.is_op("-"):
            start = self.advance().start
            operand = self.unary()
            return Neg(operand, SourceSpan(start, operand.span.end))
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.is_op("^"):
            caret = self.advance()
            exponent = self.unary()
            if variables(exponent):
                self.error("exponent must not depend on coordinates", tok=caret)
            return BinOp("^", base, exponent, SourceSpan(base.span.start, exponent.span.end))
        return base

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            return Num(float(tok.text), SourceSpan(tok.start, tok.end))
        if tok.kind == "name":
            self.advance()
            if self.is_op("("):
                if tok.text not in FUNCTIONS:
                    close = difflib.get_close_matches(tok.text, FUNCTIONS, n=3)
                    self.error(f"unknown function {tok.text!r}", set(FUNCTIONS), tok, close)
                self.advance()
                arg = self.expr()
                if not self.is_op(")"):
                    self.error("unclosed call", {")"})
                end = self.advance().end
                return Call(tok.text, arg, SourceSpan(tok.start, end))
            if tok.text in FUNCTIONS:
                self.error(f"function {tok.text!r} needs an argument", {"("})
            span = SourceSpan(tok.start, tok.end)
            return Var(tok.text, span) if tok.text in VARIABLES else Param(tok.text, span)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            inner = self.expr()
            if not self.is_op(")"):
                self.error("unclosed parenthesis", {")"})
            self.advance()
            return inner
        what = "end of input" if tok.kind == "eof" else repr(tok.text)
        self.error(f"unexpected {what}", _ATOM_START)


def parse(text: str) -> Expr:
    """Parse ``text`` into an expression tree."""
    if not isinstance(text, str):
        raise DSLError(f"expression must be a string, got {type(text).__name__}")
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _PREC["neg"]
    return 5


def _num(v: float) -> str:
    if not math.isfinite(v):
        raise DSLError("non-finite constant")
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def print_canonical(e: Expr) -> str:
    """Minimal-parenthesis text with ``parse(print_canonical(e)) == e``."""
    if isinstance(e, Num):
        if e.value < 0:
            return f"({_num(e.value)})"
        return _num(e.value)
    if isinstance(e, (Var, Param)):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({print_canonical(e.arg)})"
    if isinstance(e, Neg):
        inner = print_canonical(e.operand)
        if _prec(e.operand) < _PREC["neg"] or (isinstance(e.operand, Num) and e.operand.value < 0):
            inner = f"({inner})"
        return f"-{inner}"
    p = _PREC[e.op]
    left, right = print_canonical(e.left), print_canonical(e.right)
    if e.op == "^":
        if _prec(e.left) <= p:
            left = f"({left})"
        if _prec(e.right) < p and not isinstance(e.right, Neg):
            right = f"({right})"
    else:
        if _prec(e.left) < p:
            left = f"({left})"
        if _prec(e.right) <= p:
            right = f"({right})"
    return f"{left}{e.op}{right}"


# ---------------------------------------------------------------------------
# binding to jet-valued fields


ParamValue = Union[float, int, ScalarField]


def _const_value(e: Expr, params: Mapping[str, ParamValue]) -> float:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Param):
        v = params[e.name]
        if isinstance(v, ScalarField):
            raise DSLBindError(f"exponent parameter {e.name!r} must be a number", e.name, e.span)
        return float(v)
    if isinstance(e, Neg):
        return -_const_value(e.operand, params)
    if isinstance(e, BinOp):
        a, b = _const_value(e.left, params), _const_value(e.right, params)
        return {"+": a + b, "-": a - b, "*": a * b, "/": a / b if b else math.inf, "^": a**b if a > 0 or float(b).is_integer() else math.nan}[e.op]
    if isinstance(e, Call):
        x = _const_value(e.arg, params)
        f = FUNCTIONS[e.func](Jet.constant(np.array([x]), 0))
        return float(f.value[0])
    raise DSLError(f"not a constant expression: {e!r}")


def bind(e: Expr | str, params: Mapping[str, ParamValue] | None = None, name: str | None = None) -> ScalarField:
    """Jet-valued field of ``e``; parameters may be numbers or fields."""
    if isinstance(e, str):
        text = e
        e = parse(e)
    else:
        text = None
    params = dict(params or {})
    missing = sorted(parameters(e) - set(params))
    if missing:
        bad = missing[0]
        node = _find_param(e, bad)
        close = tuple(difflib.get_close_matches(bad, list(params) + list(VARIABLES), n=3))
        raise DSLBindError(f"unbound parameter {bad!r}", bad, node.span if node else None, close)
    mask = [False] * 4
    for v in variables(e):
        mask[VARIABLES[v]] = True
    for p in parameters(e):
        if isinstance(params[p], ScalarField):
            mask = [a or b for a, b in zip(mask, params[p].depends)]

    def ev(node: Expr, u) -> Jet:
        if isinstance(node, Num):
            return Jet.constant(np.full(u[0].shape, node.value), u[0].order)
        if isinstance(node, Var):
            return u[node.slot]
        if isinstance(node, Param):
            v = params[node.name]
            if isinstance(v, ScalarField):
                return v(u)
            return Jet.constant(np.full(u[0].shape, float(v)), u[0].order)
        if isinstance(node, Neg):
            return -ev(node.operand, u)
        if isinstance(node, Call):
            return FUNCTIONS[node.func](ev(node.arg, u))
        if node.op == "^":
            return J.power(ev(node.left, u), _const_value(node.right, params))
        a, b = ev(node.left, u), ev(node.right, u)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        return a / b

    label = name or (text if text is not None else print_canonical(e))
    return ScalarField(lambda u: ev(e, u), label, tuple(mask))


def _find_param(e: Expr, name: str) -> Param | None:
    if isinstance(e, Param) and e.name == name:
        return e
    for c in _children(e):
        hit = _find_param(c, name)
        if hit is not None:
            return hit
    return None
