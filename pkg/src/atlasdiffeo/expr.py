"""Tiny scalar expression language used in manifold description files.

Charts carry metric entries, weights, transition maps and vector fields as
plain text formulas over the local coordinates ``x1 .. xd``.  The grammar is

    expr  := term (("+" | "-") term)*
    term  := unary (("*" | "/") unary)*
    unary := "-" unary | power
    power := atom ("^" unary)?
    atom  := NUMBER | IDENT | IDENT "(" expr ("," expr)* ")" | "(" expr ")"

with the usual reading: ``^`` is right associative and binds tighter than
unary minus, so ``-x1^2`` is ``-(x1^2)``.  Known identifiers are the
coordinates ``x1, x2, ...``, the constant ``pi`` and the functions
``sin cos exp log sqrt tanh abs`` (one argument) and ``min max`` (two or
more).  Evaluation is numpy-vectorized: binding coordinates to arrays
evaluates the formula on a whole grid at once.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import reduce
from typing import Mapping, NoReturn, Union

import numpy as np

__all__ = [
    "Expr",
    "Num",
    "Const",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "ExprError",
    "parse_expr",
    "format_expr",
    "evaluate",
    "evaluate_at_points",
    "is_constant",
    "constant_value",
]


class ExprError(ValueError):
    """Raised for malformed formulas (with position) and bad evaluations."""


Scalar = Union[float, np.ndarray]


# --- AST -----------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class Num:
    value: float

    def variables(self) -> frozenset[str]:
        return frozenset()

    def value_at(self, env: Mapping[str, Scalar]) -> Scalar:
        return self.value


@dataclass(frozen=True, slots=True)
class Const:
    name: str  # only "pi" for now

    def variables(self) -> frozenset[str]:
        return frozenset()

    def value_at(self, env: Mapping[str, Scalar]) -> Scalar:
        return np.pi


@dataclass(frozen=True, slots=True)
class Var:
    name: str

    def variables(self) -> frozenset[str]:
        return frozenset((self.name,))

    def value_at(self, env: Mapping[str, Scalar]) -> Scalar:
        try:
            return env[self.name]
        except KeyError:
            raise ExprError(f"variable {self.name!r} is not bound") from None


@dataclass(frozen=True, slots=True)
class Neg:
    operand: "Expr"

    def variables(self) -> frozenset[str]:
        return self.operand.variables()

    def value_at(self, env: Mapping[str, Scalar]) -> Scalar:
        return -np.asarray(self.operand.value_at(env), dtype=float)


@dataclass(frozen=True, slots=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"

    def variables(self) -> frozenset[str]:
        return self.left.variables() | self.right.variables()

    def value_at(self, env: Mapping[str, Scalar]) -> Scalar:
        a = np.asarray(self.left.value_at(env), dtype=float)
        b = np.asarray(self.right.value_at(env), dtype=float)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if self.op == "/":
            return a / b
        # np.power keeps negative-base fractional powers as nan instead of
        # wandering into complex numbers like python's ** does
        return np.power(a, b)


@dataclass(frozen=True, slots=True)
class Call:
    func: str
    args: tuple["Expr", ...]

    def variables(self) -> frozenset[str]:
        out: frozenset[str] = frozenset()
        for a in self.args:
            out |= a.variables()
        return out

    def value_at(self, env: Mapping[str, Scalar]) -> Scalar:
        vals = [np.asarray(a.value_at(env), dtype=float) for a in self.args]
        if self.func in _UNARY_FUNCS:
            return _UNARY_FUNCS[self.func](vals[0])
        if self.func == "min":
            return reduce(np.minimum, vals)
        return reduce(np.maximum, vals)


Expr = Union[Num, Const, Var, Neg, BinOp, Call]

_UNARY_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "tanh": np.tanh,
    "abs": np.abs,
}
_VARIADIC_FUNCS = ("min", "max")
_VAR_RE = re.compile(r"^x[1-9][0-9]*$")


# --- tokenizer / parser --------------------------------------------------

_TOKEN_RE = re.compile(
    r"(?P<num>(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),])"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    i = 0
    n = len(text)
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        m = _TOKEN_RE.match(text, i)
        if m is None:
            raise ExprError(f"unexpected character {text[i]!r} at position {i}")
        kind = m.lastgroup
        tokens.append((kind, m.group(), i))
        i = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.pos]

    def advance(self) -> tuple[str, str, int]:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, message: str) -> NoReturn:
        kind, text, at = self.peek()
        shown = "end of input" if kind == "end" else repr(text)
        raise ExprError(f"{message}, got {shown} at position {at}")

    def expect_op(self, op: str) -> None:
        kind, text, _ = self.peek()
        if kind == "op" and text == op:
            self.advance()
            return
        self.fail(f"expected {op!r}")

    # grammar rules, one method each

    def expr(self) -> Expr:
        node = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                node = BinOp(text, node, self.term())
            else:
                return node

    def term(self) -> Expr:
        node = self.unary()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                node = BinOp(text, node, self.unary())
            else:
                return node

    def unary(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        node = self.atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            return BinOp("^", node, self.unary())
        return node

    def atom(self) -> Expr:
        kind, text, at = self.peek()
        if kind == "num":
            self.advance()
            return Num(float(text))
        if kind == "op" and text == "(":
            self.advance()
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "ident":
            self.advance()
            nkind, ntext, _ = self.peek()
            if nkind == "op" and ntext == "(":
                return self.call(text, at)
            if text == "pi":
                return Const("pi")
            if _VAR_RE.match(text):
                return Var(text)
            if text in _UNARY_FUNCS or text in _VARIADIC_FUNCS:
                raise ExprError(
                    f"function {text!r} needs arguments at position {at}"
                )
            raise ExprError(f"unknown identifier {text!r} at position {at}")
        self.fail("expected a number, identifier or '('")

    def call(self, func: str, at: int) -> Expr:
        if func not in _UNARY_FUNCS and func not in _VARIADIC_FUNCS:
            raise ExprError(f"unknown function {func!r} at position {at}")
        self.expect_op("(")
        args = [self.expr()]
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text == ",":
                self.advance()
                args.append(self.expr())
            else:
                break
        self.expect_op(")")
        if func in _UNARY_FUNCS and len(args) != 1:
            raise ExprError(
                f"function {func!r} takes one argument, got {len(args)}"
                f" at position {at}"
            )
        if func in _VARIADIC_FUNCS and len(args) < 2:
            raise ExprError(
                f"function {func!r} takes at least two arguments"
                f" at position {at}"
            )
        return Call(func, tuple(args))


def parse_expr(text: str) -> Expr:
    """Parse a formula into an AST; raises ExprError with a position."""
    p = _Parser(text)
    node = p.expr()
    kind, _, _ = p.peek()
    if kind != "end":
        p.fail("trailing input after expression")
    return node


# --- printing ------------------------------------------------------------

# precedence levels used only for printing with minimal parentheses
_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _prec(node: Expr) -> int:
    if isinstance(node, BinOp):
        if node.op in "+-":
            return _PREC_ADD
        if node.op in "*/":
            return _PREC_MUL
        return _PREC_POW
    if isinstance(node, Neg):
        return _PREC_NEG
    return _PREC_ATOM


def format_expr(node: Expr) -> str:
    """Render an AST back to a string that reparses to the same AST."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Const):
        return node.name
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        inner = format_expr(node.operand)
        if _prec(node.operand) < _PREC_NEG:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, Call):
        return f"{node.func}({', '.join(format_expr(a) for a in node.args)})"
    # binary operator
    left, right = format_expr(node.left), format_expr(node.right)
    if node.op == "^":
        # base slot of "^" is an atom; exponent slot is a full unary
        if _prec(node.left) <= _PREC_POW:
            left = f"({left})"
        if _prec(node.right) <= _PREC_MUL:
            right = f"({right})"
        return f"{left}^{right}"
    p = _prec(node)
    if _prec(node.left) < p:
        left = f"({left})"
    # +,-,*,/ are parsed left associative
    if _prec(node.right) <= p:
        right = f"({right})"
    return f"{left} {node.op} {right}"


# --- evaluation helpers --------------------------------------------------

def evaluate(node: Expr, env: Mapping[str, Scalar]) -> np.ndarray:
    """Evaluate with coordinates bound to scalars or broadcastable arrays.

    Out-of-domain arithmetic (division by zero, log of a negative) yields
    inf/nan rather than raising; validation layers decide what to do with
    non-finite values.
    """
    with np.errstate(all="ignore"):
        return np.asarray(node.value_at(env), dtype=float)


def evaluate_at_points(node: Expr, points: np.ndarray) -> np.ndarray:
    """Evaluate on an array of points with shape (..., d).

    Returns an array of shape (...); constant formulas are broadcast so the
    caller always gets a full grid of values.
    """
    points = np.asarray(points, dtype=float)
    env = {f"x{i + 1}": points[..., i] for i in range(points.shape[-1])}
    out = evaluate(node, env)
    if out.shape != points.shape[:-1]:
        out = np.broadcast_to(out, points.shape[:-1]).copy()
    return out


def is_constant(node: Expr) -> bool:
    return not node.variables()


def constant_value(node: Expr) -> float:
    if not is_constant(node):
        raise ExprError("expression is not constant")
    return float(evaluate(node, {}))
