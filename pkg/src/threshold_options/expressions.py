"""Arithmetic expressions in one variable ``x`` for custom coefficients.

Grammar (``^`` binds tighter than unary minus and is right-associative)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := ('+' | '-') unary | power
    power   := atom ('^' unary)?
    atom    := NUMBER | 'x' | CONST | FUNC '(' expr ')' | '(' expr ')'

    FUNC  := exp | log | sqrt | abs
    CONST := pi | e

Compiled expressions evaluate elementwise on floats and numpy arrays.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import ExpressionError

Node = tuple

FUNCTIONS: dict[str, Callable] = {"exp": np.exp, "log": np.log, "sqrt": np.sqrt, "abs": np.abs}
CONSTANTS = {"pi": float(np.pi), "e": float(np.e)}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


def tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            bad = len(text) - len(text[pos:].lstrip())
            raise ExpressionError(None, f"unexpected character {text[bad]!r} at column {bad + 1}")
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.take()
        if val != value:
            found = val or "end of input"
            raise ExpressionError(None, f"expected {value!r} at column {pos + 1}, found {found!r}")

    def parse(self) -> Node:
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExpressionError(None, f"unexpected {val!r} at column {pos + 1}")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = ("bin", op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = ("bin", op, node, self.unary())
        return node

    def unary(self) -> Node:
        kind, val, _ = self.peek()
        if kind == "op" and val in ("+", "-"):
            self.take()
            operand = self.unary()
            return ("neg", operand) if val == "-" else operand
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return ("bin", "^", base, self.unary())
        return base

    def atom(self) -> Node:
        kind, val, pos = self.take()
        if kind == "num":
            return ("num", float(val))
        if kind == "name":
            if val == "x":
                return ("var",)
            if val in CONSTANTS:
                return ("num", CONSTANTS[val])
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return ("call", val, arg)
            raise ExpressionError(None, f"unknown name {val!r} at column {pos + 1}")
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = val or "end of input"
        raise ExpressionError(None, f"unexpected {found!r} at column {pos + 1}")


def _evaluate(node: Node, x):
    tag = node[0]
    if tag == "num":
        return node[1]
    if tag == "var":
        return x
    if tag == "neg":
        return -_evaluate(node[1], x)
    if tag == "call":
        return FUNCTIONS[node[1]](_evaluate(node[2], x))
    op, lhs, rhs = node[1], _evaluate(node[2], x), _evaluate(node[3], x)
    if op == "+":
        return lhs + rhs
    if op == "-":
        return lhs - rhs
    if op == "*":
        return lhs * rhs
    if op == "/":
        return lhs / rhs
    return np.power(lhs, rhs)


@dataclass(frozen=True)
class Expression:
    """A parsed coefficient expression; call it like a function of x."""

    source: str
    tree: Node

    def __call__(self, x: Union[float, np.ndarray]):
        arr = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            out = _evaluate(self.tree, arr)
        out = np.broadcast_to(np.asarray(out, dtype=float), arr.shape)
        return float(out) if out.ndim == 0 else np.array(out)

    def __str__(self) -> str:
        return self.source


def parse_expression(text: str) -> Expression:
    if not text or not text.strip():
        raise ExpressionError(None, "empty expression")
    return Expression(text.strip(), _Parser(text).parse())
