"""Expression language for plane maps.

Grammar::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := ('-'|'+') factor | base ('^' integer)?
    base   := number | x | y | z | zbar | func '(' expr ')' | '(' expr ')'
    func   := sin | cos | exp

In real mode the whole source is a pair ``(expr, expr)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union


class ExpressionSyntaxError(ValueError):
    """Raised on malformed map sources; carries the character offset."""

    def __init__(self, message: str, position: int, source: str = ""):
        self.position = position
        self.source = source
        pointer = ""
        if source:
            pointer = f"\n  {source}\n  {' ' * position}^"
        super().__init__(f"{message} at position {position}{pointer}")


FUNCTIONS = ("sin", "cos", "exp")
VARIABLES = ("x", "y", "z", "zbar")


@dataclass(frozen=True)
class Num:
    text: str


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


@dataclass(frozen=True)
class Pair:
    first: "Node"
    second: "Node"


Node = Union[Num, Var, Neg, BinOp, Pow, Call, Pair]

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)


def tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(source):
        if source[pos:].strip() == "":
            break
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            at = pos + (len(source[pos:]) - len(source[pos:].lstrip()))
            raise ExpressionSyntaxError(f"unexpected character {source[at]!r}", at, source)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return ExpressionSyntaxError(message, tok[2], self.source)

    def expect(self, value):
        tok = self.take()
        if tok[1] != value:
            found = tok[1] or "end of input"
            raise self.error(f"expected {value!r}, found {found!r}", tok)
        return tok

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Node:
        if self.peek()[1] == "-":
            self.take()
            return Neg(self.factor())
        if self.peek()[1] == "+":
            self.take()
            return self.factor()
        node = self.base()
        if self.peek()[1] == "^":
            self.take()
            tok = self.take()
            if tok[0] != "num":
                raise self.error("exponent must be a non-negative integer literal", tok)
            if not tok[1].isdigit():
                raise self.error(f"non-integer exponent {tok[1]!r}", tok)
            node = Pow(node, int(tok[1]))
            if self.peek()[1] == "^":
                raise self.error("chained exponents are not supported; use parentheses")
        return node

    def base(self) -> Node:
        tok = self.take()
        kind, text, _ = tok
        if kind == "num":
            return Num(text)
        if kind == "name":
            if text in VARIABLES:
                return Var(text)
            if self.peek()[1] == "(":
                if text not in FUNCTIONS:
                    raise self.error(f"unsupported function {text!r}", tok)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            raise self.error(f"unknown name {text!r}", tok)
        if text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = text or "end of input"
        raise self.error(f"unexpected {found!r}", tok)


def parse_expression(source: str, mode: str = "complex-z") -> Node:
    """Parse ``source`` into a syntax tree.

    ``mode`` is ``"real-xy"`` (source is a pair of components) or
    ``"complex-z"`` (source is one complex-valued expression).
    """
    if mode not in ("real-xy", "complex-z"):
        raise ValueError(f"unknown mode {mode!r}")
    p = _Parser(source)
    if mode == "real-xy":
        p.expect("(")
        first = p.expr()
        p.expect(",")
        second = p.expr()
        p.expect(")")
        node: Node = Pair(first, second)
    else:
        node = p.expr()
    if p.peek()[0] != "end":
        raise p.error(f"unexpected trailing input {p.peek()[1]!r}")
    return node


_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2}


def to_source(node: Node) -> str:
    """Render a tree back to the expression language (fully re-parseable)."""
    return _render(node, 0)


def _render(node: Node, parent: int) -> str:
    if isinstance(node, Num):
        return node.text
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Pair):
        return f"({_render(node.first, 0)}, {_render(node.second, 0)})"
    if isinstance(node, Call):
        return f"{node.func}({_render(node.arg, 0)})"
    if isinstance(node, Pow):
        base = _render(node.base, 4)
        if isinstance(node.base, Pow):  # the parser refuses chained exponents
            base = f"({base})"
        return f"{base}^{node.exponent}"
    if isinstance(node, Neg):
        text = "-" + _render(node.operand, 3)
        return f"({text})" if parent >= 3 else text
    prec = _PRECEDENCE[node.op]
    left = _render(node.left, prec)
    # right operand binds tighter: the parser is left associative, and
    # regrouping a + (b + c) would change floating-point results
    right = _render(node.right, prec + 1)
    text = f"{left} {node.op} {right}"
    return f"({text})" if prec < parent else text


def free_variables(node: Node) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, (Neg,)):
        return free_variables(node.operand)
    if isinstance(node, Pow):
        return free_variables(node.base)
    if isinstance(node, Call):
        return free_variables(node.arg)
    if isinstance(node, BinOp):
        return free_variables(node.left) | free_variables(node.right)
    return free_variables(node.first) | free_variables(node.second)
