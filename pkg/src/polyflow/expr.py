"""A small expression language for scalar and vector fields.

Grammar (``^`` binds tightest, then unary minus, then ``* /``, then ``+ -``;
binary operators associate to the left)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" INTEGER)*
    atom   := NUMBER | "x"k | ("exp" | "sin" | "cos") "(" expr ")" | "(" expr ")"

Division is only allowed by a constant subexpression that is not zero, so
every expression is defined everywhere. ``**`` is accepted as a synonym
for ``^``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ParseError, UnknownSymbol
from .extension import Field

FUNCTIONS = {"exp": np.exp, "sin": np.sin, "cos": np.cos}


@dataclass(frozen=True)
class Num:
    value: float      # non-negative; negation is a Neg node


@dataclass(frozen=True)
class Var:
    index: int        # 1-based


@dataclass(frozen=True)
class Neg:
    arg: "Node"


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
    name: str
    arg: "Node"


Node = Union[Num, Var, Neg, BinOp, Pow, Call]

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\*\*|[-+*/^()])
""", re.VERBOSE)


def _position(src, offset):
    line = src.count("\n", 0, offset) + 1
    col = offset - (src.rfind("\n", 0, offset) + 1) + 1
    return line, col


def _tokenize(src):
    tokens, pos = [], 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            raise ParseError(f"unexpected character {src[pos]!r}", *_position(src, pos))
        kind = m.lastgroup
        if kind != "ws":
            text = m.group()
            tokens.append((kind, "^" if text == "**" else text, pos))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src, n):
        self.src = src
        self.n = n
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, msg, tok=None, cls=ParseError):
        tok = tok or self.peek()
        return cls(msg, *_position(self.src, tok[2]))

    def expect(self, text):
        tok = self.take()
        if tok[1] != text or tok[0] == "end":
            raise self.error(f"expected {text!r}, found {tok[1] or 'end of input'!r}", tok)

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            raise self.error(f"unexpected {self.peek()[1]!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            tok = self.take()
            right = self.unary()
            if tok[1] == "/":
                if _has_vars(right):
                    raise self.error("division is only allowed by a constant", tok)
                value = evaluate(right, np.zeros((1, 0)))[0]
                if value == 0 or not np.isfinite(value):
                    raise self.error("division by zero", tok)
            node = BinOp(tok[1], node, right)
        return node

    def unary(self):
        if self.peek()[1] == "-" and self.peek()[0] == "op":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        node = self.atom()
        while self.peek()[1] == "^":
            self.take()
            tok = self.take()
            if tok[0] != "num" or not re.fullmatch(r"\d+", tok[1]):
                raise self.error("exponent must be a non-negative integer literal", tok)
            node = Pow(node, int(tok[1]))
        return node

    def atom(self):
        tok = self.take()
        kind, text, _ = tok
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            m = re.fullmatch(r"x([1-9]\d*)", text)
            if m and int(m.group(1)) <= self.n:
                return Var(int(m.group(1)))
            raise self.error(f"unknown symbol {text!r} (variables are x1..x{self.n})", tok,
                             UnknownSymbol)
        if text == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise self.error(f"unexpected {text or 'end of input'!r}", tok)


def _has_vars(node):
    if isinstance(node, Var):
        return True
    if isinstance(node, Num):
        return False
    if isinstance(node, BinOp):
        return _has_vars(node.left) or _has_vars(node.right)
    if isinstance(node, Pow):
        return _has_vars(node.base)
    return _has_vars(node.arg)


def parse_expression(src: str, n: int) -> Node:
    """Parse ``src`` over the variables ``x1..xn``."""
    return _Parser(src, n).parse()


# printing -------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(node):
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return 3
    if isinstance(node, Pow):
        return 4
    return 5


def _fmt_num(v):
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_source(node: Node) -> str:
    """Inverse of :func:`parse_expression` with minimal parentheses."""
    def wrap(child, min_prec):
        s = to_source(child)
        return s if _prec(child) >= min_prec else f"({s})"

    if isinstance(node, Num):
        if node.value < 0:
            raise ValueError("Num holds non-negative values; use Neg")
        return _fmt_num(node.value)
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Neg):
        return "-" + wrap(node.arg, 3)
    if isinstance(node, Pow):
        return f"{wrap(node.base, 4)}^{node.exponent}"
    if isinstance(node, Call):
        return f"{node.name}({to_source(node.arg)})"
    p = _PREC[node.op]
    return f"{wrap(node.left, p)} {node.op} {wrap(node.right, p + 1)}"


# evaluation -----------------------------------------------------------------

def evaluate(node: Node, X) -> np.ndarray:
    """Values at the rows of ``X`` (shape ``(k, N)``)."""
    X = np.atleast_2d(X)
    k = len(X)
    if isinstance(node, Num):
        return np.full(k, node.value)
    if isinstance(node, Var):
        return X[:, node.index - 1].astype(float)
    if isinstance(node, Neg):
        return -evaluate(node.arg, X)
    if isinstance(node, Pow):
        return evaluate(node.base, X) ** node.exponent
    if isinstance(node, Call):
        return FUNCTIONS[node.name](evaluate(node.arg, X))
    a, b = evaluate(node.left, X), evaluate(node.right, X)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    return a / b


def scalar_field(src: str, n: int) -> Field:
    node = parse_expression(src, n)
    return Field(lambda X: evaluate(node, X)[:, None], 1, name=to_source(node))


def vector_field(srcs, n: int) -> Field:
    """Field with one expression per output component."""
    if isinstance(srcs, str):
        srcs = [srcs]
    nodes = [parse_expression(s, n) for s in srcs]
    return Field(lambda X: np.column_stack([evaluate(t, X) for t in nodes]), len(nodes),
                 name="(" + ", ".join(to_source(t) for t in nodes) + ")")


def constant_value(node: Node) -> float:
    """Value of a variable-free expression."""
    if _has_vars(node):
        raise ValueError("expression depends on variables")
    return float(evaluate(node, np.zeros((1, 0)))[0])


__all__ = ["Num", "Var", "Neg", "BinOp", "Pow", "Call", "parse_expression", "to_source",
           "evaluate", "scalar_field", "vector_field", "constant_value"]
