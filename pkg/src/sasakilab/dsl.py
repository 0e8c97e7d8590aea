"""A tiny expression language for smooth scalar fields on a chart.

Grammar (EBNF)::

    expr    = term , { ("+" | "-") , term } ;
    term    = unary , { ("*" | "/") , unary } ;
    unary   = "-" , unary | power ;
    power   = atom , [ "^" , unary ] ;            (* right associative *)
    atom    = number | variable | constant | call | "(" , expr , ")" ;
    call    = function , "(" , expr , ")" ;
    function = "exp" | "ln" | "sin" | "cos" | "sqrt" | "tanh" ;
    variable = "x" , digit , { digit } ;          (* x1 .. xm *)
    constant = "pi" ;
    number  = digit , { digit } , [ "." , { digit } ] , [ ("e" | "E") , [ "+" | "-" ] , digit , { digit } ] ;

So ``-x1^2`` is ``-(x1^2)`` and ``2^3^2`` is ``2^(3^2)``.

Expressions evaluate over any numeric carrier: floats, numpy arrays (batched
points) or :class:`~sasakilab.jets.Jet` objects, the last giving exact
gradients and Hessians.  Domain violations raise
:class:`~sasakilab.jets.DomainError`; nothing is allowed to turn into NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import jets
from .jets import DomainError, Jet

__all__ = [
    "DSLError",
    "ParseError",
    "UnknownIdentifierError",
    "ArityError",
    "VariableIndexError",
    "DomainError",
    "Expr",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "JetValue",
    "parse",
    "to_source",
    "evaluate",
    "eval_jet",
    "as_expr",
    "max_variable",
]

FUNCTIONS = {
    "exp": jets.exp,
    "ln": jets.log,
    "sin": jets.sin,
    "cos": jets.cos,
    "sqrt": jets.sqrt,
    "tanh": jets.tanh,
}
CONSTANTS = {"pi": math.pi}


class DSLError(ValueError):
    pass


class ParseError(DSLError):
    def __init__(self, message: str, line: int, column: int, expected: tuple[str, ...] = ()):
        self.line = line
        self.column = column
        self.expected = expected
        detail = f" (expected one of: {', '.join(expected)})" if expected else ""
        super().__init__(f"{message} at line {line}, column {column}{detail}")


class UnknownIdentifierError(ParseError):
    pass


class ArityError(ParseError):
    pass


class VariableIndexError(DSLError):
    pass


# -- AST -------------------------------------------------------------------


class Expr:
    """Base node.  Nodes are immutable; Python operators build new trees."""

    def __add__(self, other):
        return BinOp("+", self, as_expr(other))

    def __radd__(self, other):
        return BinOp("+", as_expr(other), self)

    def __sub__(self, other):
        return BinOp("-", self, as_expr(other))

    def __rsub__(self, other):
        return BinOp("-", as_expr(other), self)

    def __mul__(self, other):
        return BinOp("*", self, as_expr(other))

    def __rmul__(self, other):
        return BinOp("*", as_expr(other), self)

    def __truediv__(self, other):
        return BinOp("/", self, as_expr(other))

    def __rtruediv__(self, other):
        return BinOp("/", as_expr(other), self)

    def __pow__(self, other):
        return BinOp("^", self, as_expr(other))

    def __neg__(self):
        return Neg(self)

    def __str__(self) -> str:
        return to_source(self)


@dataclass(frozen=True, eq=True)
class Num(Expr):
    value: float


@dataclass(frozen=True, eq=True)
class Var(Expr):
    index: int  # 1-based, as written in the source


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    operand: Expr


@dataclass(frozen=True, eq=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Call(Expr):
    name: str
    arg: Expr


def as_expr(value: Union[Expr, str, float, int]) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, str):
        return parse(value)
    return Num(float(value))


# -- tokenizer -------------------------------------------------------------


@dataclass(frozen=True)
class _Token:
    kind: str  # number, name, op, lparen, rparen, comma, end
    text: str
    line: int
    column: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    i, line, col = 0, 1, 1
    n = len(source)
    while i < n:
        ch = source[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch.isspace():
            i += 1
            col += 1
            continue
        start_col = col
        if ch.isdigit() or (ch == "." and i + 1 < n and source[i + 1].isdigit()):
            j = i
            while j < n and source[j].isdigit():
                j += 1
            if j < n and source[j] == ".":
                j += 1
                while j < n and source[j].isdigit():
                    j += 1
            if j < n and source[j] in "eE":
                k = j + 1
                if k < n and source[k] in "+-":
                    k += 1
                if k < n and source[k].isdigit():
                    while k < n and source[k].isdigit():
                        k += 1
                    j = k
            tokens.append(_Token("number", source[i:j], line, start_col))
        elif ch.isalpha() or ch == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            tokens.append(_Token("name", source[i:j], line, start_col))
        elif ch in "+-*/^":
            j = i + 1
            tokens.append(_Token("op", ch, line, start_col))
        elif ch == "(":
            j = i + 1
            tokens.append(_Token("lparen", ch, line, start_col))
        elif ch == ")":
            j = i + 1
            tokens.append(_Token("rparen", ch, line, start_col))
        elif ch == ",":
            j = i + 1
            tokens.append(_Token("comma", ch, line, start_col))
        else:
            raise ParseError(f"unexpected character {ch!r}", line, start_col)
        col += j - i
        i = j
    tokens.append(_Token("end", "", line, col))
    return tokens


_ATOM_START = ("number", "variable", "function", "'('", "'-'")


class _Parser:
    def __init__(self, source: str, dim: int | None):
        self.tokens = _tokenize(source)
        self.pos = 0
        self.dim = dim

    @property
    def tok(self) -> _Token:
        return self.tokens[self.pos]

    def _fail(self, expected):
        t = self.tok
        what = "end of input" if t.kind == "end" else f"token {t.text!r}"
        raise ParseError(f"unexpected {what}", t.line, t.column, tuple(expected))

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "end":
            self._fail(("operator", "end of input"))
        return e

    def expr(self) -> Expr:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.pos += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.pos += 1
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.tok.kind == "op" and self.tok.text == "-":
            self.pos += 1
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.pos += 1
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        t = self.tok
        if t.kind == "number":
            self.pos += 1
            return Num(float(t.text))
        if t.kind == "lparen":
            self.pos += 1
            e = self.expr()
            if self.tok.kind != "rparen":
                self._fail(("')'",))
            self.pos += 1
            return e
        if t.kind == "name":
            self.pos += 1
            name = t.text
            if name in FUNCTIONS:
                if self.tok.kind != "lparen":
                    self._fail(("'('",))
                self.pos += 1
                args = [self.expr()]
                while self.tok.kind == "comma":
                    self.pos += 1
                    args.append(self.expr())
                if self.tok.kind != "rparen":
                    self._fail(("')'", "','"))
                self.pos += 1
                if len(args) != 1:
                    raise ArityError(
                        f"function {name!r} takes 1 argument, got {len(args)}", t.line, t.column
                    )
                return Call(name, args[0])
            if name in CONSTANTS:
                return Num(CONSTANTS[name])
            if name[0] == "x" and name[1:].isdigit():
                index = int(name[1:])
                if index < 1 or (self.dim is not None and index > self.dim):
                    raise VariableIndexError(
                        f"variable {name} out of range for chart dimension {self.dim}"
                        f" (line {t.line}, column {t.column})"
                    )
                return Var(index)
            raise UnknownIdentifierError(f"unknown identifier {name!r}", t.line, t.column)
        self._fail(_ATOM_START)
        raise AssertionError("unreachable")


def parse(source: str, dim: int | None = None) -> Expr:
    """Parse ``source``; with ``dim`` given, variables must lie in x1..x{dim}."""
    return _Parser(source, dim).parse()


def max_variable(e: Expr) -> int:
    """Largest variable index used (0 for constants)."""
    if isinstance(e, Var):
        return e.index
    if isinstance(e, Num):
        return 0
    if isinstance(e, Neg):
        return max_variable(e.operand)
    if isinstance(e, Call):
        return max_variable(e.arg)
    return max(max_variable(e.left), max_variable(e.right))


def is_constant(e: Expr) -> bool:
    return max_variable(e) == 0


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def to_source(e: Expr) -> str:
    """Print back to the grammar; ``parse(to_source(e))`` evaluates identically."""
    return _show(e, 0)


def _show(e: Expr, ctx: int) -> str:
    if isinstance(e, Num):
        text = repr(e.value)
        if e.value < 0:
            return f"({text})"
        return text
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, Call):
        return f"{e.name}({_show(e.arg, 0)})"
    if isinstance(e, Neg):
        text = f"-{_show(e.operand, 3)}"
        return f"({text})" if ctx >= 3 else text
    prec = _PREC[e.op]
    if e.op == "^":
        text = f"{_show(e.left, 5)}^{_show(e.right, 3)}"
    else:
        # left-associative: the right operand needs a strictly higher context
        text = f"{_show(e.left, prec)} {e.op} {_show(e.right, prec + 1)}"
    return f"({text})" if prec < ctx else text


# -- evaluation ------------------------------------------------------------


def evaluate(e: Expr, x):
    """Evaluate over a carrier; ``x`` has shape (..., m) (array or Jet)."""
    if isinstance(e, Num):
        if isinstance(x, Jet):
            return Jet.constant(np.full(x.shape[:-1], e.value), x.nvars, x.order)
        return np.full(np.shape(x)[:-1], e.value)
    if isinstance(e, Var):
        m = x.shape[-1]
        if e.index > m:
            raise VariableIndexError(f"variable x{e.index} out of range for chart dimension {m}")
        return x[..., e.index - 1]
    if isinstance(e, Neg):
        return -evaluate(e.operand, x)
    if isinstance(e, Call):
        return FUNCTIONS[e.name](evaluate(e.arg, x))
    a = evaluate(e.left, x)
    if e.op == "^" and isinstance(e.right, Num):
        return _power(a, e.right.value)
    b = evaluate(e.right, x)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if e.op == "/":
        if isinstance(b, Jet):
            return a * b.reciprocal()
        if np.any(np.asarray(b) == 0):
            raise DomainError("division by zero")
        return a / b
    # variable exponent: a^b = exp(b ln a)
    return jets.exp(b * jets.log(a))


def _power(a, p: float):
    if isinstance(a, Jet):
        return a**p
    a = np.asarray(a, dtype=float)
    if not float(p).is_integer() and np.any(a < 0):
        raise DomainError(f"non-integer power {p} of a negative base")
    if p < 0 and np.any(a == 0):
        raise DomainError(f"negative power {p} of zero")
    return a**p


@dataclass(frozen=True)
class JetValue:
    """Value, gradient and Hessian of a scalar field at one point."""

    value: float
    gradient: np.ndarray
    hessian: np.ndarray


def eval_jet(e: Expr, x) -> JetValue:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("eval_jet expects a single point")
    j = evaluate(e, Jet.variables(x, 2))
    h = j.coeffs[2]
    return JetValue(float(j.value), np.array(j.coeffs[1]), 0.5 * (h + h.T))
