"""Text syntax for differential forms.

A form is written as a sum of scalar coefficients times wedge monomials::

    x1*dx1 + x2*dx2 + x3*dx3          # a 1-form on R^3
    (sin(x1) + step(x2))*dx2          # coefficients may use sin cos exp log sqrt abs step
    x1*dx2^dx3 - 2*dx1^dx3            # ^ between dx-factors is a wedge

Outside a wedge monomial ``^`` is exponentiation.  A plain scalar expression is
a 0-form.  ``step(u)`` is the Heaviside function with ``step(0) = 1``.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass
from math import comb, isfinite
from typing import Callable, Union

import numpy as np

from .errors import DegreeError, FormSyntaxError, UnknownIdentifierError
from .forms import AlternatingTensor, FormField
from .multiindex import REPEATED, MultiIndex, enumerate_indices, index_positions, sort_with_sign

FUNCTIONS: dict[str, Callable] = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "step": lambda u: np.where(np.asarray(u) >= 0, 1.0, 0.0),
}


class FormDegreeError(FormSyntaxError, DegreeError):
    """Terms of different degree were combined, or the declared degree is wrong."""


class RepeatedFactorWarning(UserWarning):
    """A wedge monomial repeats a factor and is therefore zero."""


# ---------------------------------------------------------------------------
# coefficient syntax tree


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Var, Neg, BinOp, Call]

ONE = Num(1.0)


def format_node(node: Node) -> str:
    if isinstance(node, Num):
        text = repr(float(node.value))
        return f"({text})" if text.startswith("-") else text
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Neg):
        return f"(-{format_node(node.arg)})"
    if isinstance(node, BinOp):
        return f"({format_node(node.left)} {node.op} {format_node(node.right)})"
    if isinstance(node, Call):
        return f"{node.func}({format_node(node.arg)})"
    raise TypeError(f"not a syntax node: {node!r}")


def compile_node(node: Node) -> Callable[[np.ndarray], np.ndarray]:
    """Turn a node into ``f(X)`` with coordinates on the last axis of ``X``."""
    if isinstance(node, Num):
        value = float(node.value)
        return lambda X: np.full(X.shape[:-1], value)
    if isinstance(node, Var):
        col = node.index - 1
        return lambda X: X[..., col]
    if isinstance(node, Neg):
        inner = compile_node(node.arg)
        return lambda X: -inner(X)
    if isinstance(node, BinOp):
        a, b = compile_node(node.left), compile_node(node.right)
        op = {"+": np.add, "-": np.subtract, "*": np.multiply, "/": np.divide, "^": np.power}[node.op]
        return lambda X: op(a(X), b(X))
    if isinstance(node, Call):
        fn, inner = FUNCTIONS[node.func], compile_node(node.arg)
        return lambda X: fn(inner(X))
    raise TypeError(f"not a syntax node: {node!r}")


def node_variables(node: Node) -> set[int]:
    if isinstance(node, Var):
        return {node.index}
    if isinstance(node, (Neg, Call)):
        return node_variables(node.arg)
    if isinstance(node, BinOp):
        return node_variables(node.left) | node_variables(node.right)
    return set()


# ---------------------------------------------------------------------------
# tokenizer

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # number, var, dx, func, op, end
    text: str
    line: int
    col: int
    value: object = None


def _tokenize(text: str, n: int) -> list[_Tok]:
    toks: list[_Tok] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise FormSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind, tok = m.lastgroup, m.group()
        if kind == "ws":
            for k, ch in enumerate(tok):
                if ch == "\n":
                    line += 1
                    line_start = pos + k + 1
        elif kind == "number":
            value = float(tok)
            if not isfinite(value):
                raise FormSyntaxError(f"literal {tok} is not finite", line, col)
            toks.append(_Tok("number", tok, line, col, value))
        elif kind == "name":
            toks.append(_classify_name(tok, n, line, col))
        else:
            toks.append(_Tok("op", tok, line, col))
        pos = m.end()
    toks.append(_Tok("end", "", line, pos - line_start + 1))
    return toks


def _classify_name(tok: str, n: int, line: int, col: int) -> _Tok:
    for prefix, kind in (("dx", "dx"), ("x", "var")):
        m = re.fullmatch(prefix + r"([1-9]\d*)", tok)
        if m:
            index = int(m.group(1))
            if index > n:
                raise UnknownIdentifierError(f"{tok} refers to coordinate {index} but n={n}", line, col)
            return _Tok(kind, tok, line, col, index)
    if tok in FUNCTIONS:
        return _Tok("func", tok, line, col)
    raise UnknownIdentifierError(f"unknown identifier {tok!r}", line, col)


# ---------------------------------------------------------------------------
# parser


@dataclass
class _Form:
    """Intermediate value: a form of fixed degree; ``None`` marks a unit coefficient."""

    degree: int
    terms: dict[MultiIndex, Node | None]

    @property
    def is_scalar(self) -> bool:
        return self.degree == 0

    def scalar(self) -> Node:
        return self.terms[()]


def _scalar(node: Node) -> _Form:
    return _Form(0, {(): node})


def _scale(s: Node, c: Node | None) -> Node:
    return s if c is None else BinOp("*", s, c)


def _unit(c: Node | None) -> Node:
    return ONE if c is None else c


def _negate(c: Node | None) -> Node:
    if c is None:
        return Num(-1.0)
    if isinstance(c, Num):
        return Num(-c.value)
    return Neg(c)


class _Parser:
    def __init__(self, text: str, n: int):
        self.n = n
        self.toks = _tokenize(text, n)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        if self.tok.kind != "op" or self.tok.text != text:
            found = self.tok.text or "end of input"
            raise FormSyntaxError(f"expected {text!r}, found {found!r}", self.tok.line, self.tok.col)
        return self.advance()

    def error(self, message: str, tok: _Tok | None = None, cls=FormSyntaxError):
        tok = tok or self.tok
        return cls(message, tok.line, tok.col)

    def parse(self) -> _Form:
        if self.tok.kind == "end":
            raise self.error("empty expression")
        value = self.expr()
        if self.tok.kind != "end":
            raise self.error(f"unexpected {self.tok.text!r}")
        return value

    def expr(self) -> _Form:
        left = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance()
            right = self.term()
            left = self.add(left, right, op)
        return left

    def add(self, a: _Form, b: _Form, op: _Tok) -> _Form:
        if a.degree != b.degree:
            raise self.error(f"cannot combine a {a.degree}-form with a {b.degree}-form", op, FormDegreeError)
        terms: dict[MultiIndex, Node | None] = {}
        for idx in sorted(set(a.terms) | set(b.terms)):
            if idx in a.terms and idx in b.terms:
                terms[idx] = BinOp(op.text, _unit(a.terms[idx]), _unit(b.terms[idx]))
            elif idx in a.terms:
                terms[idx] = a.terms[idx]
            else:
                terms[idx] = b.terms[idx] if op.text == "+" else _negate(b.terms[idx])
        return _Form(a.degree, terms)

    def term(self) -> _Form:
        left = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance()
            right = self.unary()
            left = self.mul(left, right, op)
        return left

    def mul(self, a: _Form, b: _Form, op: _Tok) -> _Form:
        if op.text == "/":
            if not b.is_scalar:
                raise self.error("cannot divide by a form of positive degree", op, FormDegreeError)
            return _Form(a.degree, {i: BinOp("/", _unit(c), b.scalar()) for i, c in a.terms.items()})
        if a.is_scalar and b.is_scalar:
            return _scalar(BinOp("*", a.scalar(), b.scalar()))
        if a.is_scalar or b.is_scalar:
            s, f = (a, b) if a.is_scalar else (b, a)
            return _Form(f.degree, {i: _scale(s.scalar(), c) for i, c in f.terms.items()})
        raise self.error("product of two forms of positive degree; write wedges as dxi^dxj", op, FormDegreeError)

    def unary(self) -> _Form:
        if self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance()
            inner = self.unary()
            if op.text == "+":
                return inner
            if inner.is_scalar:
                node = inner.scalar()
                return _scalar(Num(-node.value) if isinstance(node, Num) else Neg(node))
            return _Form(inner.degree, {i: _negate(c) for i, c in inner.terms.items()})
        return self.power()

    def power(self) -> _Form:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            op = self.advance()
            if not base.is_scalar:
                raise self.error("exponent applied to a form; wedge factors must be dx terms", op, FormDegreeError)
            exponent = self.unary()
            if not exponent.is_scalar:
                raise self.error("exponent must be scalar", op, FormDegreeError)
            return _scalar(BinOp("^", base.scalar(), exponent.scalar()))
        return base

    def atom(self) -> _Form:
        tok = self.tok
        if tok.kind == "number":
            self.advance()
            return _scalar(Num(tok.value))
        if tok.kind == "var":
            self.advance()
            return _scalar(Var(tok.value))
        if tok.kind == "func":
            self.advance()
            self.expect("(")
            arg = self.expr()
            close = self.expect(")")
            if not arg.is_scalar:
                raise self.error(f"{tok.text}() takes a scalar argument", close, FormDegreeError)
            return _scalar(Call(tok.text, arg.scalar()))
        if tok.kind == "dx":
            return self.wedge()
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            inner = self.expr()
            self.expect(")")
            return inner
        found = tok.text or "end of input"
        raise self.error(f"unexpected {found!r}")

    def wedge(self) -> _Form:
        start = self.tok
        factors = [self.advance().value]
        while (
            self.tok.kind == "op"
            and self.tok.text == "^"
            and self.toks[self.i + 1].kind == "dx"
        ):
            self.advance()
            factors.append(self.advance().value)
        idx, sign = sort_with_sign(factors, self.n)
        if idx is REPEATED:
            warnings.warn(
                f"wedge monomial at line {start.line}, column {start.col} repeats a factor and is zero",
                RepeatedFactorWarning,
                stacklevel=4,
            )
            return _Form(len(factors), {})
        return _Form(len(factors), {idx: None if sign > 0 else Num(-1.0)})


# ---------------------------------------------------------------------------
# public surface


@dataclass(frozen=True, eq=False)
class FormExpression:
    """A parsed form: coefficient syntax trees keyed by increasing multi-index."""

    source: str
    n: int
    degree: int
    coefficients: dict[MultiIndex, Node]

    def __post_init__(self):
        compiled = tuple((index_positions(self.n, self.degree)[i], compile_node(c)) for i, c in self.coefficients.items())
        object.__setattr__(self, "_compiled", compiled)

    @property
    def variables(self) -> set[int]:
        out: set[int] = set()
        for node in self.coefficients.values():
            out |= node_variables(node)
        return out

    def batch(self, points) -> np.ndarray:
        X = np.asarray(points, dtype=float)
        out = np.zeros(X.shape[:-1] + (comb(self.n, self.degree),))
        for col, fn in self._compiled:
            out[..., col] = fn(X)
        return out

    def evaluate(self, x) -> AlternatingTensor:
        return AlternatingTensor.from_dense(self.n, self.degree, self.batch(np.asarray(x, dtype=float)))

    def to_field(self, analytic_derivative=None) -> FormField:
        return FormField(
            self.n,
            self.degree,
            self.evaluate,
            analytic_derivative=analytic_derivative,
            batch=self.batch,
            name=self.source,
        )

    def __str__(self) -> str:
        return format_form(self)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FormExpression):
            return NotImplemented
        return (self.n, self.degree, self.coefficients) == (other.n, other.degree, other.coefficients)

    def __hash__(self):
        return hash((self.n, self.degree, tuple(self.coefficients.items())))


def _monomial(idx: MultiIndex) -> str:
    return "^".join(f"dx{i}" for i in idx)


def format_form(expr: FormExpression) -> str:
    """Canonical text for ``expr``; parsing it gives back an equal expression."""
    if expr.degree == 0:
        return format_node(expr.coefficients.get((), Num(0.0)))
    if not expr.coefficients:
        return f"0.0*{_monomial(enumerate_indices(expr.n, expr.degree)[0])}"
    return " + ".join(f"{format_node(c)}*{_monomial(i)}" for i, c in sorted(expr.coefficients.items()))


def parse_form(text: str, n: int, degree: int | None = None) -> FormExpression:
    """Parse ``text`` as a form on ``R^n``.

    Raises :class:`FormSyntaxError` (with line and column) on malformed input,
    :class:`UnknownIdentifierError` for unknown names or coordinates beyond
    ``n``, and :class:`FormDegreeError` when terms of different degree are
    mixed or ``degree`` disagrees with the wedge arity.
    """
    value = _Parser(text, n).parse()
    if degree is not None and value.degree != degree:
        raise FormDegreeError(f"expression has degree {value.degree}, declared degree {degree}", 1, 1)
    if value.degree > n:
        raise FormDegreeError(f"degree {value.degree} exceeds dimension {n}", 1, 1)
    coeffs = {idx: _unit(c) for idx, c in value.terms.items()}
    return FormExpression(text, n, value.degree, coeffs)
