"""Trajectory/density expression language.

Expressions are parsed into an immutable AST and evaluated as third-order
Taylor jets in ``t`` (value plus the first three time derivatives).  The same
AST can be lowered to a flat postfix tape consumed by the batch kernels.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

VARIABLES = ("t", "x0", "y0", "z0")
FUNCTIONS = ("sin", "cos", "exp", "sqrt", "log")
RESERVED = frozenset(VARIABLES + FUNCTIONS)


class ParseError(ValueError):
    """Syntax or name error in an expression, with the offending position."""

    def __init__(self, message: str, pos: int, expected: Sequence[str] = ()):
        self.message = message
        self.pos = pos
        self.expected = tuple(expected)
        detail = f"; expected one of: {', '.join(self.expected)}" if self.expected else ""
        super().__init__(f"{message} at position {pos}{detail}")


class ExprDomainError(ArithmeticError):
    """An expression was evaluated outside its domain (e.g. 1/0, sqrt(-1))."""

    def __init__(self, message: str, subexpr: str):
        self.subexpr = subexpr
        super().__init__(f"{message} in subexpression {subexpr}")


# --------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Const:
    value: float

    def __str__(self) -> str:
        return repr(float(self.value))


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Param:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Unary:
    op: str  # "neg" or one of FUNCTIONS
    arg: "Expr"

    def __str__(self) -> str:
        if self.op == "neg":
            return f"(-{self.arg})"
        return f"{self.op}({self.arg})"


@dataclass(frozen=True)
class Binary:
    op: str  # one of + - * /
    left: "Expr"
    right: "Expr"

    def __str__(self) -> str:
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: Union[Const, Param]
    negate_exponent: bool = False

    def __str__(self) -> str:
        sign = "-" if self.negate_exponent else ""
        return f"({self.base} ** {sign}{self.exponent})"


Expr = Union[Const, Var, Param, Unary, Binary, Pow]


def to_source(ast: Expr) -> str:
    """Fully parenthesised source text; re-parses to an identical tree."""
    return str(ast)


def free_params(ast: Expr) -> set[str]:
    if isinstance(ast, Param):
        return {ast.name}
    if isinstance(ast, Unary):
        return free_params(ast.arg)
    if isinstance(ast, Binary):
        return free_params(ast.left) | free_params(ast.right)
    if isinstance(ast, Pow):
        return free_params(ast.base) | free_params(ast.exponent)
    return set()


def free_vars(ast: Expr) -> set[str]:
    if isinstance(ast, Var):
        return {ast.name}
    if isinstance(ast, Unary):
        return free_vars(ast.arg)
    if isinstance(ast, Binary):
        return free_vars(ast.left) | free_vars(ast.right)
    if isinstance(ast, Pow):
        return free_vars(ast.base)
    return set()


# --------------------------------------------------------------------------
# Parser

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/()]))"
)


@dataclass(frozen=True)
class _Token:
    kind: str  # num, ident, op, end
    text: str
    pos: int


def _tokenize(src: str) -> list[_Token]:
    tokens = []
    pos = 0
    n = len(src)
    while True:
        while pos < n and src[pos].isspace():
            pos += 1
        if pos >= n:
            break
        m = _TOKEN_RE.match(src, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {src[pos]!r}", pos)
        kind = m.lastgroup
        tokens.append(_Token(kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(_Token("end", "", n))
    return tokens


class _Parser:
    def __init__(self, src: str, params: frozenset[str]):
        self.tokens = _tokenize(src)
        self.i = 0
        self.params = params

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def accept(self, text: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> None:
        if not self.accept(text):
            self.fail(f"unexpected {self._describe(self.tok)}", [repr(text)])

    @staticmethod
    def _describe(tok: _Token) -> str:
        return "end of input" if tok.kind == "end" else f"token {tok.text!r}"

    def fail(self, message: str, expected: Sequence[str] = ()):
        raise ParseError(message, self.tok.pos, expected)

    def parse(self) -> Expr:
        node = self.expr()
        if self.tok.kind != "end":
            self.fail(f"unexpected {self._describe(self.tok)}",
                      ["'+'", "'-'", "'*'", "'/'", "'**'", "end of input"])
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in ("*", "/"):
            op = self.advance().text
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.accept("-"):
            return Unary("neg", self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.accept("**"):
            neg = self.accept("-")
            tok = self.tok
            if tok.kind == "num":
                self.advance()
                return Pow(base, Const(float(tok.text)), neg)
            if tok.kind == "ident" and tok.text in self.params:
                self.advance()
                return Pow(base, Param(tok.text), neg)
            self.fail("non-constant exponent", ["number", "parameter name"])
        return base

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            return Const(float(tok.text))
        if tok.kind == "ident":
            self.advance()
            name = tok.text
            if name in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Unary(name, arg)
            if name in VARIABLES:
                return Var(name)
            if name in self.params:
                return Param(name)
            raise ParseError(f"unknown identifier {name!r}", tok.pos)
        if self.accept("("):
            node = self.expr()
            self.expect(")")
            return node
        self.fail(f"unexpected {self._describe(tok)}",
                  ["number", "identifier", "'('", "'-'"])


def parse_expr(src: str, params: Sequence[str] | Mapping[str, float] = ()) -> Expr:
    """Parse ``src`` into an AST.  ``params`` lists the declared parameter names."""
    names = frozenset(params)
    bad = names & RESERVED
    if bad:
        raise ValueError(f"parameter names clash with reserved names: {sorted(bad)}")
    return _Parser(src, names).parse()


# --------------------------------------------------------------------------
# Jets

def _compose(f: "Jet3", p0: float, p1: float, p2: float, p3: float) -> "Jet3":
    # Faa di Bruno to third order; p_k is the k-th derivative of the outer function.
    f1, f2, f3 = f.c1, f.c2, f.c3
    return Jet3(
        p0,
        p1 * f1,
        p2 * f1 * f1 + p1 * f2,
        p3 * f1 * f1 * f1 + 3.0 * p2 * f1 * f2 + p1 * f3,
    )


def _pow_coeffs(x: float, c: float) -> tuple[float, float, float, float]:
    """Derivatives 0..3 of y -> y**c at y = x, or raise ValueError."""
    out = []
    fall = 1.0
    is_int = float(c).is_integer()
    for k in range(4):
        e = c - k
        if fall == 0.0:
            out.append(0.0)
        elif is_int:
            if x == 0.0 and e < 0:
                raise ValueError
            out.append(fall * x ** int(e))
        else:
            if x < 0.0 or (x == 0.0 and e < 0):
                raise ValueError
            out.append(fall * x ** e)
        fall *= e
    return out[0], out[1], out[2], out[3]


@dataclass(frozen=True)
class Jet3:
    """Value and first three time derivatives of a quantity."""

    c0: float
    c1: float = 0.0
    c2: float = 0.0
    c3: float = 0.0

    @classmethod
    def variable(cls, t: float) -> "Jet3":
        return cls(float(t), 1.0, 0.0, 0.0)

    @classmethod
    def constant(cls, value: float) -> "Jet3":
        return cls(float(value))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.c0, self.c1, self.c2, self.c3)

    @staticmethod
    def _lift(other) -> "Jet3":
        return other if isinstance(other, Jet3) else Jet3(float(other))

    def __add__(self, other) -> "Jet3":
        o = self._lift(other)
        return Jet3(self.c0 + o.c0, self.c1 + o.c1, self.c2 + o.c2, self.c3 + o.c3)

    __radd__ = __add__

    def __neg__(self) -> "Jet3":
        return Jet3(-self.c0, -self.c1, -self.c2, -self.c3)

    def __sub__(self, other) -> "Jet3":
        return self + (-self._lift(other))

    def __rsub__(self, other) -> "Jet3":
        return self._lift(other) - self

    def __mul__(self, other) -> "Jet3":
        o = self._lift(other)
        a0, a1, a2, a3 = self.as_tuple()
        b0, b1, b2, b3 = o.as_tuple()
        return Jet3(
            a0 * b0,
            a1 * b0 + a0 * b1,
            a2 * b0 + 2.0 * a1 * b1 + a0 * b2,
            a3 * b0 + 3.0 * a2 * b1 + 3.0 * a1 * b2 + a0 * b3,
        )

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet3":
        x = self.c0
        if x == 0.0:
            raise ZeroDivisionError("jet reciprocal of zero")
        r = 1.0 / x
        return _compose(self, r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r)

    def __truediv__(self, other) -> "Jet3":
        return self * self._lift(other).reciprocal()

    def __rtruediv__(self, other) -> "Jet3":
        return self._lift(other) * self.reciprocal()

    def __pow__(self, c: float) -> "Jet3":
        return _compose(self, *_pow_coeffs(self.c0, float(c)))

    def sin(self) -> "Jet3":
        s, c = math.sin(self.c0), math.cos(self.c0)
        return _compose(self, s, c, -s, -c)

    def cos(self) -> "Jet3":
        s, c = math.sin(self.c0), math.cos(self.c0)
        return _compose(self, c, -s, -c, s)

    def exp(self) -> "Jet3":
        e = math.exp(self.c0)
        return _compose(self, e, e, e, e)

    def sqrt(self) -> "Jet3":
        x = self.c0
        if x <= 0.0:
            raise ValueError("sqrt of non-positive value")
        s = math.sqrt(x)
        return _compose(self, s, 0.5 / s, -0.25 / (x * s), 0.375 / (x * x * s))

    def log(self) -> "Jet3":
        x = self.c0
        if x <= 0.0:
            raise ValueError("log of non-positive value")
        r = 1.0 / x
        return _compose(self, math.log(x), r, -r * r, 2.0 * r * r * r)


def eval_jet3(ast: Expr, t: float, r0: Sequence[float], params: Mapping[str, float] | None = None) -> Jet3:
    """Evaluate ``ast`` and its first three t-derivatives at ``(t, r0)``."""
    params = params or {}
    env = {
        "t": Jet3.variable(t),
        "x0": Jet3.constant(r0[0]),
        "y0": Jet3.constant(r0[1]),
        "z0": Jet3.constant(r0[2]),
    }

    def ev(node: Expr) -> Jet3:
        if isinstance(node, Const):
            return Jet3.constant(node.value)
        if isinstance(node, Var):
            return env[node.name]
        if isinstance(node, Param):
            try:
                return Jet3.constant(params[node.name])
            except KeyError:
                raise KeyError(f"unbound parameter {node.name!r}") from None
        if isinstance(node, Unary):
            a = ev(node.arg)
            if node.op == "neg":
                return -a
            try:
                return getattr(a, node.op)()
            except (ValueError, OverflowError) as exc:
                raise ExprDomainError(str(exc), to_source(node)) from None
        if isinstance(node, Binary):
            a, b = ev(node.left), ev(node.right)
            if node.op == "+":
                return a + b
            if node.op == "-":
                return a - b
            if node.op == "*":
                return a * b
            if b.c0 == 0.0:
                raise ExprDomainError("division by zero", to_source(node))
            return a / b
        if isinstance(node, Pow):
            a = ev(node.base)
            c = _exponent_value(node, params)
            try:
                return a ** c
            except (ValueError, ZeroDivisionError, OverflowError):
                raise ExprDomainError(f"power {c} outside domain", to_source(node)) from None
        raise TypeError(f"not an expression node: {node!r}")

    return ev(ast)


def _exponent_value(node: Pow, params: Mapping[str, float]) -> float:
    if isinstance(node.exponent, Const):
        c = node.exponent.value
    else:
        c = float(params[node.exponent.name])
    return -c if node.negate_exponent else c


# --------------------------------------------------------------------------
# Tape lowering for the batch kernels

OP_CONST, OP_T, OP_X0, OP_Y0, OP_Z0 = 0, 1, 2, 3, 4
OP_NEG, OP_SIN, OP_COS, OP_EXP, OP_SQRT, OP_LOG = 5, 6, 7, 8, 9, 10
OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_POW = 11, 12, 13, 14, 15

_VAR_OPS = {"t": OP_T, "x0": OP_X0, "y0": OP_Y0, "z0": OP_Z0}
_UNARY_OPS = {"neg": OP_NEG, "sin": OP_SIN, "cos": OP_COS, "exp": OP_EXP,
              "sqrt": OP_SQRT, "log": OP_LOG}
_BINARY_OPS = {"+": OP_ADD, "-": OP_SUB, "*": OP_MUL, "/": OP_DIV}

# kernel status codes
STATUS_OK = 0
STATUS_MAXITER = -1
STATUS_DIV = 1
STATUS_SQRT = 2
STATUS_LOG = 3
STATUS_POW = 4

STATUS_MESSAGES = {
    STATUS_DIV: "division by zero",
    STATUS_SQRT: "sqrt of non-positive value",
    STATUS_LOG: "log of non-positive value",
    STATUS_POW: "power outside domain",
}


@dataclass(frozen=True)
class Tape:
    """Postfix program for up to three expressions, parameters folded in."""

    codes: np.ndarray    # int32
    args: np.ndarray     # float64
    starts: np.ndarray   # int32, len = n_programs + 1
    depth: int
    nodes: tuple         # AST node per instruction, for error messages

    def describe(self, op_index: int) -> str:
        return to_source(self.nodes[op_index])


def compile_tape(asts: Sequence[Expr], params: Mapping[str, float] | None = None) -> Tape:
    params = params or {}
    codes: list[int] = []
    args: list[float] = []
    nodes: list = []
    starts = [0]
    depth = 0

    def emit(code: int, arg: float, node) -> None:
        codes.append(code)
        args.append(arg)
        nodes.append(node)

    def walk(node: Expr) -> int:
        # returns stack depth needed
        if isinstance(node, Const):
            emit(OP_CONST, node.value, node)
            return 1
        if isinstance(node, Param):
            emit(OP_CONST, float(params[node.name]), node)
            return 1
        if isinstance(node, Var):
            emit(_VAR_OPS[node.name], 0.0, node)
            return 1
        if isinstance(node, Unary):
            d = walk(node.arg)
            emit(_UNARY_OPS[node.op], 0.0, node)
            return d
        if isinstance(node, Binary):
            d1 = walk(node.left)
            d2 = walk(node.right)
            emit(_BINARY_OPS[node.op], 0.0, node)
            return max(d1, d2 + 1)
        if isinstance(node, Pow):
            d = walk(node.base)
            emit(OP_POW, _exponent_value(node, params), node)
            return d
        raise TypeError(f"not an expression node: {node!r}")

    for ast in asts:
        depth = max(depth, walk(ast))
        starts.append(len(codes))
    return Tape(
        codes=np.asarray(codes, dtype=np.int32),
        args=np.asarray(args, dtype=np.float64),
        starts=np.asarray(starts, dtype=np.int32),
        depth=max(depth, 1),
        nodes=tuple(nodes),
    )
