"""Coefficient expression language.

Grammar (``^`` binds tighter than unary minus, which binds tighter than
``*``/``/``, which bind tighter than ``+``/``-``; ``^`` is right-associative)::

    expr    := term (("+"|"-") term)* ;
    term    := factor (("*"|"/") factor)* ;
    factor  := ("-" factor) | power ;
    power   := atom ("^" factor)? ;
    atom    := NUMBER | IDENT | IDENT "(" args? ")" | "(" expr ")" ;
    args    := expr ("," expr)* ;

Variables are ``t``, ``x`` / ``x1..xd``, ``z`` / ``z1..zd`` and ``eps``.
Functions are ``sin cos exp log sqrt abs`` (one argument) and ``pow`` (two).
The measure functionals ``mean(c=1)``, ``mom(p, c=1)`` and ``w2d0()`` read the
frozen empirical measure of the current step.

Evaluation is vectorised: ``x`` may hold one state ``(d,)`` or a whole
ensemble ``(N, d)`` and the result broadcasts accordingly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any, NamedTuple

import numpy as np

from .errors import EvaluationError, ParseError

__all__ = [
    "Num", "Var", "Neg", "BinOp", "Call", "Expr",
    "EvalContext", "FreeVars",
    "parse", "evaluate", "free_vars", "pretty_print",
    "FUNCTIONS", "MEASURE_FUNCTIONALS",
]


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: Any


@dataclass(frozen=True)
class BinOp:
    op: str
    left: Any
    right: Any


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


Expr = Num | Var | Neg | BinOp | Call

# name -> (min arity, max arity)
FUNCTIONS = {
    "sin": (1, 1), "cos": (1, 1), "exp": (1, 1), "log": (1, 1),
    "sqrt": (1, 1), "abs": (1, 1), "pow": (2, 2),
}
MEASURE_FUNCTIONALS = {"mean": (0, 1), "mom": (1, 2), "w2d0": (0, 0)}

_VAR_RE = re.compile(r"(t|x|z|eps|x[1-9][0-9]*|z[1-9][0-9]*)\Z")
_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^(),])
""", re.VERBOSE)


class _Token(NamedTuple):
    kind: str
    text: str
    pos: int


def _tokenize(source: str):
    pos = 0
    tokens = []
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise _error(source, f"unexpected character {source[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(_Token("eof", "", len(source)))
    return tokens


def _error(source, message, pos):
    line = source.count("\n", 0, pos) + 1
    column = pos - (source.rfind("\n", 0, pos) + 1) + 1
    return ParseError(message, pos, line, column)


class _Parser:
    def __init__(self, source):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        if self.tok.text != text or self.tok.kind == "eof":
            found = "end of input" if self.tok.kind == "eof" else repr(self.tok.text)
            raise _error(self.source, f"expected {text!r}, found {found}", self.tok.pos)
        return self.advance()

    def parse(self):
        node = self.expr()
        if self.tok.kind != "eof":
            raise _error(self.source, f"unexpected {self.tok.text!r}", self.tok.pos)
        return node

    def expr(self):
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance().text
            node = BinOp(op, node, self.factor())
        return node

    def factor(self):
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            return Neg(self.factor())
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            return BinOp("^", base, self.factor())
        return base

    def atom(self):
        tok = self.tok
        if tok.kind == "number":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "ident":
            self.advance()
            if self.tok.kind == "op" and self.tok.text == "(":
                return self.call(tok)
            if tok.text in FUNCTIONS or tok.text in MEASURE_FUNCTIONALS:
                raise _error(self.source, f"function {tok.text!r} used without arguments", tok.pos)
            if not _VAR_RE.match(tok.text):
                raise _error(self.source, f"unknown identifier {tok.text!r}", tok.pos)
            return Var(tok.text)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        raise _error(self.source, f"unexpected {found}", tok.pos)

    def call(self, name_tok):
        name = name_tok.text
        arity = FUNCTIONS.get(name) or MEASURE_FUNCTIONALS.get(name)
        if arity is None:
            raise _error(self.source, f"unknown function {name!r}", name_tok.pos)
        self.expect("(")
        args = []
        if not (self.tok.kind == "op" and self.tok.text == ")"):
            args.append(self.expr())
            while self.tok.kind == "op" and self.tok.text == ",":
                self.advance()
                args.append(self.expr())
        self.expect(")")
        lo, hi = arity
        if not lo <= len(args) <= hi:
            want = str(lo) if lo == hi else f"{lo} to {hi}"
            raise _error(self.source, f"{name}() takes {want} argument(s), got {len(args)}", name_tok.pos)
        return Call(name, tuple(args))


def parse(source: str) -> Expr:
    """Parse ``source`` into an immutable AST; raises :class:`ParseError`."""
    if not isinstance(source, str):
        raise ParseError("expression source must be text", 0)
    return _Parser(source).parse()


class FreeVars(NamedTuple):
    names: frozenset
    uses_measure: bool


def free_vars(e: Expr) -> FreeVars:
    names = set()
    uses_measure = False
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            names.add(node.name)
        elif isinstance(node, Neg):
            stack.append(node.operand)
        elif isinstance(node, BinOp):
            stack += [node.left, node.right]
        elif isinstance(node, Call):
            uses_measure |= node.name in MEASURE_FUNCTIONALS
            stack.extend(node.args)
    return FreeVars(frozenset(names), uses_measure)


def pretty_print(e: Expr) -> str:
    """Fully parenthesised canonical text; ``parse(pretty_print(e)) == e``."""
    if isinstance(e, Num):
        return repr(float(e.value))
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{pretty_print(e.operand)})"
    if isinstance(e, BinOp):
        return f"({pretty_print(e.left)} {e.op} {pretty_print(e.right)})"
    if isinstance(e, Call):
        return f"{e.name}({', '.join(pretty_print(a) for a in e.args)})"
    raise TypeError(f"not an expression node: {e!r}")


@dataclass(frozen=True)
class EvalContext:
    """Bindings for one evaluation.

    ``x`` and ``z`` are either a single vector ``(d,)`` or a stack ``(N, d)``
    (scalars are treated as 1-vectors).  ``measure`` needs ``mean(c)``,
    ``mom(p, c)`` and ``w2d0()`` with 1-based components.
    """

    t: Any = 0.0
    x: Any = None
    z: Any = None
    eps: float | None = None
    measure: Any = None


def _component(values, name, index):
    if values is None:
        raise EvaluationError(f"unbound variable {name!r}")
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if not 1 <= index <= arr.shape[-1]:
        raise EvaluationError(f"unbound variable {name!r}: state has {arr.shape[-1]} component(s)")
    return arr[..., index - 1]


def _lookup(name, ctx):
    if name == "t":
        return np.asarray(ctx.t, dtype=float) if np.ndim(ctx.t) else float(ctx.t)
    if name == "eps":
        if ctx.eps is None:
            raise EvaluationError("unbound variable 'eps'")
        return float(ctx.eps)
    head, idx = name[0], name[1:]
    return _component(ctx.x if head == "x" else ctx.z, name, int(idx) if idx else 1)


def _as_index(value, what):
    v = np.asarray(value, dtype=float)
    if v.ndim != 0 or v != np.round(v):
        raise EvaluationError(f"{what} must be a scalar integer, got {value!r}")
    return int(v)


def _check(value, node):
    if not np.all(np.isfinite(value)):
        what = node if isinstance(node, str) else pretty_print(node)
        raise EvaluationError(f"non-finite result in {what}")
    return value


def _eval(node, ctx):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return _lookup(node.name, ctx)
    if isinstance(node, Neg):
        return -_eval(node.operand, ctx)
    if isinstance(node, BinOp):
        a = _eval(node.left, ctx)
        b = _eval(node.right, ctx)
        op = node.op
        if op == "+":
            out = a + b
        elif op == "-":
            out = a - b
        elif op == "*":
            out = a * b
        elif op == "/":
            if np.any(np.asarray(b) == 0):
                raise EvaluationError(f"division by zero in {pretty_print(node)}")
            out = a / b
        else:
            out = np.power(a, b)
        return _check(out, node)
    name = node.name
    if name in MEASURE_FUNCTIONALS:
        return _measure_call(node, ctx)
    args = [_eval(a, ctx) for a in node.args]
    a = np.asarray(args[0], dtype=float)
    if name == "log":
        if np.any(a <= 0):
            raise EvaluationError("log of a non-positive argument")
        out = np.log(a)
    elif name == "sqrt":
        if np.any(a < 0):
            raise EvaluationError("sqrt of a negative argument")
        out = np.sqrt(a)
    elif name == "pow":
        out = np.power(a, np.asarray(args[1], dtype=float))
    else:
        out = getattr(np, name)(a)
    _check(out, node)
    return float(out) if np.ndim(out) == 0 else out


def _measure_call(node, ctx):
    mu = ctx.measure
    if mu is None:
        raise EvaluationError(f"{node.name}() needs a measure but none is bound")
    args = [_eval(a, ctx) for a in node.args]
    if node.name == "mean":
        c = _as_index(args[0], "mean() component") if args else 1
        return float(mu.mean(c))
    if node.name == "mom":
        p = np.asarray(args[0], dtype=float)
        if p.ndim != 0 or not p >= 1:
            raise EvaluationError(f"mom() order must be a scalar >= 1, got {args[0]!r}")
        c = _as_index(args[1], "mom() component") if len(args) > 1 else 1
        return float(mu.mom(float(p), c))
    return float(mu.w2d0())


def evaluate(e: Expr, ctx: EvalContext):
    """Evaluate ``e`` in ``ctx``; returns a float or an array over the ensemble."""
    with np.errstate(all="ignore"):
        out = _eval(e, ctx)
    _check(out, e)
    return float(out) if np.ndim(out) == 0 else np.asarray(out, dtype=float)
