r"""Scalar expressions: parsing, exact symbolic differentiation, evaluation.

Problem data (Lagrangians, inner integrands, constraints, control dynamics)
arrives as text such as ``"(v - gamma(alpha+2)*x)^2 + z"``. This module turns
such text into an immutable expression tree that can be differentiated
symbolically and evaluated pointwise, either on scalars or vectorized over
numpy arrays.

The grammar is ordinary infix notation with ``^`` (or ``**``) as a
right-associative power operator; see ``docs/grammar.md``. Trees are built
through folding constructors, so constant subtrees collapse to a single
literal and neutral/absorbing elements (``e + 0``, ``e * 1``, ``e * 0``,
``e ^ 1``, ``e ^ 0``) are dropped. No other simplification is attempted.
"""

from __future__ import annotations

import math
import re
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import (
    DomainError,
    ExpressionError,
    ParseError,
    UnboundVariableError,
    UnknownIdentifierError,
)

__all__ = [
    "Add",
    "Call",
    "Const",
    "Div",
    "Expression",
    "FUNCTIONS",
    "Mul",
    "Neg",
    "Pow",
    "Sub",
    "Var",
    "differentiate",
    "evaluate",
    "parse",
]


# {{{ tree nodes


class Node:
    """Base class of expression tree nodes."""

    __slots__ = ()


@dataclass(frozen=True)
class Const(Node):
    value: float


@dataclass(frozen=True)
class Var(Node):
    name: str


@dataclass(frozen=True)
class Neg(Node):
    arg: Node


@dataclass(frozen=True)
class Add(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Sub(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Mul(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Div(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Pow(Node):
    base: Node
    exponent: Node


@dataclass(frozen=True)
class Call(Node):
    func: str
    arg: Node


# gamma is admitted for constant arguments only, so it never needs a derivative
FUNCTIONS = ("sin", "cos", "exp", "ln", "sqrt", "abs", "sign", "gamma")
CONSTANTS = {"pi": math.pi}

_BINARY_SYMBOLS = {Add: "+", Sub: "-", Mul: "*", Div: "/", Pow: "^"}

# }}}


# {{{ folding constructors


def _is(node: Node, value: float) -> bool:
    return isinstance(node, Const) and node.value == value


def _fold(node: Node) -> Node:
    """Replace *node* by a literal when all its leaves are literals."""
    if free_vars(node):
        return node
    try:
        value = float(_eval(node, {}, ()))
    except (ExpressionError, OverflowError, ValueError, ZeroDivisionError):
        return node
    if not math.isfinite(value):
        return node
    return Const(value)


def neg(a: Node) -> Node:
    if isinstance(a, Const):
        return Const(-a.value)
    return Neg(a)


def add(a: Node, b: Node) -> Node:
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    return _fold(Add(a, b))


def sub(a: Node, b: Node) -> Node:
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    return _fold(Sub(a, b))


def mul(a: Node, b: Node) -> Node:
    if _is(a, 0.0) or _is(b, 0.0):
        return Const(0.0)
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    return _fold(Mul(a, b))


def div(a: Node, b: Node) -> Node:
    if _is(b, 1.0):
        return a
    return _fold(Div(a, b))


def power(a: Node, b: Node) -> Node:
    if _is(b, 1.0):
        return a
    if _is(b, 0.0):
        return Const(1.0)
    return _fold(Pow(a, b))


def call(func: str, a: Node) -> Node:
    return _fold(Call(func, a))

# }}}


# {{{ structural queries


@lru_cache(maxsize=None)
def free_vars(node: Node) -> frozenset[str]:
    if isinstance(node, Var):
        return frozenset((node.name,))
    if isinstance(node, Const):
        return frozenset()
    if isinstance(node, (Neg, Call)):
        return free_vars(node.arg)
    if isinstance(node, Pow):
        return free_vars(node.base) | free_vars(node.exponent)
    return free_vars(node.left) | free_vars(node.right)


def to_text(node: Node) -> str:
    """Canonical, fully parenthesized form; parses back to an equal tree."""
    if isinstance(node, Const):
        v = node.value
        if v < 0 or (v == 0 and math.copysign(1.0, v) < 0):
            return f"(-{-v!r})"
        return repr(v)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_text(node.arg)})"
    if isinstance(node, Call):
        return f"{node.func}({to_text(node.arg)})"
    if isinstance(node, Pow):
        return f"({to_text(node.base)} ^ {to_text(node.exponent)})"
    sym = _BINARY_SYMBOLS[type(node)]
    return f"({to_text(node.left)} {sym} {to_text(node.right)})"


def _rename(node: Node, mapping: Mapping[str, str]) -> Node:
    if isinstance(node, Var):
        return Var(mapping.get(node.name, node.name))
    if isinstance(node, Const):
        return node
    if isinstance(node, Neg):
        return Neg(_rename(node.arg, mapping))
    if isinstance(node, Call):
        return Call(node.func, _rename(node.arg, mapping))
    if isinstance(node, Pow):
        return Pow(_rename(node.base, mapping), _rename(node.exponent, mapping))
    return type(node)(_rename(node.left, mapping), _rename(node.right, mapping))

# }}}


# {{{ differentiation


def _d(node: Node, v: str) -> Node:
    if v not in free_vars(node):
        return Const(0.0)
    if isinstance(node, Var):
        return Const(1.0)
    if isinstance(node, Neg):
        return neg(_d(node.arg, v))
    if isinstance(node, Add):
        return add(_d(node.left, v), _d(node.right, v))
    if isinstance(node, Sub):
        return sub(_d(node.left, v), _d(node.right, v))
    if isinstance(node, Mul):
        a, b = node.left, node.right
        return add(mul(_d(a, v), b), mul(a, _d(b, v)))
    if isinstance(node, Div):
        a, b = node.left, node.right
        return sub(div(_d(a, v), b), div(mul(a, _d(b, v)), power(b, Const(2.0))))
    if isinstance(node, Pow):
        a, b = node.base, node.exponent
        if v not in free_vars(b):
            return mul(mul(b, power(a, sub(b, Const(1.0)))), _d(a, v))
        if v not in free_vars(a):
            return mul(mul(node, call("ln", a)), _d(b, v))
        return mul(
            node,
            add(mul(_d(b, v), call("ln", a)), div(mul(b, _d(a, v)), a)),
        )
    if isinstance(node, Call):
        a = node.arg
        da = _d(a, v)
        if node.func == "sin":
            outer = call("cos", a)
        elif node.func == "cos":
            outer = neg(call("sin", a))
        elif node.func == "exp":
            outer = node
        elif node.func == "ln":
            return div(da, a)
        elif node.func == "sqrt":
            return div(da, mul(Const(2.0), node))
        elif node.func == "abs":
            # sign(0) = 0 makes d|a| vanish at the kink
            outer = call("sign", a)
        elif node.func == "sign":
            return Const(0.0)
        else:  # pragma: no cover - gamma only takes constants
            raise ExpressionError(f"cannot differentiate {node.func}")
        return mul(outer, da)
    raise TypeError(f"unknown node {node!r}")  # pragma: no cover

# }}}


# {{{ evaluation


def _first_bad(mask) -> int | None:
    mask = np.asarray(mask)
    if mask.ndim == 0:
        return None
    return int(np.flatnonzero(mask)[0])


def _check(mask, message: str) -> None:
    if np.any(mask):
        raise DomainError(message, _first_bad(mask))


def _eval(node: Node, env: Mapping[str, object], shape: tuple[int, ...]):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        try:
            return env[node.name]
        except KeyError:
            raise UnboundVariableError(node.name) from None
    if isinstance(node, Neg):
        return -_eval(node.arg, env, shape)
    if isinstance(node, Call):
        a = _eval(node.arg, env, shape)
        f = node.func
        if f == "ln":
            _check(np.asarray(a) <= 0, "ln of a non-positive number")
            return np.log(a)
        if f == "sqrt":
            _check(np.asarray(a) < 0, "sqrt of a negative number")
            return np.sqrt(a)
        if f == "gamma":
            return _gamma_scalar(a)
        return {
            "sin": np.sin,
            "cos": np.cos,
            "exp": np.exp,
            "abs": np.abs,
            "sign": np.sign,
        }[f](a)
    if isinstance(node, Pow):
        a = _eval(node.base, env, shape)
        b = _eval(node.exponent, env, shape)
        aa, bb = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        _check((aa == 0) & (bb < 0), "zero raised to a negative power")
        _check((aa < 0) & (bb != np.round(bb)), "negative base with non-integer exponent")
        with np.errstate(over="ignore"):
            return np.power(aa, bb)
    a = _eval(node.left, env, shape)
    b = _eval(node.right, env, shape)
    if isinstance(node, Add):
        return a + b
    if isinstance(node, Sub):
        return a - b
    if isinstance(node, Mul):
        return a * b
    _check(np.asarray(b) == 0, "division by zero")
    return a / b


def _gamma_scalar(a) -> float:
    from .fracnum import gamma

    if np.ndim(a):
        raise ExpressionError("gamma() accepts constant arguments only")
    return gamma(float(a))

# }}}


# {{{ parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)


class _Parser:
    def __init__(self, text: str, variables: Iterable[str], parameters: Mapping[str, float]):
        self.text = text
        self.variables = set(variables)
        self.parameters = dict(parameters)
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                stripped = len(text[pos:]) - len(text[pos:].lstrip())
                raise ParseError(f"unexpected character {text[pos + stripped]!r}", pos + stripped)
            kind = m.lastgroup
            start = m.start(kind)
            value = m.group(kind)
            if value == "**":
                value = "^"
            self.tokens.append((kind, value, start))
            pos = m.end()
        self.i = 0

    def peek(self) -> tuple[str, str, int] | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def take(self) -> tuple[str, str, int]:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of input", len(self.text))
        self.i += 1
        return tok

    def expect(self, op: str) -> None:
        kind, value, pos = self.take()
        if value != op:
            raise ParseError(f"expected {op!r}, found {value!r}", pos)

    def parse(self) -> Node:
        node = self.sum()
        tok = self.peek()
        if tok is not None:
            raise ParseError(f"unexpected token {tok[1]!r}", tok[2])
        return node

    def sum(self) -> Node:
        node = self.product()
        while (tok := self.peek()) is not None and tok[1] in "+-" and tok[0] == "op":
            self.take()
            rhs = self.product()
            node = add(node, rhs) if tok[1] == "+" else sub(node, rhs)
        return node

    def product(self) -> Node:
        node = self.unary()
        while (tok := self.peek()) is not None and tok[0] == "op" and tok[1] in ("*", "/"):
            self.take()
            rhs = self.unary()
            node = mul(node, rhs) if tok[1] == "*" else div(node, rhs)
        return node

    def unary(self) -> Node:
        tok = self.peek()
        if tok is not None and tok[0] == "op" and tok[1] in "+-":
            self.take()
            arg = self.unary()
            return neg(arg) if tok[1] == "-" else arg
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        tok = self.peek()
        if tok is not None and tok[1] == "^":
            self.take()
            return power(base, self.unary())
        return base

    def atom(self) -> Node:
        kind, value, pos = self.take()
        if kind == "num":
            v = float(value)
            if not math.isfinite(v):
                raise ParseError(f"non-finite literal {value!r}", pos)
            return Const(v)
        if kind == "name":
            nxt = self.peek()
            if nxt is not None and nxt[1] == "(":
                if value not in FUNCTIONS:
                    raise UnknownIdentifierError(value, pos)
                self.take()
                arg = self.sum()
                self.expect(")")
                if value == "gamma" and free_vars(arg):
                    raise ParseError("gamma() accepts constant arguments only", pos)
                try:
                    return call(value, arg)
                except ExpressionError as exc:
                    raise ParseError(str(exc), pos) from None
            if value in self.variables:
                return Var(value)
            if value in self.parameters:
                return Const(float(self.parameters[value]))
            if value in CONSTANTS:
                return Const(CONSTANTS[value])
            if value in FUNCTIONS:
                raise ParseError(f"function {value!r} needs a parenthesized argument", pos)
            raise UnknownIdentifierError(value, pos)
        if value == "(":
            node = self.sum()
            self.expect(")")
            return node
        raise ParseError(f"unexpected token {value!r}", pos)

# }}}


@dataclass(frozen=True)
class Expression:
    """An immutable expression tree over a declared tuple of variable names."""

    root: Node
    variables: tuple[str, ...]

    def __str__(self) -> str:
        return to_text(self.root)

    @property
    def free_variables(self) -> frozenset[str]:
        return free_vars(self.root)

    def depends_on(self, name: str) -> bool:
        return name in free_vars(self.root)

    @property
    def is_constant(self) -> bool:
        return isinstance(self.root, Const)

    def diff(self, name: str) -> Expression:
        if name not in self.variables:
            raise ExpressionError(f"{name!r} is not a variable of this expression")
        return Expression(_d(self.root, name), self.variables)

    def evaluate(self, bindings: Mapping[str, object] | None = None, **kwargs):
        """Evaluate at scalar or array bindings.

        Array bindings broadcast against each other; the result then has the
        broadcast shape even when the expression is constant.
        """
        env = dict(bindings or {}, **kwargs)
        for name in free_vars(self.root):
            if name not in env:
                raise UnboundVariableError(name)
        arrays = [np.asarray(v, dtype=float) for k, v in env.items() if k in self.variables]
        shape = np.broadcast_shapes(*(a.shape for a in arrays)) if arrays else ()
        env = {k: (np.asarray(v, dtype=float) if np.ndim(v) else float(v)) for k, v in env.items()}
        with np.errstate(invalid="ignore", divide="ignore"):
            out = _eval(self.root, env, shape)
        if shape == ():
            return float(out)
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()

    def rename(self, mapping: Mapping[str, str]) -> Expression:
        variables = tuple(mapping.get(v, v) for v in self.variables)
        return Expression(_rename(self.root, mapping), variables)

    def with_variables(self, variables: Iterable[str]) -> Expression:
        variables = tuple(variables)
        missing = free_vars(self.root) - set(variables)
        if missing:
            raise ExpressionError(f"variables {sorted(missing)} are not declared")
        return Expression(self.root, variables)

    # arithmetic helpers for building expressions in code
    def _lift(self, other) -> Node:
        return other.root if isinstance(other, Expression) else Const(float(other))

    def __add__(self, other) -> Expression:
        return Expression(add(self.root, self._lift(other)), self.variables)

    def __sub__(self, other) -> Expression:
        return Expression(sub(self.root, self._lift(other)), self.variables)

    def __mul__(self, other) -> Expression:
        return Expression(mul(self.root, self._lift(other)), self.variables)

    __radd__ = __add__
    __rmul__ = __mul__

    def __rsub__(self, other) -> Expression:
        return Expression(sub(self._lift(other), self.root), self.variables)

    def __neg__(self) -> Expression:
        return Expression(neg(self.root), self.variables)


def parse(
    text: str,
    variables: Iterable[str],
    parameters: Mapping[str, float] | None = None,
) -> Expression:
    """Parse *text* into an :class:`Expression` over *variables*.

    Identifiers that are neither variables nor entries of *parameters*
    (substituted as literals) nor the constant ``pi`` raise
    :class:`~fracvar.errors.UnknownIdentifierError`.
    """
    if not text or not text.strip():
        raise ParseError("empty expression", 0)
    variables = tuple(variables)
    clash = set(variables) & set(FUNCTIONS)
    if clash:
        raise ExpressionError(f"variable names shadow functions: {sorted(clash)}")
    root = _Parser(text, variables, parameters or {}).parse()
    return Expression(root, variables)


def differentiate(e: Expression, v: str) -> Expression:
    return e.diff(v)


def evaluate(e: Expression, bindings: Mapping[str, object]):
    return e.evaluate(bindings)
