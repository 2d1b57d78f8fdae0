"""Small expression language for coefficient fields.

Expressions are parsed from strings such as ``"t*xi^2 + x^2*xi^2"`` into
immutable trees over the variables ``t``, ``x`` and ``xi``.  Trees can be
evaluated on numpy arrays, differentiated exactly and substituted into.
Only trivial constant folding is performed; there is no simplifier.

``tdiv(e, k)`` denotes ``e / t**k`` for an ``e`` vanishing to order ``k``
at ``t = 0``.  Near ``t = 0`` it is evaluated from the Taylor coefficients
of ``e`` so the removable singularity never produces 0/0.
"""
from __future__ import annotations

import cmath
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Union

import numpy as np

VARIABLES = ("t", "x", "xi")
_BUILTIN_CONSTANTS = {"pi": math.pi, "e": math.e, "I": 1j}
_FUNCTIONS = ("abs", "sqrt", "exp", "log", "sin", "cos")

# Below this |t| the Taylor branch of tdiv is used.
TDIV_SWITCH = 1e-3
_TDIV_EXTRA_TERMS = 5


class ExpressionError(ValueError):
    """Malformed expression text or an unknown identifier."""


class Node:
    __slots__ = ()

    # operator sugar keeps tree construction readable in callers
    def __add__(self, other): return add(self, as_node(other))
    def __radd__(self, other): return add(as_node(other), self)
    def __sub__(self, other): return sub(self, as_node(other))
    def __rsub__(self, other): return sub(as_node(other), self)
    def __mul__(self, other): return mul(self, as_node(other))
    def __rmul__(self, other): return mul(as_node(other), self)
    def __truediv__(self, other): return div(self, as_node(other))
    def __rtruediv__(self, other): return div(as_node(other), self)
    def __pow__(self, other): return power(self, as_node(other))
    def __neg__(self): return neg(self)

    def __str__(self) -> str:
        return to_str(self)


@dataclass(frozen=True, eq=True)
class Num(Node):
    value: complex | float


@dataclass(frozen=True, eq=True)
class Var(Node):
    name: str


@dataclass(frozen=True, eq=True)
class Neg(Node):
    arg: Node


@dataclass(frozen=True, eq=True)
class Bin(Node):
    op: str
    left: Node
    right: Node


@dataclass(frozen=True, eq=True)
class Call(Node):
    fn: str
    arg: Node


@dataclass(frozen=True, eq=True)
class TDiv(Node):
    arg: Node
    k: int


Expr = Union[Num, Var, Neg, Bin, Call, TDiv]

ZERO = Num(0.0)
ONE = Num(1.0)
T, X, XI = Var("t"), Var("x"), Var("xi")


def as_node(v) -> Node:
    if isinstance(v, Node):
        return v
    if isinstance(v, (int, float, np.floating, np.integer)):
        return Num(float(v))
    if isinstance(v, (complex, np.complexfloating)):
        c = complex(v)
        return Num(c.real) if c.imag == 0 else Num(c)
    raise TypeError(f"cannot convert {type(v).__name__} to an expression")


def _is(n: Node, value) -> bool:
    return isinstance(n, Num) and n.value == value


# -- constructors with constant folding -------------------------------------

def add(a: Node, b: Node) -> Node:
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return as_node(a.value + b.value)
    return Bin("+", a, b)


def sub(a: Node, b: Node) -> Node:
    if _is(b, 0):
        return a
    if _is(a, 0):
        return neg(b)
    if isinstance(a, Num) and isinstance(b, Num):
        return as_node(a.value - b.value)
    return Bin("-", a, b)


def mul(a: Node, b: Node) -> Node:
    if _is(a, 0) or _is(b, 0):
        return ZERO
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return as_node(a.value * b.value)
    return Bin("*", a, b)


def div(a: Node, b: Node) -> Node:
    if _is(b, 1):
        return a
    if _is(a, 0):
        return ZERO
    if isinstance(a, Num) and isinstance(b, Num) and b.value != 0:
        return as_node(a.value / b.value)
    return Bin("/", a, b)


def power(a: Node, b: Node) -> Node:
    if _is(b, 0):
        return ONE
    if _is(b, 1):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        try:
            return as_node(a.value ** b.value)
        except (ZeroDivisionError, OverflowError):
            pass
    return Bin("^", a, b)


def neg(a: Node) -> Node:
    if isinstance(a, Num):
        return as_node(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def call(fn: str, a: Node) -> Node:
    if fn not in _FUNCTIONS:
        raise ExpressionError(f"unknown function {fn!r}")
    if isinstance(a, Num):
        v = a.value
        if isinstance(v, complex):
            fold = {"abs": abs, "sqrt": cmath.sqrt, "exp": cmath.exp,
                    "log": cmath.log, "sin": cmath.sin, "cos": cmath.cos}[fn]
            return as_node(fold(v))
        if fn == "abs" or (fn in ("exp", "sin", "cos")) or (fn in ("sqrt", "log") and v > 0):
            return as_node(getattr(math, "fabs" if fn == "abs" else fn)(v))
    return Call(fn, a)


def tdiv(a: Node, k: int) -> Node:
    if k == 0 or _is(a, 0):
        return a
    return TDiv(a, int(k))


# -- parsing ----------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_ξ][A-Za-z_0-9]*)|(?P<op>\*\*|[-+*/^(),]))"
)


def _tokenize(text: str) -> list[tuple[str, str]]:
    pos, out = 0, []
    text = text.replace("−", "-").replace("·", "*")
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExpressionError(f"unexpected character {text[pos:].strip()[:1]!r} in {text!r}")
        kind = m.lastgroup
        tok = m.group(kind)
        out.append((kind, "^" if tok == "**" else tok))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, text: str, constants: Mapping[str, float]):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.constants = dict(_BUILTIN_CONSTANTS)
        self.constants.update(constants)

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None)

    def take(self, value=None):
        kind, tok = self.peek()
        if kind is None or (value is not None and tok != value):
            raise ExpressionError(f"expected {value or 'token'} in {self.text!r}")
        self.i += 1
        return tok

    def parse(self) -> Node:
        node = self.expr()
        if self.i != len(self.toks):
            raise ExpressionError(f"trailing input {self.toks[self.i][1]!r} in {self.text!r}")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()
            rhs = self.term()
            node = add(node, rhs) if op == "+" else sub(node, rhs)
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()
            rhs = self.unary()
            node = mul(node, rhs) if op == "*" else div(node, rhs)
        return node

    def unary(self) -> Node:
        if self.peek()[1] == "-":
            self.take()
            return neg(self.unary())
        if self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.pow()

    def pow(self) -> Node:
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            return power(base, self.unary())  # right associative, binds -x^2 as -(x^2)
        return base

    def atom(self) -> Node:
        kind, tok = self.peek()
        if kind == "num":
            self.take()
            return Num(float(tok))
        if tok == "(":
            self.take()
            node = self.expr()
            self.take(")")
            return node
        if kind == "name":
            self.take()
            if tok == "ξ":
                tok = "xi"
            if self.peek()[1] == "(":
                self.take("(")
                arg = self.expr()
                if tok == "tdiv":
                    self.take(",")
                    k = self.expr()
                    self.take(")")
                    if not isinstance(k, Num) or float(np.real(k.value)) != int(np.real(k.value)):
                        raise ExpressionError("tdiv order must be an integer literal")
                    return tdiv(arg, int(np.real(k.value)))
                self.take(")")
                return call(tok, arg)
            if tok in VARIABLES:
                return Var(tok)
            if tok in self.constants:
                return as_node(self.constants[tok])
            raise ExpressionError(f"unknown identifier {tok!r} in {self.text!r}")
        raise ExpressionError(f"unexpected {tok!r} in {self.text!r}")


def parse(text: str | float | int, constants: Mapping[str, float] | None = None) -> Node:
    """Parse ``text``; numbers are accepted as constant expressions."""
    if isinstance(text, (int, float)):
        return as_node(float(text))
    if not isinstance(text, str) or not text.strip():
        raise ExpressionError(f"empty or non-string expression: {text!r}")
    return _Parser(text, constants or {}).parse()


# -- printing ---------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _fmt_num(v) -> str:
    if isinstance(v, complex):
        return f"({v.real:.17g}+{v.imag:.17g}*I)"
    return f"{float(v):.17g}"


def to_str(n: Node, parent: int = 0) -> str:
    if isinstance(n, Num):
        s = _fmt_num(n.value)
        return f"({s})" if s.startswith("-") and parent else s
    if isinstance(n, Var):
        return n.name
    if isinstance(n, Neg):
        s = "-" + to_str(n.arg, 3)
        return f"({s})" if parent else s
    if isinstance(n, Call):
        return f"{n.fn}({to_str(n.arg)})"
    if isinstance(n, TDiv):
        return f"tdiv({to_str(n.arg)}, {n.k})"
    p = _PREC[n.op]
    if n.op == "^":
        s = f"{to_str(n.left, p + 1)}^{to_str(n.right, p + 1)}"
    else:
        s = f"{to_str(n.left, p)}{n.op}{to_str(n.right, p + 1)}"
    return f"({s})" if p < parent else s


# -- substitution and differentiation ---------------------------------------

def subs(n: Node, name: str, repl: Node) -> Node:
    """Replace variable ``name`` by ``repl`` everywhere (tdiv keeps its own ``t``)."""
    if isinstance(n, Var):
        return repl if n.name == name else n
    if isinstance(n, Num):
        return n
    if isinstance(n, Neg):
        return neg(subs(n.arg, name, repl))
    if isinstance(n, Call):
        return call(n.fn, subs(n.arg, name, repl))
    if isinstance(n, TDiv):
        if name == "t":
            return _subs_tdiv(n, repl)
        return tdiv(subs(n.arg, name, repl), n.k)
    return _rebuild(n.op, subs(n.left, name, repl), subs(n.right, name, repl))


def _subs_tdiv(n: TDiv, repl: Node) -> Node:
    # keep the removable singularity resolvable where the substitution allows it
    if repl == T:
        return n
    if _is(repl, 0):
        return div(subs(diff_n(n.arg, "t", n.k), "t", ZERO), Num(float(math.factorial(n.k))))
    if isinstance(repl, Bin) and repl.op == "*" and isinstance(repl.left, Num) and repl.right == T:
        c = repl.left.value
        return mul(as_node(c ** -n.k), tdiv(subs(n.arg, "t", repl), n.k))
    return div(subs(n.arg, "t", repl), power(repl, Num(float(n.k))))


def _rebuild(op: str, a: Node, b: Node) -> Node:
    return {"+": add, "-": sub, "*": mul, "/": div, "^": power}[op](a, b)


def free_vars(n: Node) -> set[str]:
    if isinstance(n, Var):
        return {n.name}
    if isinstance(n, Num):
        return set()
    if isinstance(n, (Neg, Call)):
        return free_vars(n.arg)
    if isinstance(n, TDiv):
        return free_vars(n.arg) | {"t"}
    return free_vars(n.left) | free_vars(n.right)


@lru_cache(maxsize=4096)
def diff(n: Node, name: str) -> Node:
    """Exact derivative of ``n`` with respect to the variable ``name``."""
    if isinstance(n, Num):
        return ZERO
    if isinstance(n, Var):
        return ONE if n.name == name else ZERO
    if isinstance(n, Neg):
        return neg(diff(n.arg, name))
    if isinstance(n, Call):
        a, da = n.arg, diff(n.arg, name)
        if _is(da, 0):
            return ZERO
        outer = {
            "abs": lambda: div(a, call("abs", a)),
            "sqrt": lambda: div(ONE, mul(Num(2.0), call("sqrt", a))),
            "exp": lambda: call("exp", a),
            "log": lambda: div(ONE, a),
            "sin": lambda: call("cos", a),
            "cos": lambda: neg(call("sin", a)),
        }[n.fn]()
        return mul(outer, da)
    if isinstance(n, TDiv):
        if name != "t":
            return tdiv(diff(n.arg, name), n.k)
        # (e/t^k)' = (t e' - k e)/t^(k+1); numerator vanishes to order k+1
        num = sub(mul(T, diff(n.arg, "t")), mul(Num(float(n.k)), n.arg))
        return tdiv(num, n.k + 1)
    a, b = n.left, n.right
    da, db = diff(a, name), diff(b, name)
    if n.op == "+":
        return add(da, db)
    if n.op == "-":
        return sub(da, db)
    if n.op == "*":
        return add(mul(da, b), mul(a, db))
    if n.op == "/":
        return div(sub(mul(da, b), mul(a, db)), power(b, Num(2.0)))
    # power
    if isinstance(b, Num):
        return mul(mul(b, power(a, as_node(b.value - 1))), da)
    return mul(n, add(mul(db, call("log", a)), div(mul(b, da), a)))


def diff_n(n: Node, name: str, order: int) -> Node:
    for _ in range(order):
        n = diff(n, name)
    return n


# -- evaluation -------------------------------------------------------------

def _asarray(v):
    return v if isinstance(v, np.ndarray) else np.asarray(v)


def evaluate(n: Node, env: Mapping[str, object]):
    """Evaluate with numpy broadcasting over the arrays in ``env``."""
    if isinstance(n, Num):
        return n.value
    if isinstance(n, Var):
        try:
            return env[n.name]
        except KeyError:
            raise ExpressionError(f"variable {n.name!r} not bound") from None
    if isinstance(n, Neg):
        return -evaluate(n.arg, env)
    if isinstance(n, Call):
        v = _asarray(evaluate(n.arg, env))
        if n.fn == "abs":
            return np.abs(v)
        if n.fn in ("sqrt", "log") and not np.iscomplexobj(v) and np.any(v < 0):
            v = v.astype(complex)
        return getattr(np, n.fn)(v)
    if isinstance(n, TDiv):
        return _eval_tdiv(n, env)
    a = evaluate(n.left, env)
    b = evaluate(n.right, env)
    if n.op == "+":
        return a + b
    if n.op == "-":
        return a - b
    if n.op == "*":
        return a * b
    if n.op == "/":
        return a / b
    base = _asarray(a)
    if not np.iscomplexobj(base) and np.any(base < 0) and not _integral(b):
        base = base.astype(complex)
    return np.power(base, b)


def _integral(b) -> bool:
    b = np.asarray(b)
    return not np.iscomplexobj(b) and bool(np.all(b == np.round(b)))


@lru_cache(maxsize=1024)
def _taylor_terms(n: TDiv) -> tuple[Node, ...]:
    """Coefficient trees e^(j)(0)/j! for j = k .. k+extra, with t set to 0."""
    out = []
    d = n.arg
    for j in range(n.k + _TDIV_EXTRA_TERMS):
        if j >= n.k:
            out.append(div(subs(d, "t", ZERO), Num(float(math.factorial(j)))))
        d = diff(d, "t")
    return tuple(out)


def _eval_tdiv(n: TDiv, env: Mapping[str, object]):
    t = np.asarray(env["t"], dtype=float)
    near = np.abs(t) < TDIV_SWITCH
    with np.errstate(divide="ignore", invalid="ignore"):
        far_val = np.asarray(evaluate(n.arg, env)) / np.power(np.where(near, 1.0, t), n.k)
    if not np.any(near):
        return far_val
    series = 0.0
    for j, c in enumerate(_taylor_terms(n)):
        series = series + np.asarray(evaluate(c, env)) * t ** j
    return np.where(near, series, far_val)


def compile_expr(n: Node):
    """Return ``f(t, x, xi)`` evaluating ``n`` with broadcasting."""
    def f(t, x, xi):
        out = evaluate(n, {"t": t, "x": x, "xi": xi})
        shape = np.broadcast(np.asarray(t), np.asarray(x), np.asarray(xi)).shape
        return np.broadcast_to(np.asarray(out), shape) if np.ndim(out) < len(shape) else out
    return f
