"""Scalar expressions over ``t``, ``eps`` and ``x1..xn``.

Expressions are parsed into immutable :class:`Node` trees, which can be
evaluated directly (with precise reporting of non-finite subexpressions),
differentiated symbolically, printed back to text, and compiled into fast
Python callables for the integrators.

Grammar::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := '-' factor | base ('^' integer)?
    base   := number | ident | ident '(' expr ')' | '(' expr ')'
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    ExprSyntaxError,
    NonFiniteValue,
    UnknownFunction,
    UnknownVariable,
)

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "abs")
BINARY = ("add", "sub", "mul", "div", "pow")
# "sign" only appears in derivatives of abs; it cannot be parsed.
UNARY = ("neg",) + FUNCTIONS + ("sign",)

_SYMBOL = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}
_PRECEDENCE = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}


@dataclass(frozen=True)
class Node:
    kind: str
    value: float | str | None = None
    children: tuple[Node, ...] = ()

    def __str__(self):
        return to_text(self)


def const(v) -> Node:
    return Node("const", float(v))


def var(name) -> Node:
    return Node("var", name)


ZERO = const(0.0)
ONE = const(1.0)


def _is_const(e, v=None):
    return e.kind == "const" and (v is None or e.value == v)


def _fold(kind, *args):
    """Build a node, folding it to a constant when every child is constant."""
    if all(a.kind == "const" for a in args):
        try:
            with np.errstate(all="raise"):
                v = _apply(kind, *(a.value for a in args))
        except (ArithmeticError, ValueError, FloatingPointError):
            v = None
        if v is not None and math.isfinite(v):
            return const(v)
    return Node(kind, None, tuple(args))


def add(a, b):
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return _fold("add", a, b)


def sub(a, b):
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return _fold("sub", a, b)


def mul(a, b):
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return _fold("mul", a, b)


def div(a, b):
    if _is_const(b, 1.0):
        return a
    if _is_const(a, 0.0):
        return ZERO
    return _fold("div", a, b)


def neg(a):
    if a.kind == "neg":
        return a.children[0]
    return _fold("neg", a)


def power(a, n: int):
    if n == 0:
        return ONE
    if n == 1:
        return a
    return _fold("pow", a, const(n))


def call(name, a):
    return _fold(name, a)


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            bad = len(text[pos:]) - len(text[pos:].lstrip()) + pos
            raise ExprSyntaxError(bad, f"unexpected character {text[bad]!r}")
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


def variable_names(n: int) -> tuple[str, ...]:
    return ("t", "eps") + tuple(f"x{i}" for i in range(1, n + 1))


class _Parser:
    def __init__(self, text, n):
        self.tokens = _tokenize(text)
        self.i = 0
        self.names = set(variable_names(n))

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.take()
        if text != value or kind == "end":
            found = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(pos, f"expected {value!r}, found {found}")

    def parse(self):
        e = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(pos, f"unexpected token {text!r}")
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            e = Node("add" if op == "+" else "sub", None, (e, rhs))
        return e

    def term(self):
        e = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.factor()
            e = Node("mul" if op == "*" else "div", None, (e, rhs))
        return e

    def factor(self):
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            return Node("neg", None, (self.factor(),))
        b = self.base()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            kind, text, pos = self.take()
            if kind != "number" or not text.isdigit():
                raise ExprSyntaxError(pos, "exponent must be a non-negative integer literal")
            b = Node("pow", None, (b, const(int(text))))
        return b

    def base(self):
        kind, text, pos = self.take()
        if kind == "number":
            return const(float(text))
        if kind == "ident":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if text not in FUNCTIONS:
                    raise UnknownFunction(f"unknown function {text!r} at position {pos}")
                self.take()
                arg = self.expr()
                self.expect(")")
                return Node(text, None, (arg,))
            if text not in self.names:
                raise UnknownVariable(f"unknown variable {text!r} at position {pos}")
            return var(text)
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        found = "end of input" if kind == "end" else repr(text)
        raise ExprSyntaxError(pos, f"unexpected {found}")


def parse_expression(text: str, n: int) -> Node:
    """Parse ``text`` into an expression tree over ``t``, ``eps``, ``x1..xn``."""
    if n < 1:
        raise ConfigError("dimension must be at least 1")
    return _Parser(text, n).parse()


# ---------------------------------------------------------------------------
# evaluation


def _sign(v):
    return float(np.sign(v)) if np.isscalar(v) else np.sign(v)


def _apply(kind, *a):
    if kind == "add":
        return a[0] + a[1]
    if kind == "sub":
        return a[0] - a[1]
    if kind == "mul":
        return a[0] * a[1]
    if kind == "div":
        return a[0] / a[1]
    if kind == "pow":
        return a[0] ** int(a[1])
    if kind == "neg":
        return -a[0]
    if kind == "sign":
        return _sign(a[0])
    return getattr(np, kind)(a[0])


def _lookup(name, t, x, eps):
    if name == "t":
        return t
    if name == "eps":
        return eps
    i = int(name[1:]) - 1
    if i >= len(x):
        raise UnknownVariable(f"variable {name!r} outside state of length {len(x)}")
    return x[i]


def evaluate(e: Node, t: float, x, eps: float = 0.0) -> float:
    """Evaluate ``e`` in double precision; raise NonFiniteValue on inf/nan."""

    def ev(node):
        if node.kind == "const":
            return node.value
        if node.kind == "var":
            return float(_lookup(node.value, t, x, eps))
        args = [ev(c) for c in node.children]
        with np.errstate(all="ignore"):
            try:
                v = float(_apply(node.kind, *args))
            except ZeroDivisionError:
                v = math.nan
        if not math.isfinite(v):
            raise NonFiniteValue(to_text(node))
        return v

    return ev(e)


# ---------------------------------------------------------------------------
# differentiation


def differentiate(e: Node, v: str) -> Node:
    """Exact derivative of ``e`` with respect to the variable ``v``."""
    k = e.kind
    if k == "const":
        return ZERO
    if k == "var":
        return ONE if e.value == v else ZERO
    if k in ("add", "sub"):
        a, b = e.children
        da, db = differentiate(a, v), differentiate(b, v)
        return add(da, db) if k == "add" else sub(da, db)
    if k == "mul":
        a, b = e.children
        return add(mul(differentiate(a, v), b), mul(a, differentiate(b, v)))
    if k == "div":
        a, b = e.children
        num = sub(mul(differentiate(a, v), b), mul(a, differentiate(b, v)))
        return div(num, power(b, 2))
    if k == "pow":
        a, nnode = e.children
        n = int(nnode.value)
        return mul(mul(const(n), power(a, n - 1)), differentiate(a, v))
    (a,) = e.children
    da = differentiate(a, v)
    if _is_const(da, 0.0):
        return ZERO
    if k == "neg":
        return neg(da)
    if k == "sin":
        outer = call("cos", a)
    elif k == "cos":
        outer = neg(call("sin", a))
    elif k == "tan":
        outer = add(ONE, power(call("tan", a), 2))
    elif k == "exp":
        outer = call("exp", a)
    elif k == "log":
        outer = div(ONE, a)
    elif k == "sqrt":
        outer = div(const(0.5), call("sqrt", a))
    elif k == "abs":
        # sign(0) = 0: the kink of abs contributes nothing
        outer = call("sign", a)
    elif k == "sign":
        return ZERO
    else:
        raise ValueError(f"unknown node kind {k!r}")
    return mul(outer, da)


def free_variables(e: Node) -> set[str]:
    if e.kind == "var":
        return {e.value}
    out = set()
    for c in e.children:
        out |= free_variables(c)
    return out


# ---------------------------------------------------------------------------
# printing and compilation


def _const_text(v):
    s = repr(float(v))
    return f"({s})" if v < 0 else s


def to_text(e: Node) -> str:
    """Render ``e`` in the input grammar (reparses to an equivalent tree)."""
    k = e.kind
    if k == "const":
        return _const_text(e.value)
    if k == "var":
        return e.value
    if k in FUNCTIONS or k == "sign":
        return f"{k}({to_text(e.children[0])})"
    if k == "neg":
        (a,) = e.children
        inner = to_text(a)
        if a.kind in _PRECEDENCE and _PRECEDENCE[a.kind] < _PRECEDENCE["neg"]:
            inner = f"({inner})"
        return f"-{inner}"
    if k == "pow":
        a, n = e.children
        base = to_text(a)
        if a.kind not in ("var", "const") and a.kind not in FUNCTIONS:
            base = f"({base})"
        elif a.kind == "const" and a.value < 0:
            base = _const_text(a.value)
        return f"{base}^{int(n.value)}"
    a, b = e.children
    p = _PRECEDENCE[k]
    left = to_text(a)
    if a.kind in _PRECEDENCE and _PRECEDENCE[a.kind] < p:
        left = f"({left})"
    right = to_text(b)
    # right operand of - and / needs parentheses at equal precedence
    if b.kind in _PRECEDENCE and (
        _PRECEDENCE[b.kind] < p or (_PRECEDENCE[b.kind] == p and k in ("sub", "div"))
    ):
        right = f"({right})"
    return f"{left} {_SYMBOL[k]} {right}"


def _to_python(e: Node) -> str:
    k = e.kind
    if k == "const":
        return _const_text(e.value)
    if k == "var":
        if e.value in ("t", "eps"):
            return e.value
        return f"x[{int(e.value[1:]) - 1}]"
    if k in FUNCTIONS or k == "sign":
        return f"{k}({_to_python(e.children[0])})"
    if k == "neg":
        return f"(-{_to_python(e.children[0])})"
    if k == "pow":
        a, n = e.children
        return f"({_to_python(a)} ** {int(n.value)})"
    a, b = e.children
    sym = {"add": "+", "sub": "-", "mul": "*", "div": "/"}[k]
    return f"({_to_python(a)} {sym} {_to_python(b)})"


def _scalar_namespace():
    ns = {name: getattr(math, name) for name in ("sin", "cos", "tan", "exp", "log", "sqrt")}
    ns["abs"] = abs
    ns["sign"] = lambda v: (v > 0) - (v < 0)
    return ns


def _vector_namespace():
    ns = {name: getattr(np, name) for name in FUNCTIONS}
    ns["sign"] = np.sign
    return ns


@dataclass(frozen=True)
class CompiledVector:
    """Vector of expressions compiled for repeated evaluation.

    ``scalar(t, x, eps)`` returns a float ndarray of shape ``(len(exprs),)``
    for a state ``x`` of length n.  ``batch(t, x, eps)`` accepts ``x`` of
    shape ``(n, m)`` (and ``t`` scalar or shape ``(m,)``) and returns shape
    ``(len(exprs), m)``.
    """

    exprs: tuple[Node, ...]
    _scalar: object = field(repr=False)
    _batch: object = field(repr=False)

    def scalar(self, t, x, eps=0.0):
        # plain floats so that math raises instead of numpy warning
        xs = x.tolist() if isinstance(x, np.ndarray) else [float(v) for v in x]
        try:
            out = self._scalar(float(t), xs, float(eps))
        except (ArithmeticError, ValueError):
            out = None
        if out is None or not all(map(math.isfinite, out)):
            self._report(t, x, eps)
        return np.array(out, dtype=float)

    def batch(self, t, x, eps=0.0):
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            cols = self._batch(t, x, eps)
        m = x.shape[1:]
        out = np.empty((len(self.exprs),) + m)
        for i, c in enumerate(cols):
            out[i] = c
        if not np.all(np.isfinite(out)):
            bad = np.argwhere(~np.isfinite(out))[0]
            idx = tuple(bad[1:])
            tt = t[idx] if np.ndim(t) else t
            self._report(float(tt), x[(slice(None),) + idx], eps)
        return out

    def _report(self, t, x, eps):
        for e in self.exprs:
            evaluate(e, t, x, eps)
        raise NonFiniteValue("<compiled>", "non-finite value (rounding)")


def compile_vector(exprs) -> CompiledVector:
    exprs = tuple(exprs)
    body = ", ".join(_to_python(e) for e in exprs)
    src = f"def _f(t, x, eps):\n    return ({body},)\n"
    scalar_ns = _scalar_namespace()
    exec(src, scalar_ns)
    batch_ns = _vector_namespace()
    exec(src, batch_ns)
    return CompiledVector(exprs, scalar_ns["_f"], batch_ns["_f"])


# ---------------------------------------------------------------------------
# the perturbed system


@dataclass(frozen=True)
class SystemSpec:
    """Autonomous field psi, T-periodic perturbation phi, and their Jacobians."""

    n: int
    T: float | None
    psi: tuple[Node, ...]
    phi: tuple[Node, ...]
    psi_jacobian: tuple[tuple[Node, ...], ...]
    phi_jacobian: tuple[tuple[Node, ...], ...]
    psi_f: CompiledVector = field(repr=False, compare=False)
    psi_jac_f: CompiledVector = field(repr=False, compare=False)
    phi_f: CompiledVector = field(repr=False, compare=False)
    phi_jac_f: CompiledVector = field(repr=False, compare=False)

    @classmethod
    def from_text(cls, psi, phi, T=None, n=None):
        n = len(psi) if n is None else n
        if len(psi) != n or len(phi) != n:
            raise ConfigError(f"psi and phi must both have {n} components")
        if T is not None and not T > 0:
            raise ConfigError("period must be positive")
        psi_e = tuple(parse_expression(s, n) for s in psi)
        phi_e = tuple(parse_expression(s, n) for s in phi)
        for i, e in enumerate(psi_e):
            bad = free_variables(e) & {"t", "eps"}
            if bad:
                raise ConfigError(
                    f"psi[{i}] must be autonomous; it references {sorted(bad)}"
                )
        return cls._build(n, T, psi_e, phi_e)

    @classmethod
    def _build(cls, n, T, psi_e, phi_e):
        xs = [f"x{j}" for j in range(1, n + 1)]
        jpsi = tuple(tuple(differentiate(e, v) for v in xs) for e in psi_e)
        jphi = tuple(tuple(differentiate(e, v) for v in xs) for e in phi_e)
        return cls(
            n, None if T is None else float(T), psi_e, phi_e, jpsi, jphi,
            compile_vector(psi_e),
            compile_vector([d for row in jpsi for d in row]),
            compile_vector(phi_e),
            compile_vector([d for row in jphi for d in row]),
        )

    def with_period(self, T):
        return SystemSpec._build(self.n, T, self.psi, self.phi)

    def with_phi(self, phi):
        phi_e = tuple(parse_expression(s, self.n) if isinstance(s, str) else s for s in phi)
        return SystemSpec._build(self.n, self.T, self.psi, phi_e)

    def wrap_time(self, t):
        return np.mod(t, self.T) if self.T else t

    # numeric helpers: single state x of shape (n,)
    def field(self, x):
        return self.psi_f.scalar(0.0, x)

    def jacobian(self, x):
        return self.psi_jac_f.scalar(0.0, x).reshape(self.n, self.n)

    def perturbation(self, t, x, eps=0.0):
        return self.phi_f.scalar(float(self.wrap_time(t)), x, eps)

    def perturbation_jacobian(self, t, x, eps=0.0):
        return self.phi_jac_f.scalar(float(self.wrap_time(t)), x, eps).reshape(self.n, self.n)

    # batched helpers: x of shape (n, m)
    def field_batch(self, x):
        return self.psi_f.batch(0.0, x)

    def jacobian_batch(self, x):
        m = np.shape(x)[1:]
        return self.psi_jac_f.batch(0.0, x).reshape((self.n, self.n) + m)

    def perturbation_batch(self, t, x, eps=0.0):
        return self.phi_f.batch(self.wrap_time(t), x, eps)
