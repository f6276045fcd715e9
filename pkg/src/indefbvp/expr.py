"""Closed-form expressions in one variable.

A small recursive-descent parser produces an immutable AST. Expressions can
be printed back to text, differentiated symbolically, composed, and evaluated
through three backends: compiled ``math`` code for scalars, compiled ``numpy``
code for arrays, and a tree walk over ``mpmath`` for probes that need a wide
exponent range.

Grammar (precedence from loosest to tightest)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom (('^' | '**') unary)?
    atom   := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

so ``-x^2`` is ``-(x^2)`` and ``2^-1`` is ``2^(-1)``. Names are one of the
variables ``x, s, r, t, u``, the constants ``pi`` and ``e``, or a function:
``sin cos exp ln log arctan atan min max abs sign sqrt``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable

import mpmath
import numpy as np

VARIABLES = ("x", "s", "r", "t", "u")
CONSTANTS = {"pi": math.pi, "e": math.e}
FUNCTIONS = {
    "sin": 1,
    "cos": 1,
    "exp": 1,
    "ln": 1,
    "arctan": 1,
    "abs": 1,
    "sign": 1,
    "sqrt": 1,
    "min": -1,
    "max": -1,
}
ALIASES = {"log": "ln", "atan": "arctan"}


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int, text: str = ""):
        self.offset = offset
        self.text = text
        super().__init__(f"{message} at byte offset {offset}")


class UnknownIdentifierError(ExprSyntaxError):
    pass


class DomainError(ExprError, ArithmeticError):
    """Evaluation outside the domain of a function (never a silent NaN)."""


# ---------------------------------------------------------------------------
# AST


_PREC_ADD, _PREC_MUL, _PREC_UNARY, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


class Expr:
    """Base class of all AST nodes."""

    prec = _PREC_ATOM

    # -- structure ---------------------------------------------------------
    def children(self) -> tuple[Expr, ...]:
        return ()

    def variables(self) -> set[str]:
        out: set[str] = set()
        stack: list[Expr] = [self]
        while stack:
            node = stack.pop()
            if isinstance(node, Var):
                out.add(node.name)
            stack.extend(node.children())
        return out

    @property
    def variable(self) -> str | None:
        names = self.variables()
        return next(iter(names)) if names else None

    def __str__(self) -> str:
        return to_text(self)

    # -- evaluation --------------------------------------------------------
    @cached_property
    def _scalar_fn(self) -> Callable[[float], float]:
        return _compile(self, "math")

    @cached_property
    def _vector_fn(self) -> Callable[[np.ndarray], np.ndarray]:
        return _compile(self, "numpy")

    def __call__(self, value: float) -> float:
        """Evaluate at a scalar, raising :class:`DomainError` off-domain."""
        try:
            out = self._scalar_fn(float(value))
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise DomainError(f"{self} undefined at {value!r}: {exc}") from None
        return float(out)

    def evaluate(self, values, strict: bool = True) -> np.ndarray:
        """Vectorised evaluation.

        With ``strict`` any off-domain element raises :class:`DomainError`;
        otherwise such elements come back as NaN for the caller to flag.
        """
        arr = np.asarray(values, dtype=float)
        with np.errstate(all="ignore"):
            out = self._vector_fn(arr)
        out = np.broadcast_to(np.asarray(out, dtype=float), arr.shape).copy()
        bad = ~np.isfinite(out) & np.isfinite(arr)
        if bad.any():
            if strict:
                where = arr[bad].ravel()[0]
                raise DomainError(f"{self} undefined at {where!r}")
            out[bad] = np.nan
        return out

    def evaluate_mp(self, value) -> mpmath.mpf:
        """Tree-walking evaluation in mpmath (wide exponent range)."""
        return _eval_mp(self, mpmath.mpf(value))

    # -- calculus ----------------------------------------------------------
    def diff(self, var: str | None = None) -> Expr:
        var = var or self.variable or "x"
        return _diff(self, var)

    def subs(self, var: str, repl: Expr) -> Expr:
        return _subs(self, var, repl)


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr
    prec = _PREC_UNARY

    def children(self):
        return (self.arg,)


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    @property
    def prec(self):  # type: ignore[override]
        return _PREC_ADD if self.op in "+-" else _PREC_MUL

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exp: Expr
    prec = _PREC_POW

    def children(self):
        return (self.base, self.exp)


@dataclass(frozen=True)
class Call(Expr):
    func: str
    args: tuple[Expr, ...]

    def children(self):
        return self.args


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {text[start]!r}",
                                  _byte_offset(text, start), text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


def _byte_offset(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8"))


class _Parser:
    def __init__(self, text: str, variables: Iterable[str]):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.variables = set(variables)

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, msg, tok=None, cls=ExprSyntaxError):
        tok = tok or self.peek()
        raise cls(msg, _byte_offset(self.text, tok[2]), self.text)

    def expect(self, value):
        tok = self.peek()
        if tok[1] != value or tok[0] == "end":
            self.fail(f"expected {value!r}, found {tok[1] or 'end of input'!r}")
        return self.take()

    def parse(self) -> Expr:
        node = self.expr()
        if self.peek()[0] != "end":
            self.fail(f"unexpected token {self.peek()[1]!r}")
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
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.take()
            return Neg(self.unary())
        if tok[0] == "op" and tok[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] in ("^", "**"):
            self.take()
            return Pow(base, self.unary())
        return base

    def atom(self):
        tok = self.take()
        kind, val, _ = tok
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            name = ALIASES.get(val, val)
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if name not in FUNCTIONS:
                    self.fail(f"unknown function {val!r}", tok, UnknownIdentifierError)
                self.take()
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                arity = FUNCTIONS[name]
                if arity == 1 and len(args) != 1:
                    self.fail(f"{name} takes one argument", tok)
                if arity == -1 and len(args) < 2:
                    self.fail(f"{name} takes at least two arguments", tok)
                return Call(name, tuple(args))
            if name in CONSTANTS:
                return Num(CONSTANTS[name])
            if name in self.variables:
                return Var(name)
            self.fail(f"unknown identifier {val!r}", tok, UnknownIdentifierError)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "end":
            self.fail("unexpected end of input", tok)
        self.fail(f"unexpected token {val!r}", tok)


def parse_expr(text: str, variables: Iterable[str] | str | None = None) -> Expr:
    """Parse ``text`` into an :class:`Expr`.

    ``variables`` restricts the admissible variable names (a single name or
    an iterable); by default any of ``x, s, r, t, u`` is accepted, but at
    most one distinct variable may appear.
    """
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0, text or "")
    if isinstance(variables, str):
        variables = (variables,)
    allowed = tuple(variables) if variables is not None else VARIABLES
    node = _Parser(text, allowed).parse()
    if len(node.variables()) > 1:
        raise ExprSyntaxError(
            f"expression mixes variables {sorted(node.variables())}", 0, text)
    return node


# ---------------------------------------------------------------------------
# printing


def _num_text(v: float) -> str:
    if not math.isfinite(v):
        raise ExprError(f"cannot print non-finite literal {v}")
    s = repr(float(v))
    return f"({s})" if v < 0 or s.startswith("-") else s


def to_text(node: Expr) -> str:
    if isinstance(node, Num):
        return _num_text(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        inner = to_text(node.arg)
        if node.arg.prec < _PREC_UNARY:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, BinOp):
        lhs, rhs = to_text(node.left), to_text(node.right)
        if node.left.prec < node.prec:
            lhs = f"({lhs})"
        if node.right.prec <= node.prec:
            rhs = f"({rhs})"
        return f"{lhs}{node.op}{rhs}"
    if isinstance(node, Pow):
        base, exp = to_text(node.base), to_text(node.exp)
        if node.base.prec <= _PREC_POW:
            base = f"({base})"
        if node.exp.prec < _PREC_ATOM:
            exp = f"({exp})"
        return f"{base}^{exp}"
    if isinstance(node, Call):
        return f"{node.func}({', '.join(to_text(a) for a in node.args)})"
    raise TypeError(node)


# ---------------------------------------------------------------------------
# compilation


def _m_pow(a, b):
    return math.pow(a, b)


def _m_sign(a):
    return (a > 0) - (a < 0)


def _np_pow(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    bad = (a < 0) & (b != np.round(b))
    bad |= (a == 0) & (b < 0)
    out = np.power(a, b)
    return np.where(bad, np.nan, out)


def _np_ln(a):
    a = np.asarray(a, dtype=float)
    return np.where(a > 0, np.log(np.where(a > 0, a, 1.0)), np.nan)


def _np_sqrt(a):
    a = np.asarray(a, dtype=float)
    return np.where(a >= 0, np.sqrt(np.abs(a)), np.nan)


def _np_div(a, b):
    b = np.asarray(b, dtype=float)
    return np.where(b != 0, np.asarray(a, dtype=float) / np.where(b != 0, b, 1.0), np.nan)


def _np_exp(a):
    out = np.exp(a)
    return np.where(np.isinf(out), np.nan, out)


_NS = {
    "math": {
        "sin": "math.sin", "cos": "math.cos", "exp": "math.exp", "ln": "math.log",
        "arctan": "math.atan", "abs": "abs", "sign": "_sign", "sqrt": "math.sqrt",
        "min": "min", "max": "max", "pow": "_pow", "div": None,
        "_env": {"math": math, "_pow": _m_pow, "_sign": _m_sign},
    },
    "numpy": {
        "sin": "np.sin", "cos": "np.cos", "exp": "_exp", "ln": "_ln",
        "arctan": "np.arctan", "abs": "np.abs", "sign": "np.sign", "sqrt": "_sqrt",
        "min": "_min", "max": "_max", "pow": "_pow", "div": "_div",
        "_env": {"np": np, "_pow": _np_pow, "_ln": _np_ln, "_sqrt": _np_sqrt,
                 "_div": _np_div, "_exp": _np_exp,
                 "_min": lambda *a: np.minimum.reduce(np.broadcast_arrays(*a)),
                 "_max": lambda *a: np.maximum.reduce(np.broadcast_arrays(*a))},
    },
}


def _codegen(node: Expr, ns: dict, arg: str) -> str:
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return arg
    if isinstance(node, Neg):
        return f"(-{_codegen(node.arg, ns, arg)})"
    if isinstance(node, BinOp):
        lhs, rhs = _codegen(node.left, ns, arg), _codegen(node.right, ns, arg)
        if node.op == "/" and ns["div"]:
            return f"{ns['div']}({lhs}, {rhs})"
        return f"({lhs} {node.op} {rhs})"
    if isinstance(node, Pow):
        return f"{ns['pow']}({_codegen(node.base, ns, arg)}, {_codegen(node.exp, ns, arg)})"
    if isinstance(node, Call):
        args = ", ".join(_codegen(a, ns, arg) for a in node.args)
        return f"{ns[node.func]}({args})"
    raise TypeError(node)


def _compile(node: Expr, backend: str):
    ns = _NS[backend]
    src = f"lambda _v: {_codegen(node, ns, '_v')}"
    return eval(src, dict(ns["_env"]))  # noqa: S307 - source is generated from the AST


def _mp_check(cond, msg):
    if not cond:
        raise DomainError(msg)


def _eval_mp(node: Expr, v):
    mp = mpmath
    if isinstance(node, Num):
        return mp.mpf(node.value)
    if isinstance(node, Var):
        return v
    if isinstance(node, Neg):
        return -_eval_mp(node.arg, v)
    if isinstance(node, BinOp):
        a, b = _eval_mp(node.left, v), _eval_mp(node.right, v)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        _mp_check(b != 0, f"division by zero in {node}")
        return a / b
    if isinstance(node, Pow):
        a, b = _eval_mp(node.base, v), _eval_mp(node.exp, v)
        _mp_check(not (a < 0 and b != mp.floor(b)), f"negative base in {node}")
        _mp_check(not (a == 0 and b < 0), f"zero to negative power in {node}")
        return mp.power(a, b)
    if isinstance(node, Call):
        args = [_eval_mp(a, v) for a in node.args]
        f = node.func
        if f == "ln":
            _mp_check(args[0] > 0, f"ln of non-positive value in {node}")
            return mp.log(args[0])
        if f == "sqrt":
            _mp_check(args[0] >= 0, f"sqrt of negative value in {node}")
            return mp.sqrt(args[0])
        if f == "min":
            return min(args)
        if f == "max":
            return max(args)
        if f == "sign":
            return mp.sign(args[0])
        return {"sin": mp.sin, "cos": mp.cos, "exp": mp.exp,
                "arctan": mp.atan, "abs": abs}[f](args[0])
    raise TypeError(node)


# ---------------------------------------------------------------------------
# algebra with light constant folding


def num(v: float) -> Num:
    return Num(float(v))


def _is(node, v):
    return isinstance(node, Num) and node.value == v


def add(a: Expr, b: Expr) -> Expr:
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return num(a.value + b.value)
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is(b, 0):
        return a
    if _is(a, 0):
        return neg(b)
    if isinstance(a, Num) and isinstance(b, Num):
        return num(a.value - b.value)
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is(a, 0) or _is(b, 0):
        return num(0)
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return num(a.value * b.value)
    return BinOp("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is(b, 1):
        return a
    if _is(a, 0):
        return num(0)
    return BinOp("/", a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Num):
        return num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def power(a: Expr, b: Expr) -> Expr:
    if _is(b, 1):
        return a
    if _is(b, 0):
        return num(1)
    return Pow(a, b)


def call(f: str, *args: Expr) -> Expr:
    return Call(f, tuple(args))


def _diff(node: Expr, var: str) -> Expr:
    d = lambda e: _diff(e, var)  # noqa: E731
    if isinstance(node, Num):
        return num(0)
    if isinstance(node, Var):
        return num(1 if node.name == var else 0)
    if isinstance(node, Neg):
        return neg(d(node.arg))
    if isinstance(node, BinOp):
        f, g = node.left, node.right
        if node.op == "+":
            return add(d(f), d(g))
        if node.op == "-":
            return sub(d(f), d(g))
        if node.op == "*":
            return add(mul(d(f), g), mul(f, d(g)))
        return div(sub(mul(d(f), g), mul(f, d(g))), power(g, num(2)))
    if isinstance(node, Pow):
        f, g = node.base, node.exp
        if var not in g.variables():
            c = g.value if isinstance(g, Num) else None
            new_exp = num(c - 1) if c is not None else sub(g, num(1))
            return mul(mul(g, power(f, new_exp)), d(f))
        return mul(node, add(mul(d(g), call("ln", f)), div(mul(g, d(f)), f)))
    if isinstance(node, Call):
        if node.func in ("min", "max"):
            args = list(node.args)
            acc = args[0]
            for nxt in args[1:]:
                acc = Call(node.func, (acc, nxt))
            if len(args) > 2:
                return _diff(acc, var)
            f, g = args
            half_sum = div(add(d(f), d(g)), num(2))
            half_diff = div(mul(call("sign", sub(f, g)), sub(d(f), d(g))), num(2))
            return add(half_sum, half_diff) if node.func == "max" else sub(half_sum, half_diff)
        (f,) = node.args
        df = d(f)
        outer = {
            "sin": lambda: call("cos", f),
            "cos": lambda: neg(call("sin", f)),
            "exp": lambda: node,
            "ln": lambda: div(num(1), f),
            "arctan": lambda: div(num(1), add(num(1), power(f, num(2)))),
            "abs": lambda: call("sign", f),
            "sign": lambda: num(0),
            "sqrt": lambda: div(num(0.5), node),
        }[node.func]()
        return mul(outer, df)
    raise TypeError(node)


def _subs(node: Expr, var: str, repl: Expr) -> Expr:
    if isinstance(node, Var):
        return repl if node.name == var else node
    if isinstance(node, Num):
        return node
    if isinstance(node, Neg):
        return Neg(_subs(node.arg, var, repl))
    if isinstance(node, BinOp):
        return BinOp(node.op, _subs(node.left, var, repl), _subs(node.right, var, repl))
    if isinstance(node, Pow):
        return Pow(_subs(node.base, var, repl), _subs(node.exp, var, repl))
    if isinstance(node, Call):
        return Call(node.func, tuple(_subs(a, var, repl) for a in node.args))
    raise TypeError(node)


def as_power_law(node: Expr, var: str = "s") -> tuple[float, float] | None:
    """Return ``(K, gamma)`` if ``node`` is ``K*var^gamma`` with constant K, gamma."""
    coeff = 1.0
    while True:
        if isinstance(node, BinOp) and node.op == "*":
            if isinstance(node.left, Num):
                coeff *= node.left.value
                node = node.right
                continue
            if isinstance(node.right, Num):
                coeff *= node.right.value
                node = node.left
                continue
        break
    if isinstance(node, Var) and node.name == var:
        return coeff, 1.0
    if isinstance(node, Pow) and isinstance(node.base, Var) and node.base.name == var:
        if isinstance(node.exp, Num):
            return coeff, node.exp.value
        if isinstance(node.exp, Neg) and isinstance(node.exp.arg, Num):
            return coeff, -node.exp.arg.value
    if isinstance(node, BinOp) and node.op == "*" and node.left == node.right == Var(var):
        return coeff, 2.0
    return None
