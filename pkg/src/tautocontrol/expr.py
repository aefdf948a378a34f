"""Scalar expression trees over named chart coordinates.

Expressions are immutable.  They are built through the smart constructors
(``add``, ``mul``, ``power``, ...), or the Python operators which route to
them, so that a fixed set of folding rules is applied exactly once per node:
constant folding, additive and multiplicative identities, multiplication by
zero, double negation and nested integer powers.

Grammar accepted by :func:`parse_expr`::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' ['-'] integer)?
    atom   := number | ident | ident '(' expr ')' | '(' expr ')'

so ``-x^2`` is ``-(x^2)`` and chains associate to the left.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError, ExprSyntaxError, ValidationError

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "atan")
MAX_ORDER = 20


class Expr:
    __slots__ = ()

    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __truediv__(self, other):
        return div(self, _coerce(other))

    def __rtruediv__(self, other):
        return div(_coerce(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, n):
        return power(self, n)

    def __str__(self):
        return render(self)


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: float


@dataclass(frozen=True, eq=True)
class Var(Expr):
    name: str


@dataclass(frozen=True, eq=True)
class Unary(Expr):
    op: str  # 'neg' or one of FUNCTIONS
    arg: Expr


@dataclass(frozen=True, eq=True)
class Binary(Expr):
    op: str  # one of + - * /
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Pow(Expr):
    base: Expr
    exponent: int


ZERO = Const(0.0)
ONE = Const(1.0)


def _coerce(value):
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float, np.floating, np.integer)):
        return Const(float(value))
    raise TypeError(f"cannot use {value!r} in an expression")


def const(value) -> Const:
    return Const(float(value))


def var(name: str) -> Var:
    return Var(name)


def _is(e, value):
    return isinstance(e, Const) and e.value == value


# -- smart constructors ------------------------------------------------------


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return b
    return Binary("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    return Binary("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if _is(a, 0.0) or _is(b, 0.0):
        return ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    return Binary("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0.0:
        return Const(a.value / b.value)
    if _is(b, 1.0):
        return a
    if _is(a, 0.0) and not _is(b, 0.0):
        return ZERO
    return Binary("/", a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def power(a: Expr, n) -> Expr:
    if isinstance(n, float) and n.is_integer():
        n = int(n)
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
        raise ValidationError(f"non-integer exponent {n!r}")
    n = int(n)
    if n == 0:
        return ONE
    if n == 1:
        return a
    if isinstance(a, Const):
        if a.value != 0.0 or n > 0:
            try:
                return Const(a.value**n)
            except OverflowError:
                pass
        return Pow(a, n)
    if isinstance(a, Pow):
        return power(a.base, a.exponent * n)
    return Pow(a, n)


_FOLD = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
    "atan": math.atan,
}


def func(name: str, a: Expr) -> Expr:
    if name not in FUNCTIONS:
        raise ValidationError(f"unknown function {name!r}")
    if isinstance(a, Const):
        try:
            return Const(_FOLD[name](a.value))
        except (ValueError, OverflowError):
            pass  # leave unfolded; evaluation reports the domain error
    return Unary(name, a)


def sin(a):
    return func("sin", _coerce(a))


def cos(a):
    return func("cos", _coerce(a))


def exp(a):
    return func("exp", _coerce(a))


def log(a):
    return func("log", _coerce(a))


def sqrt(a):
    return func("sqrt", _coerce(a))


def atan(a):
    return func("atan", _coerce(a))


# -- multi-indices -----------------------------------------------------------


class MultiIndex(tuple):
    """Exponent vector of a partial derivative; ``+`` adds componentwise."""

    def __new__(cls, exponents):
        exps = tuple(int(i) for i in exponents)
        if any(i < 0 for i in exps):
            raise ValueError(f"negative entry in multi-index {exps}")
        return super().__new__(cls, exps)

    @property
    def order(self) -> int:
        return sum(self)

    @property
    def factorial(self) -> int:
        if self.order > MAX_ORDER:
            raise OverflowError(f"multi-index order {self.order} exceeds {MAX_ORDER}")
        out = 1
        for i in self:
            out *= math.factorial(i)
        return out

    def __add__(self, other):
        if len(other) != len(self):
            raise ValueError("multi-indices of different length")
        return MultiIndex(a + b for a, b in zip(self, other))

    def __repr__(self):
        return f"MultiIndex{tuple(self)}"

    @staticmethod
    def unit(n: int, i: int) -> "MultiIndex":
        return MultiIndex(1 if j == i else 0 for j in range(n))

    @staticmethod
    def zero(n: int) -> "MultiIndex":
        return MultiIndex((0,) * n)


def multi_indices(n: int, max_order: int, exact: bool = False):
    """All multi-indices in n variables of order <= max_order, graded
    by order and lexicographically descending within each order."""
    out = []
    orders = [max_order] if exact else range(max_order + 1)
    for k in orders:
        out.extend(_compositions(n, k))
    return out


def _compositions(n, k):
    if n == 0:
        return [MultiIndex(())] if k == 0 else []
    if n == 1:
        return [MultiIndex((k,))]
    res = []
    for first in range(k, -1, -1):
        for rest in _compositions(n - 1, k - first):
            res.append(MultiIndex((first,) + tuple(rest)))
    return res


# -- parsing -----------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str):
    raw = text.encode("utf-8")
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            offset = len(text[:pos].encode("utf-8"))
            while offset < len(raw) and raw[offset : offset + 1].isspace():
                offset += 1
            raise ExprSyntaxError(f"unexpected character in {text!r}", offset)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), len(text[:start].encode("utf-8"))))
        pos = m.end()
    tokens.append(("end", "", len(raw)))
    return tokens


class _Parser:
    def __init__(self, text, coords, constants):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.coords = set(coords)
        self.constants = dict(constants or {})

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, off = self.take()
        if text != value or kind == "end":
            raise ExprSyntaxError(f"expected {value!r}, found {text or 'end of input'!r}", off)

    def parse(self):
        e = self.expr()
        kind, text, off = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {text!r}", off)
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.unary()
            e = mul(e, rhs) if op == "*" else div(e, rhs)
        return e

    def unary(self):
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            return neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            sign = 1
            if self.peek()[1] == "-" and self.peek()[0] == "op":
                self.take()
                sign = -1
            kind, text, off = self.take()
            if kind != "num":
                raise ExprSyntaxError("non-integer exponent: expected an integer literal", off)
            if not text.isdigit():
                raise ExprSyntaxError(f"non-integer exponent {text!r}", off)
            return power(base, sign * int(text))
        return base

    def atom(self):
        kind, text, off = self.take()
        if kind == "num":
            return Const(float(text))
        if kind == "ident":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if text not in FUNCTIONS:
                    raise ExprSyntaxError(f"unknown function {text!r}", off)
                self.take()
                arg = self.expr()
                self.expect(")")
                return func(text, arg)
            if text in self.constants:
                return Const(float(self.constants[text]))
            if text in self.coords:
                return Var(text)
            raise ExprSyntaxError(f"unknown identifier {text!r}", off)
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        raise ExprSyntaxError(f"unexpected {text or 'end of input'!r}", off)


def parse_expr(
    text: str, coords: Sequence[str], constants: Mapping[str, float] | None = None
) -> Expr:
    """Parse ``text`` into an expression over ``coords``.

    ``constants`` binds further identifiers to numeric values at parse time.
    """
    return _Parser(text, coords, constants).parse()


# -- rendering ---------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(e):
    if isinstance(e, Binary):
        return _PREC[e.op]
    if isinstance(e, Unary) and e.op == "neg":
        return 3
    if isinstance(e, Const) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return 3
    if isinstance(e, Pow):
        return 4
    return 5


def _num(v: float) -> str:
    if not math.isfinite(v):
        raise ValidationError(f"cannot render non-finite constant {v}")
    s = repr(float(v))
    return s


def render(e: Expr) -> str:
    """Infix text that parses back to an identical tree."""
    if isinstance(e, Const):
        if math.copysign(1.0, e.value) < 0:
            return "-" + _num(-e.value)
        return _num(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            inner = render(e.arg)
            # a negative constant inside a negation would re-fold on parsing
            if _prec(e.arg) <= 3 or isinstance(e.arg, Const):
                inner = f"({inner})"
            return "-" + inner
        return f"{e.op}({render(e.arg)})"
    if isinstance(e, Pow):
        b = render(e.base)
        if _prec(e.base) <= 4:
            b = f"({b})"
        return f"{b}^{e.exponent}"
    if isinstance(e, Binary):
        p = _PREC[e.op]
        lhs = render(e.left)
        if _prec(e.left) < p:
            lhs = f"({lhs})"
        rhs = render(e.right)
        if _prec(e.right) <= p:
            rhs = f"({rhs})"
        return f"{lhs} {e.op} {rhs}"
    raise TypeError(type(e))


# -- evaluation --------------------------------------------------------------


def free_vars(e: Expr) -> set[str]:
    out = set()
    seen = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if isinstance(node, Var):
            out.add(node.name)
        elif isinstance(node, Unary):
            stack.append(node.arg)
        elif isinstance(node, Binary):
            stack.extend((node.left, node.right))
        elif isinstance(node, Pow):
            stack.append(node.base)
    return out


_NUMPY_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "atan": np.arctan,
}


def eval_expr(e: Expr, point: Mapping[str, float]):
    """Evaluate ``e`` with variables bound by ``point``.

    Values may be floats or equally-shaped numpy arrays.  Division by zero,
    logarithms of nonpositive numbers and square roots of negative numbers
    raise :class:`DomainError` naming the offending subtree.
    """
    memo: dict[int, object] = {}

    def ev(node):
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, Const):
            val = node.value
        elif isinstance(node, Var):
            try:
                val = point[node.name]
            except KeyError:
                raise ValidationError(f"variable {node.name!r} is not bound") from None
        elif isinstance(node, Unary):
            a = ev(node.arg)
            if node.op == "neg":
                val = -a
            else:
                if node.op == "log" and np.any(np.asarray(a) <= 0):
                    raise DomainError(f"log of nonpositive value in {render(node)}", node)
                if node.op == "sqrt" and np.any(np.asarray(a) < 0):
                    raise DomainError(f"sqrt of negative value in {render(node)}", node)
                if isinstance(a, np.ndarray):
                    with np.errstate(over="ignore"):
                        val = _NUMPY_FUNCS[node.op](a)
                else:
                    try:
                        val = _FOLD[node.op](a)
                    except OverflowError:
                        val = math.inf
        elif isinstance(node, Binary):
            a = ev(node.left)
            b = ev(node.right)
            if node.op == "+":
                val = a + b
            elif node.op == "-":
                val = a - b
            elif node.op == "*":
                val = a * b
            else:
                if np.any(np.asarray(b) == 0):
                    raise DomainError(f"division by zero in {render(node)}", node)
                val = a / b
        elif isinstance(node, Pow):
            a = ev(node.base)
            if node.exponent < 0 and np.any(np.asarray(a) == 0):
                raise DomainError(f"zero raised to a negative power in {render(node)}", node)
            if isinstance(a, np.ndarray):
                val = a ** float(node.exponent) if node.exponent < 0 else a**node.exponent
            else:
                val = float(a) ** node.exponent
        else:
            raise TypeError(type(node))
        memo[key] = val
        return val

    return ev(e)


def compile_exprs(exprs: Sequence[Expr], args: Sequence[str], name: str = "f"):
    """Compile expressions into ``f(*args) -> tuple`` of floats.

    This is the fast path for integrators.  Math errors surface as
    ``ValueError``/``ZeroDivisionError``; callers re-run :func:`eval_expr`
    to obtain a :class:`DomainError` that names the subtree.
    """
    lines = []
    names: dict[int, str] = {}
    argmap = {a: f"_a{i}" for i, a in enumerate(args)}

    def emit(node):
        key = id(node)
        if key in names:
            return names[key]
        if isinstance(node, Const):
            return repr(node.value) if math.isfinite(node.value) else f"float({str(node.value)!r})"
        if isinstance(node, Var):
            try:
                return argmap[node.name]
            except KeyError:
                raise ValidationError(f"variable {node.name!r} is not bound") from None
        if isinstance(node, Unary):
            a = emit(node.arg)
            code = f"(-{a})" if node.op == "neg" else f"_m.{_MATHNAME[node.op]}({a})"
        elif isinstance(node, Binary):
            code = f"({emit(node.left)} {node.op} {emit(node.right)})"
        elif isinstance(node, Pow):
            code = f"({emit(node.base)} ** {node.exponent})"
        else:
            raise TypeError(type(node))
        tmp = f"_t{len(names)}"
        names[key] = tmp
        lines.append(f"    {tmp} = {code}")
        return tmp

    outs = [emit(e) for e in exprs]
    src = f"def {name}({', '.join(argmap[a] for a in args)}):\n"
    src += "\n".join(lines) + ("\n" if lines else "")
    src += f"    return ({', '.join(outs)}{',' if len(outs) == 1 else ''})\n"
    ns = {"_m": math}
    exec(compile(src, f"<compiled {name}>", "exec"), ns)
    return ns[name]


_MATHNAME = {"sin": "sin", "cos": "cos", "exp": "exp", "log": "log", "sqrt": "sqrt", "atan": "atan"}


# -- differentiation ---------------------------------------------------------


def partial(e: Expr, name: str, _memo=None) -> Expr:
    """Exact symbolic partial derivative with respect to variable ``name``."""
    memo = {} if _memo is None else _memo

    def d(node):
        key = id(node)
        if key in memo:
            return memo[key][1]
        if isinstance(node, Const):
            out = ZERO
        elif isinstance(node, Var):
            out = ONE if node.name == name else ZERO
        elif isinstance(node, Unary):
            u = node.arg
            du = d(u)
            if node.op == "neg":
                out = neg(du)
            elif _is(du, 0.0):
                out = ZERO
            elif node.op == "sin":
                out = mul(func("cos", u), du)
            elif node.op == "cos":
                out = neg(mul(func("sin", u), du))
            elif node.op == "exp":
                out = mul(node, du)
            elif node.op == "log":
                out = div(du, u)
            elif node.op == "sqrt":
                out = div(du, mul(Const(2.0), node))
            elif node.op == "atan":
                out = div(du, add(ONE, power(u, 2)))
            else:
                raise TypeError(node.op)
        elif isinstance(node, Binary):
            a, b = node.left, node.right
            da, db = d(a), d(b)
            if node.op == "+":
                out = add(da, db)
            elif node.op == "-":
                out = sub(da, db)
            elif node.op == "*":
                out = add(mul(da, b), mul(a, db))
            else:
                out = div(sub(mul(da, b), mul(a, db)), power(b, 2))
        elif isinstance(node, Pow):
            db = d(node.base)
            n = node.exponent
            out = mul(mul(Const(float(n)), power(node.base, n - 1)), db)
        else:
            raise TypeError(type(node))
        # keep node alive so its id stays unique for the memo's lifetime
        memo[key] = (node, out)
        return out

    return d(e)


def diff(e: Expr, index: Sequence[int], coords: Sequence[str]) -> Expr:
    """D^index e, with ``index[i]`` derivatives in ``coords[i]``."""
    index = MultiIndex(index)
    if len(index) != len(coords):
        raise ValueError("multi-index length does not match the coordinate list")
    if index.order > MAX_ORDER:
        raise OverflowError(f"derivative order {index.order} exceeds {MAX_ORDER}")
    out = e
    for name, k in zip(coords, index):
        for _ in range(k):
            out = partial(out, name)
    return out


def substitute(e: Expr, values: Mapping[str, Expr | float]) -> Expr:
    """Replace variables by expressions (or numbers), refolding on the way up."""
    repl = {k: _coerce(v) for k, v in values.items()}
    memo: dict[int, Expr] = {}

    def s(node):
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, Const):
            out = node
        elif isinstance(node, Var):
            out = repl.get(node.name, node)
        elif isinstance(node, Unary):
            a = s(node.arg)
            out = neg(a) if node.op == "neg" else func(node.op, a)
        elif isinstance(node, Binary):
            out = {"+": add, "-": sub, "*": mul, "/": div}[node.op](s(node.left), s(node.right))
        elif isinstance(node, Pow):
            out = power(s(node.base), node.exponent)
        else:
            raise TypeError(type(node))
        memo[key] = out
        return out

    return s(e)
