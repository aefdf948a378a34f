"""Truncated multivariate Taylor arithmetic over expression trees.

A Taylor polynomial in ``n`` variables truncated at total degree ``m`` is an
array of shape ``(N, P)``: one row per multi-index (graded order, as in
:func:`expr.multi_indices`) and one column per evaluation point.  Row ``K``
holds ``D^K f / K!``.

Nonlinear functions use recurrences obtained from the Euler operator
``E = sum_i x_i d/dx_i`` which scales the coefficient of ``x^K`` by ``|K|``;
e.g. ``c = exp(a)`` satisfies ``E c = c E a``, hence
``|K| c_K = sum_{J+L=K, J!=0} |J| a_J c_L``.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from . import expr as ex
from .errors import DomainError


class Basis:
    """Index bookkeeping for Taylor polynomials of a given (n, m)."""

    def __init__(self, n: int, m: int):
        self.n = n
        self.m = m
        self.indices = ex.multi_indices(n, m)
        self.pos = {I: k for k, I in enumerate(self.indices)}
        self.orders = np.array([I.order for I in self.indices])
        self.factorials = np.array([float(I.factorial) for I in self.indices])
        # pairs (i, j) with indices[i] + indices[j] == indices[k], grouped by k
        pi, pj, pk = [], [], []
        self.pairs: list[tuple[np.ndarray, np.ndarray]] = []
        for k, K in enumerate(self.indices):
            li, lj = [], []
            for i, I in enumerate(self.indices):
                if I.order > K.order:
                    break
                if all(a <= b for a, b in zip(I, K)):
                    J = ex.MultiIndex(b - a for a, b in zip(I, K))
                    li.append(i)
                    lj.append(self.pos[J])
            self.pairs.append((np.array(li, dtype=int), np.array(lj, dtype=int)))
            pi.extend(li)
            pj.extend(lj)
            pk.extend([k] * len(li))
        self._pi = np.array(pi, dtype=int)
        self._pj = np.array(pj, dtype=int)
        starts = np.searchsorted(np.array(pk), np.arange(len(self.indices)))
        self._starts = starts
        self.unit_rows = [self.pos.get(ex.MultiIndex.unit(n, i)) for i in range(n)]

    @property
    def size(self):
        return len(self.indices)

    @property
    def shifts(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per variable i: rows K with K_i >= 1 and the rows of K - e_i."""
        if not hasattr(self, "_shifts"):
            out = []
            for i in range(self.n):
                e = ex.MultiIndex.unit(self.n, i)
                dst = [k for k, K in enumerate(self.indices) if K[i] >= 1]
                src = [self.pos[ex.MultiIndex(a - b for a, b in zip(self.indices[k], e))] for k in dst]
                out.append((np.array(dst, dtype=int), np.array(src, dtype=int)))
            self._shifts = out
        return self._shifts

    def mul_variable(self, i, values, b):
        """(x_i) * b without the full convolution."""
        out = values[None, :] * b
        dst, src = self.shifts[i]
        out[dst] += b[src]
        return out

    def mul(self, a, b):
        prod = a[self._pi] * b[self._pj]
        return np.add.reduceat(prod, self._starts, axis=0)

    def constant(self, value, npts):
        out = np.zeros((self.size, npts))
        out[0] = value
        return out

    def variable(self, i, values):
        values = np.asarray(values, dtype=float)
        out = np.zeros((self.size, values.shape[0]))
        out[0] = values
        if self.m >= 1:
            out[self.unit_rows[i]] = 1.0
        return out

    # recurrences; each processes coefficients in graded order

    def div(self, a, b):
        b0 = b[0]
        c = np.zeros_like(a)
        for k in range(self.size):
            li, lj = self.pairs[k]
            # exclude the pair (K, 0), which is the last one in the list
            acc = a[k] - np.sum(c[li[:-1]] * b[lj[:-1]], axis=0)
            c[k] = acc / b0
        return c

    def exp(self, a):
        c = np.zeros_like(a)
        c[0] = np.exp(a[0])
        for k in range(1, self.size):
            li, lj = self.pairs[k]
            w = self.orders[li][1:, None]
            c[k] = np.sum(w * a[li[1:]] * c[lj[1:]], axis=0) / self.orders[k]
        return c

    def log(self, a):
        c = np.zeros_like(a)
        c[0] = np.log(a[0])
        for k in range(1, self.size):
            li, lj = self.pairs[k]
            # J = li ranges over nonzero, non-K indices
            inner = slice(1, -1)
            w = self.orders[li[inner]][:, None]
            acc = np.sum(w * c[li[inner]] * a[lj[inner]], axis=0) / self.orders[k]
            c[k] = (a[k] - acc) / a[0]
        return c

    def sincos(self, a):
        s = np.zeros_like(a)
        co = np.zeros_like(a)
        s[0] = np.sin(a[0])
        co[0] = np.cos(a[0])
        for k in range(1, self.size):
            li, lj = self.pairs[k]
            w = self.orders[li][1:, None] * a[li[1:]]
            s[k] = np.sum(w * co[lj[1:]], axis=0) / self.orders[k]
            co[k] = -np.sum(w * s[lj[1:]], axis=0) / self.orders[k]
        return s, co

    def sqrt(self, a):
        c = np.zeros_like(a)
        c[0] = np.sqrt(a[0])
        for k in range(1, self.size):
            li, lj = self.pairs[k]
            inner = slice(1, -1)
            acc = np.sum(c[li[inner]] * c[lj[inner]], axis=0)
            c[k] = (a[k] - acc) / (2.0 * c[0])
        return c

    def atan(self, a):
        q = self.mul(a, a)
        q[0] += 1.0
        c = np.zeros_like(a)
        c[0] = np.arctan(a[0])
        for k in range(1, self.size):
            li, lj = self.pairs[k]
            inner = slice(1, -1)
            w = self.orders[li[inner]][:, None]
            acc = np.sum(w * c[li[inner]] * q[lj[inner]], axis=0)
            c[k] = (self.orders[k] * a[k] - acc) / (self.orders[k] * q[0])
        return c

    def ipow(self, a, n):
        if n < 0:
            one = self.constant(1.0, a.shape[1])
            return self.div(one, self.ipow(a, -n))
        result = None
        base = a
        while n:
            if n & 1:
                result = base if result is None else self.mul(result, base)
            n >>= 1
            if n:
                base = self.mul(base, base)
        return result if result is not None else self.constant(1.0, a.shape[1])


@lru_cache(maxsize=64)
def basis(n: int, m: int) -> Basis:
    return Basis(n, m)


def taylor_eval(
    e: ex.Expr,
    coords: Sequence[str],
    points: np.ndarray,
    order: int,
    params: Mapping[str, float] | None = None,
) -> np.ndarray:
    """Taylor coefficients of ``e`` at each row of ``points`` (shape (P, n)).

    Returns an array of shape (N, P) in the graded order of ``basis(n, order)``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(coords)
    if points.shape[1] != n:
        raise ValueError("points do not match the coordinate count")
    if order > ex.MAX_ORDER:
        raise OverflowError(f"jet order {order} exceeds {ex.MAX_ORDER}")
    B = basis(n, order)
    npts = points.shape[0]
    cindex = {c: i for i, c in enumerate(coords)}
    params = params or {}
    memo: dict[int, np.ndarray] = {}

    def scalar(node):
        if isinstance(node, ex.Const):
            return node.value
        if isinstance(node, ex.Var) and node.name not in cindex and node.name in params:
            return params[node.name]
        return None

    def _product(node, a, b):
        # cheap paths for constant and coordinate factors
        for f, other in ((node.left, b), (node.right, a)):
            c = scalar(f)
            if c is not None:
                return c * other
        for f, other in ((node.left, b), (node.right, a)):
            if isinstance(f, ex.Var) and f.name in cindex and order >= 1:
                i = cindex[f.name]
                return B.mul_variable(i, points[:, i], other)
        return B.mul(a, b)

    def t(node):
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, ex.Const):
            out = B.constant(node.value, npts)
        elif isinstance(node, ex.Var):
            if node.name in cindex:
                # shared per name: distinct Var nodes with one name give one series
                out = memo.get(node.name)
                if out is None:
                    out = memo[node.name] = B.variable(cindex[node.name], points[:, cindex[node.name]])
            elif node.name in params:
                out = B.constant(params[node.name], npts)
            else:
                raise ex.ValidationError(f"variable {node.name!r} is not bound")
        elif isinstance(node, ex.Unary):
            a = t(node.arg)
            op = node.op
            if op == "neg":
                out = -a
            elif op == "exp":
                out = B.exp(a)
            elif op == "log":
                if np.any(a[0] <= 0):
                    raise DomainError(f"log of nonpositive value in {ex.render(node)}", node)
                out = B.log(a)
            elif op == "sqrt":
                if np.any(a[0] < 0) or (order > 0 and np.any(a[0] == 0)):
                    raise DomainError(f"sqrt not smooth at a sample point in {ex.render(node)}", node)
                out = B.sqrt(a)
            elif op in ("sin", "cos"):
                s, c = B.sincos(a)
                out = s if op == "sin" else c
            elif op == "atan":
                out = B.atan(a)
            else:
                raise TypeError(op)
        elif isinstance(node, ex.Binary):
            a, b = t(node.left), t(node.right)
            if node.op == "+":
                out = a + b
            elif node.op == "-":
                out = a - b
            elif node.op == "*":
                out = _product(node, a, b)
            else:
                if np.any(b[0] == 0):
                    raise DomainError(f"division by zero in {ex.render(node)}", node)
                out = B.div(a, b)
        elif isinstance(node, ex.Pow):
            a = t(node.base)
            if node.exponent < 0 and np.any(a[0] == 0):
                raise DomainError(f"zero raised to a negative power in {ex.render(node)}", node)
            out = B.ipow(a, node.exponent)
        else:
            raise TypeError(type(node))
        memo[key] = out
        return out

    return t(e)
