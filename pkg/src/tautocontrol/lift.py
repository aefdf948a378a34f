"""Tangent and vertical lifts to the doubled chart (x, v) of TM."""

from __future__ import annotations

from typing import Sequence

from . import expr as ex
from .errors import ValidationError
from .jets import VectorFieldChart


def fibre_coords(coords: Sequence[str], prefix: str = "v") -> tuple[str, ...]:
    """Names for fibre coordinates: v1..vn, with underscores prepended
    until they avoid the base names."""
    taken = set(coords)
    while True:
        names = tuple(f"{prefix}{i + 1}" for i in range(len(coords)))
        if not taken.intersection(names):
            return names
        prefix = "_" + prefix


def doubled_coords(coords: Sequence[str]) -> tuple[str, ...]:
    return tuple(coords) + fibre_coords(coords)


def tangent_lift(X: VectorFieldChart) -> VectorFieldChart:
    """X^T = X^j d/dx^j + (dX^j/dx^k) v^k d/dv^j."""
    vs = fibre_coords(X.coords)
    fibre = []
    for comp in X.components:
        acc = ex.ZERO
        for xk, vk in zip(X.coords, vs):
            acc = ex.add(acc, ex.mul(ex.partial(comp, xk), ex.Var(vk)))
        fibre.append(acc)
    return VectorFieldChart(X.coords + vs, X.components + tuple(fibre), X.params)


def vertical_lift(Y: VectorFieldChart) -> VectorFieldChart:
    """Y^V = Y^j d/dv^j, constant along fibres."""
    vs = fibre_coords(Y.coords)
    zeros = (ex.ZERO,) * Y.dim
    return VectorFieldChart(Y.coords + vs, zeros + Y.components, Y.params)


def linearization_field(X: VectorFieldChart, Y: VectorFieldChart) -> VectorFieldChart:
    """X^T + Y^V."""
    if X.coords != Y.coords:
        raise ValidationError("fields live in different charts")
    return tangent_lift(X) + vertical_lift(Y)


def base_part(D: VectorFieldChart) -> VectorFieldChart:
    """First n components of a doubled field, as a field on the base chart.

    Raises if they depend on the fibre coordinates (not projectable).
    """
    n = D.dim // 2
    base = D.coords[:n]
    fib = set(D.coords[n:])
    for c in D.components[:n]:
        if ex.free_vars(c) & fib:
            raise ValidationError("doubled field is not projectable")
    return VectorFieldChart(base, D.components[:n], D.params)
