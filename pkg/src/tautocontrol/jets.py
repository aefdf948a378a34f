"""Jets of vector fields in a flat chart, jet fibre norms and seminorms.

In a single chart with the flat connection and Euclidean metrics the jet
fibre norm of order m is

    ||j_m X(x)||^2 = sum_{k<=m} (1/k!)^2 |D^k X(x)|^2,

where |D^k X| is the Euclidean norm of the symmetric k-tensor.  With
derivatives stored once per multi-index I, the tensor norm picks up the
multinomial weight k!/I!.

Suprema over compact boxes are taken over a finite grid that includes every
corner, so the seminorms here are grid lower bounds of the true values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import expr as ex
from .errors import ValidationError
from .taylor import basis, taylor_eval

DEFAULT_GRID = 17


@dataclass(frozen=True)
class VectorFieldChart:
    """A vector field X = X^j d/dx^j in a chart with named coordinates."""

    coords: tuple[str, ...]
    components: tuple[ex.Expr, ...]
    params: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(self.coords))
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "params", tuple(self.params))
        if len(self.components) != len(self.coords):
            raise ValidationError(
                f"field has {len(self.components)} components but {len(self.coords)} coordinates"
            )
        allowed = set(self.coords) | set(self.params)
        for c in self.components:
            extra = ex.free_vars(c) - allowed
            if extra:
                raise ValidationError(f"undeclared variables {sorted(extra)} in {ex.render(c)}")

    @property
    def dim(self) -> int:
        return len(self.coords)

    @classmethod
    def parse(cls, texts: Sequence[str], coords: Sequence[str], params=(), constants=None):
        names = list(coords) + list(params)
        return cls(tuple(coords), tuple(ex.parse_expr(t, names, constants) for t in texts), tuple(params))

    @classmethod
    def zero(cls, coords: Sequence[str]):
        return cls(tuple(coords), (ex.ZERO,) * len(coords))

    def __add__(self, other: "VectorFieldChart"):
        self._check(other)
        return VectorFieldChart(
            self.coords,
            tuple(ex.add(a, b) for a, b in zip(self.components, other.components)),
            tuple(dict.fromkeys(self.params + other.params)),
        )

    def scale(self, c: float) -> "VectorFieldChart":
        k = ex.const(c)
        return VectorFieldChart(self.coords, tuple(ex.mul(k, a) for a in self.components), self.params)

    def _check(self, other):
        if other.coords != self.coords:
            raise ValidationError("vector fields live in different charts")

    def __call__(self, point, params: Mapping[str, float] | None = None) -> np.ndarray:
        env = dict(zip(self.coords, (float(v) for v in point)))
        env.update(params or {})
        return np.array([float(ex.eval_expr(c, env)) for c in self.components])

    def evaluate_many(self, points: np.ndarray, params=None) -> np.ndarray:
        """Values at each row of ``points``; shape (P, n)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        env = {c: points[:, i] for i, c in enumerate(self.coords)}
        env.update(params or {})
        cols = [np.broadcast_to(np.asarray(ex.eval_expr(c, env), dtype=float), (points.shape[0],)) for c in self.components]
        return np.stack(cols, axis=1)

    def render(self) -> list[str]:
        return [ex.render(c) for c in self.components]


@dataclass(frozen=True)
class Jet:
    """All derivatives D^I X^a(x) with |I| <= order, one row per component."""

    order: int
    point: tuple[float, ...]
    indices: tuple[ex.MultiIndex, ...]
    values: np.ndarray  # shape (n_components, len(indices))

    @property
    def table(self) -> dict[tuple[ex.MultiIndex, int], float]:
        return {
            (I, a): float(self.values[a, k])
            for a in range(self.values.shape[0])
            for k, I in enumerate(self.indices)
        }

    def derivative(self, index, component: int) -> float:
        return float(self.values[component, self.indices.index(ex.MultiIndex(index))])

    def jacobian(self) -> np.ndarray:
        """First-order block: J[a, i] = d X^a / d x^i."""
        n = len(self.point)
        cols = [self.indices.index(ex.MultiIndex.unit(n, i)) for i in range(n)]
        return self.values[:, cols].copy()


@dataclass(frozen=True)
class CompactBox:
    intervals: tuple[tuple[float, float], ...]
    resolution: tuple[int, ...] = ()

    def __post_init__(self):
        ivs = tuple((float(a), float(b)) for a, b in self.intervals)
        object.__setattr__(self, "intervals", ivs)
        res = tuple(self.resolution) or (DEFAULT_GRID,) * len(ivs)
        if len(res) == 1 and len(ivs) > 1:
            res = res * len(ivs)
        object.__setattr__(self, "resolution", tuple(int(r) for r in res))
        if len(self.resolution) != len(ivs):
            raise ValidationError("one grid resolution per axis required")
        for (a, b), r in zip(ivs, self.resolution):
            if not (math.isfinite(a) and math.isfinite(b)) or a > b:
                raise ValidationError(f"bad interval [{a}, {b}]")
            if r < 2:
                raise ValidationError("grid resolution must be at least 2 per axis")

    @classmethod
    def cube(cls, lo, hi, dim, resolution=DEFAULT_GRID):
        return cls(((lo, hi),) * dim, (resolution,) * dim)

    @property
    def dim(self):
        return len(self.intervals)

    def grid(self) -> np.ndarray:
        axes = [np.linspace(a, b, r) for (a, b), r in zip(self.intervals, self.resolution)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True)
class WeightSeq:
    """Finite prefix a_0 >= a_1 >= ... >= a_M > 0 of a weight sequence."""

    weights: tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(a) for a in self.weights)
        object.__setattr__(self, "weights", w)
        if not w:
            raise ValidationError("weight sequence is empty")
        if any(not a > 0 for a in w):
            raise ValidationError("weights must be strictly positive")
        if any(b > a for a, b in zip(w, w[1:])):
            raise ValidationError("weights must be nonincreasing")

    @property
    def truncation(self) -> int:
        return len(self.weights) - 1


# -- jets --------------------------------------------------------------------


def _taylor_fields(X: VectorFieldChart, points, order, params=None):
    """Taylor coefficients for every component; shape (n_comp, N, P)."""
    return np.stack([taylor_eval(c, X.coords, points, order, params) for c in X.components])


def jet_eval(X: VectorFieldChart, x, m: int, params=None) -> Jet:
    """The m-jet of X at x."""
    if m < 0:
        raise ValueError("jet order must be nonnegative")
    coeffs = _taylor_fields(X, np.asarray([x], dtype=float), m, params)[:, :, 0]
    B = basis(X.dim, m)
    return Jet(m, tuple(float(v) for v in x), tuple(B.indices), coeffs * B.factorials[None, :])


def jet_fibre_norm(j: Jet) -> float:
    facts = np.array([float(I.factorial) for I in j.indices])
    orders = [I.order for I in j.indices]
    kfact = np.array([float(math.factorial(k)) for k in orders])
    # (1/k!)^2 (k!/I!) (D^I X^a)^2
    w = 1.0 / (kfact * facts)
    return float(math.sqrt(np.sum(w[None, :] * j.values**2)))


def _fibre_norms_sq_by_order(coeffs, B):
    """Per-point contribution of each order k to the squared fibre norm.

    ``coeffs`` holds Taylor coefficients c_I = D^I X / I!, for which the
    weighted term (1/k!)^2 (k!/I!) (D^I X)^2 equals (I!/k!) c_I^2.
    """
    kfact = np.array([float(math.factorial(k)) for k in B.orders])
    w = B.factorials / kfact
    terms = np.sum(w[None, :, None] * coeffs**2, axis=0)  # (N, P)
    out = np.zeros((B.m + 1, terms.shape[1]))
    np.add.at(out, B.orders, terms)
    return out


def _grid_norms(X, K: CompactBox, m, params=None):
    if K.dim != X.dim:
        raise ValidationError("box dimension does not match the field")
    B = basis(X.dim, m)
    coeffs = _taylor_fields(X, K.grid(), m, params)
    return _fibre_norms_sq_by_order(coeffs, B)


def seminorm_cm(X: VectorFieldChart, K: CompactBox, m: int, params=None) -> float:
    """Grid supremum over K of the order-m jet fibre norm."""
    per_order = _grid_norms(X, K, m, params)
    return float(np.sqrt(np.max(np.sum(per_order, axis=0))))


def seminorms_by_order(X: VectorFieldChart, K: CompactBox, M: int, params=None) -> np.ndarray:
    """seminorm_cm for every m = 0..M from one Taylor sweep."""
    per_order = _grid_norms(X, K, M, params)
    return np.sqrt(np.max(np.cumsum(per_order, axis=0), axis=1))


def dilatation_matrices(X: VectorFieldChart, points, m: int, params=None) -> np.ndarray:
    """Matrices M(x) with ||grad_v j_m X(x)|| = |M(x) v| for every direction v.

    Rows run over (k <= m, component a, |J| = k) and carry the weight
    (1/k!) sqrt(k!/J!); column i holds D^{J+e_i} X^a(x).
    """
    n = X.dim
    B = basis(n, m + 1)
    coeffs = _taylor_fields(X, points, m + 1, params)  # (ncomp, N, P)
    derivs = coeffs * B.factorials[None, :, None]
    rows = []
    for J in B.indices:
        k = J.order
        if k > m:
            break
        scale = math.sqrt(math.factorial(k) / J.factorial) / math.factorial(k)
        cols = [B.pos[J + ex.MultiIndex.unit(n, i)] for i in range(n)]
        for a in range(derivs.shape[0]):
            rows.append(scale * derivs[a, cols, :])  # (n, P)
    mats = np.stack(rows, axis=0)  # (R, n, P)
    return np.transpose(mats, (2, 0, 1))


def seminorm_lip(X: VectorFieldChart, K: CompactBox, m: int, params=None) -> tuple[float, float]:
    """(lambda^m_K, p^{m+lip}_K): sup of the jet dilatation and the max with p^m_K."""
    mats = dilatation_matrices(X, K.grid(), m, params)
    sv = np.linalg.svd(mats, compute_uv=False)
    lam = float(np.max(sv[:, 0]))
    return lam, max(lam, seminorm_cm(X, K, m, params))


@dataclass(frozen=True)
class OmegaValue:
    value: float
    order: int  # order at which the maximum is attained
    truncation: int


def seminorm_omega(X: VectorFieldChart, K: CompactBox, a: WeightSeq, params=None) -> OmegaValue:
    """max over m <= M of a_0...a_m * p^m_K(X), M the weight truncation."""
    s = seminorms_by_order(X, K, a.truncation, params)
    prods = np.cumprod(np.array(a.weights))
    vals = prods * s
    k = int(np.argmax(vals))
    return OmegaValue(float(vals[k]), k, a.truncation)


@dataclass(frozen=True)
class RadiusFit:
    C: float
    r: float  # math.inf when jets vanish beyond some order
    residual: float
    orders: tuple[int, ...] = field(default=())
    seminorms: tuple[float, ...] = field(default=())


def analytic_radius(X: VectorFieldChart, K: CompactBox, M: int, params=None) -> RadiusFit:
    """Fit p^m_K(X) ~ C r^-m over the upper half of orders m = ceil(M/2)..M.

    The fit is least squares in natural logarithms; ``residual`` is the
    largest absolute log residual.  If every derivative of order in the fit
    window vanishes on the grid the field is treated as polynomial and
    ``r = inf`` is returned with ``C = p^0_K``.
    """
    if M < 6:
        raise ValidationError("radius fit needs M >= 6")
    per_order = _grid_norms(X, K, M, params)
    s = np.sqrt(np.max(np.cumsum(per_order, axis=0), axis=1))
    lo = math.ceil(M / 2)
    ms = np.arange(lo, M + 1)
    if np.all(per_order[lo:] == 0.0):
        return RadiusFit(float(s[0]), math.inf, 0.0, tuple(int(m) for m in ms), tuple(float(v) for v in s))
    if np.any(s[ms] == 0):
        raise ValidationError("seminorm vanishes inside the fit window")
    A = np.column_stack([np.ones(len(ms)), -ms.astype(float)])
    y = np.log(s[ms])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.max(np.abs(A @ coef - y)))
    return RadiusFit(
        float(math.exp(coef[0])),
        float(math.exp(coef[1])),
        resid,
        tuple(int(m) for m in ms),
        tuple(float(v) for v in s),
    )
