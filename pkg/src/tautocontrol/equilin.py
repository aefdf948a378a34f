"""Equilibria, equilibrium linearisations and the linear-controllability test.

At an equilibrium x0 the family members vanishing at x0 induce linear maps
A_{X,x0} = DX(x0) on the tangent space (equivalently v -> [V, X](x0) for
any V with V(x0) = v).  Together with the achievable tangent values F(x0)
they are the data of the linearisation.  For control-affine systems the
vanishing members form an affine family f'_0 + span{sum_a w^a f_a}, whose
linear maps are A_0 + span{B_i}; invariance under such an affine family is
invariance under A_0 and every B_i.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import NotAnEquilibrium, ValidationError
from .jets import VectorFieldChart, jet_eval
from .simplex import HullCertificate, zero_in_convex_hull
from .system import SystemSpec

EQ_TOL = 1e-10
RANK_TOL = 1e-10


def jacobian(X: VectorFieldChart, x) -> np.ndarray:
    return jet_eval(X, x, 1).jacobian()


@dataclass(frozen=True)
class EquilibriumControls:
    """Controls making x0 an equilibrium.

    For affine systems with infinite control sets the solutions of
    f_0(x0) + sum_a u^a f_a(x0) = 0 form u0 + span(kernel).  For finite
    families ``members`` lists the indices (generators or control points)
    whose field vanishes at x0.  ``binding`` is set when box constraints cut
    the affine solution set down to a lower-dimensional piece.
    """

    u0: tuple[float, ...] = ()
    kernel: tuple[tuple[float, ...], ...] = ()
    residual: float = 0.0
    members: tuple[int, ...] = ()
    binding: bool = False


def _nullspace(M: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis of ker M as columns."""
    k = M.shape[1]
    if k == 0:
        return np.zeros((0, 0))
    _, s, Vt = np.linalg.svd(M, full_matrices=True)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > tol * smax)) if smax > 0 else 0
    return Vt[rank:].T.copy()


def _scale(v) -> float:
    return max(1.0, float(np.max(np.abs(v), initial=0.0)))


def find_equilibrium_controls(S: SystemSpec, x0) -> EquilibriumControls | None:
    x0 = tuple(float(v) for v in x0)
    if len(x0) != S.dim:
        raise ValidationError("point dimension does not match the system")
    if S.kind == "generators":
        vals = [g(x0) for g in S.generators]
        members = tuple(i for i, v in enumerate(vals) if np.linalg.norm(v) <= EQ_TOL)
        if not members:
            return None
        return EquilibriumControls(members=members, residual=max(float(np.linalg.norm(vals[i])) for i in members))

    f0 = S.drift(x0)
    F = S.control_matrix(x0)
    cs = S.control_set
    if cs.kind == "finite":
        res = [float(np.linalg.norm(f0 + F @ np.array(p))) for p in cs.points]
        members = tuple(i for i, r in enumerate(res) if r <= EQ_TOL * _scale(f0))
        if not members:
            return None
        return EquilibriumControls(u0=cs.points[members[0]], members=members, residual=max(res[i] for i in members))

    k = S.n_controls
    if k:
        u0, *_ = np.linalg.lstsq(F, -f0, rcond=None)
    else:
        u0 = np.zeros(0)
    residual = float(np.linalg.norm(f0 + F @ u0))
    if residual > EQ_TOL * _scale(f0):
        return None
    W = _nullspace(F)
    binding = False
    if cs.kind == "box" and not cs.contains(u0, tol=EQ_TOL):
        u0 = _box_point(u0, W, cs.bounds)
        if u0 is None:
            return None
    if cs.kind == "box" and W.size:
        W2 = _box_directions(u0, W, cs.bounds)
        binding = W2.shape[1] < W.shape[1]
        W = W2
    kernel = tuple(tuple(float(a) for a in W[:, i]) for i in range(W.shape[1]))
    return EquilibriumControls(tuple(float(a) for a in u0), kernel, residual, binding=binding)


def _box_point(u0, W, bounds):
    """A point of (u0 + span W) inside the box, or None."""
    p = W.shape[1]
    if p == 0:
        return None
    # variables t; constraints lo <= u0 + W t <= hi
    A = np.vstack([W, -W])
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    rhs = np.concatenate([hi - u0, u0 - lo])
    keep = np.isfinite(rhs)
    res = linprog(np.zeros(p), A_ub=A[keep], b_ub=rhs[keep], bounds=[(None, None)] * p, method="highs")
    if res.status != 0:
        return None
    return u0 + W @ res.x


def _box_directions(u0, W, bounds) -> np.ndarray:
    """Directions of the affine hull of (u0 + span W) intersected with the box.

    A bound is an implicit equality when its slack cannot be made positive;
    the surviving directions are those preserving every implicit equality.
    """
    p = W.shape[1]
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    A = np.vstack([W, -W])
    rhs = np.concatenate([hi - u0, u0 - lo])
    keep = np.isfinite(rhs)
    tight = []
    for i in np.flatnonzero(keep):
        # maximise the slack rhs_i - A_i t
        res = linprog(A[i], A_ub=A[keep], b_ub=rhs[keep], bounds=[(None, None)] * p, method="highs")
        if res.status == 0 and rhs[i] - A[i] @ res.x <= EQ_TOL:
            tight.append(A[i])
    if not tight:
        return W
    N = _nullspace(np.array(tight))
    if N.size == 0:
        return np.zeros((W.shape[0], 0))
    return W @ N


@dataclass(frozen=True)
class LinearizationAtEquilibrium:
    """Linear maps A0 + span{B_i} and achievable values F(x0).

    F(x0) is ``b_base + span(b_directions)`` for infinite control sets and
    the finite list ``b_points`` otherwise.  ``B`` holds the control columns
    f_a(x0) of an affine system.
    """

    A0: np.ndarray
    directions: tuple[np.ndarray, ...]
    b_base: np.ndarray | None = None
    b_directions: np.ndarray | None = None
    b_points: np.ndarray | None = None
    B: np.ndarray | None = None


def equilibrium_linearization(S: SystemSpec, x0, eq: EquilibriumControls) -> LinearizationAtEquilibrium:
    x0 = tuple(float(v) for v in x0)
    if S.kind == "generators":
        mats = [jacobian(S.generators[i], x0) for i in eq.members]
        pts = np.array([g(x0) for g in S.generators])
        return LinearizationAtEquilibrium(
            mats[0], tuple(M - mats[0] for M in mats[1:]), b_points=pts
        )
    A0 = jacobian(S.affine_field(eq.u0), x0)
    Dfs = [jacobian(f, x0) for f in S.control_fields]
    f0 = S.drift(x0)
    F = S.control_matrix(x0)
    cs = S.control_set
    if cs.kind == "finite":
        mats = [jacobian(S.affine_field(cs.points[i]), x0) for i in eq.members]
        pts = np.array([f0 + F @ np.array(p) for p in cs.points])
        return LinearizationAtEquilibrium(A0, tuple(M - A0 for M in mats[1:]), b_points=pts, B=F)
    dirs = tuple(sum((w[a] * Dfs[a] for a in range(len(w))), np.zeros_like(A0)) for w in eq.kernel)
    if cs.kind == "all":
        free = list(range(S.n_controls))
    else:
        free = [a for a, (lo, hi) in enumerate(cs.bounds) if hi > lo]
    base = f0 + F @ np.array(eq.u0)
    return LinearizationAtEquilibrium(A0, dirs, b_base=base, b_directions=orth(F[:, free]), B=F)


def orth(vectors: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis (columns) of the column space, rank cut relative to
    the largest singular value."""
    if vectors.size == 0:
        return np.zeros((vectors.shape[0], 0))
    U, s, _ = np.linalg.svd(vectors, full_matrices=False)
    if s[0] == 0:
        return np.zeros((vectors.shape[0], 0))
    r = int(np.sum(s > tol * s[0]))
    return U[:, :r].copy()


def _mgs_append(Q: list[np.ndarray], w: np.ndarray, threshold: float) -> np.ndarray | None:
    for _ in range(2):  # reorthogonalise once for stability
        for q in Q:
            w = w - (q @ w) * q
    nrm = float(np.linalg.norm(w))
    if nrm <= threshold:
        return None
    return w / nrm


def invariant_subspace(generators, S, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis (columns) of the smallest subspace containing S and
    invariant under every matrix in ``generators``.

    Closure iteration: every accepted basis vector is pushed through every
    generator; images are orthogonalised (modified Gram-Schmidt) against
    the current basis and kept if the remainder exceeds ``tol`` times the
    generator's spectral norm.
    """
    gens = [np.asarray(L, dtype=float) for L in generators]
    vecs = [np.asarray(v, dtype=float).ravel() for v in S]
    if not vecs and not gens:
        raise ValueError("need a dimension: give at least one vector or matrix")
    n = vecs[0].size if vecs else gens[0].shape[0]
    if n > 16:
        raise ValueError("dimension above 16 is not supported")
    s_scale = max((float(np.linalg.norm(v)) for v in vecs), default=0.0)
    norms = [float(np.linalg.norm(L, 2)) if L.size else 0.0 for L in gens]
    Q: list[np.ndarray] = []
    queue: list[np.ndarray] = []
    for v in vecs:
        q = _mgs_append(Q, v, tol * s_scale)
        if q is not None:
            Q.append(q)
            queue.append(q)
    while queue and len(Q) < n:
        q = queue.pop(0)
        for L, nrm in zip(gens, norms):
            if nrm == 0.0:
                continue
            w = _mgs_append(Q, L @ q, tol * nrm)
            if w is not None:
                Q.append(w)
                queue.append(w)
                if len(Q) == n:
                    break
    if not Q:
        return np.zeros((n, 0))
    return np.column_stack(Q)


@dataclass(frozen=True)
class ControllabilityVerdict:
    controllable: bool
    dim: int
    n: int
    basis: np.ndarray
    equilibrium: EquilibriumControls
    linearization: LinearizationAtEquilibrium
    hull: HullCertificate | None = None
    tolerance: float = RANK_TOL
    notes: tuple[str, ...] = field(default=())


def is_linearly_controllable(S: SystemSpec, x0) -> ControllabilityVerdict:
    """Decide linear controllability at the equilibrium x0.

    The definition asks for some S within F(x0) with 0 in its convex hull
    and <L, S> the whole tangent space.  Since S -> <L, S> is monotone the
    largest admissible S decides the question: for infinite control sets
    F(x0) is convex and contains 0, so S = F(x0) and its span is the span of
    the free control directions; for finite families S = F(x0) provided 0 is
    in its convex hull.
    """
    eq = find_equilibrium_controls(S, x0)
    if eq is None:
        raise NotAnEquilibrium(f"{tuple(x0)} is not an equilibrium point of the system")
    lin = equilibrium_linearization(S, x0, eq)
    mats = [lin.A0, *lin.directions]
    notes = []
    hull = None
    if lin.b_points is not None:
        hull = zero_in_convex_hull(lin.b_points)
        if not hull.contains_zero:
            n = lin.A0.shape[0]
            notes.append("0 is not in the convex hull of F(x0)")
            return ControllabilityVerdict(False, 0, n, np.zeros((n, 0)), eq, lin, hull, notes=tuple(notes))
        vectors = list(lin.b_points)
    else:
        vectors = list(lin.b_directions.T)
    if eq.binding:
        notes.append("control bounds restrict the equilibrium controls")
    n = lin.A0.shape[0]
    if not vectors:
        vectors = [np.zeros(n)]
    basis = invariant_subspace(mats, vectors)
    d = basis.shape[1]
    return ControllabilityVerdict(d == n, d, n, basis, eq, lin, hull, notes=tuple(notes))

