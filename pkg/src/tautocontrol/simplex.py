"""Dense phase-one simplex with Bland's rule, for small feasibility problems."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-12
FEAS_TOL = 1e-9


def phase_one(A: np.ndarray, b: np.ndarray, max_iter: int = 10_000):
    """Find x >= 0 with A x = b, or return None if the system is infeasible.

    Artificial variables are added for every row and their sum is minimised;
    Bland's smallest-index rule keeps pivoting deterministic and acyclic.
    """
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    m, n = A.shape
    flip = b < 0
    A[flip] *= -1
    b[flip] *= -1
    # tableau columns: x (n), artificials (m), rhs
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n : n + m] = np.eye(m)
    T[:m, -1] = b
    basis = list(range(n, n + m))
    # objective row holds reduced costs of minimising the artificial sum
    T[m, :n] = -A.sum(axis=0)
    T[m, -1] = -b.sum()
    scale = max(1.0, float(np.abs(A).max(initial=0.0)), float(np.abs(b).max(initial=0.0)))
    for _ in range(max_iter):
        entering = next((j for j in range(n + m) if T[m, j] < -PIVOT_TOL * scale), None)
        if entering is None:
            break
        col = T[:m, entering]
        best = None
        for i in range(m):
            if col[i] > PIVOT_TOL * scale:
                ratio = T[i, -1] / col[i]
                if (
                    best is None
                    or ratio < best[0] - PIVOT_TOL
                    or (abs(ratio - best[0]) <= PIVOT_TOL and basis[i] < basis[best[1]])
                ):
                    best = (ratio, i)
        if best is None:  # cannot happen for a phase-one objective bounded below by 0
            break
        r = best[1]
        T[r] /= T[r, entering]
        for i in range(m + 1):
            if i != r and T[i, entering] != 0.0:
                T[i] -= T[i, entering] * T[r]
        basis[r] = entering
    else:
        raise RuntimeError("simplex iteration limit reached")
    if -T[m, -1] > FEAS_TOL * scale:
        return None
    x = np.zeros(n)
    for i, j in enumerate(basis):
        if j < n:
            x[j] = max(T[i, -1], 0.0)
    return x


@dataclass(frozen=True)
class HullCertificate:
    contains_zero: bool
    weights: tuple[float, ...] | None  # convex weights with sum w_i v_i = 0
    residual: float = 0.0


def zero_in_convex_hull(vectors) -> HullCertificate:
    """Decide whether 0 is a convex combination of ``vectors``."""
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    if V.size == 0:
        raise ValueError("need at least one vector")
    k, n = V.shape
    if n > 16:
        raise ValueError("dimension above 16 is not supported")
    A = np.vstack([V.T, np.ones((1, k))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    lam = phase_one(A, b)
    if lam is None:
        return HullCertificate(False, None)
    lam = lam / lam.sum()
    resid = float(np.linalg.norm(V.T @ lam))
    return HullCertificate(True, tuple(float(v) for v in lam), resid)


def extreme_points(points, tol: float = 1e-12) -> list[int]:
    """Indices of points that are vertices of the convex hull (duplicates
    collapse to their first occurrence)."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    keep = []
    for i, p in enumerate(P):
        if any(np.allclose(p, P[j], atol=tol, rtol=0) for j in keep):
            continue
        keep.append(i)
    out = []
    for i in keep:
        others = [P[j] - P[i] for j in keep if j != i]
        if not others or not zero_in_convex_hull(others).contains_zero:
            out.append(i)
    return out
