"""Sub-Riemannian structures given by cometrics; normal geodesics and energy.

The cometric g#(x) maps covectors to admissible velocities.  For a frame
f_1..f_k it is sum_a f_a f_a^T, so the maximum Hamiltonian is

    H(x, p) = 1/2 p^T g#(x) p = 1/2 sum_a <p, f_a(x)>^2,

and normal geodesics are projections of integral curves of the
Hamiltonian vector field (dx/dt = dH/dp, dp/dt = -dH/dx).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid

from . import expr as ex
from .errors import ValidationError
from .flow import Trajectory, integrate_field
from .jets import VectorFieldChart
from .lift import fibre_coords

PSD_TOL = 1e-10


@dataclass(frozen=True)
class CometricSpec:
    coords: tuple[str, ...]
    frame: tuple[VectorFieldChart, ...] = ()
    matrix: tuple[tuple[ex.Expr, ...], ...] = ()

    def __post_init__(self):
        if bool(self.frame) == bool(self.matrix):
            raise ValidationError("give exactly one of a frame or a cometric matrix")
        n = len(self.coords)
        for f in self.frame:
            if f.coords != tuple(self.coords):
                raise ValidationError("frame field lives in a different chart")
        if self.matrix:
            if len(self.matrix) != n or any(len(r) != n for r in self.matrix):
                raise ValidationError(f"cometric matrix must be {n}x{n}")
            for i in range(n):
                for j in range(i):
                    if self.matrix[i][j] != self.matrix[j][i]:
                        raise ValidationError("cometric matrix is not symmetric")

    @classmethod
    def from_frame(cls, frame: Sequence[VectorFieldChart]):
        frame = tuple(frame)
        if not frame:
            raise ValidationError("empty frame")
        return cls(frame[0].coords, frame=frame)

    @property
    def dim(self):
        return len(self.coords)

    def gsharp(self, x) -> np.ndarray:
        if self.frame:
            F = np.column_stack([f(x) for f in self.frame])
            return F @ F.T
        env = dict(zip(self.coords, (float(v) for v in x)))
        return np.array([[float(ex.eval_expr(e, env)) for e in row] for row in self.matrix])

    def check_psd(self, points) -> float:
        """Smallest eigenvalue over ``points``; raises when below -1e-10."""
        worst = np.inf
        for x in points:
            lam = float(np.linalg.eigvalsh(self.gsharp(x))[0])
            worst = min(worst, lam)
            if lam < -PSD_TOL:
                raise ValidationError(f"cometric is not positive semidefinite at {tuple(x)}")
        return worst

    def momentum_coords(self) -> tuple[str, ...]:
        return fibre_coords(self.coords, prefix="p")


def hamiltonian_max(C: CometricSpec) -> ex.Expr:
    """H = 1/2 g#(x)(p, p) over coordinates (x, p)."""
    ps = [ex.Var(p) for p in C.momentum_coords()]
    half = ex.const(0.5)
    if C.frame:
        acc = ex.ZERO
        for f in C.frame:
            pair = ex.ZERO
            for comp, p in zip(f.components, ps):
                pair = ex.add(pair, ex.mul(p, comp))
            acc = ex.add(acc, ex.power(pair, 2))
        return ex.mul(half, acc)
    acc = ex.ZERO
    for i, row in enumerate(C.matrix):
        for j, gij in enumerate(row):
            acc = ex.add(acc, ex.mul(ex.mul(gij, ps[i]), ps[j]))
    return ex.mul(half, acc)


def hamiltonian_field(C: CometricSpec) -> VectorFieldChart:
    H = hamiltonian_max(C)
    ps = C.momentum_coords()
    xdot = [ex.partial(H, p) for p in ps]
    pdot = [ex.neg(ex.partial(H, x)) for x in C.coords]
    return VectorFieldChart(C.coords + ps, tuple(xdot + pdot))


def geodesic_shoot(C: CometricSpec, x0, p0, T: float, step: float, chart_box=None) -> Trajectory:
    """Normal geodesic from (x0, p0) over [0, T]; ``extra['H']`` holds H(t)."""
    n = C.dim
    if len(x0) != n or len(p0) != n:
        raise ValidationError("x0 and p0 must match the chart dimension")
    if not step > 0 or not T > 0:
        raise ValidationError("T and step must be positive")
    X = hamiltonian_field(C)
    box = None
    if chart_box is not None:
        box = tuple(chart_box) + ((-np.inf, np.inf),) * n
    y0 = [float(v) for v in x0] + [float(v) for v in p0]
    raw = integrate_field(X, y0, T, step, chart_box=box)
    H = ex.compile_exprs([hamiltonian_max(C)], X.coords)
    hvals = np.array([H(*row)[0] for row in raw.states])
    return Trajectory(
        raw.times,
        raw.states[:, :n],
        raw.states[:, n:],
        extra={"H": hvals},
        escaped=raw.escaped,
        message=raw.message,
    )


@dataclass(frozen=True)
class EnergyReport:
    energy: float
    admissibility_residual: np.ndarray  # |gamma' - g# p| per sample


def curve_energy(C: CometricSpec, traj: Trajectory) -> EnergyReport:
    """E = 1/2 int g(gamma', gamma') dt = int H(x, p) dt for gamma' = g# p,
    by the trapezoidal rule; velocities from second-order differences are
    compared against g# p to report admissibility."""
    if traj.fibre is None:
        raise ValidationError("curve energy needs momenta along the trajectory")
    t = traj.times
    xs, ps = traj.states, traj.fibre
    if len(t) < 2:
        return EnergyReport(0.0, np.zeros(len(t)))
    gps = np.array([C.gsharp(x) @ p for x, p in zip(xs, ps)])
    integrand = np.einsum("ij,ij->i", ps, gps)  # g#(p, p) = 2H
    energy = 0.5 * float(trapezoid(integrand, t))
    if len(t) > 2:
        vel = np.gradient(xs, t, axis=0, edge_order=2)
    else:
        vel = np.repeat(np.diff(xs, axis=0) / np.diff(t)[:, None], 2, axis=0)
    resid = np.linalg.norm(vel - gps, axis=1)
    return EnergyReport(energy, resid)
