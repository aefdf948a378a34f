"""Integration of piecewise-constant open-loop systems and variational flows.

Each piece of a schedule freezes one family member; on a piece the flow is
integrated with classical RK4 at a fixed step, adjusted so the piece end is
a mesh point.  The variational flow integrates the tangent lift, whose base
part is evaluated by the very same compiled code as the plain flow, so base
states agree bit for bit.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .errors import ChartEscape, DomainError, ValidationError
from .jets import VectorFieldChart
from .lift import fibre_coords
from .system import SystemSpec


@dataclass(frozen=True)
class Piece:
    t0: float
    t1: float
    selection: tuple  # ('gen', k) or ('u', (u1, ..., uk))


@dataclass(frozen=True)
class OpenLoopSchedule:
    pieces: tuple[Piece, ...]

    def __post_init__(self):
        if not self.pieces:
            raise ValidationError("schedule is empty")
        for p in self.pieces:
            if not (math.isfinite(p.t0) and math.isfinite(p.t1)) or not p.t0 < p.t1:
                raise ValidationError(f"bad schedule interval [{p.t0}, {p.t1})")
        for a, b in zip(self.pieces, self.pieces[1:]):
            if a.t1 != b.t0:
                raise ValidationError(f"schedule intervals are not consecutive at t={a.t1}")

    @property
    def t0(self):
        return self.pieces[0].t0

    @property
    def tf(self):
        return self.pieces[-1].t1

    def validate_for(self, S: SystemSpec):
        for p in self.pieces:
            S.family_field(p.selection)


_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_PIECE = re.compile(rf"^\s*({_NUM})\s*:\s*({_NUM})\s*:\s*(u|gen)\s*=\s*(.*?)\s*$")


def parse_schedule(text: str) -> OpenLoopSchedule:
    """Parse ``t0:t1:u=c1,c2;t1:t2:gen=k;...``."""
    pieces = []
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        m = _PIECE.match(chunk)
        if not m:
            raise ValidationError(f"bad schedule piece {chunk!r}")
        t0, t1, kind, val = float(m[1]), float(m[2]), m[3], m[4]
        if kind == "gen":
            if not re.fullmatch(r"\d+", val):
                raise ValidationError(f"bad generator index {val!r}")
            sel = ("gen", int(val))
        else:
            try:
                sel = ("u", tuple(float(v) for v in val.split(","))) if val else ("u", ())
            except ValueError:
                raise ValidationError(f"bad control value {val!r}") from None
        pieces.append(Piece(t0, t1, sel))
    return OpenLoopSchedule(tuple(pieces))


def render_schedule(sched: OpenLoopSchedule) -> str:
    out = []
    for p in sched.pieces:
        if p.selection[0] == "gen":
            sel = f"gen={p.selection[1]}"
        else:
            sel = "u=" + ",".join(repr(float(v)) for v in p.selection[1])
        out.append(f"{p.t0!r}:{p.t1!r}:{sel}")
    return ";".join(out)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    fibre: np.ndarray | None = None
    extra: dict = field(default_factory=dict)  # named per-sample columns
    escaped: bool = False
    message: str = ""


def _steps(t0, t1, h):
    ratio = (t1 - t0) / h
    n = round(ratio)
    if n < 1 or abs(ratio - n) > 1e-9 * max(1.0, ratio):
        n = max(1, math.ceil(ratio))
    return n


class _Evaluator:
    """Compiled right-hand side with a fallback that names domain errors."""

    def __init__(self, exprs, args):
        self.exprs = list(exprs)
        self.args = tuple(args)
        self.fn = ex.compile_exprs(self.exprs, self.args)

    def __call__(self, state):
        try:
            return self.fn(*state)
        except (ValueError, ZeroDivisionError, OverflowError):
            env = dict(zip(self.args, state))
            for e in self.exprs:
                ex.eval_expr(e, env)
            raise DomainError(f"numerical failure evaluating the vector field at {tuple(state)}")


def _rk4_run(rhs, y0, t0, t1, h, inside, times, rows, n_base):
    """Advance y from t0 to t1; appends mesh rows.  Returns (y, escaped)."""
    n = _steps(t0, t1, h)
    dt = (t1 - t0) / n
    y = list(y0)
    for i in range(n):
        k1 = rhs(y)
        y2 = [a + 0.5 * dt * b for a, b in zip(y, k1)]
        k2 = rhs(y2)
        y3 = [a + 0.5 * dt * b for a, b in zip(y, k2)]
        k3 = rhs(y3)
        y4 = [a + dt * b for a, b in zip(y, k3)]
        k4 = rhs(y4)
        y = [a + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4) for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)]
        t = t1 if i == n - 1 else t0 + (i + 1) * dt
        times.append(t)
        rows.append(y)
        if not inside(y[:n_base]):
            return y, True
    return y, False


def _integrate(S, sched, x0, h, fields_for_piece, y0, n_base):
    if not h > 0:
        raise ValidationError("step must be positive")
    sched.validate_for(S)
    x0 = [float(v) for v in x0]
    if len(x0) != S.dim:
        raise ValidationError("initial state dimension does not match the system")
    if not S.in_chart(x0):
        raise ValidationError(f"initial state {tuple(x0)} is outside the chart box")
    times = [sched.t0]
    rows = [list(y0)]
    y = list(y0)
    escaped = False
    for piece in sched.pieces:
        rhs = fields_for_piece(piece)
        y, escaped = _rk4_run(rhs, y, piece.t0, piece.t1, h, S.in_chart, times, rows, n_base)
        if escaped:
            break
    arr = np.array(rows, dtype=float)
    traj = Trajectory(np.array(times), arr[:, :n_base], arr[:, n_base:] if arr.shape[1] > n_base else None)
    if escaped:
        traj.escaped = True
        traj.message = f"left the chart box at t={times[-1]!r}"
    return traj


def _piece_field(S: SystemSpec, piece: Piece) -> VectorFieldChart:
    return S.family_field(piece.selection)


def integrate_open_loop(S: SystemSpec, sched: OpenLoopSchedule, x0, step: float, raise_on_escape=False) -> Trajectory:
    """RK4 trajectory of the open-loop system from x0 at t0.

    Leaving the chart box stops the run; the partial trajectory is returned
    with ``escaped`` set (or raised inside :class:`ChartEscape`).
    """
    cache = {}

    def rhs_for(piece):
        key = piece.selection
        if key not in cache:
            X = _piece_field(S, piece)
            cache[key] = _Evaluator(X.components, S.coords)
        ev = cache[key]
        return lambda y: ev(y)

    traj = _integrate(S, sched, x0, step, rhs_for, [float(v) for v in x0], S.dim)
    if traj.escaped and raise_on_escape:
        raise ChartEscape(traj.message, traj)
    return traj


def variational_flow(S: SystemSpec, sched: OpenLoopSchedule, x0, v0, step: float, raise_on_escape=False) -> Trajectory:
    """Flow of the tangent lift: base states as in :func:`integrate_open_loop`,
    fibre states v(t) = D Phi(t, t0)(x0) v0."""
    n = S.dim
    v0 = [float(v) for v in v0]
    if len(v0) != n:
        raise ValidationError("fibre vector dimension does not match the system")
    vs = fibre_coords(S.coords)
    cache = {}

    def rhs_for(piece):
        key = piece.selection
        if key not in cache:
            X = _piece_field(S, piece)
            base = _Evaluator(X.components, S.coords)
            fib = []
            for comp in X.components:
                acc = ex.ZERO
                for xk, vk in zip(S.coords, vs):
                    acc = ex.add(acc, ex.mul(ex.partial(comp, xk), ex.Var(vk)))
                fib.append(acc)
            fibre = _Evaluator(fib, S.coords + vs)
            cache[key] = (base, fibre)
        base, fibre = cache[key]
        return lambda y: base(y[:n]) + fibre(y)

    y0 = [float(v) for v in x0] + v0
    traj = _integrate(S, sched, x0, step, rhs_for, y0, n)
    if traj.escaped and raise_on_escape:
        raise ChartEscape(traj.message, traj)
    return traj


def jacobian_fd_oracle(S: SystemSpec, sched: OpenLoopSchedule, x0, step: float, eps: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian of the final-time flow map."""
    if not 1e-7 <= eps <= 1e-3:
        raise ValidationError("eps must lie in [1e-7, 1e-3]")
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    J = np.zeros((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = eps
        xp, xm = x0 + e, x0 - e
        plus = integrate_open_loop(S, sched, xp, step, raise_on_escape=True).states[-1]
        minus = integrate_open_loop(S, sched, xm, step, raise_on_escape=True).states[-1]
        # divide by the representable spacing so the identity flow gives I exactly
        J[:, j] = (plus - minus) / (xp[j] - xm[j])
    return J


def integrate_field(X: VectorFieldChart, x0, T: float, step: float, t0: float = 0.0, chart_box=None) -> Trajectory:
    """RK4 flow of a single autonomous field (any chart), used for lifted
    and Hamiltonian fields."""
    box = chart_box or ((-math.inf, math.inf),) * X.dim
    inside = lambda y: all(lo < v < hi for v, (lo, hi) in zip(y, box))  # noqa: E731
    ev = _Evaluator(X.components, X.coords)
    times = [t0]
    rows = [[float(v) for v in x0]]
    y, escaped = _rk4_run(ev, rows[0], t0, t0 + T, step, inside, times, rows, X.dim)
    traj = Trajectory(np.array(times), np.array(rows, dtype=float))
    if escaped:
        traj.escaped = True
        traj.message = f"left the chart box at t={times[-1]!r}"
    return traj
