"""Command-line front end.

Analyses print JSON, trajectories print CSV (``--json`` switches to JSON).
Exit status: 0 success, 2 invalid input, 3 numerical or domain failure.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import re
import sys
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path

import numpy as np

from . import __version__
from . import expr as ex
from .equilin import equilibrium_linearization, find_equilibrium_controls, is_linearly_controllable, jacobian
from .errors import ChartEscape, NumericError, ValidationError
from .flow import integrate_open_loop, parse_schedule, variational_flow
from .jets import CompactBox, VectorFieldChart, WeightSeq, analytic_radius, seminorm_cm, seminorm_lip, seminorm_omega
from .lift import linearization_field, tangent_lift, vertical_lift
from .srgeo import CometricSpec, curve_energy, geodesic_shoot
from .system import LocalSelection, OpenSubset, SystemSpec, glue_check, load_system

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3


# -- argument helpers --------------------------------------------------------


def _floats(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not all(math.isfinite(v) for v in vals):
        raise argparse.ArgumentTypeError(f"non-finite value in {text!r}")
    return vals


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return v


def _nonneg_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("expected a nonnegative integer")
    return v


def _box(text: str) -> tuple[tuple[float, float], ...]:
    """``lo,hi x lo,hi x ...``"""
    out = []
    for part in text.split("x"):
        vals = _floats(part.strip())
        if len(vals) != 2:
            raise argparse.ArgumentTypeError(f"box factor {part!r} needs lo,hi")
        out.append(vals)
    return tuple(out)


def _subset(text: str):
    return tuple(_box(chunk) for chunk in text.split(";") if chunk.strip())


def _selection(text: str):
    text = text.strip()
    if text.startswith("gen="):
        try:
            return ("gen", int(text[4:]))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad generator index in {text!r}") from None
    if text.startswith("u="):
        return ("u", _floats(text[2:]) if text[2:] else ())
    raise argparse.ArgumentTypeError(f"selection must be gen=k or u=c1,c2,..., got {text!r}")


def _selections(text: str):
    return tuple(_selection(s) for s in text.split(";") if s.strip())


def _field(S: SystemSpec, spec: str) -> VectorFieldChart:
    """Resolve drift | control:NAME | control:k | gen:k | u=... | gen=k."""
    if spec == "drift":
        if S.kind != "affine":
            raise ValidationError("generator families have no drift")
        return S.drift
    if spec.startswith("control:"):
        key = spec[len("control:") :]
        for i, (name, f) in enumerate(S.controls):
            if key == name or key == str(i):
                return f
        raise ValidationError(f"no control field {key!r}")
    if spec.startswith("gen:"):
        spec = "gen=" + spec[4:]
    try:
        sel = _selection(spec)
    except argparse.ArgumentTypeError as err:
        raise ValidationError(f"bad --field {spec!r}: {err}") from None
    return S.family_field(sel)


# -- output helpers ----------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _emit_json(doc):
    print(json.dumps(_jsonable(doc), indent=2))


def _g(v: float) -> str:
    return format(float(v), ".17g")


def _emit_csv(header, columns):
    print(",".join(header))
    rows = np.column_stack(columns)
    out = io.StringIO()
    for row in rows:
        out.write(",".join(_g(v) for v in row))
        out.write("\n")
    sys.stdout.write(out.getvalue())


def _load(path: str) -> SystemSpec:
    try:
        data = Path(path).read_bytes()
    except OSError as err:
        raise ValidationError(f"cannot read system file: {err}") from None
    return load_system(data)


def _check_point(S: SystemSpec, x, what="--point"):
    if len(x) != S.dim:
        raise ValidationError(f"{what} has {len(x)} entries, expected {S.dim}")


# -- commands ----------------------------------------------------------------


def cmd_equilibria(args):
    S = _load(args.system)
    _check_point(S, args.point)
    eq = find_equilibrium_controls(S, args.point)
    doc = {"point": args.point, "equilibrium": eq is not None}
    if eq is not None:
        if S.kind == "generators":
            doc["vanishing_generators"] = eq.members
        else:
            doc["equilibrium_controls"] = {
                "u0": eq.u0,
                "kernel": eq.kernel,
                "members": eq.members,
                "binding": eq.binding,
            }
        doc["residual"] = eq.residual
    _emit_json(doc)
    return EXIT_OK


def _bspace(lin):
    if lin.b_points is not None:
        return {"points": lin.b_points}
    return {"base": lin.b_base, "directions": lin.b_directions.T}


def cmd_linearize(args):
    S = _load(args.system)
    _check_point(S, args.point)
    x0 = args.point
    if args.about_flow is None:
        eq = find_equilibrium_controls(S, x0)
        if eq is None:
            raise NumericError(f"{x0} is not an equilibrium point of the system")
        lin = equilibrium_linearization(S, x0, eq)
        doc = {
            "point": x0,
            "equilibrium_controls": {"u0": eq.u0, "kernel": eq.kernel, "members": eq.members},
            "A0": lin.A0,
            "B": list(lin.directions),
            "b_space": _bspace(lin),
        }
        if lin.B is not None:
            doc["control_columns"] = lin.B
        _emit_json(doc)
        return EXIT_OK

    X = S.family_field(args.about_flow)
    Xval = X(x0)
    A = jacobian(X, x0)
    if S.kind == "affine":
        names = tuple(name for name, _ in S.controls)
        Y = VectorFieldChart(S.coords, S.drift.components, names)
        for name, f in S.controls:
            Y = Y + VectorFieldChart(S.coords, tuple(ex.mul(ex.Var(name), c) for c in f.components), (name,))
        doubled = [linearization_field(X, Y)]
        F = S.control_matrix(x0)
        f0 = S.drift(x0)
        from .equilin import orth

        bspace = {"base": f0, "directions": orth(F).T}
        columns = F
    else:
        doubled = [linearization_field(X, g) for g in S.generators]
        bspace = {"points": np.array([g(x0) for g in S.generators])}
        columns = None
    if not args.json:
        for D in doubled:
            if len(doubled) > 1:
                print(f"# X^T + X_{doubled.index(D)}^V")
            for name, comp in zip(D.coords, D.components):
                print(f"d{name}/dt = {ex.render(comp)}")
        return EXIT_OK
    doc = {
        "point": x0,
        "reference": _render_sel(args.about_flow),
        "reference_vanishes": bool(np.all(np.abs(Xval) <= 1e-10)),
        "A": A,
        "b_space": bspace,
        "tangent_lift": {"coords": tangent_lift(X).coords, "components": tangent_lift(X).render()},
        "doubled_fields": [{"coords": D.coords, "params": D.params, "components": D.render()} for D in doubled],
    }
    if columns is not None:
        doc["B"] = columns
        doc["vertical_lifts"] = [vertical_lift(f).render() for f in S.control_fields]
    _emit_json(doc)
    return EXIT_OK


def _render_sel(sel):
    if sel[0] == "gen":
        return f"gen={sel[1]}"
    return "u=" + ",".join(repr(float(v)) for v in sel[1])


def cmd_lincon(args):
    S = _load(args.system)
    _check_point(S, args.point)
    v = is_linearly_controllable(S, args.point)
    lin = v.linearization
    doc = {
        "point": args.point,
        "verdict": v.controllable,
        "dim": v.dim,
        "n": v.n,
        "equilibrium_controls": {"u0": v.equilibrium.u0, "kernel": v.equilibrium.kernel, "members": v.equilibrium.members},
        "A0": lin.A0,
        "B": list(lin.directions),
        "b_space": _bspace(lin),
        "subspace_basis": v.basis.T,
        "tolerance": v.tolerance,
        "notes": v.notes,
    }
    if v.hull is not None:
        doc["zero_in_hull"] = {"contains_zero": v.hull.contains_zero, "weights": v.hull.weights}
    _emit_json(doc)
    return EXIT_OK


def cmd_simulate(args):
    S = _load(args.system)
    _check_point(S, args.x0, "--x0")
    try:
        sched = parse_schedule(args.schedule)
    except ValidationError as err:
        raise ValidationError(f"--schedule: {err}") from None
    if args.v0 is not None:
        _check_point(S, args.v0, "--v0")
        traj = variational_flow(S, sched, args.x0, args.v0, args.step)
    else:
        traj = integrate_open_loop(S, sched, args.x0, args.step)
    header = ["t", *S.coords]
    cols = [traj.times, traj.states]
    if traj.fibre is not None:
        from .lift import fibre_coords

        header += list(fibre_coords(S.coords))
        cols.append(traj.fibre)
    if args.json:
        doc = {"header": header, "rows": np.column_stack(cols), "escaped": traj.escaped}
        _emit_json(doc)
    else:
        _emit_csv(header, cols)
    if traj.escaped:
        print(f"error: {traj.message}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _compact_box(S, args):
    if len(args.box) != S.dim:
        raise ValidationError(f"--box has {len(args.box)} factors, expected {S.dim}")
    if args.grid < 2:
        raise ValidationError("--grid must be at least 2")
    return CompactBox(args.box, (args.grid,) * S.dim)


def cmd_seminorm(args):
    S = _load(args.system)
    X = _field(S, args.field)
    K = _compact_box(S, args)
    doc = {"kind": args.kind, "grid": args.grid, "field": args.field}
    if args.kind == "omega":
        if args.weights is None:
            raise ValidationError("--kind omega needs --weights")
        res = seminorm_omega(X, K, WeightSeq(args.weights))
        doc.update(value=res.value, order=res.order, truncation=res.truncation)
    else:
        if args.order is None:
            raise ValidationError(f"--kind {args.kind} needs --order")
        if args.kind == "cm":
            doc.update(value=seminorm_cm(X, K, args.order), order=args.order, truncation=None)
        else:
            lam, p = seminorm_lip(X, K, args.order)
            doc.update(value=p, dilatation=lam, order=args.order, truncation=None)
    _emit_json(doc)
    return EXIT_OK


def cmd_radius(args):
    S = _load(args.system)
    X = _field(S, args.field)
    K = _compact_box(S, args)
    fit = analytic_radius(X, K, args.max_order)
    _emit_json(
        {
            "field": args.field,
            "C": fit.C,
            "r": fit.r,
            "residual": fit.residual,
            "fit_orders": fit.orders,
            "seminorms": fit.seminorms,
            "grid": args.grid,
            "truncation": args.max_order,
        }
    )
    return EXIT_OK


def cmd_srgeo(args):
    S = _load(args.system)
    frame = list(S.control_fields) if S.kind == "affine" else list(S.generators)
    if not frame:
        raise ValidationError("system has no frame fields (controls or generators)")
    C = CometricSpec.from_frame(frame)
    x0 = _floats(args.shoot[0])
    p0 = _floats(args.shoot[1])
    T = _positive(args.shoot[2])
    _check_point(S, x0, "x0")
    _check_point(S, p0, "p0")
    if not S.in_chart(x0):
        raise ValidationError(f"x0 {x0} is outside the chart box")
    traj = geodesic_shoot(C, x0, p0, T, args.step, chart_box=S.chart_box)
    ps = C.momentum_coords()
    if args.json:
        H = traj.extra["H"]
        energy = curve_energy(C, traj)
        h0 = float(H[0])
        drift = float(np.max(np.abs(H - h0)) / abs(h0)) if h0 != 0 else float(np.max(np.abs(H)))
        _emit_json(
            {
                "x_final": traj.states[-1],
                "p_final": traj.fibre[-1],
                "H0": h0,
                "relative_H_drift": drift,
                "energy": energy.energy,
                "max_admissibility_residual": float(np.max(energy.admissibility_residual)),
                "escaped": traj.escaped,
                "samples": len(traj.times),
            }
        )
    else:
        _emit_csv(["t", *S.coords, *ps, "H"], [traj.times, traj.states, traj.fibre, traj.extra["H"]])
    if traj.escaped:
        print(f"error: {traj.message}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_glue(args):
    S = _load(args.system)
    U = OpenSubset(args.subset)
    sel = LocalSelection(args.select)
    pre, sheaf = glue_check(S, U, sel, args.probes)
    _emit_json({"in_presheaf": pre, "in_sheafification": sheaf, "components": len(U.boxes)})
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="tautocontrol",
        description="Analyse tautological control systems described by JSON system files.",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def command(name, help_text, fn):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.add_argument("system", help="system file (JSON)")
        sp.add_argument("--json", action="store_true", help="machine-readable JSON output")
        sp.set_defaults(func=fn)
        # let values such as "-1,1x-1,1" through as arguments
        sp._negative_number_matcher = re.compile(r"^-[\d.]")
        return sp

    sp = command("equilibria", "Find controls making a point an equilibrium.", cmd_equilibria)
    sp.add_argument("--point", type=_floats, required=True, help="state x0 as c1,c2,...")

    sp = command("linearize", "Equilibrium linearisation, or linearisation about a reference flow.", cmd_linearize)
    sp.add_argument("--point", type=_floats, required=True)
    sp.add_argument(
        "--about-flow",
        type=_selection,
        default=None,
        metavar="SEL",
        help="reference family member: gen=k or u=c1,c2,... (prints the doubled field; --json for matrices)",
    )

    sp = command("lincon", "Decide linear controllability at an equilibrium.", cmd_lincon)
    sp.add_argument("--point", type=_floats, required=True)

    sp = command("simulate", "Integrate a piecewise-constant open-loop schedule (CSV).", cmd_simulate)
    sp.add_argument("--schedule", required=True, help="t0:t1:u=c1,c2;t1:t2:gen=k;...")
    sp.add_argument("--x0", type=_floats, required=True)
    sp.add_argument("--step", type=_positive, required=True)
    sp.add_argument("--v0", type=_floats, default=None, help="fibre vector; integrates the variational flow too")

    sp = command("seminorm", "Seminorm of a family field over a box.", cmd_seminorm)
    sp.add_argument("--field", required=True, help="drift | control:NAME | gen=k | u=c1,c2,...")
    sp.add_argument("--box", type=_box, required=True, help="lo,hi x lo,hi x ...")
    sp.add_argument("--order", type=_nonneg_int, default=None)
    sp.add_argument("--kind", choices=("cm", "lip", "omega"), default="cm")
    sp.add_argument("--weights", type=_floats, default=None, help="a0,a1,...,aM for --kind omega")
    sp.add_argument("--grid", type=int, default=17, help="grid points per axis (default 17)")

    sp = command("radius", "Fit the growth p^m_K <= C r^-m of jet seminorms.", cmd_radius)
    sp.add_argument("--field", required=True)
    sp.add_argument("--box", type=_box, required=True)
    sp.add_argument("--max-order", type=_nonneg_int, default=14)
    sp.add_argument("--grid", type=int, default=17)

    sp = command("srgeo", "Shoot a normal sub-Riemannian geodesic (CSV t,x...,p...,H).", cmd_srgeo)
    sp.add_argument("--shoot", nargs=3, metavar=("X0", "P0", "T"), required=True)
    sp.add_argument("--step", type=_positive, default=1e-3)

    sp = command("glue", "Presheaf / sheafification membership of a local selection.", cmd_glue)
    sp.add_argument("--subset", type=_subset, required=True, help="boxes 'lo,hi x lo,hi;lo,hi x ...'")
    sp.add_argument("--select", type=_selections, required=True, help="one selection per box: 'gen=0;gen=1'")
    sp.add_argument("--probes", type=int, default=7)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_INVALID
    try:
        return args.func(args)
    except ValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    except ChartEscape as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except NumericError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OverflowError, FloatingPointError, np.linalg.LinAlgError) as err:
        print(f"error: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


def run_captured(argv) -> tuple[int, str, str]:
    """Run the CLI in-process, returning (exit code, stdout, stderr)."""
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = run(argv)
    return code, out.getvalue(), err.getvalue()


def main():
    sys.exit(run())
