"""Tautological control systems in a chart.

A system is stored either as a finite generator family {X_1, ..., X_N} or in
control-affine form f_0 + sum_a u^a f_a with u ranging over a control set.
Either way the object of interest is the family of vector fields; presheaf
questions are answered for the globally generated presheaf and its
sheafification (locally constant selections of family members).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Sequence

import jsonschema
import numpy as np
from scipy.optimize import linprog

from . import expr as ex
from .errors import ValidationError
from .jets import VectorFieldChart
from .simplex import HullCertificate, extreme_points, zero_in_convex_hull  # noqa: F401

AGREE_TOL = 1e-12

_FIELD = {"type": "array", "items": {"type": "string"}}
_INTERVAL = {"type": "array", "items": {"type": ["number", "null"]}, "minItems": 2, "maxItems": 2}

SYSTEM_SCHEMA = {
    "type": "object",
    "required": ["dim", "coords", "kind"],
    "additionalProperties": False,
    "properties": {
        "dim": {"type": "integer", "minimum": 1},
        "coords": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "kind": {"enum": ["generators", "affine"]},
        "generators": {"type": "array", "items": _FIELD},
        "drift": _FIELD,
        "controls": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "field"],
                "additionalProperties": False,
                "properties": {"name": {"type": "string"}, "field": _FIELD},
            },
        },
        "control_set": {
            "type": "object",
            "required": ["type"],
            "additionalProperties": False,
            "properties": {
                "type": {"enum": ["all", "box", "finite"]},
                "bounds": {"type": "array", "items": _INTERVAL},
                "points": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
            },
        },
        "chart_box": {"type": "array", "items": _INTERVAL},
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(SYSTEM_SCHEMA)


@dataclass(frozen=True)
class ControlSet:
    kind: str  # 'all' | 'box' | 'finite'
    arity: int
    bounds: tuple[tuple[float, float], ...] = ()
    points: tuple[tuple[float, ...], ...] = ()

    def contains(self, u, tol: float = 0.0) -> bool:
        u = tuple(float(v) for v in u)
        if len(u) != self.arity:
            return False
        if self.kind == "all":
            return True
        if self.kind == "box":
            return all(lo - tol <= v <= hi + tol for v, (lo, hi) in zip(u, self.bounds))
        return any(all(abs(a - b) <= tol for a, b in zip(u, p)) for p in self.points)

    def lattice(self, samples: int) -> np.ndarray:
        """Deterministic control samples: the points themselves for finite
        sets, otherwise a tensor lattice with ``samples`` values per axis
        (over [-1, 1] on unbounded axes)."""
        if self.kind == "finite":
            return np.array(self.points, dtype=float).reshape(len(self.points), self.arity)
        if self.arity == 0:
            return np.zeros((1, 0))
        axes = []
        for a in range(self.arity):
            lo, hi = self.bounds[a] if self.kind == "box" else (-1.0, 1.0)
            lo = -1.0 if not math.isfinite(lo) else lo
            hi = 1.0 if not math.isfinite(hi) else hi
            axes.append(np.linspace(lo, hi, samples) if samples > 1 else np.array([(lo + hi) / 2]))
        return np.array(list(itertools.product(*axes)), dtype=float)


@dataclass(frozen=True)
class SystemSpec:
    dim: int
    coords: tuple[str, ...]
    kind: str  # 'generators' | 'affine'
    generators: tuple[VectorFieldChart, ...] = ()
    drift: VectorFieldChart | None = None
    controls: tuple[tuple[str, VectorFieldChart], ...] = ()
    control_set: ControlSet | None = None
    chart_box: tuple[tuple[float, float], ...] = ()

    @property
    def n_controls(self) -> int:
        return len(self.controls)

    @property
    def control_fields(self) -> list[VectorFieldChart]:
        return [f for _, f in self.controls]

    def in_chart(self, x) -> bool:
        return all(lo < v < hi for v, (lo, hi) in zip(x, self.chart_box))

    def family_field(self, selection) -> VectorFieldChart:
        """The family member chosen by a generator index or a control value."""
        if self.kind == "generators":
            k = _as_index(selection)
            if not 0 <= k < len(self.generators):
                raise ValidationError(f"generator index {k} out of range")
            return self.generators[k]
        u = _as_control(selection, self.n_controls)
        if not self.control_set.contains(u, tol=1e-12):
            raise ValidationError(f"control value {u} is outside the control set")
        return self.affine_field(u)

    def affine_field(self, u) -> VectorFieldChart:
        """f_0 + sum_a u^a f_a, built symbolically (no control-set check)."""
        comps = list(self.drift.components)
        for ua, (_, f) in zip(u, self.controls):
            c = ex.const(ua)
            comps = [ex.add(a, ex.mul(c, b)) for a, b in zip(comps, f.components)]
        return VectorFieldChart(self.coords, tuple(comps))

    def control_matrix(self, x) -> np.ndarray:
        """Columns f_a(x)."""
        if not self.controls:
            return np.zeros((self.dim, 0))
        return np.column_stack([f(x) for f in self.control_fields])


def _as_index(selection) -> int:
    if isinstance(selection, (int, np.integer)):
        return int(selection)
    if isinstance(selection, tuple) and selection and selection[0] == "gen":
        return int(selection[1])
    raise ValidationError(f"generator systems need a generator index, got {selection!r}")


def _as_control(selection, k) -> tuple[float, ...]:
    if isinstance(selection, tuple) and selection and selection[0] == "u":
        selection = selection[1]
    elif isinstance(selection, tuple) and selection and selection[0] == "gen":
        raise ValidationError("affine systems are indexed by control values, not generators")
    try:
        u = tuple(float(v) for v in selection)
    except (TypeError, ValueError):
        raise ValidationError(f"affine systems need a control value, got {selection!r}") from None
    if len(u) != k:
        raise ValidationError(f"control value has {len(u)} entries, expected {k}")
    return u


# -- file format -------------------------------------------------------------


def _interval(pair, what):
    lo = -math.inf if pair[0] is None else float(pair[0])
    hi = math.inf if pair[1] is None else float(pair[1])
    if not lo < hi:
        raise ValidationError(f"{what}: empty interval [{lo}, {hi}]")
    return (lo, hi)


def load_system(document: bytes | str) -> SystemSpec:
    """Parse and validate a system file (JSON, UTF-8)."""
    if isinstance(document, bytes):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as err:
            raise ValidationError(f"system file is not UTF-8: {err}") from None
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as err:
        raise ValidationError(f"system file is not valid JSON: {err}") from None
    try:
        _VALIDATOR.validate(doc)
    except jsonschema.ValidationError as err:
        path = "/".join(str(p) for p in err.absolute_path)
        raise ValidationError(f"schema violation at '{path}': {err.message}") from None

    n = doc["dim"]
    coords = tuple(doc["coords"])
    if len(coords) != n:
        raise ValidationError(f"dim is {n} but {len(coords)} coordinates are listed")
    if len(set(coords)) != n:
        raise ValidationError("coordinate names must be distinct")
    for c in coords:
        if c in ex.FUNCTIONS:
            raise ValidationError(f"coordinate name {c!r} clashes with a function name")

    def field(texts, what):
        if len(texts) != n:
            raise ValidationError(f"{what} has {len(texts)} components, expected {n}")
        try:
            return VectorFieldChart.parse(texts, coords)
        except ValidationError as err:
            raise ValidationError(f"{what}: {err}") from None

    box = doc.get("chart_box")
    if box is None:
        chart_box = ((-math.inf, math.inf),) * n
    else:
        if len(box) != n:
            raise ValidationError(f"chart_box has {len(box)} intervals, expected {n}")
        chart_box = tuple(_interval(p, "chart_box") for p in box)

    kind = doc["kind"]
    if kind == "generators":
        for key in ("drift", "controls", "control_set"):
            if key in doc:
                raise ValidationError(f"'{key}' is not allowed for a generator family")
        gens = doc.get("generators") or []
        if not gens:
            raise ValidationError("generator family is empty")
        generators = tuple(field(g, f"generator {i}") for i, g in enumerate(gens))
        return SystemSpec(n, coords, kind, generators=generators, chart_box=chart_box)

    if "generators" in doc:
        raise ValidationError("'generators' is not allowed for an affine system")
    if "drift" not in doc:
        raise ValidationError("affine system needs a drift")
    drift = field(doc["drift"], "drift")
    controls = []
    for i, c in enumerate(doc.get("controls", [])):
        if c["name"] in coords:
            raise ValidationError(f"control name {c['name']!r} clashes with a coordinate")
        controls.append((c["name"], field(c["field"], f"control {c['name']!r}")))
    if len({name for name, _ in controls}) != len(controls):
        raise ValidationError("control names must be distinct")
    k = len(controls)
    cs = doc.get("control_set", {"type": "all"})
    if cs["type"] == "all":
        if "bounds" in cs or "points" in cs:
            raise ValidationError("control set 'all' takes no bounds or points")
        control_set = ControlSet("all", k)
    elif cs["type"] == "box":
        bounds = cs.get("bounds")
        if bounds is None or len(bounds) != k:
            raise ValidationError(f"box control set needs {k} bounds")
        ivs = []
        for p in bounds:
            lo = -math.inf if p[0] is None else float(p[0])
            hi = math.inf if p[1] is None else float(p[1])
            if lo > hi:
                raise ValidationError(f"control bounds [{lo}, {hi}] are empty")
            ivs.append((lo, hi))
        control_set = ControlSet("box", k, bounds=tuple(ivs))
    else:
        pts = cs.get("points")
        if not pts:
            raise ValidationError("finite control set needs points")
        if any(len(p) != k for p in pts):
            raise ValidationError(f"every control point needs {k} entries")
        control_set = ControlSet("finite", k, points=tuple(tuple(float(v) for v in p) for p in pts))
    return SystemSpec(
        n, coords, kind, drift=drift, controls=tuple(controls), control_set=control_set, chart_box=chart_box
    )


def _num(v: float):
    if math.isinf(v):
        return None
    return float(f"{v:.17g}")


def system_to_dict(S: SystemSpec) -> dict:
    doc = {"dim": S.dim, "coords": list(S.coords), "kind": S.kind}
    if S.kind == "generators":
        doc["generators"] = [g.render() for g in S.generators]
    else:
        doc["drift"] = S.drift.render()
        doc["controls"] = [{"name": name, "field": f.render()} for name, f in S.controls]
        cs = S.control_set
        doc["control_set"] = {"type": cs.kind}
        if cs.kind == "box":
            doc["control_set"]["bounds"] = [[_num(lo), _num(hi)] for lo, hi in cs.bounds]
        elif cs.kind == "finite":
            doc["control_set"]["points"] = [[_num(v) for v in p] for p in cs.points]
    doc["chart_box"] = [[_num(lo), _num(hi)] for lo, hi in S.chart_box]
    return doc


def render_system(S: SystemSpec) -> str:
    """Canonical system-file text; ``load_system`` inverts it exactly."""
    return json.dumps(system_to_dict(S), indent=2, ensure_ascii=False) + "\n"


# -- differential inclusion --------------------------------------------------


@dataclass(frozen=True)
class Inclusion:
    """Tangent values achievable at a point.

    ``values`` are the sampled (or, for finite families, all) vectors.
    ``base`` and ``directions`` describe the affine hull for affine systems
    with unbounded controls; ``hull_vertices`` is filled when the convex hull
    is requested.
    """

    point: tuple[float, ...]
    values: np.ndarray
    exact: bool
    base: np.ndarray | None = None
    directions: np.ndarray | None = None
    hull_vertices: np.ndarray | None = None


def inclusion_at(S: SystemSpec, x, samples: int = 5, cohull: bool = False) -> Inclusion:
    x = tuple(float(v) for v in x)
    if len(x) != S.dim:
        raise ValidationError("point dimension does not match the system")
    if not S.in_chart(x):
        raise ValidationError(f"point {x} is outside the chart box")
    base = directions = None
    if S.kind == "generators":
        vals = np.array([g(x) for g in S.generators])
        exact = True
    else:
        f0 = S.drift(x)
        F = S.control_matrix(x)
        us = S.control_set.lattice(samples)
        vals = f0[None, :] + us @ F.T
        exact = S.control_set.kind == "finite"
        if S.control_set.kind == "all":
            base, directions = f0, F.T.copy()
    hull = None
    if cohull:
        hull = vals[extreme_points(vals)]
    return Inclusion(x, vals, exact, base, directions, hull)


# -- presheaf and sheafification ---------------------------------------------


@dataclass(frozen=True)
class OpenSubset:
    """Finite disjoint union of open boxes."""

    boxes: tuple[tuple[tuple[float, float], ...], ...]

    def __post_init__(self):
        boxes = tuple(tuple((float(a), float(b)) for a, b in box) for box in self.boxes)
        object.__setattr__(self, "boxes", boxes)
        if not boxes:
            raise ValidationError("open set has no components")
        for box in boxes:
            if any(not (math.isfinite(a) and math.isfinite(b) and a < b) for a, b in box):
                raise ValidationError(f"box {box} is empty or unbounded")
        for b1, b2 in itertools.combinations(boxes, 2):
            if all(max(a1, a2) < min(h1, h2) for (a1, h1), (a2, h2) in zip(b1, b2)):
                raise ValidationError(f"boxes {b1} and {b2} overlap")

    def probes(self, component: int, per_axis: int = 7) -> np.ndarray:
        """Interior lattice: ``per_axis`` points on the first three axes,
        midpoints on the rest."""
        box = self.boxes[component]
        axes = []
        for i, (a, b) in enumerate(box):
            if i < 3:
                axes.append([a + (j + 1) * (b - a) / (per_axis + 1) for j in range(per_axis)])
            else:
                axes.append([(a + b) / 2])
        return np.array(list(itertools.product(*axes)), dtype=float)


@dataclass(frozen=True)
class LocalSelection:
    """One family member per component: a generator index or a control value."""

    choices: tuple


def _agree(a: np.ndarray, b: np.ndarray) -> bool:
    return bool(np.all(np.abs(a - b) <= AGREE_TOL * np.maximum(1.0, np.abs(b))))


def glue_check(S: SystemSpec, U: OpenSubset, sel: LocalSelection, probes: int = 7) -> tuple[bool, bool]:
    """(in_presheaf, in_sheafification) for the local section given by ``sel``.

    The section lies in the sheafification when each component carries a
    valid family member; it lies in the globally generated presheaf when one
    member restricts to it on every component (decided on probe lattices).
    """
    if len(sel.choices) != len(U.boxes):
        raise ValidationError("selection needs one entry per component")
    for box in U.boxes:
        if len(box) != S.dim:
            raise ValidationError("box dimension does not match the system")
        if not all(lo >= clo and hi <= chi for (lo, hi), (clo, chi) in zip(box, S.chart_box)):
            raise ValidationError(f"box {box} leaves the chart")
    # membership of each local piece; raises on invalid members
    local = [S.family_field(c) for c in sel.choices]
    in_sheafification = True

    pts = [U.probes(i, probes) for i in range(len(U.boxes))]
    targets = [f.evaluate_many(p) for f, p in zip(local, pts)]

    if S.kind == "generators":
        for g in S.generators:
            if all(_agree(g.evaluate_many(p), t) for p, t in zip(pts, targets)):
                return True, in_sheafification
        return False, in_sheafification
    return _affine_glue(S, pts, targets), in_sheafification


def _affine_glue(S, pts, targets) -> bool:
    """Is there one control u with F(., u) matching every target?

    Stacks the linear conditions sum_a u^a f_a(x) = target(x) - f_0(x) over
    all probes and solves subject to the control set.
    """
    rows, rhs = [], []
    for p, t in zip(pts, targets):
        f0 = S.drift.evaluate_many(p)
        cols = [f.evaluate_many(p).ravel() for f in S.control_fields]
        rows.append(np.column_stack(cols) if cols else np.zeros((f0.size, 0)))
        rhs.append((t - f0).ravel())
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    cs = S.control_set

    def fits(u):
        return _agree(A @ u, b)

    if cs.kind == "finite":
        return any(fits(np.array(p)) for p in cs.points)
    if A.shape[1] == 0:
        return _agree(np.zeros_like(b), b)
    u, *_ = np.linalg.lstsq(A, b, rcond=None)
    if not fits(u):
        return False
    if cs.kind == "all" or cs.contains(u, tol=1e-12):
        return True
    # the solution set is affine; look for a point of it inside the box
    bounds = [(None if math.isinf(lo) else lo, None if math.isinf(hi) else hi) for lo, hi in cs.bounds]
    res = linprog(np.zeros(A.shape[1]), A_eq=A, b_eq=b, bounds=bounds, method="highs")
    return bool(res.status == 0 and fits(res.x))
