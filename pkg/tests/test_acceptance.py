"""Acceptance criteria 1-9, each at its stated tolerance and time budget.

Every test records a one-line verdict that the terminal summary prints.
"""

import json
import math
import time
from itertools import product

import numpy as np
from conftest import ACCEPTANCE, DATA, make_system
from scipy.linalg import expm

from tautocontrol import expr as ex
from tautocontrol.cli import run_captured
from tautocontrol.equilin import invariant_subspace, is_linearly_controllable
from tautocontrol.flow import integrate_open_loop, jacobian_fd_oracle, parse_schedule, variational_flow
from tautocontrol.jets import (
    CompactBox,
    VectorFieldChart,
    WeightSeq,
    analytic_radius,
    jet_eval,
    jet_fibre_norm,
    seminorm_cm,
    seminorm_lip,
    seminorm_omega,
)
from tautocontrol.srgeo import CometricSpec, curve_energy, geodesic_shoot
from tautocontrol.system import LocalSelection, OpenSubset, glue_check

EX = str(DATA / "example.json")
A1 = np.array([[0, 1, 0], [0, 0, 0], [0, 0, 0]], dtype=float)
A2 = np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]], dtype=float)
B_COLS = np.array([[0, 0], [0, 0], [0, 1]], dtype=float)
E3 = np.array([0.0, 0.0, 1.0])


class Checks:
    def __init__(self, number, budget):
        self.number, self.budget = number, budget
        self.items = []
        self.t0 = time.perf_counter()

    def add(self, name, ok, detail=""):
        self.items.append((name, bool(ok), detail))

    def finish(self):
        elapsed = time.perf_counter() - self.t0
        self.add(f"runtime<{self.budget}s", elapsed < self.budget, f"{elapsed:.2f}s")
        failed = [f"{n} ({d})" if d else n for n, ok, d in self.items if not ok]
        passed = not failed
        summary = "; ".join(f"{n}={d}" for n, _, d in self.items if d)
        ACCEPTANCE[self.number] = (passed, summary + ("" if passed else "  FAILED: " + ", ".join(failed)))
        print(f"criterion {self.number}: {'PASS' if passed else 'FAIL'}  {summary}")
        assert passed, "failed checks: " + ", ".join(failed)


def _span_is_e3(directions):
    D = np.atleast_2d(np.asarray(directions, dtype=float))
    return D.shape[0] == 1 and np.allclose(np.abs(D[0]), E3, atol=1e-12, rtol=0)


def test_criterion_1_reference_flow_matrices():
    c = Checks(1, 1.0)
    for sel, expected, name in (("u=0,0", A1, "A1"), ("u=1,0", A2, "A2")):
        code, out, err = run_captured(["linearize", EX, "--point", "0,0,0", "--about-flow", sel, "--json"])
        c.add(f"exit[{name}]", code == 0, err.strip())
        doc = json.loads(out)
        dev = float(np.max(np.abs(np.array(doc["A"]) - expected)))
        c.add(name, dev <= 1e-12, f"max|dA|={dev:.1e}")
        c.add(f"B[{name}]", np.max(np.abs(np.array(doc["B"]) - B_COLS)) <= 1e-12)
        c.add(f"b-space[{name}]", _span_is_e3(doc["b_space"]["directions"]))
        c.add(f"vanishes[{name}]", doc["reference_vanishes"])
    c.finish()


def test_criterion_2_controllability_dichotomy(example):
    c = Checks(2, 1.0)
    d1 = invariant_subspace([A1], [E3]).shape[1]
    d2 = invariant_subspace([A2], [E3]).shape[1]
    c.add("dim<A1,e3>", d1 == 1, str(d1))
    c.add("dim<A2,e3>", d2 == 3, str(d2))
    v = is_linearly_controllable(example, (0, 0, 0))
    mats = [v.linearization.A0, *v.linearization.directions]
    c.add("generators {A0,B}", len(mats) == 2 and np.allclose(mats[0], A1, atol=1e-12))
    c.add("tautological test", v.controllable and v.dim == 3, f"controllable={v.controllable},dim={v.dim}")
    c.finish()


def _kalman_rank(A, B):
    n = A.shape[0]
    blocks, P = [], B
    for _ in range(n):
        blocks.append(P)
        P = A @ P
    s = np.linalg.svd(np.hstack(blocks), compute_uv=False)
    return int(np.sum(s > 1e-10 * s[0])) if s[0] > 0 else 0


def _unimodular(rng, n):
    L = np.tril(rng.integers(-1, 2, size=(n, n)), -1) + np.eye(n)
    U = np.triu(rng.integers(-1, 2, size=(n, n)), 1) + np.eye(n)
    return L @ U, np.linalg.inv(U) @ np.linalg.inv(L)


def _random_pair(rng):
    """Random (A, B), n <= 5; about half carry an uncontrollable block."""
    n = int(rng.integers(1, 6))
    k = int(rng.integers(1, 4))
    A = rng.integers(-2, 3, size=(n, n)).astype(float)
    B = rng.integers(-2, 3, size=(n, k)).astype(float)
    if n > 1 and rng.random() < 0.5:
        r = int(rng.integers(1, n))
        A[r:, :r] = 0  # block triangular: e_{r+1..n} unreachable
        B[r:, :] = 0
        T, Ti = _unimodular(rng, n)
        A, B = np.round(T @ A @ Ti), np.round(T @ B)
    return A, B


def test_criterion_3_kalman_equivalence():
    c = Checks(3, 5.0)
    rng = np.random.default_rng(20240603)
    agree, deficient = 0, 0
    for _ in range(200):
        A, B = _random_pair(rng)
        ours = invariant_subspace([A], list(B.T)).shape[1]
        kal = _kalman_rank(A, B)
        agree += ours == kal
        deficient += kal < A.shape[0]
    c.add("agreement", agree == 200, f"{agree}/200")
    c.add("mix", 0 < deficient < 200, f"{deficient} rank-deficient")
    c.finish()


def test_criterion_4_variational_identity(example):
    c = Checks(4, 5.0)
    sched = parse_schedule("0:1:u=0.5,1;1:2:u=1,-0.5")
    x0 = (0.1, -0.2, 0.3)
    J_var = np.column_stack([variational_flow(example, sched, x0, e, 1e-3).fibre[-1] for e in np.eye(3)])
    J_fd = jacobian_fd_oracle(example, sched, x0, 1e-3, eps=1e-5)
    dev = float(np.max(np.abs(J_var - J_fd)))
    c.add("fibre vs FD", dev <= 1e-4, f"max dev {dev:.1e}")
    rot = make_system({"dim": 2, "coords": ["x", "y"], "kind": "generators", "generators": [["y", "-x"]]})
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    worst = 0.0
    for T in (0.7, math.pi / 2, 3.0):
        for v0 in ((1.0, 0.0), (0.3, -2.0)):
            traj = variational_flow(rot, parse_schedule(f"0:{T!r}:gen=0"), (0.2, 0.1), v0, 1e-3)
            worst = max(worst, float(np.max(np.abs(traj.fibre[-1] - expm(T * A) @ v0))))
    c.add("rotation vs exp(tA)", worst <= 1e-7, f"max dev {worst:.1e}")
    c.finish()


def _f_r(r):
    return VectorFieldChart.parse(["r^2/(r^2+x^2)"], ("x",), constants={"r": r})


def test_criterion_5_analyticity_radius():
    c = Checks(5, 10.0)
    K = CompactBox(((-1, 1),), (801,))
    for r in (0.5, 0.25):
        j = jet_eval(_f_r(r), (0.0,), 14)
        coeffs = [j.derivative((k,), 0) / math.factorial(k) for k in range(0, 15, 2)]
        oracle = [(-1) ** i * r ** (-2 * i) for i in range(8)]
        c.add(f"coeffs r={r}", np.allclose(coeffs, oracle, rtol=1e-12, atol=0))
        fit = analytic_radius(_f_r(r), K, 14)
        c.add(f"r_hat(r={r})", abs(fit.r / r - 1) <= 0.10, f"{fit.r:.5f}")
        c.add(f"residual(r={r})", fit.residual < 0.05, f"{fit.residual:.4f}")
    radii = [analytic_radius(_f_r(r), K, 14).r for r in (1.0, 0.5, 0.25, 0.125, 0.0625)]
    c.add("r_hat decreasing to 0", all(a > b for a, b in zip(radii, radii[1:])) and radii[-1] < 0.07)
    c.finish()


def _random_poly_field(rng, n):
    coords = ("x", "y", "z")[:n]
    monos = [(), *((i,) for i in range(n))]
    monos += [(i, j) for i in range(n) for j in range(i, n)]
    monos += [(i, j, k) for i in range(n) for j in range(i, n) for k in range(j, n)]
    comps = []
    for _ in range(n):
        terms = []
        for mono in monos:
            if rng.random() < 0.4:
                coef = float(np.round(rng.uniform(-2, 2), 3))
                terms.append("*".join([repr(coef), *(coords[i] for i in mono)]))
        comps.append(" + ".join(terms) or "0")
    return VectorFieldChart.parse(comps, coords)


def test_criterion_6_seminorm_axioms():
    c = Checks(6, 30.0)
    rng = np.random.default_rng(6)
    tol = 1e-12
    bad = {"triangle": 0, "homogeneity": 0, "K-monotone": 0, "m-monotone": 0}
    for _ in range(500):
        n = int(rng.integers(1, 4))
        X, Y = _random_poly_field(rng, n), _random_poly_field(rng, n)
        small = CompactBox(((-0.5, 0.5),) * n, (5,) * n)
        big = CompactBox(((-1, 1),) * n, (9,) * n)  # contains the small grid
        m = int(rng.integers(0, 3))
        lam = float(np.round(rng.uniform(-3, 3), 3))
        w = WeightSeq(tuple(np.round(np.sort(rng.uniform(0.2, 1.0, 4))[::-1], 3)))
        w_short = WeightSeq(w.weights[:3])
        kinds = {
            "cm": lambda Z, K, k=0: seminorm_cm(Z, K, m + k),
            "lip": lambda Z, K, k=0: seminorm_lip(Z, K, m + k)[1],
            "omega": lambda Z, K, k=0: seminorm_omega(Z, K, w if k else w_short).value,
        }
        for p in kinds.values():
            pX, pY = p(X, big), p(Y, big)
            scale = 1.0 + pX + pY
            bad["triangle"] += p(X + Y, big) > pX + pY + tol * scale
            bad["homogeneity"] += abs(p(X.scale(lam), big) - abs(lam) * pX) > tol * scale * (1 + abs(lam))
            bad["K-monotone"] += p(X, small) > pX + tol * scale
            bad["m-monotone"] += pX > p(X, big, 1) + tol * scale
    for name, count in bad.items():
        c.add(name, count == 0, f"{count} violations")

    # multinomial weights against ordered-tuple sums, every monomial of degree <= 2
    mismatches = 0
    for n in (1, 2, 3):
        coords = ("x", "y", "z")[:n]
        for mono in ex.multi_indices(n, 2):
            text = "*".join([f"{v}^{p}" for v, p in zip(coords, mono) if p] or ["1"])
            for slot in range(n):
                comps = ["0"] * n
                comps[slot] = text
                X = VectorFieldChart.parse(comps, coords)
                x = tuple(rng.uniform(-1, 1, n))
                env = dict(zip(coords, x))
                for m in range(4):
                    total = 0.0
                    for k in range(m + 1):
                        for tup in product(range(n), repeat=k):
                            e = X.components[slot]
                            for i in tup:
                                e = ex.partial(e, coords[i])
                            total += (float(ex.eval_expr(e, env)) / math.factorial(k)) ** 2
                    got = jet_fibre_norm(jet_eval(X, x, m))
                    mismatches += abs(got - math.sqrt(total)) > 1e-13 * max(1.0, got)
    c.add("multinomial oracle", mismatches == 0, f"{mismatches} mismatches")
    c.finish()


def test_criterion_7_sheafification_glue():
    c = Checks(7, 1.0)
    S = make_system({"dim": 1, "coords": ["x"], "kind": "generators", "generators": [["1"], ["2"]]})
    U = OpenSubset((((-2, -1),), ((1, 2),)))
    res = glue_check(S, U, LocalSelection((0, 1)))
    c.add("{dx,2dx} split selection", res == (False, True), str(res))
    rng = np.random.default_rng(7)
    good = 0
    for _ in range(100):
        n = int(rng.integers(1, 3))
        coords = ["x", "y"][:n]
        gens = [[f"{rng.integers(-3, 4)} + {rng.integers(-2, 3)}*{v}^2" for v in coords] for _ in range(rng.integers(1, 4))]
        T = make_system({"dim": n, "coords": coords, "kind": "generators", "generators": gens})
        comps = int(rng.integers(1, 4))
        starts = np.sort(rng.choice(np.arange(-10, 10, 3), size=comps, replace=False)).astype(float)
        boxes = tuple(((s, s + 1.5),) + ((-1.0, 1.0),) * (n - 1) for s in starts)
        k = int(rng.integers(0, len(gens)))
        good += glue_check(T, OpenSubset(boxes), LocalSelection((k,) * comps)) == (True, True)
    c.add("constant selections", good == 100, f"{good}/100")
    c.finish()


def test_criterion_8_flow_closed_forms(example):
    c = Checks(8, 5.0)
    traj = integrate_open_loop(example, parse_schedule("0:1:u=0,1;1:2:u=1,0"), (0, 0, 0), 1e-4)
    dev = float(np.max(np.abs(traj.states[-1] - (0.5, 1, 1))))
    c.add("endpoint (0.5,1,1)", dev <= 1e-10, f"dev {dev:.1e}")
    S = make_system({"dim": 1, "coords": ["x"], "kind": "generators", "generators": [["x"]]})
    sched = parse_schedule("0:1:gen=0")
    e1, e2 = (abs(integrate_open_loop(S, sched, (1.0,), h).states[-1, 0] - math.e) for h in (0.1, 0.05))
    c.add("RK4 order factor", 12 <= e1 / e2 <= 20, f"{e1 / e2:.2f}")
    c.finish()


def test_criterion_9_sub_riemannian():
    c = Checks(9, 5.0)
    XY = ("x", "y")
    euclid = CometricSpec.from_frame([VectorFieldChart.parse(["1", "0"], XY), VectorFieldChart.parse(["0", "1"], XY)])
    worst = 0.0
    for x0, p0 in (((0, 0), (1, 0)), ((0.5, -1), (0.6, 0.8)), ((2, 3), (-1.5, 2))):
        traj = geodesic_shoot(euclid, x0, p0, 1.0, 1e-3)
        exact = np.asarray(x0) + np.outer(traj.times, p0)
        worst = max(worst, float(np.max(np.abs(traj.states - exact))))
    c.add("Euclidean straight", worst <= 1e-8, f"dev {worst:.1e}")
    XYZ = ("x", "y", "z")
    heis = CometricSpec.from_frame(
        [VectorFieldChart.parse(["1", "0", "-y/2"], XYZ), VectorFieldChart.parse(["0", "1", "x/2"], XYZ)]
    )
    traj = geodesic_shoot(heis, (0, 0, 0), (1, 0.5, 2), 5.0, 1e-3)
    H = traj.extra["H"]
    drift = float(np.max(np.abs(H - H[0])) / H[0])
    c.add("Heisenberg H drift", drift <= 1e-7, f"{drift:.1e}")
    energy = curve_energy(heis, traj).energy
    c.add("energy = T*H(0)", abs(energy - 5.0 * H[0]) <= 1e-8, f"dev {abs(energy - 5.0 * H[0]):.1e}")
    c.finish()
