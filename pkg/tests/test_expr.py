import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tautocontrol import expr as ex
from tautocontrol.errors import DomainError, ExprSyntaxError

XYZ = ("x1", "x2", "x3")


# -- examples ----------------------------------------------------------------


def test_single_variable():
    assert ex.parse_expr("x2", XYZ) == ex.Var("x2")


def test_additive_zero_folds_away():
    e = ex.parse_expr("x3*u1 + 0", XYZ + ("u1",))
    assert e == ex.Binary("*", ex.Var("x3"), ex.Var("u1"))
    assert ex.render(e) == "x3 * u1"


def test_bound_constant():
    e = ex.parse_expr("r^2/(r^2+x^2)", ("x",), {"r": 0.5})
    assert ex.eval_expr(e, {"x": 1.0}) == pytest.approx(0.2, abs=1e-15)
    assert ex.eval_expr(e, {"x": 0.0}) == 1.0
    assert ex.free_vars(e) == {"x"}


def test_eval_examples():
    assert ex.eval_expr(ex.Var("x2"), {"x1": 0, "x2": 7, "x3": 0}) == 7
    e = ex.parse_expr("x3*u1", ("x3", "u1"))
    assert ex.eval_expr(e, {"x3": 2, "u1": 3}) == 6


def test_diff_examples():
    assert ex.diff(ex.Var("x2"), (0, 1, 0), XYZ) == ex.ONE
    e = ex.parse_expr("x3*u1", XYZ + ("u1",))
    assert ex.diff(e, (0, 0, 1), XYZ) == ex.Var("u1")


def test_smart_constructors():
    x = ex.Var("x")
    assert ex.mul(x, ex.ONE) is x
    assert ex.mul(x, ex.ZERO) == ex.ZERO
    assert ex.neg(ex.neg(x)) is x
    assert ex.power(ex.power(x, 2), 3) == ex.Pow(x, 6)
    assert ex.add(ex.const(2), ex.const(3)) == ex.Const(5.0)
    assert ex.sin(ex.ZERO) == ex.ZERO


def test_precedence():
    # '^' binds tighter than unary minus; negative integer exponents allowed
    e = ex.parse_expr("-x^2", ("x",))
    assert ex.eval_expr(e, {"x": 3.0}) == -9.0
    e = ex.parse_expr("x^-2", ("x",))
    assert ex.eval_expr(e, {"x": 2.0}) == 0.25
    e = ex.parse_expr("8/4/2 - 1 - 1", ())
    assert ex.eval_expr(e, {}) == -1.0


@pytest.mark.parametrize(
    "text, offset",
    [("x +* 1", 3), ("q + 1", 0), ("foo(x)", 0), ("x^1.5", 2), ("(x", 2), ("x $", 2)],
)
def test_syntax_errors_carry_offsets(text, offset):
    with pytest.raises(ExprSyntaxError) as info:
        ex.parse_expr(text, ("x",))
    assert info.value.offset == offset
    assert f"byte offset {offset}" in str(info.value)


def test_domain_errors():
    x = ex.Var("x")
    for e, v in [(ex.div(ex.ONE, x), 0.0), (ex.log(x), -1.0), (ex.sqrt(x), -1.0), (ex.Pow(x, -1), 0.0)]:
        with pytest.raises(DomainError):
            ex.eval_expr(e, {"x": v})


def test_multi_indices_graded():
    idx = list(ex.multi_indices(2, 2))
    assert idx == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    assert ex.MultiIndex((2, 1)).factorial == 2
    assert ex.MultiIndex((2, 1)).order == 3
    with pytest.raises(OverflowError):
        ex.MultiIndex((21,)).factorial


def test_multi_index_count_matches_binomial():
    for n in range(1, 5):
        for m in range(6):
            assert len(list(ex.multi_indices(n, m))) == math.comb(n + m, m)


# -- properties --------------------------------------------------------------

VARS = ("x", "y")


def _exprs():
    leaves = st.one_of(
        st.sampled_from([ex.Var("x"), ex.Var("y")]),
        st.integers(-4, 4).map(lambda k: ex.const(k / 2)),
    )

    def extend(children):
        return st.one_of(
            st.tuples(st.sampled_from("+-*"), children, children).map(
                lambda t: {"+": ex.add, "-": ex.sub, "*": ex.mul}[t[0]](t[1], t[2])
            ),
            st.tuples(children, st.integers(0, 3)).map(lambda t: ex.power(*t)),
            st.tuples(st.sampled_from(["sin", "cos", "atan", "exp"]), children).map(
                lambda t: ex.func(t[0], ex.mul(ex.const(0.25), t[1]))
            ),
            children.map(ex.neg),
            children.map(lambda c: ex.div(c, ex.add(ex.const(2.0), ex.power(c, 2)))),
        )

    return st.recursive(leaves, extend, max_leaves=8)


@settings(max_examples=100, deadline=None)
@given(_exprs())
def test_render_parse_round_trip(e):
    text = ex.render(e)
    back = ex.parse_expr(text, VARS)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-2, 2, size=(100, 2))
    a = ex.eval_expr(e, {"x": pts[:, 0], "y": pts[:, 1]})
    b = ex.eval_expr(back, {"x": pts[:, 0], "y": pts[:, 1]})
    np.testing.assert_allclose(np.broadcast_to(b, (100,)), np.broadcast_to(a, (100,)), rtol=1e-12, atol=1e-12)
    assert ex.render(back) == text


@settings(max_examples=60, deadline=None)
@given(_exprs(), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_diff_matches_central_difference(e, x, y):
    h = 1e-5
    d = ex.partial(e, "x")
    f = lambda s: float(ex.eval_expr(e, {"x": s, "y": y}))  # noqa: E731
    fd = (f(x + h) - f(x - h)) / (2 * h)
    exact = float(ex.eval_expr(d, {"x": x, "y": y}))
    assert exact == pytest.approx(fd, rel=1e-5, abs=1e-5)


@settings(max_examples=60, deadline=None)
@given(_exprs(), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_mixed_partials_commute(e, x, y):
    dxy = ex.diff(e, (1, 1), VARS)
    dyx = ex.partial(ex.partial(e, "y"), "x")
    a = float(ex.eval_expr(dxy, {"x": x, "y": y}))
    b = float(ex.eval_expr(dyx, {"x": x, "y": y}))
    assert a == pytest.approx(b, rel=1e-10, abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(_exprs(), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_compiled_matches_tree_walk(e, x, y):
    fn = ex.compile_exprs([e], VARS)
    assert fn(x, y)[0] == pytest.approx(float(ex.eval_expr(e, {"x": x, "y": y})), rel=1e-13, abs=1e-13)
