import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from flowfields.dsl import (
    Binary, Const, ExprDomainError, Jet3, Param, ParseError, Pow, Unary, Var,
    compile_tape, eval_jet3, parse_expr, to_source,
)


def test_parse_sum_of_product():
    assert parse_expr("x0 + 0.5*t") == Binary("+", Var("x0"), Binary("*", Const(0.5), Var("t")))


def test_parse_function_of_parameter():
    assert parse_expr("cos(w*t)", {"w": 0.3}) == Unary("cos", Binary("*", Param("w"), Var("t")))


def test_non_constant_exponent_rejected():
    with pytest.raises(ParseError, match="non-constant exponent"):
        parse_expr("t ** x0")


def test_unknown_identifier():
    with pytest.raises(ParseError, match="unknown identifier") as info:
        parse_expr("x0 + q")
    assert info.value.pos == 5


def test_syntax_error_lists_expected_tokens():
    with pytest.raises(ParseError) as info:
        parse_expr("x0 + ")
    assert info.value.expected


def test_parameter_may_not_shadow_variable():
    with pytest.raises((ParseError, ValueError)):
        parse_expr("t", {"t": 1.0})


def test_left_associative():
    assert parse_expr("t - 1 - 2") == Binary("-", Binary("-", Var("t"), Const(1.0)), Const(2.0))
    assert parse_expr("t / 2 / 4") == Binary("/", Binary("/", Var("t"), Const(2.0)), Const(4.0))


def test_power_binds_tighter_than_unary_minus():
    assert parse_expr("-t**2") == Unary("neg", Pow(Var("t"), Const(2.0)))


def test_negative_exponent():
    j = eval_jet3(parse_expr("t ** -1"), 2.0, (0, 0, 0))
    assert j.c0 == pytest.approx(0.5)
    assert j.c1 == pytest.approx(-0.25)


def test_sin_jet_at_zero():
    j = eval_jet3(parse_expr("sin(t)"), 0.0, (0, 0, 0))
    assert (j.c0, j.c1, j.c2, j.c3) == pytest.approx((0.0, 1.0, 0.0, -1.0), abs=1e-15)


def test_constant_jet():
    j = eval_jet3(parse_expr("5"), 3.3, (1, 2, 3))
    assert (j.c0, j.c1, j.c2, j.c3) == (5.0, 0.0, 0.0, 0.0)


def test_variable_jet():
    j = eval_jet3(parse_expr("t"), 1.7, (0, 0, 0))
    assert (j.c0, j.c1, j.c2, j.c3) == (1.7, 1.0, 0.0, 0.0)


@pytest.mark.parametrize("ts", [-1.3, 0.0, 0.4, 2.5])
def test_cubic_is_exact(ts):
    j = eval_jet3(parse_expr("t**3"), ts, (0, 0, 0))
    assert (j.c0, j.c1, j.c2, j.c3) == pytest.approx((ts ** 3, 3 * ts ** 2, 6 * ts, 6.0), rel=1e-15, abs=1e-15)
    j = eval_jet3(parse_expr("t*t*t"), ts, (0, 0, 0))
    assert (j.c0, j.c1, j.c2, j.c3) == pytest.approx((ts ** 3, 3 * ts ** 2, 6 * ts, 6.0), rel=1e-15, abs=1e-15)


def _richardson_derivs(f, t, h=1e-2):
    """First three derivatives by central differences with one Richardson level."""
    def d(step):
        f2, f1, f0, g1, g2 = (f(t + 2 * step), f(t + step), f(t), f(t - step), f(t - 2 * step))
        return ((f1 - g1) / (2 * step),
                (f1 - 2 * f0 + g1) / step ** 2,
                (f2 - 2 * f1 + 2 * g1 - g2) / (2 * step ** 3))
    a, b = np.array(d(h)), np.array(d(h / 2))
    return (4 * b - a) / 3


def test_product_with_sine_matches_fd():
    ast = parse_expr("(t*t)*sin(t)")
    j = eval_jet3(ast, 0.7, (0, 0, 0))
    fd = _richardson_derivs(lambda s: s * s * math.sin(s), 0.7, 1e-2)
    assert np.allclose([j.c1, j.c2, j.c3], fd, rtol=1e-7)


def test_domain_errors_name_subexpression():
    with pytest.raises(ExprDomainError, match="sqrt"):
        eval_jet3(parse_expr("sqrt(t - 1)"), 0.0, (0, 0, 0))
    with pytest.raises(ExprDomainError):
        eval_jet3(parse_expr("1 / t"), 0.0, (0, 0, 0))
    with pytest.raises(ExprDomainError):
        eval_jet3(parse_expr("log(x0)"), 0.0, (-1, 0, 0))


def test_leibniz_rule():
    f = Jet3(1.3, -0.2, 0.7, 2.0)
    g = Jet3(-0.5, 1.1, 0.3, -1.4)
    p = f * g
    assert p.c1 == pytest.approx(f.c1 * g.c0 + f.c0 * g.c1)
    assert p.c2 == pytest.approx(f.c2 * g.c0 + 2 * f.c1 * g.c1 + f.c0 * g.c2)
    assert p.c3 == pytest.approx(f.c3 * g.c0 + 3 * f.c2 * g.c1 + 3 * f.c1 * g.c2 + f.c0 * g.c3)


def test_division_is_product_with_reciprocal():
    f = Jet3(1.3, -0.2, 0.7, 2.0)
    g = Jet3(-0.5, 1.1, 0.3, -1.4)
    q = (f / g) * g
    assert (q.c0, q.c1, q.c2, q.c3) == pytest.approx((f.c0, f.c1, f.c2, f.c3), rel=1e-12)


# --- random expressions ---------------------------------------------------
# Safe by construction: sqrt/log act on exp(...) or 1 + (...)**2, division by
# 2 + sin(...), powers only with small integer exponents.

leaves = st.one_of(
    st.sampled_from(["t", "x0", "y0", "z0"]),
    st.floats(0.1, 3.0).map(lambda v: repr(round(v, 3))),
)


def _extend(children):
    return st.one_of(
        st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(lambda p: f"({p[0]} {p[1]} {p[2]})"),
        children.map(lambda c: f"sin({c})"),
        children.map(lambda c: f"cos({c})"),
        children.map(lambda c: f"exp(0.1 * sin({c}))"),
        children.map(lambda c: f"sqrt(1 + ({c})**2)"),
        children.map(lambda c: f"log(2 + cos({c}))"),
        st.tuples(children, children).map(lambda p: f"({p[0]}) / (2 + sin({p[1]}))"),
        st.tuples(children, st.sampled_from([2, 3])).map(lambda p: f"({p[0]})**{p[1]}"),
        children.map(lambda c: f"-({c})"),
    )


expressions = st.recursive(leaves, _extend, max_leaves=8)
points = st.tuples(st.floats(-1.5, 1.5), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))


@settings(max_examples=200, deadline=None)
@given(expressions)
def test_print_parse_round_trip(src):
    ast = parse_expr(src)
    assert parse_expr(to_source(ast)) == ast


@settings(max_examples=200, deadline=None)
@given(expressions, points)
def test_jets_match_finite_differences(src, p):
    ast = parse_expr(src)
    t, r0 = p[0], p[1:]
    j = eval_jet3(ast, t, r0)
    assume(max(abs(j.c0), abs(j.c1), abs(j.c2), abs(j.c3)) < 1e3)
    fd = _richardson_derivs(lambda s: eval_jet3(ast, s, r0).c0, t, 1e-2)
    for k, c in enumerate((j.c1, j.c2, j.c3)):
        assert abs(c - fd[k]) <= 1e-6 * max(1.0, abs(c))


@settings(max_examples=100, deadline=None)
@given(expressions, points)
def test_tape_matches_tree(src, p):
    from flowfields import kernel
    ast = parse_expr(src)
    t, r0 = p[0], np.array(p[1:])
    tape = compile_tape([ast, Const(0.0), Var("t")])
    jets, status, _ = kernel.flow_jets(tape.codes, tape.args, tape.starts, tape.depth, np.array([t]), r0[None])
    j = eval_jet3(ast, t, r0)
    assert status[0] == 0
    assert np.allclose(jets[0, 0], [j.c0, j.c1, j.c2, j.c3], rtol=1e-13, atol=1e-13)
    assert np.array_equal(jets[0, 2], [t, 1.0, 0.0, 0.0])
