import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sweeplab.field_expr import FieldDomainError, FieldSyntaxError, eval_jet, parse_field, to_source


def fd_jet(expr, t, x, h=1e-6):
    x = np.asarray(x, float)
    dt = (expr.value(t + h, x) - expr.value(t - h, x)) / (2 * h)
    dx = []
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = h
        dx.append((expr.value(t, x + e) - expr.value(t, x - e)) / (2 * h))
    return float(dt), np.array(dx, dtype=float)


def test_polynomial_jet():
    j = eval_jet(parse_field("x1^2 + x2^2", 2), 0.0, [1.0, 2.0])
    assert j.value == 5.0 and j.dt == 0.0
    assert np.array_equal(j.dx, [2.0, 4.0])


def test_linear_jet():
    j = eval_jet(parse_field("x1 + t", 1), 3.0, [-3.0])
    assert (j.value, j.dt) == (0.0, 1.0)
    assert np.array_equal(j.dx, [1.0])


def test_sqrt_jet_matches_finite_differences():
    e = parse_field("sqrt(x1^2+x2^2) + t - 1", 2)
    j = eval_jet(e, 0.0, [1.0, 0.0])
    assert j.value == pytest.approx(0.0, abs=1e-15)
    assert j.dt == 1.0
    assert np.allclose(j.dx, [1.0, 0.0], atol=1e-15)
    dt, dx = fd_jet(e, 0.0, [1.0, 0.0])
    assert abs(dt - j.dt) <= 1e-8 and np.max(np.abs(dx - j.dx)) <= 1e-8


def test_dangling_operator_offset():
    with pytest.raises(FieldSyntaxError) as err:
        parse_field("x1 +", 1)
    assert err.value.offset == 4


def test_variable_exceeds_dim():
    with pytest.raises(FieldSyntaxError, match="variable index exceeds dim"):
        parse_field("x3", 2)


@pytest.mark.parametrize("src", ["", "foo(x1)", "x1 2", "(x1", "sin()", "min(x1)", "x0"])
def test_rejects_malformed(src):
    with pytest.raises(FieldSyntaxError):
        parse_field(src, 1)


def test_precedence():
    e = parse_field("-2^2^3 * 3 - 1", 1)
    assert e.value(0.0, [0.0]) == -(2.0 ** 8) * 3 - 1
    assert parse_field("2*3^2", 1).value(0.0, [0.0]) == 18.0


@pytest.mark.parametrize("src,x", [("log(x1)", 0.0), ("sqrt(x1)", -1.0), ("1/x1", 0.0), ("x1^0.5", -2.0)])
def test_domain_errors_name_subexpression(src, x):
    with pytest.raises(FieldDomainError) as err:
        eval_jet(parse_field(src, 1), 0.0, [x])
    assert err.value.subexpr


def test_kink_sets_nonsmooth_flag_and_first_argument_derivative():
    j = eval_jet(parse_field("max(x1, -x1)", 1), 0.0, [0.0])
    assert j.nonsmooth and j.dx[0] == 1.0
    assert eval_jet(parse_field("abs(x1)", 1), 0.0, [0.5]).nonsmooth is False


def test_vectorized_value_matches_pointwise():
    e = parse_field("sin(x1) * exp(t) + x2^3", 2)
    X = np.random.default_rng(0).normal(size=(50, 2))
    T = np.linspace(-1, 1, 50)
    v = e.value(T, X)
    ref = [e.value(float(t), x) for t, x in zip(T, X)]
    assert np.allclose(v, ref, rtol=0, atol=0)


# random formulas over t, x1, x2 built from smooth pieces (no kinks, no domain edges)
_leaf = st.one_of(
    st.sampled_from(["t", "x1", "x2"]),
    st.integers(1, 9).map(str),
    st.sampled_from(["0.5", "1.25", "3.75"]),
)


def _combine(children):
    return st.one_of(
        st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(lambda p: f"({p[0]} {p[1]} {p[2]})"),
        st.tuples(children, st.integers(2, 3)).map(lambda p: f"({p[0]})^{p[1]}"),
        st.tuples(st.sampled_from(["sin", "cos"]), children).map(lambda p: f"{p[0]}({p[1]})"),
        children.map(lambda c: f"-{c}"),
        children.map(lambda c: f"exp(0.1*{c})"),
        children.map(lambda c: f"({c})/(2 + sin({c}))"),
    )


formulas = st.recursive(_leaf, _combine, max_leaves=6)
points = st.tuples(*[st.floats(-1.5, 1.5, allow_nan=False) for _ in range(3)])


@settings(max_examples=200, deadline=None)
@given(formulas)
def test_print_reparse_round_trip(src):
    e = parse_field(src, 2)
    again = parse_field(to_source(e.ast), 2)
    assert again.ast == e.ast


@settings(max_examples=1000, deadline=None)
@given(formulas, points)
def test_jets_match_central_differences(src, p):
    e = parse_field(src, 2)
    t, x = p[0], np.array(p[1:])
    j = eval_jet(e, t, x)
    if not math.isfinite(j.value) or abs(j.value) > 1e6:
        return
    dt, dx = fd_jet(e, t, x)
    exact = np.concatenate([[j.dt], j.dx])
    approx = np.concatenate([[dt], dx])
    scale = 1.0 + np.abs(exact) + abs(j.value)
    assert np.all(np.abs(exact - approx) <= 1e-6 * scale)
