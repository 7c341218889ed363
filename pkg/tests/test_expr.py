import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polyflow.errors import ParseError, UnknownSymbol
from polyflow.expr import (BinOp, Call, Neg, Num, Pow, Var, constant_value, evaluate,
                           parse_expression, scalar_field, to_source, vector_field)


def test_z1_component():
    node = parse_expression("(2*x2-1)*x1*(1-x1)", 2)
    X = np.array([[0.3, 0.9], [0.5, 0.5]])
    np.testing.assert_allclose(evaluate(node, X), (2 * X[:, 1] - 1) * X[:, 0] * (1 - X[:, 0]))


def test_zero_constant():
    node = parse_expression("0", 3)
    assert node == Num(0.0)
    assert constant_value(node) == 0.0


def test_unknown_symbol():
    with pytest.raises(UnknownSymbol):
        parse_expression("x3", 2)
    with pytest.raises(UnknownSymbol):
        parse_expression("tan(x1)", 2)


def test_precedence_and_associativity():
    assert parse_expression("1-2-3", 1) == BinOp("-", BinOp("-", Num(1), Num(2)), Num(3))
    assert parse_expression("-x1^2", 1) == Neg(Pow(Var(1), 2))
    assert parse_expression("2*x1^3", 1) == BinOp("*", Num(2), Pow(Var(1), 3))
    assert parse_expression("x1**2", 1) == Pow(Var(1), 2)
    assert constant_value(parse_expression("8/4/2", 0)) == 1.0
    assert constant_value(parse_expression("-2^2", 0)) == -4.0


def test_functions():
    f = scalar_field("exp(x1) + sin(x2) * cos(x1)", 2)
    X = np.array([[0.1, 0.2]])
    assert f(X)[0, 0] == pytest.approx(np.exp(0.1) + np.sin(0.2) * np.cos(0.1))


@pytest.mark.parametrize("src, line, col", [
    ("x1 +", 1, 5),
    ("(x1", 1, 4),
    ("x1 $ 2", 1, 4),
    ("x1 +\n  * 2", 2, 3),
    ("x1^1.5", 1, 4),
])
def test_parse_error_positions(src, line, col):
    with pytest.raises(ParseError) as err:
        parse_expression(src, 2)
    assert (err.value.line, err.value.column) == (line, col)


def test_division_rules():
    assert constant_value(parse_expression("1/(2-1)", 0)) == 1.0
    with pytest.raises(ParseError):
        parse_expression("1/x1", 1)
    with pytest.raises(ParseError):
        parse_expression("x1/(1-1)", 1)


def test_vector_field():
    F = vector_field(["x1*x2", "0"], 2)
    assert F.codomain_dim == 2
    np.testing.assert_allclose(F([[2.0, 3.0]]), [[6.0, 0.0]])


leaves = st.one_of(
    st.integers(0, 50).map(lambda k: Num(float(k))),
    st.sampled_from([0.5, 1.25, 3e-3]).map(Num),
    st.integers(1, 3).map(Var),
)


def _extend(children):
    return st.one_of(
        st.tuples(st.sampled_from("+-*"), children, children).map(lambda t: BinOp(*t)),
        st.tuples(children, st.sampled_from([2.0, 4.0])).map(lambda t: BinOp("/", t[0], Num(t[1]))),
        children.map(Neg),
        st.tuples(children, st.integers(0, 4)).map(lambda t: Pow(*t)),
        st.tuples(st.sampled_from(["exp", "sin", "cos"]), children).map(lambda t: Call(*t)),
    )


@settings(max_examples=300, deadline=None)
@given(st.recursive(leaves, _extend, max_leaves=12))
def test_print_parse_round_trip(node):
    assert parse_expression(to_source(node), 3) == node
