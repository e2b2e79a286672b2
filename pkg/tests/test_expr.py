import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvjump.errors import EvaluationError, ParseError
from mvjump.expr import BinOp, Call, EvalContext, Neg, Num, Var, evaluate, free_vars, parse, pretty_print
from mvjump.measure import EmpiricalMeasure
from mvjump.model import MeasureView


def ev(src, **kw):
    return evaluate(parse(src), EvalContext(**kw))


def test_structure_of_cubic():
    assert parse("x - x^3") == BinOp("-", Var("x"), BinOp("^", Var("x"), Num(3.0)))


def test_averaged_drift_with_mean_field_term():
    e = parse("(x - x^3) * (t/(1+t)) + mean()")
    state = BinOp("-", Var("x"), BinOp("^", Var("x"), Num(3.0)))
    factor = BinOp("/", Var("t"), BinOp("+", Num(1.0), Var("t")))
    assert e == BinOp("+", BinOp("*", state, factor), Call("mean", ()))


@pytest.mark.parametrize("src, pos", [("sin(", 4), ("1 +", 3), ("(x", 2), ("x $ 2", 2), ("2 3", 2)])
def test_syntax_errors_carry_position(src, pos):
    with pytest.raises(ParseError) as info:
        parse(src)
    assert info.value.position == pos
    assert "position" in str(info.value)


def test_line_and_column_reported():
    with pytest.raises(ParseError) as info:
        parse("x +\n  * 2")
    assert (info.value.line, info.value.column) == (2, 3)


@pytest.mark.parametrize("src", ["foo(x)", "sin(x, x)", "pow(x)", "mom()", "w2d0(1)", "y + 1"])
def test_unknown_names_and_arity(src):
    with pytest.raises(ParseError):
        parse(src)


def test_precedence_and_associativity():
    assert parse("-x^2") == Neg(BinOp("^", Var("x"), Num(2.0)))
    assert parse("2^3^2") == BinOp("^", Num(2.0), BinOp("^", Num(3.0), Num(2.0)))
    assert ev("2^3^2") == 512.0
    assert ev("8 / 2 / 2") == 2.0
    assert ev("1 - 2 - 3") == -4.0
    assert ev("2 * -3") == -6.0
    assert ev("2^-1") == 0.5


def test_evaluate_examples():
    assert ev("x - x^3", x=2.0) == -6.0
    atoms = MeasureView(EmpiricalMeasure([1.0, 2.0, 3.0]))
    assert ev("mean()", measure=atoms) == 2.0
    assert ev("x*sin(log(1+x^2)^2)", x=0.0) == 0.0


def test_measure_functionals():
    mv = MeasureView(EmpiricalMeasure([[1.0, -2.0], [3.0, 4.0]]))
    assert ev("mean(2)", measure=mv) == 1.0
    assert ev("mom(2, 1)", measure=mv) == 5.0
    assert ev("mom(1, 2)", measure=mv) == 3.0
    assert ev("w2d0()", measure=mv) == pytest.approx(math.sqrt((1 + 4 + 9 + 16) / 2))


def test_component_variables_and_batches():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    out = ev("x1 * x2 + t", x=x, t=0.5)
    np.testing.assert_array_equal(out, [2.5, 12.5])


@pytest.mark.parametrize("src, kw", [
    ("log(x)", {"x": 0.0}),
    ("log(x)", {"x": -1.0}),
    ("sqrt(x)", {"x": -1.0}),
    ("1 / x", {"x": 0.0}),
    ("exp(x)", {"x": 1e6}),
])
def test_domain_errors_raise(src, kw):
    with pytest.raises(EvaluationError):
        ev(src, **kw)


def test_unbound_variable():
    with pytest.raises(EvaluationError):
        ev("z + 1", x=1.0)
    with pytest.raises(EvaluationError):
        ev("mean()")


def test_free_vars():
    assert free_vars(parse("3.0")) == (frozenset(), False)
    assert free_vars(parse("x + t")).names == {"x", "t"}
    fv = free_vars(parse("mean() + z"))
    assert fv.names == {"z"} and fv.uses_measure


def test_pretty_print_examples():
    assert pretty_print(parse("x - x^3")) == "(x - (x ^ 3.0))"
    assert pretty_print(Num(1.5)) == "1.5"


def test_same_measure_gives_bit_identical_values():
    mv = MeasureView(EmpiricalMeasure(np.random.default_rng(1).normal(size=1000)))
    e = parse("x * mean() + mom(3) - w2d0()")
    a = evaluate(e, EvalContext(x=0.3, measure=mv))
    b = evaluate(e, EvalContext(x=0.3, measure=mv))
    assert a == b


_leaf = st.one_of(
    st.floats(min_value=0.0, max_value=1e6, allow_nan=False).map(Num),
    st.sampled_from(["t", "x", "z", "eps", "x1", "x2", "z3"]).map(Var),
    st.just(Call("mean", ())),
    st.just(Call("w2d0", ())),
)


def _extend(children):
    return st.one_of(
        children.map(Neg),
        st.tuples(st.sampled_from("+-*/^"), children, children).map(lambda a: BinOp(*a)),
        st.tuples(st.sampled_from(["sin", "cos", "exp", "log", "sqrt", "abs"]), children).map(
            lambda a: Call(a[0], (a[1],))),
        st.tuples(children, children).map(lambda a: Call("pow", a)),
        st.tuples(children, children).map(lambda a: Call("mom", a)),
    )


def _depth(e):
    if isinstance(e, (Num, Var)):
        return 1
    if isinstance(e, Neg):
        return 1 + _depth(e.operand)
    if isinstance(e, BinOp):
        return 1 + max(_depth(e.left), _depth(e.right))
    return 1 + max((_depth(a) for a in e.args), default=0)


asts = st.recursive(_leaf, _extend, max_leaves=40).filter(lambda e: _depth(e) <= 8)


@settings(max_examples=1000)
@given(asts)
def test_round_trip(e):
    assert parse(pretty_print(e)) == e
