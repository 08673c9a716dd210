"""Expression evaluation, wrap-around arithmetic, and text round-trips."""

import pytest
from hypothesis import given, strategies as st

from psmsynth import expr as ex


def test_wrap_signed_32bit():
    assert ex.wrap_signed(2**31) == -(2**31)
    assert ex.wrap_signed(2**31 - 1) == 2**31 - 1
    assert ex.wrap_signed(-(2**31) - 1) == 2**31 - 1
    assert ex.wrap_signed(2**32) == 0
    assert ex.wrap_signed(-5) == -5


def test_arithmetic_and_comparison():
    env = {"a": 7, "b": -3}
    e = ex.BinOp("+", ex.Var("a"), ex.BinOp("*", ex.Var("b"), ex.Num(2)))
    assert ex.evaluate(e, env) == 1
    assert ex.evaluate(ex.BinOp("<", ex.Var("b"), ex.Num(0)), env) == 1
    assert ex.evaluate(ex.BinOp(">=", ex.Var("a"), ex.Num(7)), env) == 1
    assert ex.evaluate(ex.UnOp("-", ex.Var("a")), env) == -7
    assert ex.evaluate(ex.UnOp("!", ex.Num(0)), env) == 1


def test_division_truncates_toward_zero():
    env = {}
    assert ex.evaluate(ex.BinOp("/", ex.Num(-7), ex.Num(2)), env) == -3
    assert ex.evaluate(ex.BinOp("/", ex.Num(7), ex.Num(-2)), env) == -3
    assert ex.evaluate(ex.BinOp("%", ex.Num(-7), ex.Num(2)), env) == -1
    assert ex.evaluate(ex.BinOp("%", ex.Num(7), ex.Num(-2)), env) == 1


def test_division_by_zero_raises():
    with pytest.raises(ex.EvalError):
        ex.evaluate(ex.BinOp("/", ex.Num(1), ex.Num(0)), {})
    with pytest.raises(ex.EvalError):
        ex.evaluate(ex.BinOp("%", ex.Num(1), ex.Num(0)), {})


def test_boolean_short_circuit():
    # The right side would divide by zero; && must not evaluate it.
    bad = ex.BinOp("/", ex.Num(1), ex.Num(0))
    assert ex.evaluate(ex.BinOp("&&", ex.Num(0), bad), {}) == 0
    assert ex.evaluate(ex.BinOp("||", ex.Num(1), bad), {}) == 1


def test_undefined_variable_raises():
    with pytest.raises(ex.EvalError):
        ex.evaluate(ex.Var("nope"), {})


def test_free_vars():
    e = ex.BinOp("+", ex.Var("x"), ex.UnOp("-", ex.Var("y")))
    assert ex.free_vars(e) == {"x", "y"}
    assert ex.free_vars(ex.Num(3)) == set()


def test_to_text_minimal_parentheses():
    e = ex.BinOp("*", ex.BinOp("+", ex.Var("a"), ex.Var("b")), ex.Num(2))
    assert ex.to_text(e) == "(a + b) * 2"
    e = ex.BinOp("+", ex.Var("a"), ex.BinOp("*", ex.Var("b"), ex.Num(2)))
    assert ex.to_text(e) == "a + b * 2"
    e = ex.BinOp("-", ex.Var("a"), ex.BinOp("-", ex.Var("b"), ex.Var("c")))
    assert ex.to_text(e) == "a - (b - c)"


_exprs = st.recursive(
    st.integers(min_value=0, max_value=999).map(ex.Num)
    | st.sampled_from(["a", "b", "c"]).map(ex.Var),
    lambda inner: st.tuples(
        st.sampled_from(sorted(ex.BINARY_OPS)), inner, inner
    ).map(lambda t: ex.BinOp(*t))
    | st.tuples(st.sampled_from(["-", "!"]), inner).map(lambda t: ex.UnOp(*t)),
    max_leaves=12,
)


@given(_exprs)
def test_text_round_trip_preserves_structure(e):
    # Re-parsing the rendered text must give back the identical tree.
    from psmsynth.dsl import _Parser, _tokenize

    text = ex.to_text(e)
    tokens, diags = _tokenize(text, "<expr>")
    assert not diags
    parser = _Parser(tokens, diags)
    assert parser.expression() == e
    assert parser.here.kind == "eof"
