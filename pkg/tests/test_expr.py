import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from algebroid_hj.expr import (
    Binary, Const, ExprDomainError, ExprSyntaxError, FUNCTIONS, UnboundVariableError,
    UnknownIdentifierError, Unary, Var, compile_exprs, differentiate, evaluate, parse, substitute,
    variables,
)


def test_parse_and_evaluate_pendulum():
    e = parse("mu1^2/2 + (1 - cos(x1))")
    assert evaluate(e, {"x1": 0.0, "mu1": 2.0}) == 2.0


def test_single_variable():
    assert evaluate(parse("x1"), {"x1": 3.5}) == 3.5


def test_unbalanced_paren_reports_offset_and_expected():
    with pytest.raises(ExprSyntaxError) as info:
        parse("2*(3+4")
    assert info.value.offset == 6
    assert ")" in info.value.expected


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifierError, match="unknown identifier mu2"):
        parse("mu2^2", ["x1", "mu1"])
    with pytest.raises(UnknownIdentifierError, match="unknown identifier y"):
        parse("y + 1")


@pytest.mark.parametrize("src", ["", "1 +", "sin x1", "(x1", "x1 x1", "3..4", "cos()", "x1 ^", "@"])
def test_syntax_errors(src):
    with pytest.raises(ExprSyntaxError):
        parse(src)


def test_byte_offset_counts_utf8():
    with pytest.raises(ExprSyntaxError) as info:
        parse("1 + μ")
    assert info.value.offset == 4


def test_precedence_and_associativity():
    env = {"x1": 2.0, "x2": 3.0}
    assert evaluate(parse("-x1^2"), env) == -4.0
    assert evaluate(parse("2^3^2"), env) == 512.0
    assert evaluate(parse("8/4/2"), env) == 1.0
    assert evaluate(parse("10 - 4 - 3"), env) == 3.0
    assert evaluate(parse("x1 + x2 * x1"), env) == 8.0
    assert evaluate(parse("2^-1"), env) == 0.5


def test_domain_errors_carry_subexpression():
    with pytest.raises(ExprDomainError) as info:
        evaluate(parse("1/x1"), {"x1": 0.0})
    assert str(info.value.subexpr) == "1.0 / x1"
    with pytest.raises(ExprDomainError):
        evaluate(parse("sqrt(x1)"), {"x1": -1.0})
    with pytest.raises(ExprDomainError):
        evaluate(parse("ln(x1)"), {"x1": 0.0})


def test_sqrt_and_pythagoras():
    assert evaluate(parse("sqrt(x1)"), {"x1": 4.0}) == 2.0
    assert abs(evaluate(parse("sin(x1)^2 + cos(x1)^2"), {"x1": 0.7}) - 1.0) <= 1e-15


def test_unbound_variable():
    with pytest.raises(UnboundVariableError):
        evaluate(parse("x1 + x2"), {"x1": 1.0})


def test_derivative_examples():
    d = differentiate(parse("x1^2"), "x1")
    assert evaluate(d, {"x1": 1.5}) == 3.0
    d = differentiate(parse("mu1^2/2 + (1-cos(x1))"), "mu1")
    assert evaluate(d, {"mu1": 0.37, "x1": 1.1}) == pytest.approx(0.37, rel=1e-15)
    f = parse("exp(sin(x1))")
    d = evaluate(differentiate(f, "x1"), {"x1": 0.3})
    h = 1e-5
    fd = (evaluate(f, {"x1": 0.3 + h}) - evaluate(f, {"x1": 0.3 - h})) / (2 * h)
    assert abs(d - fd) <= 1e-7 * abs(d)


def test_variables_and_substitute():
    e = parse("x1 * mu1 + t")
    assert variables(e) == {"x1", "mu1", "t"}
    s = substitute(e, {"mu1": parse("x1^2")})
    assert variables(s) == {"x1", "t"}
    assert evaluate(s, {"x1": 2.0, "t": 1.0}) == 9.0


def test_compiled_matches_interpreter_bitwise():
    exprs = [parse(s) for s in ("sin(x1) * mu1 / 3", "exp(x1 - mu1^2)", "x1^mu1")]
    fn = compile_exprs(exprs, ("x1", "mu1"))
    rng = np.random.default_rng(0)
    for x, mu in rng.uniform(0.1, 2.0, size=(20, 2)):
        fast = fn([x, mu])
        slow = [evaluate(e, {"x1": x, "mu1": mu}) for e in exprs]
        assert fast == slow


def test_compiled_raises_domain_errors():
    fn = compile_exprs([parse("1/x1")], ("x1",))
    with pytest.raises(ExprDomainError):
        fn(np.array([0.0]))


# ---------------------------------------------------------------- random corpus

NAMES = ("x1", "x2", "mu1")


def random_ast(rng: np.random.Generator, depth: int):
    if depth == 0 or rng.random() < 0.2:
        if rng.random() < 0.4:
            return Const(float(np.round(rng.uniform(-2, 2), 3)))
        return Var(NAMES[rng.integers(len(NAMES))])
    kind = rng.random()
    if kind < 0.35:
        return Unary(["neg", *FUNCTIONS][rng.integers(len(FUNCTIONS) + 1)], random_ast(rng, depth - 1))
    op = "+-*/^"[rng.integers(5)]
    if op == "^":
        return Binary("^", random_ast(rng, depth - 1), Const(float(rng.integers(0, 4))))
    return Binary(op, random_ast(rng, depth - 1), random_ast(rng, depth - 1))


def _fd(f, env, var, h=1e-5):
    up, down = dict(env), dict(env)
    up[var] += h
    down[var] -= h
    return (evaluate(f, up) - evaluate(f, down)) / (2 * h)


def _corpus(count=20, points=10, seed=11):
    """(ast, list of points) pairs where the function is finite and moderate at every point."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        f = random_ast(rng, 6)
        if not variables(f):
            continue
        good = []
        for _ in range(60):
            env = dict(zip(NAMES, rng.uniform(-1.5, 1.5, size=3).tolist()))
            try:
                vals = [evaluate(f, env)] + [evaluate(differentiate(f, v), env) for v in NAMES]
                vals += [_fd(f, env, v) for v in NAMES]
            except (ExprDomainError, OverflowError):
                continue
            if not all(math.isfinite(v) and abs(v) < 1e4 for v in vals):
                continue
            # the oracle itself must be accurate here: its O(h^2) error shows up
            # as disagreement between step h and 2h
            if all(abs(_fd(f, env, v) - _fd(f, env, v, 2e-5)) <= 1e-7 * max(1.0, abs(_fd(f, env, v)))
                   for v in NAMES):
                good.append(env)
            if len(good) == points:
                break
        if len(good) == points:
            out.append((f, good))
    return out


def test_derivatives_match_finite_differences_on_random_corpus():
    corpus = _corpus()
    assert len(corpus) >= 20
    worst = 0.0
    for f, envs in corpus:
        for env in envs:
            for v in NAMES:
                d = evaluate(differentiate(f, v), env)
                fd = _fd(f, env, v)
                worst = max(worst, abs(d - fd) / max(1.0, abs(d)))
    assert worst <= 1e-6


def test_derivatives_match_richardson_everywhere_finite():
    rng = np.random.default_rng(5)
    checked = 0
    while checked < 200:
        f = random_ast(rng, 6)
        env = dict(zip(NAMES, rng.uniform(-1.5, 1.5, size=3).tolist()))
        for v in NAMES:
            try:
                d = evaluate(differentiate(f, v), env)
                fd = (4 * _fd(f, env, v, 1e-5) - _fd(f, env, v, 2e-5)) / 3
            except (ExprDomainError, OverflowError):
                continue
            if not (math.isfinite(d) and math.isfinite(fd) and abs(d) < 1e4):
                continue
            checked += 1
            assert abs(d - fd) <= 1e-6 * max(1.0, abs(d)), (str(f), env, v)


def test_round_trip_on_random_corpus():
    for f, _ in _corpus():
        assert parse(str(f)) == f


def test_evaluate_is_pure():
    for f, envs in _corpus(count=5):
        for env in envs:
            a, b = evaluate(f, env), evaluate(f, env)
            assert math.copysign(1, a) == math.copysign(1, b) and (a == b or (math.isnan(a) and math.isnan(b)))


consts = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False).map(Const)
leaves = st.one_of(consts, st.sampled_from(["x1", "x2", "mu1", "mu2", "t", "e"]).map(Var))
trees = st.recursive(
    leaves,
    lambda sub: st.one_of(
        st.builds(Unary, st.sampled_from(["neg", *FUNCTIONS]), sub),
        st.builds(Binary, st.sampled_from(list("+-*/^")), sub, sub),
    ),
    max_leaves=12,
)


@settings(max_examples=300, deadline=None)
@given(trees)
def test_print_parse_round_trip(tree):
    assert parse(str(tree)) == tree


@settings(max_examples=100, deadline=None)
@given(trees, st.floats(-3, 3), st.floats(-3, 3))
def test_substitute_agrees_with_evaluation(tree, a, b):
    env = {"x1": a, "x2": b, "mu1": 0.5, "mu2": -0.25, "t": 0.1, "e": 1.5}
    sub = substitute(tree, {"x1": Const(a)})
    try:
        expected = evaluate(tree, env)
    except (ExprDomainError, OverflowError):
        return
    try:
        got = evaluate(sub, env)
    except (ExprDomainError, OverflowError):
        pytest.fail("substitution changed the domain")
    assert got == expected or (math.isnan(got) and math.isnan(expected))
