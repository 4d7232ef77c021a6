import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from algebroid_hj.algebroid import (
    AlgebroidError, AlgebroidSpec, SectionE, SectionEStar, anchor_apply, bracket, d_function,
    d_one_section, sample_box, validate_algebroid, vector_field_commutator,
)
from algebroid_hj.expr import UnknownIdentifierError, evaluate, parse

from conftest import aff1, base_samples, corrupted_heisenberg, heisenberg, so3, tangent


def _eval_section(A, X, x):
    env = dict(zip(A.base_vars, np.asarray(x, dtype=float).tolist()))
    return np.array([evaluate(c, env) for c in X.components])


def test_anchor_apply_examples():
    A = tangent(1)
    assert anchor_apply(A, SectionE.parse(["x1"]), [2.0]).tolist() == [2.0]
    assert anchor_apply(so3(), SectionE.parse(["1", "0", "0"]), []).shape == (0,)
    assert anchor_apply(tangent(2), SectionE.parse(["1", "0"]), [0.3, -4.0]).tolist() == [1.0, 0.0]


def test_bracket_examples():
    H = heisenberg()
    e = [SectionE.basis(3, a) for a in range(3)]
    assert _eval_section(H, bracket(H, e[0], e[1]), []).tolist() == [0, 0, 1]
    assert _eval_section(H, bracket(H, e[0], e[2]), []).tolist() == [0, 0, 0]
    A = tangent(1)
    assert _eval_section(A, bracket(A, SectionE.parse(["x1"]), SectionE.parse(["1"])), [0.7]).tolist() == [-1.0]


def test_constant_sections_bracket_is_structure_constant():
    A = so3()
    for (a, b), comps in A.structure:
        br = bracket(A, SectionE.basis(3, a), SectionE.basis(3, b))
        assert _eval_section(A, br, []).tolist() == [evaluate(c, {}) for c in comps]


def test_validate_catalog_like_algebroids(algebroid, rng):
    report = validate_algebroid(algebroid, base_samples(algebroid, 100, rng), seed=1234)
    assert report.passed
    assert report.max <= 1e-12


def test_so3_structure_is_epsilon_tensor():
    c = so3().structure_at([])
    eps = np.zeros((3, 3, 3))
    for (i, j, k), s in {(0, 1, 2): 1, (1, 2, 0): 1, (2, 0, 1): 1}.items():
        eps[i, j, k] = s
        eps[j, i, k] = -s
    assert np.array_equal(c, eps)


def test_corrupted_heisenberg_fails_anchor_check(rng):
    report = validate_algebroid(corrupted_heisenberg(), rng.uniform(-1, 1, (50, 3)))
    assert not report.passed
    assert report.family_max("anchor") == 1.0
    assert min(r.values["anchor"] for r in report.samples) == 1.0


def test_non_jacobi_structure_is_caught():
    # a bilinear antisymmetric bracket on R^3 that is not a Lie bracket
    A = AlgebroidSpec.build([], {(0, 1): [0, 0, 1], (1, 2): [0, 1, 0], (0, 2): [1, 0, 0]}, rank=3)
    report = validate_algebroid(A, np.zeros((3, 0)))
    assert report.family_max("jacobi") > 0.5


def test_validation_skips_domain_errors():
    A = AlgebroidSpec.build([["1"], ["1/x1"]], {(0, 1): ["0", "-1/x1"]})
    report = validate_algebroid(A, np.array([[0.0], [0.5]]))
    assert report.skipped == 1 and len(report.samples) == 1


def test_spec_rejects_bad_input():
    with pytest.raises(AlgebroidError):
        AlgebroidSpec.build([["1"]], {(1, 0): [1]}, rank=2)
    with pytest.raises(UnknownIdentifierError):
        AlgebroidSpec.build([["mu1"]])
    with pytest.raises(AlgebroidError):
        AlgebroidSpec(((parse("1"),),), (), ("x1",), ("mu1", "mu2"))


def test_d_function_examples():
    A = tangent(1)
    df = d_function(A, parse("x1^2"))
    assert _eval_section(A, df, [1.5]).tolist() == [3.0]
    assert [evaluate(c, {}) for c in d_function(so3(), parse("2")).components] == [0, 0, 0]
    B = tangent(2)
    assert _eval_section(B, d_function(B, parse("x1*x2")), [0.3, 0.8]).tolist() == [0.8, 0.3]


def test_d_one_section_examples():
    B = tangent(2)
    assert np.array_equal(d_one_section(B, SectionEStar.parse(["x2", "x1"]), [0.4, -0.2]), np.zeros((2, 2)))
    H = heisenberg()
    dg = d_one_section(H, SectionEStar.parse(["0", "0", "1"]), [])
    expected = np.zeros((3, 3))
    expected[0, 1], expected[1, 0] = -1.0, 1.0
    assert np.array_equal(dg, expected)
    assert np.array_equal(d_one_section(H, SectionEStar.parse(["1.5", "-2", "0"]), []), np.zeros((3, 3)))
    dg = d_one_section(B, SectionEStar.parse(["2*x1*x2", "x1^2"]), [0.7, 0.1])
    assert np.max(np.abs(dg)) <= 1e-10


def test_sample_box_empty_and_bounds(rng):
    assert sample_box([], 4, rng).shape == (4, 0)
    pts = sample_box([[0, 1], [-2, -1]], 100, rng)
    assert pts.shape == (100, 2)
    assert (pts[:, 0] >= 0).all() and (pts[:, 0] <= 1).all() and (pts[:, 1] <= -1).all()


# ---------------------------------------------------------------- properties

POLYS = ["x1^2 - 3*x1", "sin(x1) * 2", "exp(x1 / 3)", "x1^3 + 1"]


def _poly_for(A, rng):
    if A.m == 0:
        return parse("1.5")
    terms = [f"{rng.uniform(-2, 2):.4f} * {v}^{int(rng.integers(1, 4))}" for v in A.base_vars]
    terms.append(f"sin({A.base_vars[0]})")
    return parse(" + ".join(terms), A.base_vars)


def _random_section(A, rng, cls=SectionE):
    return cls(tuple(_poly_for(A, rng) for _ in range(A.n)))


def test_d_squared_vanishes(algebroid, rng):
    for _ in range(3):
        f = _poly_for(algebroid, rng)
        df = d_function(algebroid, f)
        for x in base_samples(algebroid, 10, rng):
            assert np.max(np.abs(d_one_section(algebroid, df, x)), initial=0.0) <= 1e-9


def test_bracket_antisymmetric(algebroid, rng):
    X, Y = _random_section(algebroid, rng), _random_section(algebroid, rng)
    xy, yx = bracket(algebroid, X, Y), bracket(algebroid, Y, X)
    for x in base_samples(algebroid, 10, rng):
        assert np.max(np.abs(_eval_section(algebroid, xy, x) + _eval_section(algebroid, yx, x))) <= 1e-12


def test_leibniz_rule(algebroid, rng):
    X, Y = _random_section(algebroid, rng), _random_section(algebroid, rng)
    f = _poly_for(algebroid, rng)
    fX = SectionE(tuple(f * c for c in X.components))
    lhs = bracket(algebroid, fX, Y)
    xy = bracket(algebroid, X, Y)
    rho_y_f = algebroid.rho_of(Y.components, f)
    for x in base_samples(algebroid, 10, rng):
        env = dict(zip(algebroid.base_vars, x.tolist()))
        expected = evaluate(f, env) * _eval_section(algebroid, xy, x) - evaluate(rho_y_f, env) * _eval_section(algebroid, X, x)
        assert np.max(np.abs(_eval_section(algebroid, lhs, x) - expected)) <= 1e-9


@settings(max_examples=25, deadline=None)
@given(st.lists(st.sampled_from(POLYS), min_size=2, max_size=2),
       st.lists(st.sampled_from(POLYS), min_size=2, max_size=2),
       st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_tangent_bracket_is_vector_field_commutator(xs, ys, a, b):
    A = tangent(2)
    rename = lambda s, k: s.replace("x1", f"x{k}")
    X = SectionE.parse([rename(xs[0], 1), rename(xs[1], 2)])
    Y = SectionE.parse([rename(ys[0], 2), rename(ys[1], 1)])
    br = bracket(A, X, Y)
    oracle = vector_field_commutator(X.components, Y.components, A.base_vars)
    env = {"x1": a, "x2": b}
    for c, o in zip(br.components, oracle):
        assert evaluate(c, env) == pytest.approx(evaluate(o, env), abs=1e-12, rel=1e-12)


def test_aff1_anchor_is_lie_homomorphism(rng):
    A = aff1()
    for x in base_samples(A, 10, rng):
        br = bracket(A, SectionE.basis(2, 0), SectionE.basis(2, 1))
        assert anchor_apply(A, br, x) == pytest.approx([1.0])
