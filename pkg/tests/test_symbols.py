import numpy as np
import pytest
from hypothesis import given, strategies as st

from effhyp import symbols as sy
from effhyp.expr import ExpressionError


def cubic(q1, q2, q3, T=1.0):
    return sy.operator_from_dict({"q1": q1, "q2": q2, "q3": q3, "domain": {"T": T}})


finite = st.floats(-5, 5, allow_nan=False)


# -- evaluation --------------------------------------------------------------

def test_eval_p3_pure_cube():
    assert sy.eval_p3(cubic("0", "0", "0"), (0.0, 0.0, 2.0, 1.0)) == 8.0


def test_eval_p3_roots():
    assert sy.eval_p3(cubic("0", "-xi^2", "0"), (0.0, 0.0, 1.0, 1.0)) == 0.0
    m = cubic("-6*xi", "11*xi^2", "-6*xi^3")
    assert sy.eval_p3(m, (0.0, 0.0, 2.0, 1.0)) == pytest.approx(0.0, abs=1e-14)


def test_eval_p3_outside_domain():
    with pytest.raises(sy.DomainError):
        sy.eval_p3(cubic("0", "0", "0", T=0.5), (0.75, 0.0, 1.0, 1.0))


def test_degree_mismatch_rejected():
    with pytest.raises(sy.ModelError):
        sy.OperatorModel(sy.CoefficientField.zero(2), sy.CoefficientField.zero(2),
                         sy.CoefficientField.zero(3), sy.CoefficientField.zero(2),
                         sy.CoefficientField.zero(2))


def test_malformed_expression():
    with pytest.raises(ExpressionError):
        cubic("0", "xi^^2", "0")


# -- discriminants ------------------------------------------------------------

@pytest.mark.parametrize("q, expect, cls", [
    ((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), "triple"),
    ((0.0, -1.0, 0.0), (3.0, 0.0, 4.0), "simple"),
    ((-6.0, 11.0, -6.0), (3.0, 0.0, 4.0), "simple"),
])
def test_discriminant_examples(q, expect, cls):
    m = cubic(f"{q[0]}*xi", f"{q[1]}*xi^2", f"{q[2]}*xi^3")
    rep = sy.discriminants(m, 0.0, 0.0, 1.0)
    assert (rep.delta0, rep.delta1, rep.delta) == pytest.approx(expect, abs=1e-12)
    assert rep.classification == cls


def test_discriminant_complex_pair():
    rep = sy.discriminants(cubic("0", "xi^2", "0"), 0.0, 0.0, 1.0)
    assert rep.delta == pytest.approx(-4.0)
    assert rep.classification == "complex_pair"


@given(finite, finite, finite)
def test_discriminant_is_root_product(q1, q2, q3):
    r = sy.companion_roots(q1, q2, q3)
    prod = np.prod([(r[i] - r[j]) ** 2 for i, j in ((0, 1), (0, 2), (1, 2))]).real
    _, _, delta = sy.cubic_discriminants(q1, q2, q3)
    scale = sy._coeff_scale(q1, q2, q3) ** 6
    assert abs(delta - prod) <= 1e-9 * scale


@given(finite, finite, finite, st.floats(-3, 3))
def test_discriminant_shift_invariant(q1, q2, q3, s):
    # roots r_i -> r_i + s leaves the root differences unchanged
    a1, a2, a3 = q1 - 3 * s, q2 - 2 * q1 * s + 3 * s * s, q3 - q2 * s + q1 * s * s - s ** 3
    d = sy.cubic_discriminants(q1, q2, q3)
    e = sy.cubic_discriminants(a1, a2, a3)
    scale = (sy._coeff_scale(q1, q2, q3) + abs(s)) ** 6
    assert abs(d[2] - e[2]) <= 1e-8 * scale
    assert abs(d[0] - e[0]) <= 1e-8 * scale


# -- roots --------------------------------------------------------------------------

def test_roots_examples():
    assert sorted(v.real for v in sy.roots_of(0.0, -1.0, 0.0).roots) == pytest.approx([-1, 0, 1], abs=1e-14)
    triple = sy.roots_of(0.0, 0.0, 0.0)
    assert triple.roots == (0, 0, 0) and triple.all_real
    cx = sy.roots_of(0.0, 1.0, 0.0)
    assert not cx.all_real
    assert sy.match_distance(np.array(cx.roots), np.array([0, 1j, -1j])) < 1e-14


def test_roots_shifted_triple_uses_closed_form():
    rs = sy.roots_of(-3.0, 3.0, -1.0)
    assert rs.method == "triple_closed_form"
    assert np.allclose(rs.roots, 1.0, atol=1e-12)


@given(finite, finite, finite)
def test_roots_match_companion(q1, q2, q3):
    r, real, resid, _, _ = sy.solve_cubic(q1, q2, q3)
    scale = sy._coeff_scale(q1, q2, q3)
    assert resid <= 1e-12
    # forward error is only meaningful away from multiple roots
    _, _, delta = sy.cubic_discriminants(q1, q2, q3)
    if abs(delta) > 1e-6 * scale ** 6:
        assert sy.match_distance(r, sy.companion_roots(q1, q2, q3)) <= 1e-8 * scale


@given(st.lists(st.floats(-4, 4), min_size=3, max_size=3))
def test_roots_of_factored_cubic(rs):
    r1, r2, r3 = rs
    q1, q2, q3 = -(r1 + r2 + r3), r1 * r2 + r1 * r3 + r2 * r3, -r1 * r2 * r3
    got = np.array(sy.roots_of(q1, q2, q3).roots)
    # a root of multiplicity m is only determined to eps^(1/m)
    assert sy.match_distance(got, np.array(rs, dtype=complex)) <= 1e-4 * sy._coeff_scale(q1, q2, q3)


def test_solve_cubic_vectorised(rng):
    q = rng.uniform(-3, 3, (3, 500))
    r, real, _, _, _ = sy.solve_cubic(*q)
    assert r.shape == (500, 3)
    truth = np.all(np.abs(sy.companion_roots(*q).imag) < 1e-7, axis=1)
    assert np.array_equal(real, truth)


# -- scans -----------------------------------------------------------------------------

def test_scan_weakly_hyperbolic_passes():
    m = cubic("0", "-t*xi^2", "0")
    rep = sy.scan_hyperbolicity(m, np.linspace(0, 1, 11), np.linspace(-1, 1, 5))
    assert rep.passed and rep.min_delta >= 0


def test_scan_non_hyperbolic_fails():
    m = cubic("0", "t*xi^2", "0")
    rep = sy.scan_hyperbolicity(m, [1.0], [0.0])
    assert not rep.passed
    assert {v[2] for v in rep.violations} == {-1.0, 1.0}
    assert rep.violations[0][3] == pytest.approx(-4.0)


def test_scan_boundary_only():
    m = cubic("0", "-(t+1)*xi^2", "t*xi^3")
    assert sy.scan_hyperbolicity(m, [0.0], np.linspace(-1, 1, 9)).passed


def test_scan_empty_grid():
    with pytest.raises(ValueError):
        sy.scan_hyperbolicity(cubic("0", "0", "0"), [], [0.0])


def test_triple_locus_isolated_point():
    m = cubic("0", "-(t + x^2)*xi^2", "0")
    loc = sy.detect_triple_locus(m, np.linspace(-1, 1, 21))
    assert [p[0] for p in loc.points] == pytest.approx([0.0])
    assert loc.points[0][1] == {-1.0: 0.0, 1.0: 0.0}


def test_triple_locus_everywhere_and_empty():
    xs = np.linspace(-1, 1, 11)
    assert len(sy.detect_triple_locus(cubic("0", "-t*xi^2", "0"), xs).points) == xs.size
    assert sy.detect_triple_locus(cubic("0", "-xi^2", "0"), xs).points == []


@given(st.floats(0.1, 5), st.floats(-1, 1), st.floats(0.2, 4))
def test_homogeneity_of_parsed_field(s, x, xi):
    f = sy.CoefficientField.parse("(1 + x^2)*xi^2", 2)
    assert f(0.3, x, s * xi) == pytest.approx(s ** 2 * f(0.3, x, xi), rel=1e-12)
