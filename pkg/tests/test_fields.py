import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roughsde import (Combination, ConstantField, InvalidArgument, LinearField, RidgeField,
                      VectorFieldSet, build_field, hormander_demo, lie_bracket,
                      validate_derivatives)
from roughsde.fields import CallableField, LeafField

from conftest import bounded_nonlinear


def leaf(field, label="F", column=None):
    return LeafField(label, field, column)


def sin_field(d=2, seed=0):
    r = np.random.default_rng(seed)
    return RidgeField("sin", r.standard_normal((d, 3)), r.standard_normal((3, d)),
                      r.standard_normal(3))


def test_linear_derivative_is_exact():
    A = np.array([[1.0, 2.0], [-3.0, 0.5]])
    vf = VectorFieldSet(LinearField(A), ConstantField(np.eye(2), 2), ConstantField(np.zeros((2, 1)), 2))
    x = np.array([0.3, -1.2])
    assert np.array_equal(vf.Db(x), A)
    rep = validate_derivatives(vf, np.random.default_rng(0).standard_normal((5, 2)))
    assert rep.errors[("b", 1)] <= 1e-10


def test_sine_derivatives_match_finite_differences():
    vf = VectorFieldSet(RidgeField("sin", np.eye(2), np.eye(2)), ConstantField(np.eye(2), 2),
                        ConstantField(np.zeros((2, 1)), 2))
    probes = np.random.default_rng(1).standard_normal((10, 2))
    rep = validate_derivatives(vf, probes, eta=1e-4)
    # central differences with step 1e-4 have error about eta^2
    assert rep.errors[("b", 1)] < 1e-7
    assert not rep.flagged


def test_finite_difference_provider_reports_zero():
    f = CallableField(lambda x: np.sin(x), 2, (2,))
    vf = VectorFieldSet(f, ConstantField(np.eye(2), 2), ConstantField(np.zeros((2, 1)), 2))
    rep = validate_derivatives(vf, np.zeros((3, 2)))
    assert rep.errors[("b", 1)] == 0.0


def test_validate_rejects_empty_probes():
    with pytest.raises(InvalidArgument):
        validate_derivatives(hormander_demo(), np.zeros((0, 2)))


def test_wrong_analytic_derivative_is_caught_at_construction():
    class Broken(LinearField):
        def _analytic(self, x, k):
            out = super()._analytic(x, k)
            return out + 1.0 if k == 1 else out
    with pytest.raises(InvalidArgument):
        VectorFieldSet(Broken(np.eye(2)), ConstantField(np.eye(2), 2), ConstantField(np.zeros((2, 1)), 2))


@pytest.mark.parametrize("kind", ["sin", "cos", "tanh", "sigmoid"])
def test_ridge_higher_derivatives(kind):
    r = np.random.default_rng(2)
    f = RidgeField(kind, r.standard_normal((2, 3, 4)), r.standard_normal((4, 2)), r.standard_normal(4))
    x = r.standard_normal((5, 2))
    for k in (1, 2, 3):
        d = f.derivative(x, k)
        assert d.shape == (5, 2, 3) + (2,) * k
        h = 1e-5
        fd = np.stack([(f.derivative(x + h * e, k - 1) - f.derivative(x - h * e, k - 1)) / (2 * h)
                       for e in np.eye(2)], axis=-1)
        assert np.allclose(d, fd, atol=1e-5)


def test_demo_bracket_is_unit_vertical():
    vf = hormander_demo()
    gens = vf.generators()
    br = lie_bracket(gens["sigma1"], gens["beta1"])
    x = np.array([0.7, -2.0])
    assert np.allclose(br.value(x), [0.0, 1.0])
    assert np.allclose(br.jacobian(x), 0.0)


def test_bracket_of_field_with_itself_and_constants_vanish():
    F = leaf(sin_field())
    x = np.array([0.2, 0.4])
    assert np.allclose(lie_bracket(F, F).value(x), 0.0)
    c1, c2 = leaf(ConstantField(np.array([1.0, 2.0]), 2)), leaf(ConstantField(np.array([0.0, 3.0]), 2))
    assert np.allclose(lie_bracket(c1, c2).value(x), 0.0)


def test_bracket_matches_definition_with_finite_differences():
    f, g = sin_field(seed=3), build_field("tanh", {"amplitude": [[1.0, 0.5], [0.2, -1.0]]}, 2, (2,))
    x = np.array([0.3, -0.8])
    h = 1e-6
    def jac(field):
        return np.column_stack([(field(x + h * e) - field(x - h * e)) / (2 * h) for e in np.eye(2)])
    expected = jac(g) @ f(x) - jac(f) @ g(x)
    assert np.allclose(lie_bracket(leaf(f), leaf(g)).value(x), expected, atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.floats(-2, 2), min_size=2, max_size=2))
def test_bracket_antisymmetry_bilinearity_and_jacobi(seed, point):
    x = np.array(point)
    F, G, H = (leaf(sin_field(seed=seed + i), label=l) for i, l in enumerate("FGH"))
    fg, gf = lie_bracket(F, G).value(x), lie_bracket(G, F).value(x)
    assert np.allclose(fg, -gf, atol=1e-8)
    FH = Combination([(1.0, F), (1.0, H)])
    assert np.allclose(lie_bracket(FH, G).value(x), fg + lie_bracket(H, G).value(x), atol=1e-8)
    jac = (lie_bracket(F, lie_bracket(G, H)).value(x) + lie_bracket(G, lie_bracket(H, F)).value(x)
           + lie_bracket(H, lie_bracket(F, G)).value(x))
    assert np.abs(jac).max() <= 1e-6


def test_deep_brackets_fall_back_to_finite_differences_with_flag():
    f = build_field("tanh", {"amplitude": [[1.0, 0.0], [0.0, 1.0]]}, 2, (2,))
    g = build_field("sigmoid", {"amplitude": [[0.5, 0.1], [0.3, 1.0]]}, 2, (2,))
    F, G = leaf(f, "F"), leaf(g, "G")
    x = np.array([0.1, 0.2])
    shallow = lie_bracket(F, G)
    shallow.value(x)
    assert not shallow.fd_used
    deep = lie_bracket(F, lie_bracket(G, lie_bracket(F, lie_bracket(G, F))))
    v = deep.value(x)
    assert deep.fd_used and np.all(np.isfinite(v))


def test_bracket_cache_returns_same_object_values():
    F = leaf(sin_field(), "F")
    G = leaf(sin_field(seed=9), "G")
    br = lie_bracket(F, G)
    x = np.array([0.5, 0.5])
    assert br.value(x) is br.value(x)


def test_build_field_library_and_errors():
    f = build_field("linear", {"matrix": [1, 2, 3, 4]}, 2, (2,))
    assert np.allclose(f(np.array([1.0, 1.0])), [3.0, 7.0])
    with pytest.raises(InvalidArgument):
        build_field("linear", {"matrix": [1, 2, 3]}, 2, (2,))
    with pytest.raises(InvalidArgument):
        build_field("spline", {}, 2, (2,))


def test_vector_field_set_checks_shapes():
    with pytest.raises(InvalidArgument):
        VectorFieldSet(ConstantField(np.zeros(2), 2), ConstantField(np.zeros((3, 1)), 2),
                       ConstantField(np.zeros((2, 1)), 2))


def test_rough_correction_contracts_area():
    vf = bounded_nonlinear()
    x = np.array([0.2, -0.3])
    area = np.array([[0.01]])
    expected = vf.Dbeta(x)[:, 0, :] @ vf.beta(x)[:, 0] * 0.01
    assert np.allclose(vf.rough_correction(x, area), expected)
