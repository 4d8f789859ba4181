import json

import numpy as np
import pytest

from roughsde import (ConstantField, InvalidArgument, SampledPath, TimeGrid, VectorFieldSet,
                      cameron_martin_check, canonical_lift, generate_brownian, generate_fbm,
                      malliavin_derivative, malliavin_derivative_direct, malliavin_matrix,
                      malliavin_report, reduced_malliavin_matrix, solve_flows, solve_rsde)

from conftest import additive, bounded_nonlinear, scalar_linear


def setup(vf, N=256, x0=None, seed=0, fbm=True):
    g = TimeGrid(1.0, N)
    B = generate_brownian(g, vf.m, seed)
    z = generate_fbm(g, vf.n, 0.45, seed + 500) if fbm else generate_brownian(g, vf.n, seed + 500)
    Z = canonical_lift(z)
    x0 = np.full(vf.d, 0.5) if x0 is None else x0
    sol = solve_rsde(vf, x0, B, Z)
    return sol, B, Z, solve_flows(vf, sol, B, Z)


def test_constant_coefficients_give_identity_flows():
    vf = VectorFieldSet(ConstantField(np.array([1.0, 0.0]), 2), ConstantField(np.eye(2), 2),
                        ConstantField(np.ones((2, 1)), 2))
    sol, B, Z, fl = setup(vf)
    assert np.all(fl.J == np.eye(2)) and np.all(fl.I == np.eye(2))
    assert fl.inverse_defect == 0.0


def test_flows_start_at_identity():
    sol, B, Z, fl = setup(bounded_nonlinear())
    assert np.array_equal(fl.J[0], np.eye(2)) and np.array_equal(fl.I[0], np.eye(2))


def test_gbm_flows_match_closed_form():
    a = 0.3
    vf = scalar_linear(a=a)
    sol, B, Z, fl = setup(vf, N=1024, x0=np.array([2.0]))
    X = sol.X[:, 0]
    assert np.allclose(fl.J[:, 0, 0], X / 2.0, rtol=1e-12)
    assert np.abs(fl.I[:, 0, 0] - 2.0 / X).max() < 0.05


def test_jacobian_is_derivative_of_discrete_map():
    vf = bounded_nonlinear()
    sol, B, Z, fl = setup(vf, N=512)
    x0, e = sol.X[0], 1e-6
    cols = [(solve_rsde(vf, x0 + e * u, B, Z).X[-1] - solve_rsde(vf, x0 - e * u, B, Z).X[-1]) / (2 * e)
            for u in np.eye(2)]
    assert np.allclose(np.column_stack(cols), fl.J[-1], atol=1e-8)


def test_inverse_defect_shrinks_with_refinement():
    vf = scalar_linear(a=0.3)
    means = []
    for N in (2 ** 8, 2 ** 9, 2 ** 10):
        means.append(np.mean([setup(vf, N=N, x0=np.ones(1), seed=s)[3].inverse_defect
                              for s in range(40)]))
    assert means[0] > means[1] > means[2]


def test_constant_sigma_derivative():
    vf = additive(2, 0.7)
    sol, B, Z, fl = setup(vf)
    D = malliavin_derivative(fl, vf, sol, np.arange(0, 257, 16))
    assert np.allclose(D, 0.7 * np.eye(2))


def test_gbm_derivative_closed_form():
    a = 0.3
    vf = scalar_linear(a=a)
    sol, B, Z, fl = setup(vf, N=512, x0=np.ones(1))
    D = malliavin_derivative(fl, vf, sol, np.arange(0, 512, 32), inverse="exact")
    assert np.allclose(D[:, 0, 0], a * sol.X[-1, 0], rtol=1e-12)
    D_eq = malliavin_derivative(fl, vf, sol, np.arange(0, 512, 32))
    assert np.allclose(D_eq[:, 0, 0], a * sol.X[-1, 0], rtol=0.05)


def test_product_route_matches_direct_solve():
    vf = bounded_nonlinear()
    sol, B, Z, fl = setup(vf, N=1024)
    for th in (0, 100, 513, 1000, 1024):
        direct = malliavin_derivative_direct(vf, sol, B, Z, th)
        prod = malliavin_derivative(fl, vf, sol, th, inverse="exact")
        assert np.linalg.norm(prod - direct) <= 1e-6 * np.linalg.norm(direct)


def test_theta_after_t_is_rejected():
    vf = bounded_nonlinear()
    sol, B, Z, fl = setup(vf, N=64)
    with pytest.raises(InvalidArgument):
        malliavin_derivative(fl, vf, sol, 40, t=30)
    with pytest.raises(InvalidArgument):
        malliavin_derivative(fl, vf, sol, 0, inverse="pseudo")


def test_reduced_matrix_unit_noise_is_time():
    vf = additive(1, 1.0)
    sol, B, Z, fl = setup(vf, N=1000)
    for t in (0, 1, 250, 1000):
        assert reduced_malliavin_matrix(fl, vf, sol, t)[0, 0] == t * sol.grid.h


def test_reduced_matrix_zero_sigma():
    vf = additive(2, 0.0)
    sol, B, Z, fl = setup(vf)
    assert np.all(reduced_malliavin_matrix(fl, vf, sol) == 0)


@pytest.mark.parametrize("inverse", ["equation", "exact"])
def test_gamma_two_routes_agree(inverse):
    vf = bounded_nonlinear()
    sol, B, Z, fl = setup(vf, N=512)
    for t in (128, 512):
        a = malliavin_matrix(fl, vf, sol, t, "definition", inverse)
        b = malliavin_matrix(fl, vf, sol, t, "product", inverse)
        assert np.linalg.norm(a - b) <= 1e-8 * np.linalg.norm(b)


def test_reduced_matrix_is_monotone_in_time():
    vf = bounded_nonlinear()
    sol, B, Z, fl = setup(vf, N=256)
    prev = reduced_malliavin_matrix(fl, vf, sol, 0)
    for t in range(16, 257, 16):
        cur = reduced_malliavin_matrix(fl, vf, sol, t)
        assert np.linalg.eigvalsh(cur - prev).min() >= -1e-10
        prev = cur


def test_uniform_ellipticity_lower_bound():
    c = 0.25
    vf = additive(2, np.sqrt(c))
    for s in range(100):
        sol, B, Z, fl = setup(vf, N=1024, seed=s, fbm=False)
        assert np.linalg.eigvalsh(reduced_malliavin_matrix(fl, vf, sol)).min() >= 0.5 * c * 1.0


def test_report_json(tmp_path):
    vf = bounded_nonlinear()
    sol, B, Z, fl = setup(vf, N=128)
    rep = malliavin_report(fl, vf, sol, inputs={"note": "x"})
    assert rep.gamma_gap <= 1e-8
    assert np.all(np.diff(rep.eigenvalues) >= 0)
    assert rep.min_eigenvalue == rep.eigenvalues[0]
    f = tmp_path / "m.json"
    rep.to_json(f)
    data = json.loads(f.read_text())
    assert data["inputs"]["Z_hash"] == Z.fingerprint() and data["inputs"]["note"] == "x"
    assert np.allclose(data["gamma"], rep.gamma)


def test_cameron_martin_additive_noise_is_exact():
    vf = additive(1, 0.8)
    g = TimeGrid(1.0, 256)
    B = generate_brownian(g, 1, 0)
    Z = canonical_lift(generate_brownian(g, 1, 1))
    h = SampledPath(g, np.cos(3 * g.nodes))
    rep = cameron_martin_check(vf, np.zeros(1), B, Z, h)
    expected = 0.8 * np.sum(np.cos(3 * g.nodes[:-1])) * g.h
    assert rep.pairing[0] == pytest.approx(expected, rel=1e-12)
    assert np.allclose(rep.finite_difference[:, 0], expected, rtol=1e-8)


def test_cameron_martin_zero_direction():
    vf = scalar_linear(a=0.3)
    g = TimeGrid(1.0, 128)
    B = generate_brownian(g, 1, 0)
    Z = canonical_lift(generate_brownian(g, 1, 1))
    rep = cameron_martin_check(vf, np.ones(1), B, Z, SampledPath(g, np.zeros(129)))
    assert np.all(rep.pairing == 0) and np.all(rep.finite_difference == 0)


def test_cameron_martin_gbm_slope():
    vf = scalar_linear(a=0.5)
    g = TimeGrid(1.0, 512)
    B = generate_brownian(g, 1, 2)
    Z = canonical_lift(generate_brownian(g, 1, 3))
    rep = cameron_martin_check(vf, np.ones(1), B, Z, SampledPath(g, np.ones(513)),
                               eps_list=(1e-1, 1e-2, 1e-3, 1e-4))
    assert 0.8 <= rep.slope <= 1.2
    assert np.all(rep.errors < 0.05)
