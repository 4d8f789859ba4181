import numpy as np
import pytest
import scipy.integrate
from hypothesis import given, settings, strategies as st

from roughsde import (InvalidArgument, RoughPath, SampledPath, TimeGrid, canonical_lift,
                      chen_compose, chen_product, dyadic_approximation, generate_brownian,
                      generate_fbm, generate_smooth, geometricity_defect, ito_lift,
                      rough_distance, scan_roughness)
from roughsde.roughpath import STABLE, VANISHING, sphere_directions, write_rough_path_csv


def test_linear_path_one_step_area():
    g = TimeGrid(1.0, 1)
    rp = canonical_lift(SampledPath(g, np.array([[0.0, 0.0], [1.0, 2.0]])))
    assert np.allclose(rp.step_area[0], 0.5 * np.array([[1, 2], [2, 4]]))


def test_constant_path_has_zero_area():
    rp = canonical_lift(SampledPath(TimeGrid(1.0, 5), np.ones((6, 2))))
    assert np.all(rp.step_area == 0)


def test_step_area_shape_is_checked():
    p = generate_brownian(TimeGrid(1.0, 4), 2, 0)
    with pytest.raises(InvalidArgument):
        RoughPath(p, np.zeros((3, 2, 2)))


def test_smooth_lift_converges_to_quadrature():
    T = 1.0
    fine = TimeGrid(T, 2 ** 16)
    t = fine.nodes
    z = np.column_stack([np.sin(t), np.cos(t)])
    dz = np.column_stack([np.cos(t), -np.sin(t)])
    integrand = np.einsum("ta,tb->tab", z - z[0], dz)
    exact = scipy.integrate.trapezoid(integrand, t, axis=0)
    errs = []
    for N in (64, 128, 256, 512):
        g = TimeGrid(T, N)
        _, area = chen_compose(canonical_lift(generate_smooth(g, 2, "sincos")), 0, N)
        errs.append(np.abs(area - exact).max())
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(ratios > 1.7)


def test_empty_interval_composes_to_zero():
    rp = canonical_lift(generate_brownian(TimeGrid(1.0, 8), 2, 1))
    dz, area = chen_compose(rp, 3, 3)
    assert np.all(dz == 0) and np.all(area == 0)


def test_two_linear_steps_stay_geometric():
    g = TimeGrid(1.0, 2)
    rp = canonical_lift(generate_smooth(g, 1, "linear"))
    dz, area = chen_compose(rp, 0, 2)
    assert np.allclose(area, 0.5 * np.outer(dz, dz))


def test_compose_rejects_bad_indices():
    rp = canonical_lift(generate_brownian(TimeGrid(1.0, 8), 1, 1))
    for i, j in [(-1, 2), (3, 2), (0, 9)]:
        with pytest.raises(InvalidArgument):
            chen_compose(rp, i, j)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 3), st.data())
def test_chen_associativity(seed, n, data):
    N = 64
    rp = canonical_lift(generate_brownian(TimeGrid(1.0, N), n, seed))
    i = data.draw(st.integers(0, N))
    j = data.draw(st.integers(i, N))
    k = data.draw(st.integers(i, j))
    whole = chen_compose(rp, i, j)
    parts = chen_product(chen_compose(rp, i, k), chen_compose(rp, k, j))
    scale = max(1.0, np.abs(whole[1]).max())
    assert np.abs(whole[1] - parts[1]).max() <= 1e-12 * scale
    assert np.allclose(whole[0], parts[0], atol=1e-14)


def test_lagged_matches_compose():
    rp = canonical_lift(generate_fbm(TimeGrid(1.0, 32), 2, 0.4, 5))
    dz, area = rp.lagged(5)
    for s in (0, 7, 27):
        z, a = chen_compose(rp, s, s + 5)
        assert np.allclose(dz[s], z) and np.allclose(area[s], a, atol=1e-14)


def test_geometricity_defect_examples():
    g = TimeGrid(1.0, 128)
    assert geometricity_defect(canonical_lift(generate_fbm(g, 3, 0.45, 2))) <= 1e-12
    assert geometricity_defect(canonical_lift(SampledPath(g, np.zeros((129, 2))))) == 0.0
    path = generate_brownian(g, 2, 7)
    ito = ito_lift(path, substeps=128, seed=1)
    assert not ito.geometric
    # Ito area misses half the quadratic variation on the diagonal: about h / 2 per coordinate
    defect = geometricity_defect(ito)
    assert 0.2 * g.h < defect < 5 * g.h


def test_rough_distance_basic_properties():
    g = TimeGrid(1.0, 64)
    a = canonical_lift(generate_brownian(g, 2, 0))
    b = canonical_lift(generate_brownian(g, 2, 1))
    assert rough_distance(a, a, 0.4) == 0.0
    assert rough_distance(a, b, 0.4) == pytest.approx(rough_distance(b, a, 0.4), rel=1e-14)


def test_rough_distance_decreases_under_dyadic_refinement():
    fine = generate_fbm(TimeGrid(1.0, 1024), 1, 0.45, 3)
    target = canonical_lift(fine)
    dist = [rough_distance(canonical_lift(dyadic_approximation(fine, lvl)), target, 0.3)
            for lvl in range(4, 11)]
    assert np.all(np.diff(dist) < 0)
    assert dist[-1] == 0.0


def test_scan_linear_path_vanishes():
    g = TimeGrid(1.0, 1024)
    rp = canonical_lift(generate_smooth(g, 1, "linear"))
    eps = [1 / 64, 1 / 32, 1 / 16, 1 / 8, 1 / 4]
    rep = scan_roughness(rp, 0.6, eps)
    table = [l for _, l in rep.table]
    # window |t - s| < eps on the grid reaches eps - h
    expected = [(e - g.h) / e ** 0.6 for e in eps]
    assert np.allclose(table, expected, rtol=1e-10)
    assert rep.modulus == min(table)
    assert rep.verdict == VANISHING


def test_scan_brownian_is_stable():
    g = TimeGrid(1.0, 4096)
    rp = canonical_lift(generate_brownian(g, 1, 11))
    rep = scan_roughness(rp, 0.6, [2 ** -k for k in range(2, 8)])
    assert rep.verdict == STABLE


def test_scan_theta_zero_is_positive_for_nonconstant_path():
    rp = canonical_lift(generate_brownian(TimeGrid(1.0, 256), 2, 2))
    assert scan_roughness(rp, 0.0, [0.1, 0.2], directions=4).modulus > 0


def test_scan_rejects_small_or_large_eps_and_bad_theta():
    rp = canonical_lift(generate_brownian(TimeGrid(1.0, 16), 1, 0))
    with pytest.raises(InvalidArgument):
        scan_roughness(rp, 0.5, [1 / 32])
    with pytest.raises(InvalidArgument):
        scan_roughness(rp, 0.5, [2.0])
    with pytest.raises(InvalidArgument):
        scan_roughness(rp, 1.0, [0.5])


def test_more_directions_never_increase_modulus():
    rp = canonical_lift(generate_brownian(TimeGrid(1.0, 512), 3, 5))
    eps = [1 / 32, 1 / 8, 1 / 2]
    few = scan_roughness(rp, 0.4, eps, directions=8, seed=1)
    many = scan_roughness(rp, 0.4, eps, directions=64, seed=1)
    for (_, a), (_, b) in zip(few.table, many.table):
        assert b <= a
    dirs = sphere_directions(3, 64, seed=1)
    assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0)


def test_report_serialises(tmp_path):
    rp = canonical_lift(generate_brownian(TimeGrid(1.0, 64), 2, 0))
    d = scan_roughness(rp, 0.5, [0.25, 0.5]).to_dict()
    assert set(d) >= {"theta", "modulus", "table", "verdict", "note"}
    f = tmp_path / "rp.csv"
    write_rough_path_csv(rp, f)
    lines = f.read_text().splitlines()
    assert lines[0] == "i,t_i,dZ_1,dZ_2,A_11,A_12,A_21,A_22"
    assert len(lines) == 65
