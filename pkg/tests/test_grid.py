import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roughsde import (InvalidArgument, NoiseSpec, SampledPath, TimeGrid,
                      dyadic_approximation, empirical_lp_norm, estimate_holder_norm,
                      fbm_covariance, generate_brownian, generate_fbm, generate_smooth,
                      read_path_csv, weighted_increment_norm, weighted_process_norm,
                      write_path_csv)


def test_grid_nodes_are_uniform_and_span_horizon():
    g = TimeGrid(2.0, 8)
    assert g.nodes[0] == 0.0 and g.nodes[-1] == 2.0
    assert np.all(np.diff(g.nodes) > 0)
    assert g.h == 2.0 / 8


@pytest.mark.parametrize("T,N", [(0.0, 4), (-1.0, 4), (1.0, 0), (1.0, 2.5)])
def test_grid_rejects_bad_input(T, N):
    with pytest.raises(InvalidArgument):
        TimeGrid(T, N)


def test_sampled_path_requires_finite_values_of_right_length():
    g = TimeGrid(1.0, 4)
    with pytest.raises(InvalidArgument):
        SampledPath(g, np.zeros((4, 1)))
    with pytest.raises(InvalidArgument):
        SampledPath(g, np.array([0, 1, np.nan, 2, 3.0]))


def test_brownian_single_step_starts_at_zero():
    p = generate_brownian(TimeGrid(1.0, 1), 1, 3)
    assert p.values.shape == (2, 1)
    assert p.values[0, 0] == 0.0


def test_brownian_is_deterministic_in_seed():
    g = TimeGrid(1.0, 100)
    assert np.array_equal(generate_brownian(g, 2, 9).values, generate_brownian(g, 2, 9).values)
    assert not np.array_equal(generate_brownian(g, 2, 9).values, generate_brownian(g, 2, 10).values)


def test_brownian_increment_variance():
    g = TimeGrid(1.0, 10_000)
    inc = generate_brownian(g, 1, 0).increments
    assert 0.95 <= inc.var() / g.h <= 1.05


def test_brownian_scaling_over_k_steps():
    g = TimeGrid(1.0, 16)
    k = 4
    inc = np.array([generate_brownian(g, 1, s).values[k, 0] for s in range(10_000)])
    assert abs(inc.var() / (k * g.h) - 1) < 0.05


def test_brownian_rejects_bad_dimension():
    with pytest.raises(InvalidArgument):
        generate_brownian(TimeGrid(1.0, 4), 0, 1)


def test_fbm_half_reduces_to_brownian_covariance():
    g = TimeGrid(1.0, 16)
    t = g.nodes[1:]
    assert np.allclose(fbm_covariance(g, 0.5), np.minimum.outer(t, t), atol=1e-15)


@pytest.mark.parametrize("H", [0.3, 1 / 3, 0.55])
def test_fbm_rejects_hurst_outside_range(H):
    with pytest.raises(InvalidArgument):
        generate_fbm(TimeGrid(1.0, 8), 1, H, 0)


def test_fbm_starts_at_zero_and_has_right_variance():
    g = TimeGrid(1.0, 256)
    H = 0.4
    samples = np.array([generate_fbm(g, 1, H, s).values[:, 0] for s in range(1000)])
    assert np.all(samples[:, 0] == 0.0)
    ratio = samples[:, 1:].var(axis=0) / g.nodes[1:] ** (2 * H)
    assert 0.8 <= ratio.mean() <= 1.2


def test_fbm_caps_grid_size():
    with pytest.raises(InvalidArgument):
        generate_fbm(TimeGrid(1.0, 8192), 1, 0.45, 0)


def test_noise_spec_validates_and_samples():
    with pytest.raises(InvalidArgument):
        NoiseSpec("fbm", 1, 0, hurst=0.2)
    with pytest.raises(InvalidArgument):
        NoiseSpec("levy", 1)
    p = NoiseSpec("smooth", 1, formula="linear").sample(TimeGrid(1.0, 4))
    assert np.allclose(p.values[:, 0], np.linspace(0, 1, 5))


def test_holder_norm_examples():
    g = TimeGrid(1.0, 64)
    assert estimate_holder_norm(SampledPath(g, np.full(65, 3.0)), 0.5) == 0.0
    lin = generate_smooth(g, 1, "linear")
    assert estimate_holder_norm(lin, 1.0) == pytest.approx(1.0, abs=1e-12)
    assert estimate_holder_norm(lin, 0.5) == pytest.approx(1.0, abs=1e-12)


def test_lp_norm_examples():
    g = TimeGrid(1.0, 2)
    same = [SampledPath(g, np.full(3, -2.5)) for _ in range(4)]
    assert empirical_lp_norm(same, 2, 1) == pytest.approx(2.5)
    pm = [SampledPath(g, np.full(3, 1.0)), SampledPath(g, np.full(3, -1.0))]
    assert empirical_lp_norm(pm, 2, 2) == pytest.approx(1.0)
    gauss = np.random.default_rng(0).standard_normal((10_000, 3))
    assert abs(empirical_lp_norm(gauss, 2, 1) - 1) < 0.05
    with pytest.raises(InvalidArgument):
        empirical_lp_norm([], 2, 0)


def test_weighted_process_norm_constant_is_one():
    g = TimeGrid(1.0, 16)
    assert weighted_process_norm([SampledPath(g, np.ones(17))], 2, 1.0) == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.05, 2.0), st.floats(0.05, 2.0))
def test_weighted_norm_monotone_in_lambda(seed, l1, l2):
    lo, hi = sorted((l1, l2))
    ens = [generate_brownian(TimeGrid(1.0, 32), 1, seed + i) for i in range(5)]
    assert weighted_process_norm(ens, 2, lo) <= weighted_process_norm(ens, 2, hi) + 1e-15


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.1, 1.0), st.sampled_from([0.3, 0.4, 0.5]))
def test_weighted_norm_comparison_inequality(seed, lam, alpha):
    g = TimeGrid(1.0, 64)
    ens = [generate_brownian(g, 2, seed + i) for i in range(8)]
    lhs = weighted_process_norm(ens, 2, lam)
    rhs = np.e ** 2 * lam ** alpha * weighted_increment_norm(ens, 2, lam, alpha)
    assert lhs <= rhs


def test_dyadic_approximation_interpolates_coarse_nodes():
    p = generate_brownian(TimeGrid(1.0, 64), 1, 1)
    q = dyadic_approximation(p, 3)
    assert np.array_equal(q.values[::8], p.values[::8])


def test_csv_round_trip(tmp_path):
    p = generate_brownian(TimeGrid(1.5, 10), 2, 4)
    f = tmp_path / "p.csv"
    write_path_csv(p, f)
    assert f.read_text().splitlines()[0] == "t,x1,x2"
    q = read_path_csv(f)
    assert np.array_equal(q.values, p.values)
    assert q.grid == p.grid
