from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedlowrank.covering import (
    assign_cell,
    build_l1_net,
    build_latent_matrix,
    dense_grid,
    holder_suite,
    linear_function,
    sum_sine,
    sup_error,
    taylor_piecewise,
    theorem1_check,
    rank_bound_rhs,
    rank_bound_threshold,
    uniform_error_bound,
)
from fedlowrank.errors import InconsistentParams, NotApplicable, TooLarge
from fedlowrank.numerics import finite_diff_partial


@pytest.mark.parametrize("d, q", [(1, 1), (1, 7), (2, 3), (2, 8), (3, 2), (4, 2)])
def test_net_covers_random_points(d, q):
    net = build_l1_net(d, q)
    assert len(net) <= net.volumetric_bound()
    x = np.random.default_rng(d * 100 + q).random((2000, d))
    idx = net.assign(x)
    dist = np.abs(x - net.centers[idx]).sum(axis=1)
    assert np.all(dist <= 1.0 / q + 1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3), st.integers(1, 6), st.data())
def test_net_covering_property(d, q, data):
    net = build_l1_net(d, q)
    x = np.array(data.draw(st.lists(st.floats(0, 1), min_size=d, max_size=d)))
    j = assign_cell(net, x)
    assert np.abs(x - net.centers[j]).sum() <= net.radius + 1e-12


def test_net_corners_are_covered():
    net = build_l1_net(3, 3)
    corners = np.array(np.meshgrid(*[[0.0, 1.0]] * 3)).reshape(3, -1).T
    net.assign(corners)


def test_net_is_deterministic():
    assert np.array_equal(build_l1_net(2, 5).centers, build_l1_net(2, 5).centers)


def test_net_rejects_bad_arguments():
    with pytest.raises(ValueError):
        build_l1_net(0, 2)
    with pytest.raises(ValueError):
        build_l1_net(2, 0.5)
    with pytest.raises(TooLarge):
        build_l1_net(6, 1000)
    with pytest.raises(ValueError):
        assign_cell(build_l1_net(2, 2), np.array([0.5, 1.5]))


@pytest.mark.parametrize("g", holder_suite(), ids=lambda g: f"{g.name}-d{g.d}-eta{g.eta}")
def test_analytic_partials_match_finite_differences(g):
    y = np.full(g.d, 0.37) + 0.05 * np.arange(g.d)
    theta = np.array([0.7])
    zero = (0,) * g.d
    assert np.allclose(g.partial(zero, y[None, :], theta), g.value(y[None, :], theta))
    if g.eta <= 1 and g.name == "abs_cosine":
        return
    for s in [tuple(int(i == j) for i in range(g.d)) for j in range(g.d)]:
        fd = finite_diff_partial(lambda v: g.value(v[None, :], theta)[0], y, s, 1e-6)
        assert fd == pytest.approx(g.partial(s, y[None, :], theta)[0], rel=1e-5, abs=1e-7)


def test_suite_size_and_constants():
    suite = holder_suite()
    assert len(suite) == 12
    sines = {(g.d, g.eta): g.L2(np.array([0.0])) for g in suite if g.name == "sum_sine"}
    assert sines[(1, 1.0)] == pytest.approx(math.pi)
    assert sines[(2, 2.0)] == pytest.approx(math.pi**2)


def test_taylor_of_linear_is_exact_at_degree_one():
    g = linear_function(2, eta=2.0)
    net = build_l1_net(2, 3)
    poly = taylor_piecewise(g, np.array([0.2]), net)
    grid = dense_grid(net)
    assert np.max(np.abs(poly(grid) - g.value(grid, np.array([0.2])))) <= 1e-13


def test_piecewise_constant_error_within_bound():
    g = sum_sine(1, 1.0)
    for q in (2, 4, 8, 16):
        err = sup_error(g, np.array([0.0]), q)
        assert err <= uniform_error_bound(g.L2(np.array([0.0])), 0, q, 1.0)


def test_error_bound_closed_form():
    assert uniform_error_bound(2.0, 1, 4, 2.0) == pytest.approx(2.0 / 16)
    assert uniform_error_bound(1.0, 0, 2, 0.5) == pytest.approx(2**-0.5)
    with pytest.raises(InconsistentParams):
        uniform_error_bound(1.0, 1, 2, 1.0)


def test_dense_grid_contains_centers_and_faces():
    net = build_l1_net(2, 4)
    grid = dense_grid(net)
    assert grid.shape[0] >= 20_000
    assert {tuple(c) for c in net.centers} <= {tuple(p) for p in grid}


@pytest.mark.parametrize("d, eta, r_min", [(1, 1.0, 6), (1, 2.0, 11), (2, 1.0, 62), (2, 2.0, 139)])
def test_threshold_smallest_admissible_rank(d, eta, r_min):
    t = rank_bound_threshold(d, eta)
    assert r_min - 1 < t <= r_min


def test_rhs_coefficient_value():
    assert rank_bound_rhs(6, 1.0, 1.0, 1) == pytest.approx(0.8210062332145166, rel=1e-12)
    assert rank_bound_rhs(6, 1.0, 3.0, 1) == pytest.approx(9 * 0.8210062332145166, rel=1e-12)


def test_latent_matrix_layout():
    g = lambda ys, th: ys[:, 0] * th[0]
    L = build_latent_matrix(g, np.array([[0.1], [0.5]]), np.array([1.0, 2.0, 3.0]))
    assert np.allclose(L.M, [[0.1, 0.2, 0.3], [0.5, 1.0, 1.5]])
    with pytest.raises(ValueError):
        build_latent_matrix(g, np.array([[1.2]]), np.array([1.0]))


def test_rank_check_requires_threshold():
    M = np.random.default_rng(0).random((10, 10))
    with pytest.raises(NotApplicable):
        theorem1_check(M, 5, 1.0, 1.0, 1)


def test_rank_check_on_smooth_latent_matrix():
    g = sum_sine(1, 1.0)
    rng = np.random.default_rng(3)
    thetas = np.linspace(-2, 2, 64)
    L = build_latent_matrix(g.value, rng.random((64, 1)), thetas)
    res = theorem1_check(L, 6, 1.0, math.pi, 1)
    assert res["pass"] and res["lhs"] <= res["rhs"]


def test_rank_check_exact_low_rank_is_zero():
    rng = np.random.default_rng(4)
    M = rng.normal(size=(40, 3)) @ rng.normal(size=(3, 40))
    assert theorem1_check(M, 6, 1.0, 1.0, 1)["lhs"] <= 1e-24


def test_net_size_examples():
    assert len(build_l1_net(1, 2)) == 1 and np.allclose(build_l1_net(1, 2).centers, [[0.5]])
    assert len(build_l1_net(1, 4)) <= 5
    assert len(build_l1_net(2, 1)) <= 8


def test_center_belongs_to_its_own_ball():
    net = build_l1_net(2, 4)
    for j in (0, 3, len(net) - 1):
        assert np.abs(net.centers[j] - net.centers[assign_cell(net, net.centers[j])]).sum() <= net.radius


def test_first_ball_wins_ties():
    net = build_l1_net(1, 2 * 3)  # three cells of width 1/3, radius 1/6
    boundary = np.array([1.0 / 3.0])
    assert assign_cell(net, boundary) == 0


def test_partition_property_random_points():
    net = build_l1_net(2, 5)
    x = np.random.default_rng(8).random((10_000, 2))
    idx = net.assign(x)
    dist = np.abs(x[:, None, :] - net.centers[None]).sum(axis=2)
    first = np.argmax(dist <= net.radius + 1e-12, axis=1)
    assert np.array_equal(idx, first)


@pytest.mark.parametrize("args, expected", [((1, 1, 4, 2), 0.0625), ((1, 0, 10, 1), 0.1), ((2, 1, 2, 2), 0.5)])
def test_error_bound_examples(args, expected):
    assert uniform_error_bound(*args) == pytest.approx(expected)


def test_constant_taylor_is_constant():
    from fedlowrank.covering import constant_function

    g = constant_function(2, c=1.3)
    poly = taylor_piecewise(g, np.array([0.0]), build_l1_net(2, 3))
    assert np.allclose(poly(np.random.default_rng(0).random((50, 2))), 1.3)


def test_separable_sine_within_bound_at_q8():
    from fedlowrank.covering import separable_sine

    g = separable_sine()
    for th in (0.0, 0.7, -1.3):
        theta = np.array([th])
        assert sup_error(g, theta, 8) <= uniform_error_bound(g.L2(theta), 1, 8, 2.0)


def test_latent_matrix_examples():
    ys, th = np.random.default_rng(1).random((6, 2)), np.linspace(-1, 1, 5)
    assert np.allclose(build_latent_matrix(lambda y, t: np.ones(len(y)), ys, th).M, 1.0)
    M = build_latent_matrix(lambda y, t: np.sin(y[:, 0]) * np.cos(t[0]), ys, th).M
    s = np.linalg.svd(M, compute_uv=False)
    assert s[1] <= 1e-10 * s[0]


def test_lipschitz_abs_cosine_passes_rank_check():
    from fedlowrank.covering import abs_cosine

    g = abs_cosine()
    rng = np.random.default_rng(0)
    L = build_latent_matrix(g.value, rng.random((64, 1)), np.linspace(-2, 2, 64))
    assert theorem1_check(L, 6, 1.0, math.pi, 1)["pass"]
