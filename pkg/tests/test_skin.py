import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.sparse import csgraph

from cone_spectra.skin import (
    PointCloud,
    SkinError,
    feasibility_scan,
    ray_cloud,
    skin_axiom_report,
    skin_closed_form,
    skin_numeric,
)

from .conftest import S_HAT


def brute_force_skin(cloud, w):
    """sup over c of [dist(x, {|A| >= c}) <= w/c] equals max_y min(|A|(y), w / d(x, y))."""
    d = csgraph.dijkstra(cloud.graph(), directed=False)
    with np.errstate(divide="ignore"):
        reach = np.where(d > 0, w / d, np.inf)
    return np.max(np.minimum(cloud.abs_a[None, :], reach), axis=1)


def test_closed_form_values(simons, simons_skin):
    assert_allclose(simons_skin.s_hat, math.sqrt(6) + 1, rtol=1e-15)
    x = np.array([1.0, 0, 0, 0, 0, 0, 0, 0])[None, :]
    assert_allclose(simons_skin.eval(x), [3.449490], atol=1e-6)
    assert_allclose(simons_skin.eval(2 * x), [(math.sqrt(6) + 1) / 2], rtol=1e-15)
    assert_allclose(simons_skin.delta(x), [1 / S_HAT], rtol=1e-15)
    assert_allclose(simons_skin.lipschitz_bound, 0.289898, atol=1e-6)


def test_flat_cone_has_zero_skin(flat):
    field = skin_closed_form(flat, 1.0)
    x = np.random.default_rng(0).normal(size=(5, 8))
    assert np.all(field.eval(x) == 0)
    assert np.all(np.isinf(field.delta(x)))


def test_factor_cone_skin_uses_distance_to_singular_axis(factor, factor_skin):
    assert_allclose(factor_skin.s_hat, S_HAT)
    t = np.array([0.0, 0.7, -1.2])
    assert_allclose(factor_skin.on_link(t), S_HAT / np.cos(t), rtol=1e-14)
    cloud = ray_cloud(factor, 0.5, 2.0, 8, angle=0.7)
    assert np.all(factor_skin.eval(cloud.positions) >= cloud.abs_a)


def test_rejects_nonpositive_width(simons):
    with pytest.raises(SkinError):
        skin_closed_form(simons, 0.0)
    cloud = ray_cloud(simons, 1, 2, 4)
    with pytest.raises(SkinError):
        skin_numeric(cloud, -1.0)


def test_numeric_zero_curvature_cloud():
    cloud = PointCloud(np.zeros((3, 2)), np.zeros(3), np.array([[0, 1], [1, 2]]), np.array([1.0, 1.0]))
    out = skin_numeric(cloud, 1.0)
    assert np.all(out.values == 0)


def test_single_sample_is_its_own_curvature():
    # d(x, x) = 0 makes every c <= |A|(x) feasible, but no sample exceeds |A| = 5
    cloud = PointCloud(np.zeros((1, 2)), np.array([5.0]), np.zeros((0, 2), dtype=int), np.zeros(0))
    out = skin_numeric(cloud, 1.0)
    assert_allclose(out.values, [5.0], rtol=1e-9)
    assert not out.saturated.any()


def test_disconnected_cloud_is_reported():
    cloud = PointCloud(np.zeros((4, 1)), np.ones(4), np.array([[0, 1], [2, 3]]), np.ones(2))
    with pytest.raises(SkinError, match="disconnected.*component"):
        skin_numeric(cloud, 1.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 40), w=st.floats(0.1, 5.0))
def test_bisection_matches_max_min_formula(seed, n, w):
    rng = np.random.default_rng(seed)
    # random tree plus extra edges: always connected
    parents = [rng.integers(0, i) for i in range(1, n)]
    edges = [(i, p) for i, p in zip(range(1, n), parents)]
    edges += [tuple(rng.choice(n, 2, replace=False)) for _ in range(n // 3)]
    edges = np.array(edges, dtype=int)
    lengths = rng.uniform(0.05, 2.0, len(edges))
    abs_a = rng.uniform(0, 3, n) * (rng.uniform(size=n) > 0.3)
    abs_a[0] = max(abs_a[0], 0.5)
    cloud = PointCloud(rng.normal(size=(n, 3)), abs_a, edges, lengths)
    out = skin_numeric(cloud, w, batch=7)
    assert_allclose(out.values, brute_force_skin(cloud, w), rtol=1e-9)
    assert np.all(out.values >= abs_a)


def test_feasibility_is_monotone_along_level_scan(simons):
    cloud = ray_cloud(simons, 0.1, 10, 500)
    for sample in (0, 100, 250, 499):
        _, truth = feasibility_scan(cloud, 1.0, sample)
        changes = np.count_nonzero(truth[1:] != truth[:-1])
        assert changes <= 1
        assert not np.any(~truth[:-1] & truth[1:])  # never infeasible below a feasible level


def interior_error(model, samples, w=1.0):
    cloud = ray_cloud(model, 0.1, 10.0, samples)
    field = skin_closed_form(model, w)
    numeric = skin_numeric(cloud, w)
    r = np.linalg.norm(cloud.positions, axis=1)
    mask = r >= 0.1 * S_HAT / math.sqrt(6)
    exact = field.eval(cloud.positions)
    return np.max(np.abs(numeric.values[mask] - exact[mask]) / exact[mask])


def test_ray_cloud_convergence(simons):
    e1, e2 = interior_error(simons, 2000), interior_error(simons, 4000)
    assert e1 < 0.03 and e2 < 0.02
    assert 1.5 <= e1 / e2 <= 4


def test_axiom_report_closed_form(simons, simons_skin):
    cloud = ray_cloud(simons, 0.1, 10, 1000)
    rep = skin_axiom_report(simons_skin, cloud)
    r = np.linalg.norm(cloud.positions, axis=1)
    assert_allclose(rep.dominance_margin, np.min(1.0 / r), rtol=1e-12)
    assert_allclose(rep.lipschitz, 1 / S_HAT, rtol=1e-9)
    assert rep.scaling_deviation < 1e-12


def test_axiom_report_flat(flat):
    field = skin_closed_form(flat, 1.0)
    cloud = ray_cloud(flat, 0.1, 10, 50)
    rep = skin_axiom_report(field, cloud)
    assert rep.dominance_margin == 0 and rep.lipschitz == 0 and rep.scaling_deviation == 0


def test_axiom_report_numeric(simons):
    cloud = ray_cloud(simons, 0.1, 10, 1000)
    numeric = skin_numeric(cloud, 1.0)
    rep = skin_axiom_report(numeric, cloud)
    assert rep.dominance_margin >= 0
    assert rep.scaling_deviation < 1e-3
    # the graph supremum is piecewise w / d(x, y): delta has slope 1/w between contact switches
    assert rep.lipschitz <= 1.0 + 1e-9


def test_cloud_csv_round_trip(tmp_path, simons):
    cloud = ray_cloud(simons, 0.5, 2.0, 30)
    cloud.to_csv(tmp_path / "pts.csv", tmp_path / "edges.csv")
    back = PointCloud.from_csv(tmp_path / "pts.csv", tmp_path / "edges.csv")
    assert_allclose(back.positions, cloud.positions, rtol=0)
    assert_allclose(back.abs_a, cloud.abs_a, rtol=0)
    assert np.array_equal(back.edges, cloud.edges)
    assert_allclose(back.lengths, cloud.lengths, rtol=0)


def test_cloud_validation():
    with pytest.raises(SkinError):
        PointCloud(np.zeros((2, 1)), np.ones(3), np.zeros((0, 2), dtype=int), np.zeros(0))
    with pytest.raises(SkinError):
        PointCloud(np.zeros((2, 1)), np.ones(2), np.array([[0, 1]]), np.array([0.0]))
