import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from cone_spectra.geometry import (
    EuclideanFactor,
    GeometryError,
    ProductOfSpheres,
    RoundLink,
    build_cone,
    cone_spec_from_dict,
    link_point,
    link_volume_quadrature,
    scalar_curvature,
    second_fundamental_norm,
)


def level_set_a2(grad, hess, x):
    """|A|^2 of the level set {F = 0} at x from the gradient and Hessian of F."""
    g = grad(x)
    nu = g / np.linalg.norm(g)
    P = np.eye(len(x)) - np.outer(nu, nu)
    A = P @ hess(x) @ P / np.linalg.norm(g)
    return float(np.sum(A * A))


def product_defining_function(p, q, m=0):
    # F = q |x|^2 - p |y|^2 on R^m x R^{p+1} x R^{q+1}
    def grad(z):
        g = np.zeros_like(z)
        g[m : m + p + 1] = 2 * q * z[m : m + p + 1]
        g[m + p + 1 :] = -2 * p * z[m + p + 1 :]
        return g

    def hess(z):
        H = np.zeros((len(z), len(z)))
        H[range(m, m + p + 1), range(m, m + p + 1)] = 2 * q
        idx = range(m + p + 1, len(z))
        H[idx, idx] = -2 * p
        return H

    return grad, hess


@pytest.mark.parametrize("p,q", [(3, 3), (2, 4), (1, 5), (2, 3), (4, 6)])
def test_link_a2_matches_level_set_curvature(p, q):
    model = build_cone(ProductOfSpheres(p, q))
    grad, hess = product_defining_function(p, q)
    x = link_point(model)
    assert_allclose(np.linalg.norm(x), 1.0, rtol=1e-15)
    assert_allclose(model.a2(), level_set_a2(grad, hess, x), rtol=1e-12)
    assert model.a2() == p + q


def test_simons_cone_basics(simons):
    assert simons.n == 7
    assert simons.link_dim == 6
    assert simons.minimizing
    assert simons.link_singular == ()
    ap, aq = simons.spec.radii
    assert_allclose(ap**2 + aq**2, 1.0, rtol=1e-15)


def test_factor_cone_a2_and_weight(factor):
    assert factor.n == 8
    assert factor.link_singular == (-math.pi / 2, math.pi / 2)
    t = np.linspace(-1.4, 1.4, 9)
    assert_allclose(factor.a2(t), 6.0 / np.cos(t) ** 2, rtol=1e-14)
    assert_allclose(factor.weight(t), np.cos(t) ** 6, rtol=1e-14)
    grad, hess = product_defining_function(3, 3, m=1)
    for angle in (0.0, 0.4, -1.1):
        x = link_point(factor, angle)
        assert_allclose(factor.a2(angle), level_set_a2(grad, hess, x), rtol=1e-11)


def test_factor_m2_domain_and_weight():
    model = build_cone(EuclideanFactor(2, ProductOfSpheres(3, 3)))
    assert model.n == 9
    assert model.domain == (0.0, math.pi / 2)
    assert model.link_singular == (math.pi / 2,)
    t = np.array([0.3, 1.0])
    assert_allclose(model.weight(t), np.sin(t) * np.cos(t) ** 6)


def test_flat_cone(flat):
    assert flat.n == 7 and flat.minimizing and flat.totally_geodesic
    assert second_fundamental_norm(flat, 3.0) == 0.0
    assert scalar_curvature(flat, 3.0) == 0.0


def test_curvature_values(simons):
    assert_allclose(second_fundamental_norm(simons, 1.0), math.sqrt(6), rtol=1e-15)
    assert_allclose(second_fundamental_norm(simons, 2.0), math.sqrt(6) / 2, rtol=1e-15)
    assert_allclose(scalar_curvature(simons, 1.0), -6.0, rtol=1e-15)
    assert_allclose(scalar_curvature(build_cone(ProductOfSpheres(2, 4)), 1.0), -6.0)


def test_depth_two_flattens():
    nested = build_cone(EuclideanFactor(1, EuclideanFactor(2, ProductOfSpheres(3, 3))))
    assert nested.n == 10 and nested.factor_m == 3
    with pytest.raises(GeometryError, match="depth"):
        build_cone(EuclideanFactor(1, EuclideanFactor(1, EuclideanFactor(1, ProductOfSpheres(3, 3)))))


def test_rejects_flat_inner_and_bad_points(simons, factor):
    with pytest.raises(GeometryError, match="flat"):
        build_cone(EuclideanFactor(1, RoundLink(6)))
    with pytest.raises(GeometryError):
        second_fundamental_norm(simons, 0.0)
    with pytest.raises(GeometryError):
        second_fundamental_norm(simons, -1.0)
    with pytest.raises(GeometryError, match="singular"):
        second_fundamental_norm(factor, 1.0, math.pi / 2)


def test_registry_flags():
    assert ProductOfSpheres(3, 3).minimizing
    assert ProductOfSpheres(1, 5).minimizing
    assert not ProductOfSpheres(2, 3).minimizing
    assert EuclideanFactor(1, ProductOfSpheres(3, 4)).minimizing
    assert not EuclideanFactor(1, ProductOfSpheres(2, 2)).minimizing


def test_spec_parsing():
    spec = cone_spec_from_dict({"family": "euclidean_factor", "m": 1, "inner": {"family": "product_of_spheres", "p": 3, "q": 3}})
    assert spec == EuclideanFactor(1, ProductOfSpheres(3, 3))
    assert cone_spec_from_dict(spec.to_dict()) == spec
    with pytest.raises(GeometryError, match=r"cone\.family: unknown family"):
        cone_spec_from_dict({"family": "torus"})
    with pytest.raises(GeometryError, match=r"cone\.inner\.q"):
        cone_spec_from_dict({"family": "euclidean_factor", "m": 1, "inner": {"family": "product_of_spheres", "p": 3, "q": 0}})
    with pytest.raises(GeometryError, match=r"cone\.d"):
        cone_spec_from_dict({"family": "round_link", "d": 1})


@pytest.mark.parametrize("spec", [ProductOfSpheres(3, 3), ProductOfSpheres(2, 5), ProductOfSpheres(1, 6), RoundLink(6), EuclideanFactor(1, ProductOfSpheres(3, 3)), EuclideanFactor(2, ProductOfSpheres(2, 4))])
def test_link_volume_against_quadrature(spec):
    model = build_cone(spec)
    assert_allclose(model.link_volume, link_volume_quadrature(model), rtol=1e-10)


def test_round_link_volume_is_sphere(flat):
    # vol(S^6) = 16 pi^3 / 15
    assert_allclose(flat.link_volume, 16 * math.pi**3 / 15, rtol=1e-14)


@settings(max_examples=40, deadline=None)
@given(p=st.integers(1, 8), q=st.integers(1, 8))
def test_symmetry_in_factors(p, q):
    a, b = build_cone(ProductOfSpheres(p, q)), build_cone(ProductOfSpheres(q, p))
    assert a.a2() == b.a2()
    assert_allclose(a.link_volume, b.link_volume, rtol=1e-14)


@settings(max_examples=60, deadline=None)
@given(
    spec=st.sampled_from([ProductOfSpheres(3, 3), ProductOfSpheres(2, 4), EuclideanFactor(1, ProductOfSpheres(3, 3)), EuclideanFactor(3, ProductOfSpheres(1, 6))]),
    r=st.floats(1e-3, 1e3),
    angle=st.floats(-1.5, 1.5),
    lam=st.sampled_from([0.5, 2.0, 10.0]),
)
def test_gauss_identity_and_homogeneity(spec, r, angle, lam):
    model = build_cone(spec)
    if model.factor_m >= 2:
        angle = abs(angle)
    a = second_fundamental_norm(model, r, angle)
    assert scalar_curvature(model, r, angle) == pytest.approx(-(a**2), rel=1e-14)
    assert_allclose(second_fundamental_norm(model, lam * r, angle) * lam, a, rtol=1e-14)
