import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from cone_spectra.exponents import (
    ExponentError,
    check_bounds,
    exponents_from_mu,
    fitted_order,
    lp_report,
    radial_lq_report,
    radial_residual,
    scaling_fixed_point_deviation,
)
from cone_spectra.mesh import ExhaustionSchedule
from cone_spectra.operators import Conformal, DimShiftedConformal, Jacobi, Laplacian, ShiftedOperator, cross_section
from cone_spectra.spectral import dirichlet_exhaustion, principal_eigen_link

from .conftest import S_HAT


def link_result(model, skin, kind, lam=0.0):
    return principal_eigen_link(cross_section(ShiftedOperator(kind, lam, skin), model))


@pytest.fixture(scope="module")
def factor_jacobi(factor, factor_skin):
    xop = cross_section(ShiftedOperator(Jacobi(), 0.0, factor_skin), factor)
    return dirichlet_exhaustion(xop, ExhaustionSchedule.geometric(1e-2, 6), 4000)


@pytest.mark.parametrize(
    "mu, n, plus, minus",
    [
        (0.0, 7, 0.0, -5.0),
        (-6.0, 7, -2.0, -3.0),
        (-1.25, 7, -2.5 + math.sqrt(5.0), -2.5 - math.sqrt(5.0)),
        (-8.0, 8, -2.0, -4.0),
    ],
)
def test_closed_form_pairs(mu, n, plus, minus):
    pair = exponents_from_mu(mu, n)
    assert_allclose([pair.alpha_plus, pair.alpha_minus], [plus, minus], atol=1e-14)
    assert pair.vieta_error() < 1e-14


def test_vieta_identities_on_random_inputs():
    rng = np.random.default_rng(3)
    for _ in range(200):
        n = int(rng.integers(3, 12))
        half = (n - 2) / 2
        mu = -half * half + rng.uniform(1e-8, 50)
        pair = exponents_from_mu(mu, n)
        assert_allclose(pair.alpha_plus + pair.alpha_minus, -(n - 2), atol=1e-12)
        assert_allclose(pair.alpha_plus * pair.alpha_minus, -mu, rtol=1e-12, atol=1e-12)
        assert pair.separation >= 0


def test_tiny_mu_keeps_relative_accuracy():
    # alpha_+ ~ mu / (n - 2) for tiny mu; the naive formula would lose all digits
    pair = exponents_from_mu(1e-14, 7)
    assert_allclose(pair.alpha_plus, 1e-14 / 5, rtol=1e-12)


def test_negative_discriminant_raises():
    with pytest.raises(ExponentError, match="discriminant"):
        exponents_from_mu(-6.3, 7)


def test_conformal_bounds(simons, simons_skin):
    res = link_result(simons, simons_skin, Conformal())
    pair = exponents_from_mu(res.mu, 7)
    report = check_bounds(Conformal(), 7, 7, 0.0, res, pair)
    assert report.all_satisfied
    assert report.by_name("conformal.mu_lower").margin == pytest.approx(-1.25 + 6.25 / 4)
    assert report.by_name("conformal.separation").measured == pytest.approx(2 * math.sqrt(5))


def test_dim_shifted_bounds(simons, simons_skin):
    kind = DimShiftedConformal(10)  # coefficient 2/9, mu = -4/3
    res = link_result(simons, simons_skin, kind)
    assert_allclose(res.mu, -4.0 / 3.0, rtol=1e-14)
    pair = exponents_from_mu(res.mu, 7)
    assert_allclose(pair.alpha_plus, -2.5 + math.sqrt(6.25 - 4.0 / 3.0), rtol=1e-14)
    report = check_bounds(kind, 7, 7, 0.0, res, pair)
    assert report.all_satisfied
    assert {r.name.split(".")[0] for r in report.records} == {"dimshift", "generic"}


def test_jacobi_bounds_and_adapted_sign(simons, simons_skin):
    for lam in (0.0, 0.01, 0.02):
        res = link_result(simons, simons_skin, Jacobi(), lam)
        pair = exponents_from_mu(res.mu, 7)
        report = check_bounds(Jacobi(), 7, 7, lam, res, pair)
        assert report.all_satisfied
        assert ("adapted.alpha_plus_negative" in [r.name for r in report.records]) == (lam > 0)


def test_strict_bound_fails_at_critical_shift(simons, simons_skin):
    res = link_result(simons, simons_skin, Jacobi(), 0.25 / S_HAT**2)
    pair = exponents_from_mu(res.mu, 7)
    report = check_bounds(Jacobi(), 7, 7, 0.25 / S_HAT**2, res, pair, tol=1e-12)
    assert report.by_name("jacobi.mu_critical").satisfied
    assert not report.by_name("generic.mu_strict").satisfied


def test_unregistered_kind_raises(simons, simons_skin):
    res = link_result(simons, simons_skin, Laplacian())
    with pytest.raises(ExponentError):
        check_bounds(Laplacian(), 7, 7, 0.0, res, exponents_from_mu(0.0, 7))


def test_discriminant_decreases_with_shift(simons, simons_skin):
    lams = np.linspace(0.0, 0.02, 5)
    disc = [exponents_from_mu(link_result(simons, simons_skin, Jacobi(), lam).mu, 7).discriminant for lam in lams]
    assert np.all(np.diff(disc) < 0)
    assert_allclose(disc, 0.25 - lams * S_HAT**2, atol=1e-12)


def test_radial_residual_is_second_order(simons, simons_skin):
    res = link_result(simons, simons_skin, Jacobi())
    pair = exponents_from_mu(res.mu, 7)
    for which in ("plus", "minus"):
        rep = radial_residual(pair, res, (0.5, 2.0), (200, 400, 800), which)
        assert abs(rep.order - 2.0) < 0.1
        assert np.all(np.diff(rep.residuals) < 0)


def test_radial_residual_exact_for_constants(simons, simons_skin):
    res = link_result(simons, simons_skin, Laplacian())
    rep = radial_residual(exponents_from_mu(0.0, 7), res, (0.5, 2.0))
    assert max(rep.residuals) == 0.0
    assert math.isnan(rep.order)
    with pytest.raises(ExponentError):
        radial_residual(exponents_from_mu(0.0, 7), res, (0.0, 2.0))


def test_radial_residual_on_factor_link(factor_jacobi):
    pair = exponents_from_mu(factor_jacobi.mu_limit, 8)
    rep = radial_residual(pair, factor_jacobi, (0.5, 2.0), (200, 400, 800))
    assert abs(rep.order - 2.0) < 0.1
    assert rep.link_defect < 1e-4


def test_scaling_fixed_point(simons, simons_skin, factor_jacobi):
    res = link_result(simons, simons_skin, Jacobi())
    assert scaling_fixed_point_deviation(exponents_from_mu(res.mu, 7), res) < 1e-12
    pair = exponents_from_mu(factor_jacobi.mu_limit, 8)
    assert scaling_fixed_point_deviation(pair, factor_jacobi, eta=0.3) < 1e-12


def test_fitted_order():
    h = np.array([0.1, 0.05, 0.025])
    assert_allclose(fitted_order(h, 3 * h**2), 2.0, rtol=1e-12)


def test_link_lp_classification(factor, factor_jacobi):
    # psi ~ cos^-2 t against the weight cos^6 t: L^p iff p < 7/2
    p_list = [1.0, 2.0, 3.0, 5.0]
    rep = lp_report(factor_jacobi, factor, p_list)
    assert rep.classification == ["convergent", "convergent", "convergent", "divergent"]
    assert_allclose(rep.increment_orders, [7 - 2 * p for p in p_list], atol=0.1)
    assert rep.monotone
    assert rep.guaranteed_limit == pytest.approx(7 / 5)
    assert rep.guaranteed == [True, False, False, False]
    assert rep.ratio_constant > 0


def test_link_lp_homogeneous(simons, simons_skin):
    res = link_result(simons, simons_skin, Jacobi())
    rep = lp_report(res, simons, [1.0, 10.0])
    assert rep.classification == ["convergent", "convergent"]
    assert_allclose(rep.ratio_constant, simons.link_volume)


def test_radial_lq(factor, factor_jacobi):
    pair = exponents_from_mu(factor_jacobi.mu_limit, 8)
    rep = radial_lq_report(pair, factor_jacobi, factor, [1.0, 2.0, 3.5, 5.0])
    # shells scale like rho^(q alpha + n) = rho^(8 - 2q)
    assert rep.classification == ["convergent", "convergent", "convergent", "divergent"]
    assert_allclose(rep.increment_orders, [8 - 2 * q for q in (1.0, 2.0, 3.5, 5.0)], atol=1e-2)
    assert rep.guaranteed_limit == pytest.approx(4 / 3)
