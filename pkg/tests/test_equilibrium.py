import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from misanthrope.equilibrium import (DivergentSeriesError, DomainError,
                                     RangeError, build_family, flux_curve)
from misanthrope.model import catalog


def test_tasep_pi_is_half_half(tasep_family):
    pi = np.exp(tasep_family.log_pi)
    assert pi == pytest.approx([0.5, 0.5], abs=1e-15)


def test_tasep_F_closed_form(tasep_family):
    for theta in np.linspace(-4, 4, 17):
        expected = math.log((1 + math.exp(theta)) / 2)
        assert tasep_family.F(theta) == pytest.approx(expected, abs=1e-13)
    assert tasep_family.F(0.0) == pytest.approx(0.0, abs=1e-14)


def test_zero_range_linear_is_poisson(zr_family):
    pi = np.exp(zr_family.log_pi)
    x = zr_family.z
    expected = np.exp(-1.0) / np.array([math.factorial(int(v)) for v in x])
    assert np.max(np.abs(pi - expected)) < 1e-15
    for theta in np.linspace(-2.0, 1.0, 7):
        assert zr_family.F(theta) == pytest.approx(math.exp(theta) - 1,
                                                   abs=1e-12)


def test_bricklayers_constant_r_diverges():
    model = catalog("bricklayers", r_family="constant")
    with pytest.raises(DivergentSeriesError, match="Cauchy"):
        build_family(model, max_window=256)


def test_theta_of_v_examples(tasep_family, zr_family):
    assert tasep_family.theta_of_v(0.5) == pytest.approx(0.0, abs=1e-12)
    v = math.e / (1 + math.e)
    assert tasep_family.theta_of_v(v) == pytest.approx(1.0, abs=1e-10)
    assert zr_family.theta_of_v(1.0) == pytest.approx(0.0, abs=1e-12)


def test_theta_of_v_out_of_range_names_interval(tasep_family):
    with pytest.raises(RangeError, match="attainable range"):
        tasep_family.theta_of_v(1.5)


def test_F_monotone_and_convex(k2_family):
    thetas = np.linspace(-5, 5, 41)
    f1 = np.asarray(k2_family.F1(thetas))
    assert np.all(np.diff(f1) > 0)
    assert np.all(np.asarray(k2_family.F2(thetas)) > 0)


@settings(max_examples=60, deadline=None)
@given(v=st.floats(0.02, 0.98))
def test_roundtrip_tasep(v):
    fam = test_roundtrip_tasep.family
    assert abs(fam.F1(fam.theta_of_v(v)) - v) <= 1e-12


test_roundtrip_tasep.family = build_family(catalog("tasep"))


@pytest.mark.parametrize("fixture", ["tasep_family", "k2_family", "k3_family",
                                     "zr_family", "bl_family"])
def test_roundtrip_all_catalog_models(fixture, request, rng):
    fam = request.getfixturevalue(fixture)
    lo, hi = fam.v_range
    a, b = lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo)
    vs = rng.uniform(a, b, size=100)
    thetas = np.asarray(fam.theta_of_v(vs))
    back = np.asarray(fam.F1(thetas))
    assert np.max(np.abs(back - vs)) <= 1e-12


# -- flux ----------------------------------------------------------------------


def _oracle_two_site(model, family, v):
    """Independent flux oracle: brute-force tilted pmf + exhaustive double sum."""
    theta = family.theta_of_v(v)
    z = family.z.astype(float)
    w = np.exp(family.log_pi + theta * z)
    w /= w.sum()
    total = 0.0
    for i, x in enumerate(family.z):
        for j, y in enumerate(family.z):
            total += w[i] * w[j] * model.rate(int(x), int(y))
    return total


def test_tasep_flux_closed_form(tasep_family):
    for v in np.linspace(0.05, 0.95, 21):
        assert abs(tasep_family.flux_hat(v) - v * (1 - v)) < 1e-12


@pytest.mark.parametrize("fixture", ["tasep_family", "k2_family", "k3_family"])
def test_flux_matches_exhaustive_enumeration(fixture, request):
    fam = request.getfixturevalue(fixture)
    model = fam.model
    zmax = float(model.bounds.z_max)
    for v in np.linspace(0.1, 0.9, 9) * zmax:
        assert abs(fam.flux_hat(v) - _oracle_two_site(model, fam, v)) < 1e-12


def test_zero_range_flux_is_identity(zr_family):
    for v in np.linspace(0.1, 2.0, 21):
        assert abs(zr_family.flux_hat(v) - v) < 1e-12
    assert zr_family.flux_hat(0.0) == 0.0


def test_flux_tail_truncation_stable(zero_range):
    coarse = build_family(zero_range, eps_tail=1e-8, theta_range=(-3.5, 1.5))
    fine = build_family(zero_range, eps_tail=5e-9, theta_range=(-3.5, 1.5))
    for v in np.linspace(0.2, 1.8, 9):
        assert abs(coarse.flux_hat(v) - fine.flux_hat(v)) < 10 * 1e-8


def test_flux_derivatives_tasep(tasep_family):
    trip = tasep_family.flux_derivatives(0.5)
    assert trip.a0 == pytest.approx(0.25, abs=1e-6)
    assert trip.b0 == pytest.approx(0.0, abs=1e-6)
    assert trip.c0 == pytest.approx(-2.0, abs=1e-6)
    assert not trip.degenerate
    trip = tasep_family.flux_derivatives(0.25)
    assert trip.b0 == pytest.approx(0.5, abs=1e-6)


def test_flux_derivatives_zero_range_degenerate(zr_family):
    assert zr_family.flux_derivatives(1.0).degenerate


def test_flux_derivatives_match_finite_differences(k2_family):
    # independent first-order check at shifted base points
    h = 1e-4
    trip = k2_family.flux_derivatives(0.9)
    fd_b = (k2_family.flux_hat(0.9 + h) - k2_family.flux_hat(0.9 - h)) / (2 * h)
    assert trip.b0 == pytest.approx(fd_b, rel=1e-6)
    fd_c = (k2_family.flux_hat(0.9 + h) - 2 * k2_family.flux_hat(0.9)
            + k2_family.flux_hat(0.9 - h)) / h**2
    assert trip.c0 == pytest.approx(fd_c, rel=1e-5)


def test_bricklayers_flux_linearly_bounded(bl_family):
    # |flux| <= C (1 + |v|) on the sampled grid, C fitted on that grid
    vs = np.linspace(-1.2, 1.2, 13)
    flux = np.array([bl_family.flux_hat(float(v)) for v in vs])
    c_fit = np.max(np.abs(flux) / (1 + np.abs(vs)))
    assert np.all(np.abs(flux) <= c_fit * (1 + np.abs(vs)) + 1e-12)


def test_flux_curve_shape(tasep_family):
    grid = np.linspace(0.2, 0.8, 7)
    curve = flux_curve(tasep_family, 0.5, grid)
    assert curve.at_v0.a0 == pytest.approx(0.25, abs=1e-9)
    assert np.allclose(curve.flux, grid * (1 - grid), atol=1e-12)


# -- site entropy -----------------------------------------------------------------


def test_site_entropy_zero_on_diagonal(tasep_family):
    assert tasep_family.site_entropy(0.37, 0.37) == 0.0


def test_site_entropy_direct_sum_oracle(tasep_family):
    t2, t1 = 0.2, 0.0
    p2 = tasep_family.pmf(t2)
    p1 = tasep_family.pmf(t1)
    direct = float(np.sum(p2 * (np.log(p2) - np.log(p1))))
    assert tasep_family.site_entropy(t2, t1) == pytest.approx(direct, abs=1e-14)


def test_site_entropy_symmetry_identity(tasep_family):
    theta = 0.8
    lhs = (tasep_family.site_entropy(theta, 0.0)
           + tasep_family.site_entropy(0.0, theta))
    rhs = theta * (tasep_family.F1(theta) - tasep_family.F1(0.0))
    assert lhs == pytest.approx(rhs, abs=1e-13)


@settings(max_examples=50, deadline=None)
@given(t2=st.floats(-2, 2), t1=st.floats(-2, 2))
def test_site_entropy_nonnegative(t2, t1):
    fam = test_roundtrip_tasep.family
    h = fam.site_entropy(t2, t1)
    assert h >= 0.0
    if abs(t2 - t1) > 1e-3:
        assert h > 0.0


def test_site_entropy_domain_error(zr_family):
    with pytest.raises(DomainError):
        zr_family.site_entropy(9.0, 0.0)
