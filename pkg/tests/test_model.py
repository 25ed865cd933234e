import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from misanthrope.equilibrium import build_family
from misanthrope.model import (InconsistentRatesError, RateModel, SpinBounds,
                               StructuralError, catalog, derive_r,
                               model_from_dict, validate_conditions)


def test_tasep_table(tasep):
    assert tasep.bounds.alphabet().tolist() == [0, 1]
    assert tasep.rate(1, 0) == 1.0
    assert tasep.rate(0, 0) == 0.0
    assert tasep.rate(1, 1) == 0.0


def test_tasep_all_conditions_pass(tasep):
    report = validate_conditions(tasep)
    assert report.structural_ok
    assert report["A"].passed and report["B"].passed and report["C"].passed


def test_constant_rates_fail_condition_a():
    model = RateModel(name="allones", bounds=SpinBounds(0, 1),
                      kind="generic-table", c_table=np.ones((2, 2)))
    report = validate_conditions(model)
    assert not report["A"].passed
    assert report["A"].counterexample == (0, 0)


def test_bricklayers_condition_b_identity(bricklayers):
    # both cyclic sums equal r(x)+r(y)+r(z)+r(-x)+r(-y)+r(-z)
    report = validate_conditions(bricklayers, window=6)
    assert report["B"].passed
    assert report["bricklayers-constraint"].passed


@pytest.mark.parametrize("name,kw", [
    ("tasep", {}),
    ("k-exclusion", {"K": 2}),
    ("k-exclusion", {"K": 3}),
    ("zero-range", {}),
    ("bricklayers", {}),
])
def test_catalog_passes_window6(name, kw):
    report = validate_conditions(catalog(name, **kw), window=6)
    assert report.structural_ok, str(report)


def test_negative_rate_is_structural():
    c = np.zeros((2, 2))
    c[1, 0] = -1.0
    with pytest.raises(StructuralError):
        RateModel(name="bad", bounds=SpinBounds(0, 1),
                  kind="generic-table", c_table=c)


def test_empty_table_is_structural():
    with pytest.raises(StructuralError):
        RateModel(name="bad", bounds=SpinBounds(0, 1),
                  kind="generic-table", c_table=np.zeros((0, 0)))


# -- derive_r ---------------------------------------------------------------


def test_derive_r_tasep(tasep):
    r = derive_r(tasep)
    assert r[0] == 0.0
    assert r[1] == 1.0
    assert r[2] == float("inf")  # formal extension above z_max


def test_derive_r_zero_range_identity(zero_range):
    r = derive_r(zero_range, window=16)
    for x in range(17):
        assert r[x] == float(x)


def test_derive_r_k3_consistency(k3):
    r = derive_r(k3)
    # the catalog table was generated from r = (1, 2, 3)
    assert r[1] == pytest.approx(1.0)
    assert r[2] == pytest.approx(2.0)
    assert r[3] == pytest.approx(3.0)


def test_perturbed_table_raises_inconsistency(k3):
    c = k3.c_table.copy()
    c[2, 2] *= 1.25  # diagonal entry: leaves A and B intact, breaks the cycle
    bad = RateModel(name="k3-broken", bounds=SpinBounds(0, 3),
                    kind="generic-table", c_table=c)
    report = validate_conditions(bad)
    assert report["A"].passed and report["B"].passed
    assert not report["C"].passed
    with pytest.raises(InconsistentRatesError, match="cycle"):
        derive_r(bad)


# -- catalog ------------------------------------------------------------------


def test_k_exclusion_rejects_bad_K():
    with pytest.raises(ValueError):
        catalog("k-exclusion", K=0)


def test_k2_condition_b_structure(k2):
    # B forces c(2,0) = c(1,0) + c(2,1) in this family
    assert k2.rate(2, 0) == k2.rate(1, 0) + k2.rate(2, 1)


def test_bricklayers_r1_forces_r0():
    model = catalog("bricklayers", r_params={"r1": 2.0})
    assert model.r(1) == 2.0
    assert model.r(0) == pytest.approx(0.5)


def test_bricklayers_bad_table_rejected():
    with pytest.raises(ValueError, match="r\\("):
        catalog("bricklayers", r_table={1: 2.0, 0: 0.7})


def test_zero_range_affine_capped_fails_growth_window():
    model = catalog("zero-range", r_family="affine-capped",
                    r_params={"a": 1.0, "b": 1.0, "cap": 4.0})
    report = validate_conditions(model, window=16)
    assert report.structural_ok        # A-C hold for any zero-range r
    assert not report["D(ii)+"].passed  # bounded r is not essentially linear
    assert model.condition_d_analytic is False


def test_zero_range_linear_growth_window(zero_range):
    report = validate_conditions(zero_range, window=16)
    assert report["D(i)+"].passed
    assert report["D(ii)+"].passed


def test_bricklayers_growth_reported_per_side(bricklayers):
    report = validate_conditions(bricklayers, window=8)
    assert report["D(ii)+"].passed
    # the nonpositive branch decays to zero, so no window gap exists there
    assert not report["D(ii)-"].passed


@settings(max_examples=40, deadline=None)
@given(p=st.floats(0.05, 20), q=st.floats(0.05, 20), s=st.floats(0.05, 20))
def test_k2_family_always_valid(p, q, s):
    report = validate_conditions(catalog("k-exclusion", K=2, params=(p, q, s)))
    assert report.structural_ok


# -- gauge invariance -----------------------------------------------------------


@pytest.mark.parametrize("lam", [0.5, 2.0])
@pytest.mark.parametrize("name,kw", [("tasep", {}), ("k-exclusion", {"K": 2})])
def test_gauge_rescaling_of_r_is_invisible(name, kw, lam):
    model = catalog(name, **kw)
    fam = build_family(model)
    fam_scaled = build_family(model, r_scale=lam)
    vs = np.linspace(0.15, 0.85, 9) * float(model.bounds.z_max)
    for v in vs:
        # identical flux to machine precision
        assert fam_scaled.flux_hat(v) == pytest.approx(fam.flux_hat(v),
                                                       abs=1e-13)
        # the tilt parameter is shifted by exactly log(lambda)
        assert fam_scaled.theta_of_v(v) - fam.theta_of_v(v) == pytest.approx(
            np.log(lam), abs=1e-9)


def test_model_from_dict_roundtrip(tasep):
    model = model_from_dict({"kind": "generic-table", "z_min": 0, "z_max": 1,
                             "c_table": [0.0, 0.0, 1.0, 0.0]})
    assert np.array_equal(model.c_table, tasep.c_table)


def test_model_from_dict_rejects_unknown_key():
    with pytest.raises(ValueError, match="unknown model keys"):
        model_from_dict({"kind": "tasep", "zmax": 3})
