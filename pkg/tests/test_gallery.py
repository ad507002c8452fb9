import math

import numpy as np
import pytest

from abplab.abp import cma_spot_check
from abplab.gallery import (GALLERY, GalleryError, get_entry, hessian_identity_entry, power_example, slope_bridge,
                            spherical_cap, wang1, wang2, wang3)
from abplab.hessian import cma_density

RADIAL = [("spherical_cap", {}), ("power", {"alpha": 0.5}), ("power", {"alpha": 1.5}),
          ("wang1", {}), ("wang2", {}), ("wang3", {})]


def cap_l2_squared_n1(a, d):
    """int over B_R of f^2 for the n=1 cap, f = (2a^2 - r^2)/(a^2 - r^2)^(3/2), by hand."""
    R = a * a / (2 * d)
    t1 = a * a - R * R
    return math.pi * (a ** 4 / 2 * (1 / t1 ** 2 - 1 / a ** 4) + 2 * a * a * (1 / t1 - 1 / a ** 2)
                      + math.log(a * a / t1))


@pytest.mark.parametrize("a", [1.0, 0.5, 0.25, 0.125])
def test_cap_contact_l2_independent_formula(a):
    e = spherical_cap(1, a, 1.0)
    assert e.contact_l2() ** 2 == pytest.approx(cap_l2_squared_n1(a, 1.0), rel=1e-10)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_cap_closed_forms(n):
    e = spherical_cap(n, 0.5, 1.0)
    R = e.closed_form["contact_radius"]
    got = e.radial.radial_integral(e.radial.real_det, 0.0, R)
    assert got == pytest.approx(e.closed_form["int_detD2u_contact"], rel=1e-9)
    assert e.radial.density(np.zeros(1))[0] == pytest.approx(e.closed_form["f0"])


@pytest.mark.parametrize("name, params", RADIAL)
def test_profiles_are_c1_and_audited(name, params):
    e = get_entry(name, **params)
    rf = e.radial
    assert e.notes["shape_audit"]["psh"]
    for b in rf.breakpoints()[1:-1]:
        for fn in (rf.phi, rf.dphi):
            lo, hi = fn(np.array([b * (1 - 1e-9), b]))
            assert lo == pytest.approx(hi, rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("name, params", RADIAL)
def test_density_matches_finite_differences(name, params):
    e = get_entry(name, **params)
    chk = cma_spot_check(e, 6)
    assert chk["points"] > 0
    assert chk["max_rel_error"] < 1e-3


@pytest.mark.parametrize("name, params", RADIAL)
def test_contact_radius_matches_radial_envelope(name, params):
    e = get_entry(name, **params)
    rc = e.envelope().contact_radius
    assert rc == pytest.approx(e.analytic_contact_radius, abs=5e-5)


def test_power_norm_threshold():
    e = power_example(1, 0.5)
    p_star = e.closed_form["lp_threshold"]
    assert e.lp_norm(p_star) == math.inf
    assert math.isfinite(e.lp_norm(0.9 * p_star))
    r = np.array([0.1, 0.4])
    coeff, expo = e.closed_form["f_coeff"], e.closed_form["f_exponent"]
    np.testing.assert_allclose(e.radial.density(r), coeff * r ** expo, rtol=1e-12)


def test_power_contact():
    assert power_example(1, 1.0).analytic_contact_radius == 0.0
    rc = power_example(1, 1.5).analytic_contact_radius
    # tangent from (2, 0) to r^1.5 - 1
    assert rc ** 1.5 - 1 + 1.5 * rc ** 0.5 * (2 - rc) == pytest.approx(0.0, abs=1e-12)


def test_wang1_contact_term_is_fixed():
    vals = [wang1(eps).contact_l2() for eps in (0.1, 0.05, 0.025)]
    assert max(vals) / min(vals) - 1 < 1e-9
    assert vals[0] == pytest.approx(math.sqrt(cap_l2_squared_n1(1.0, 1.0)), rel=1e-9)


def test_wang2_contact_term_vanishes():
    for eps in (0.2, 0.1, 0.05):
        e = wang2(eps)
        assert e.contact_l2() ** 2 == pytest.approx(cap_l2_squared_n1(eps, 1.0), rel=1e-9)
        # leading order sqrt(pi) eps / d
        assert e.contact_l2() == pytest.approx(math.sqrt(math.pi) * eps, rel=0.02)


def test_wang3_contact_term_grows_like_log():
    a, b = wang3(0.01), wang3(0.001)
    assert b.contact_l2() / a.contact_l2() == pytest.approx(math.log(1000) / math.log(100), rel=0.2)


def test_slope_bridge_matches_ends():
    psi, dpsi, ddpsi = slope_bridge(0.0, 0.0, 0.5, 1.0, 1.2, 2.0)
    assert float(psi(1.0)) == pytest.approx(1.2, abs=1e-12)
    assert float(dpsi(0.0)) == 0.5 and float(dpsi(1.0)) == pytest.approx(2.0)
    s = np.linspace(0, 1, 101)
    assert np.all(ddpsi(s) >= 0)
    with pytest.raises(GalleryError):
        slope_bridge(0.0, 0.0, 0.5, 1.0, 3.0, 2.0)


def test_hessian_identity_raw_det():
    e = hessian_identity_entry()
    rng = np.random.default_rng(0)
    for x in rng.uniform(-0.6, 0.6, size=(4, 4)):
        assert cma_density(e.u, x, 1e-4) == pytest.approx(float(e.f(x)), rel=1e-5, abs=1e-7)
    assert e.notes["verify_applicable"] is False


def test_registry_and_errors():
    assert set(GALLERY) >= {"spherical_cap", "power", "wang1", "wang2", "wang3", "hessian_identity"}
    with pytest.raises(GalleryError):
        get_entry("nope")
    with pytest.raises(GalleryError):
        spherical_cap(1, 2.0, 1.0)
    with pytest.raises(GalleryError):
        power_example(1, 2.0)
    with pytest.raises(GalleryError):
        wang1(0.5)
    desc = get_entry("wang3").describe()
    assert desc["name"] == "wang3" and desc["closed_form"]["contact_radius"] > 0
