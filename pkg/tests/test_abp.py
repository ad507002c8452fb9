import json
import math

import numpy as np
import pytest

from abplab.abp import (ABPError, VerifyConfig, abp_constant, abp_constant_eps, corollary_pota_bound,
                        verify_abp, verify_alexandrov_principle, verify_entry)
from abplab.gallery import get_entry, spherical_cap
from abplab.grid import Domain, make_grid, sample
from abplab.measure import unit_ball_volume


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_constant_chain(n):
    C = abp_constant(n)
    assert C ** (2 * n) * unit_ball_volume(2 * n) * 4 ** n * math.factorial(n) ** 2 == pytest.approx(1.0, rel=1e-12)


def test_eps_constant_reduces_at_eps_equal_d():
    assert abp_constant_eps(2, 1.0, 1.0) == pytest.approx(abp_constant(2))
    with pytest.raises(ValueError):
        abp_constant(0)
    with pytest.raises(ValueError):
        abp_constant_eps(1, 1.0, 0.0)


@pytest.fixture(scope="module")
def cap_report():
    return verify_entry(spherical_cap(1, 0.5, 1.0), VerifyConfig(resolution=64))


def test_cap_verifies(cap_report):
    rep = cap_report
    assert rep.holds and rep.gut2_holds and rep.alexandrov_holds
    # closed form: sup u^- = a, no boundary term
    assert rep.lhs == pytest.approx(0.5)
    assert rep.boundary_term == pytest.approx(0.0, abs=1e-12)
    assert rep.ratio == pytest.approx(0.5 / (abp_constant(1) * 2 * spherical_cap(1, 0.5, 1.0).contact_l2()))
    assert rep.details["cma_spot_check"]["max_rel_error"] < 1e-4


def test_report_serialisation(cap_report):
    d = json.loads(cap_report.to_json())
    assert d["schema_version"] == 1 and "timestamp" in d["metadata"]
    assert "metadata" not in json.loads(cap_report.comparable_json())
    row = cap_report.csv_row()
    assert row["name"] == "spherical_cap" and row["resolution"] == 64


def test_runs_are_deterministic():
    cfg = VerifyConfig(resolution=32)
    a = verify_entry(get_entry("wang1"), cfg)
    b = verify_entry(get_entry("wang1"), cfg)
    assert a.comparable_json() == b.comparable_json()


def test_nonnegative_function_is_trivial():
    om = Domain.ball(1.0, 2)
    rep = verify_abp(lambda x: np.sum(x * x, axis=-1) + 0.1, om, f=lambda x: np.full(len(x), 4.0),
                     config=VerifyConfig(resolution=16))
    assert rep.lhs == 0.0 and rep.ratio == 0.0 and rep.holds


def test_grid_riemann_sum_path():
    e = spherical_cap(1, 0.5, 1.0)
    rep = verify_abp(e.u, Domain.ball(1.0, 2), f=e.f, config=VerifyConfig(resolution=128, measure=False))
    assert rep.details["contact_l2_method"] == "grid_riemann_sum"
    assert rep.contact_l2 == pytest.approx(e.contact_l2(), rel=0.15)
    assert rep.holds


def test_alexandrov_principle_on_cap():
    e = spherical_cap(1, 0.5, 1.0)
    om = Domain.ball(1.0, 2)
    v = sample(e.u, make_grid(om, 32), om)
    ok, slack = verify_alexandrov_principle(v, om, e.closed_form["int_detD2u_contact"], 1.0, e.u)
    assert ok and slack >= 0


def test_corollary_bound():
    e = spherical_cap(1, 0.5, 1.0)
    out = corollary_pota_bound(e.u, None, Domain.ball(0.2, 2), resolution=32, f=e.f)
    assert out["holds"] and out["f_sup"] > 0
    with pytest.raises(ValueError):
        corollary_pota_bound(e.u, None, Domain.ball(0.2, 2))


def test_higher_dimension_needs_seed():
    e = spherical_cap(2, 0.5, 1.0)
    with pytest.raises(ABPError, match="seed"):
        verify_entry(e, VerifyConfig(resolution=12))


def test_complex_dimension_two():
    e = spherical_cap(2, 0.5, 1.0)
    rep = verify_entry(e, VerifyConfig(resolution=16, seed=3, mc_samples=200_000, mc_rel_stderr=0.05))
    assert rep.holds and rep.gut2_holds
    assert rep.details["envelope_method"] == "legendre+relaxation"


def test_non_radial_entry_is_rejected():
    with pytest.raises(ABPError):
        verify_entry(get_entry("hessian_identity"))


@pytest.mark.parametrize("kw", [{"resolution": 2}, {"carrier": "3d"}, {"boundary_mode": "edge"},
                                {"tol": 0.0}, {"fd_step": -1.0}, {"eta": -1.0}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        VerifyConfig(**kw).validate()


def test_d_plus_eps_carrier():
    e = spherical_cap(1, 0.5, 1.0)
    rep = verify_entry(e, VerifyConfig(resolution=64, carrier="d+eps", carrier_eps=0.25))
    assert rep.constant == pytest.approx(abp_constant_eps(1, 1.0, 0.25))
    assert rep.holds
