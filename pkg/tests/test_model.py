import math

import pytest
from hypothesis import given, settings, strategies as st

from radialns.model import (
    FlowRegime,
    ParameterError,
    build_parameters,
    classify_regime,
    derive_constants,
    smallness_check,
)

from conftest import REFERENCE, make_params


def test_reference_parameters():
    p = make_params()
    assert p.mu == 1.0
    assert p.v_minus == pytest.approx(1.001)
    d = derive_constants(p)
    assert d.c_P == 2.5
    assert d.omega == pytest.approx(1 / 3)
    assert d.omega_bar == pytest.approx(1 / 3)
    assert d.epsilon_inflow == pytest.approx(1e-3 / 1.001, rel=1e-15)


@pytest.mark.parametrize(
    "changes, condition",
    [
        (dict(lam=-1.0), "2nu + n*lambda >= 0 violated"),
        (dict(n=2), "n >= 3 required"),
        (dict(nu=0.0), "nu > 0 required"),
        (dict(kappa=-1.0), "kappa > 0 required"),
        (dict(v_plus=0.0), "v_plus > 0 required"),
        (dict(n=3.5), "n must be an integer"),
        (dict(u_plus=0.1), "u_plus must be 0"),
        (dict(chi_minus=-2.0), "theta_minus > 0 required"),
        (dict(theta_plus="warm"), "theta_plus must be numeric"),
        (dict(theta_plus=math.inf), "theta_plus must be finite"),
    ],
)
def test_invalid_parameters_name_the_condition(changes, condition):
    with pytest.raises(ParameterError) as err:
        make_params(**changes)
    assert err.value.condition == condition


def test_missing_field_is_named():
    raw = dict(REFERENCE)
    del raw["theta_plus"]
    with pytest.raises(ParameterError, match="theta_plus"):
        build_parameters(raw)


def test_zero_far_field_velocity_is_accepted():
    assert make_params(u_plus=0.0).u_minus == 1e-3


def test_aliases_and_physical_inputs():
    raw = dict(REFERENCE)
    for k in ("R_gas", "lam", "v_plus", "eta_minus", "chi_minus"):
        del raw[k]
    raw.update(R=1.0, **{"lambda": 0.0}, rho_plus=2.0, rho_minus=2.5, theta_minus=1.2)
    p = build_parameters(raw)
    assert p.v_plus == 0.5
    assert p.eta_minus == pytest.approx(0.4 - 0.5)
    assert p.chi_minus == pytest.approx(0.2)


def test_string_numbers_from_yaml():
    assert make_params(u_minus="1e-3").u_minus == 1e-3


@pytest.mark.parametrize("u, tag", [(1e-3, FlowRegime.INFLOW), (0.0, FlowRegime.IMPERMEABLE), (-1e-3, FlowRegime.OUTFLOW)])
def test_classify_regime(u, tag):
    assert classify_regime(make_params(u_minus=u)) is tag


def test_outflow_ignores_missing_eta_minus():
    raw = dict(REFERENCE, u_minus=-1e-3)
    del raw["eta_minus"]
    p = build_parameters(raw)
    assert p.eta_minus == 0.0
    assert derive_constants(p).epsilon_inflow is None


def test_smallness_report():
    s = smallness_check(make_params())
    assert s.within_proven_regime
    assert s.data_size == pytest.approx(3e-3)
    # u bound n*omega*v_+/(2(n-2)mu) = 1/2 for the reference gas
    assert s.u_layer_margin == pytest.approx(2e-3)
    big = smallness_check(make_params(u_minus=0.9))
    assert not big.u_layer and "outside" in big.stamp


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(3, 8),
    nu=st.floats(1e-3, 10.0),
    lam_frac=st.floats(0.0, 5.0),
)
def test_admissible_viscosities_satisfy_ratio_bound(n, nu, lam_frac):
    # any lambda >= -2nu/n is admissible; nu/mu <= n/(2(n-1)) must follow
    lam = -2.0 * nu / n + lam_frac * nu
    p = make_params(n=n, nu=nu, lam=lam)
    assert p.mu > 0
    assert p.nu / p.mu <= n / (2.0 * (n - 1)) * (1 + 1e-12)
