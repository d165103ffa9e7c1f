import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radialns.fixedpoint import (
    RegimeError,
    SolverControl,
    grid_for,
    impermeable_solution,
    impermeable_stationary,
    reconstruct_physical,
    solve_stationary,
    weighted_sup,
)

from conftest import make_params


@pytest.mark.parametrize("which", ["inflow_solution", "outflow_solution"])
def test_reference_converges_with_contraction(request, which):
    sol = request.getfixturevalue(which)
    assert sol.converged and sol.status == "converged"
    assert sol.final_increment <= 1e-12
    assert sol.iterations <= 10
    assert np.all(sol.contraction_ratios[1:] <= 0.5)
    assert sol.fixed_point_residual <= 1e-12
    assert sol.smallness.within_proven_regime


def test_inflow_boundary_values(inflow_solution, inflow_params):
    p = inflow_params
    assert inflow_solution.eta.values[0] == p.eta_minus
    assert inflow_solution.chi.values[0] == p.chi_minus
    assert inflow_solution.epsilon == p.u_minus / p.v_minus


def test_outflow_flux_uses_boundary_volume(outflow_solution, outflow_params):
    p = outflow_params
    eta1 = outflow_solution.eta.values[0]
    assert outflow_solution.epsilon == pytest.approx(p.u_minus / (p.v_plus + eta1), rel=1e-10)
    assert outflow_solution.chi.values[0] == p.chi_minus


@pytest.mark.parametrize("which", ["inflow_solution", "outflow_solution"])
def test_mass_flux_constant(request, which):
    sol = request.getfixturevalue(which)
    prof = reconstruct_physical(sol)
    r = prof.r
    flux = r ** (sol.params.n - 1) * prof.rho.values * prof.u.values
    np.testing.assert_allclose(flux, prof.mass_flux, rtol=1e-14)
    np.testing.assert_allclose(prof.p.values, sol.params.R_gas * prof.rho.values * prof.theta.values, rtol=1e-15)


def test_inflow_density_pinned(inflow_profile, inflow_params):
    assert inflow_profile.rho.values[0] == pytest.approx(inflow_params.rho_minus, rel=1e-15)
    assert inflow_profile.theta.values[0] == pytest.approx(inflow_params.theta_minus, rel=1e-15)


def test_max_iter_reports_without_raising(inflow_params):
    sol = solve_stationary(inflow_params, SolverControl(max_iter=1))
    assert not sol.converged
    assert sol.status == "max_iter=1 reached"
    assert np.isnan(sol.fixed_point_residual)


def test_impermeable_rejected_by_iteration():
    with pytest.raises(RegimeError, match="closed-form"):
        solve_stationary(make_params(u_minus=0.0))


def test_impermeable_closed_form(impermeable_params):
    p = impermeable_params
    g = grid_for(p)
    prof = impermeable_solution(p, g)
    np.testing.assert_allclose(prof.theta.values, 1 + 0.2 / g.nodes, rtol=1e-15)
    np.testing.assert_allclose(prof.p.values, 1.0, rtol=1e-15)
    assert np.all(prof.u.values == 0)
    sol = impermeable_stationary(p, g)
    assert sol.method == "closed-form" and sol.converged


def test_refinement_reduces_error(inflow_params):
    coarse = solve_stationary(inflow_params, SolverControl(tol=1e-13, N=1025))
    mid = solve_stationary(inflow_params, SolverControl(tol=1e-13, N=2049))
    fine = solve_stationary(inflow_params, SolverControl(tol=1e-13, N=4097))
    r = coarse.grid.nodes
    e1 = weighted_sup(coarse.eta.values - fine.eta.values[::4], r, 1)
    e2 = weighted_sup(mid.eta.values[::2] - fine.eta.values[::4], r, 1)
    assert e2 < e1 / 2


@settings(max_examples=8, deadline=None)
@given(
    u=st.floats(1e-4, 5e-3),
    eta=st.floats(-5e-3, 5e-3),
    chi=st.floats(-5e-3, 5e-3),
    outflow=st.booleans(),
)
def test_small_data_contracts(u, eta, chi, outflow):
    p = make_params(u_minus=-u if outflow else u, eta_minus=eta, chi_minus=chi)
    sol = solve_stationary(p, SolverControl(tol=1e-12, N=1024))
    assert sol.converged
    assert np.all(sol.contraction_ratios[1:] <= 0.5)
