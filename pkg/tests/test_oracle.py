import numpy as np
import pytest

from radialns.fixedpoint import SolverControl, grid_for, solve_stationary
from radialns.functionals import F_nonlinearity, Phi_dissipation, eta_tail_moment
from radialns.grid import SampledField
from radialns.oracle import AugmentedState, BvpUnknowns, augmented_rhs, compare_solutions, solve_bvp

from conftest import make_params


@pytest.fixture(scope="module")
def inflow_pair(inflow_solution, inflow_params):
    return inflow_solution, solve_bvp(inflow_params, inflow_solution.grid)


@pytest.fixture(scope="module")
def outflow_pair(outflow_solution, outflow_params):
    return outflow_solution, solve_bvp(outflow_params, outflow_solution.grid)


def test_zero_state_rhs(inflow_params):
    p = inflow_params
    eps = p.u_minus / p.v_minus
    r = 2.0
    eta_r, chi_r, z_r, w_r = augmented_rhs(r, AugmentedState(0.0, 0.0, 0.0, 0.0), BvpUnknowns(0.0), p)
    assert eta_r == pytest.approx(eps * p.v_plus / (2 * p.mu * r**2), rel=1e-15)
    assert z_r == 0.0
    # eta_r is nonzero at the zero state, so Phi keeps its zeta term
    phi = -4 * eps**2 * p.nu * 2 * p.v_plus * eta_r / r**3 + 2 * eps**2 * p.nu * 3 * 2 * p.v_plus**2 / r**4
    assert w_r == pytest.approx(-phi, rel=1e-14)
    expected = (eps**3 * p.v_plus**2 / 2) / (p.kappa * r**6) - eps**2 * p.mu * p.v_plus * eta_r / (p.kappa * r**4)
    assert chi_r == pytest.approx(expected, rel=1e-14)


def test_rhs_shares_field_formulas(inflow_solution, inflow_params):
    p = inflow_params
    sol = inflow_solution
    eps = sol.epsilon
    z = eta_tail_moment(sol.eta)
    F = F_nonlinearity(sol.eta, sol.chi, z, p, eps)
    r = sol.grid.nodes
    i = 500
    s = AugmentedState(sol.eta.values[i], sol.chi.values[i], z.values[i], 0.0)
    eta_r, *_ = augmented_rhs(r[i], s, BvpUnknowns(sol.alpha), p)
    from radialns.functionals import linear_coefficients

    A, B = linear_coefficients(p, eps, r[i])
    assert eta_r == pytest.approx(-A * s.eta + B * s.chi + F.values[i], rel=1e-14)
    zeta = SampledField(sol.grid, np.full(sol.grid.N, eta_r), 0.0)
    Phi = Phi_dissipation(sol.eta, zeta, p, eps)
    assert -augmented_rhs(r[i], s, BvpUnknowns(sol.alpha), p)[3] == pytest.approx(Phi.values[i], rel=1e-14)


def test_outflow_needs_boundary_volume(outflow_params):
    with pytest.raises(ValueError, match="eta_at_1"):
        augmented_rhs(1.0, AugmentedState(0.0, 0.0, 0.0, 0.0), BvpUnknowns(0.0), outflow_params)


def test_impermeable_rejected(impermeable_params):
    with pytest.raises(ValueError, match="impermeable"):
        solve_bvp(impermeable_params, grid_for(impermeable_params))


@pytest.mark.parametrize("pair", ["inflow_pair", "outflow_pair"])
def test_oracle_agrees_with_fixed_point(request, pair):
    fp, bvp = request.getfixturevalue(pair)
    assert bvp.converged and bvp.method == "bvp"
    assert bvp.extra["newton_residuals"][-1] <= 1e-10
    rep = compare_solutions(fp, bvp)
    assert rep.weighted_max <= 1e-6
    assert rep.alpha_relative <= 1e-8


def test_warm_start_is_quick(inflow_pair, inflow_params):
    fp, _ = inflow_pair
    warm = solve_bvp(inflow_params, fp.grid, init=fp)
    assert warm.converged
    assert warm.iterations <= 3


def test_discrepancy_shrinks_with_refinement():
    p = make_params()
    gaps = []
    for N in (1024, 2048):
        fp = solve_stationary(p, SolverControl(tol=1e-13, N=N))
        gaps.append(compare_solutions(fp, solve_bvp(p, fp.grid)).weighted_max)
    assert gaps[1] <= gaps[0] / 2


def test_compare_identity_and_known_offset(inflow_solution):
    rep = compare_solutions(inflow_solution, inflow_solution)
    assert rep.weighted_total == 0 and rep.alpha_relative == 0
    r = inflow_solution.grid.nodes
    from dataclasses import replace

    shifted = replace(inflow_solution, state=replace(
        inflow_solution.state, eta=inflow_solution.eta.with_values(inflow_solution.eta.values + 1e-7 / r)))
    rep = compare_solutions(inflow_solution, shifted)
    assert rep.eta_weighted == pytest.approx(1e-7, rel=1e-9)
    assert rep.chi_weighted == 0


def test_compare_grid_mismatch(inflow_params):
    a = solve_stationary(inflow_params, SolverControl(N=1024))
    b = solve_stationary(inflow_params, SolverControl(N=2048))
    with pytest.raises(ValueError, match="different grids"):
        compare_solutions(a, b)
