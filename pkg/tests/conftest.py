import pytest

from radialns.fixedpoint import SolverControl, reconstruct_physical, solve_stationary
from radialns.model import build_parameters

REFERENCE = dict(
    n=3, R_gas=1.0, c_V=1.5, nu=0.5, lam=0.0, kappa=1.0,
    v_plus=1.0, theta_plus=1.0, u_minus=1e-3, eta_minus=1e-3, chi_minus=1e-3,
)


def make_params(**changes):
    raw = dict(REFERENCE)
    raw.update(changes)
    return build_parameters(raw)


@pytest.fixture(scope="session")
def inflow_params():
    return make_params()


@pytest.fixture(scope="session")
def outflow_params():
    return make_params(u_minus=-1e-3)


@pytest.fixture(scope="session")
def impermeable_params():
    return build_parameters(dict(REFERENCE, u_minus=0.0, eta_minus=0.0, chi_minus=0.2))


@pytest.fixture(scope="session")
def inflow_solution(inflow_params):
    return solve_stationary(inflow_params, SolverControl(tol=1e-12))


@pytest.fixture(scope="session")
def outflow_solution(outflow_params):
    return solve_stationary(outflow_params, SolverControl(tol=1e-12))


@pytest.fixture(scope="session")
def inflow_profile(inflow_solution):
    return reconstruct_physical(inflow_solution)
