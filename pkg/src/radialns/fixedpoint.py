"""Picard iteration for the inflow and outflow problems and profile reconstruction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .functionals import (
    AdmissibilityError,
    F_nonlinearity,
    H_functional,
    eta_tail_moment,
    linear_coefficients,
)
from .grid import RadialGrid, SampledField, build_grid
from .model import (
    DerivedConstants,
    FlowRegime,
    Parameters,
    SmallnessReport,
    classify_regime,
    derive_constants,
    smallness_check,
)
from .quadrature import kernel_G, kernel_integrals_from_boundary, kernel_integrals_to_infinity

__all__ = [
    "SolverControl",
    "IterationState",
    "StationarySolution",
    "PhysicalProfile",
    "RegimeError",
    "weighted_sup",
    "initial_state",
    "inflow_iterate",
    "outflow_iterate",
    "solve_stationary",
    "reconstruct_physical",
    "impermeable_solution",
    "impermeable_stationary",
    "grid_for",
]

DIVERGENCE_STREAK = 5


class RegimeError(ValueError):
    pass


@dataclass(frozen=True)
class SolverControl:
    tol: float = 1e-10
    max_iter: int = 200
    R_max: float = 200.0
    N: int = 4096


@dataclass(frozen=True)
class IterationState:
    eta: SampledField
    chi: SampledField
    zeta: SampledField
    alpha: float
    epsilon: float
    m: int = 0
    increment_norms: tuple = ()

    @property
    def grid(self) -> RadialGrid:
        return self.eta.grid


@dataclass(frozen=True)
class StationarySolution:
    state: IterationState
    converged: bool
    iterations: int
    final_increment: float
    contraction_ratios: np.ndarray
    params: Parameters
    method: str = "fixed-point"
    status: str = "converged"
    fixed_point_residual: float = float("nan")
    smallness: SmallnessReport | None = None
    extra: dict = field(default_factory=dict)

    @property
    def grid(self) -> RadialGrid:
        return self.state.grid

    @property
    def eta(self) -> SampledField:
        return self.state.eta

    @property
    def chi(self) -> SampledField:
        return self.state.chi

    @property
    def zeta(self) -> SampledField:
        return self.state.zeta

    @property
    def alpha(self) -> float:
        return self.state.alpha

    @property
    def epsilon(self) -> float:
        return self.state.epsilon

    @property
    def regime(self) -> FlowRegime:
        return classify_regime(self.params)


@dataclass(frozen=True)
class PhysicalProfile:
    """Density, velocity, temperature and pressure together with the working fields."""

    eta: SampledField
    chi: SampledField
    zeta: SampledField
    rho: SampledField
    u: SampledField
    theta: SampledField
    p: SampledField
    mass_flux: float

    @property
    def grid(self) -> RadialGrid:
        return self.rho.grid

    @property
    def r(self) -> np.ndarray:
        return self.rho.grid.nodes


def weighted_sup(values: np.ndarray, r: np.ndarray, l: float) -> float:
    return float(np.max(np.abs(r**l * values)))


def grid_for(p: Parameters, control: SolverControl | None = None) -> RadialGrid:
    control = control or SolverControl()
    return build_grid(p, derive_constants(p), R_max=control.R_max, N=control.N)


# ---------------------------------------------------------------------------
# one Picard step


def _check_state(p: Parameters, eta: np.ndarray, chi: np.ndarray, r: np.ndarray):
    for name, vals, base in (("specific volume", eta, p.v_plus), ("temperature", chi, p.theta_plus)):
        bad = base + vals <= 0
        if np.any(bad):
            raise AdmissibilityError(f"iterate left admissible set ({name} <= 0)", float(r[np.flatnonzero(bad)[0]]))


def _energy_update(s: IterationState, zeta_new: SampledField, p: Parameters, eps: float):
    n = p.n
    r = s.grid.nodes
    H = H_functional(s.eta, zeta_new, s.chi, p, eps)
    c1 = p.chi_minus - H.values[0]
    chi_new = c1 * r ** (-(n - 2)) + H.values
    chi_new[0] = p.chi_minus
    alpha = p.kappa * (n - 2) * c1
    return SampledField(s.grid, chi_new, n - 2.0), alpha


def inflow_iterate(s: IterationState, p: Parameters, d: DerivedConstants, g: RadialGrid | None = None) -> IterationState:
    """chi from H and chi_-, then eta = G(r,1) eta_- + int_1^r G(r,s) (B chi + F) ds."""
    g = g or s.grid
    n = p.n
    r = g.nodes
    eps = d.epsilon_inflow
    a = d.omega / (d.mu * eps)

    z = eta_tail_moment(s.eta)
    F = F_nonlinearity(s.eta, s.chi, z, p, eps)
    A, B = linear_coefficients(p, eps, r)
    zeta_new = SampledField(g, -A * s.eta.values + B * s.chi.values + F.values, n - 1.0)

    chi_new, alpha = _energy_update(s, zeta_new, p, eps)

    src = SampledField(g, B * chi_new.values + F.values, n - 3.0)
    eta_new = kernel_G(r, 1.0, a, n) * p.eta_minus + kernel_integrals_from_boundary(src, a)
    eta_new[0] = p.eta_minus
    _check_state(p, eta_new, chi_new.values, r)

    inc = weighted_sup(eta_new - s.eta.values, r, n - 2) + weighted_sup(chi_new.values - s.chi.values, r, n - 2)
    return IterationState(
        eta=SampledField(g, eta_new, n - 2.0),
        chi=chi_new,
        zeta=zeta_new,
        alpha=alpha,
        epsilon=eps,
        m=s.m + 1,
        increment_norms=s.increment_norms + (inc,),
    )


def outflow_iterate(s: IterationState, p: Parameters, d: DerivedConstants, g: RadialGrid | None = None) -> IterationState:
    """eta = -int_r^inf G~(r,s) S(s) ds with the eta(1)-dependent linear part moved into S."""
    g = g or s.grid
    n = p.n
    r = g.nodes
    u = p.u_minus
    eta1 = s.eta.values[0]
    if p.v_plus + eta1 <= 0:
        raise AdmissibilityError("iterate left admissible set (specific volume <= 0)", 1.0)
    eps = u / (p.v_plus + eta1)
    b = d.omega_bar / (abs(u) * d.mu)

    z = eta_tail_moment(s.eta)
    F = F_nonlinearity(s.eta, s.chi, z, p, eps)
    A, B = linear_coefficients(p, eps, r)
    zeta_new = SampledField(g, -A * s.eta.values + B * s.chi.values + F.values, n - 1.0)

    chi_new, alpha = _energy_update(s, zeta_new, p, eps)

    shift = p.R_gas * p.theta_plus * eta1 / (u * p.mu * p.v_plus**2)
    S = -shift * r ** (n - 1) * s.eta.values + B * chi_new.values + F.values
    eta_new = -kernel_integrals_to_infinity(SampledField(g, S, -1.0), b)
    _check_state(p, eta_new, chi_new.values, r)

    eps_new = u / (p.v_plus + eta_new[0])
    if eps_new >= 0:
        raise AdmissibilityError("mass flux changed sign", 1.0)

    inc = weighted_sup(eta_new - s.eta.values, r, n - 2) + weighted_sup(chi_new.values - s.chi.values, r, n - 2)
    return IterationState(
        eta=SampledField(g, eta_new, n - 2.0),
        chi=chi_new,
        zeta=zeta_new,
        alpha=alpha,
        epsilon=eps_new,
        m=s.m + 1,
        increment_norms=s.increment_norms + (inc,),
    )


def initial_state(p: Parameters, d: DerivedConstants, g: RadialGrid) -> IterationState:
    n = p.n
    r = g.nodes
    regime = classify_regime(p)
    if regime is FlowRegime.INFLOW:
        eps = d.epsilon_inflow
        a = d.omega / (d.mu * eps)
        eta0 = kernel_G(r, 1.0, a, n) * p.eta_minus
        A, _ = linear_coefficients(p, eps, r)
        zeta0 = -A * eta0
        chi0 = p.chi_minus * r ** (-(n - 2))
        alpha0 = p.kappa * (n - 2) * p.chi_minus
    elif regime is FlowRegime.OUTFLOW:
        eps = p.u_minus / p.v_plus
        eta0 = np.zeros(g.N)
        zeta0 = np.zeros(g.N)
        chi0 = np.zeros(g.N)
        alpha0 = 0.0
    else:
        raise RegimeError("impermeable data has a closed-form solution; use impermeable_solution")
    return IterationState(
        eta=SampledField(g, eta0, n - 2.0),
        chi=SampledField(g, chi0, n - 2.0),
        zeta=SampledField(g, zeta0, n - 1.0),
        alpha=alpha0,
        epsilon=eps,
    )


def _ratios(incs) -> np.ndarray:
    incs = np.asarray(incs, dtype=float)
    if incs.size < 2:
        return np.empty(0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return incs[1:] / incs[:-1]


def solve_stationary(
    p: Parameters,
    control: SolverControl | None = None,
    grid: RadialGrid | None = None,
) -> StationarySolution:
    """Iterate to ||d eta||_{X_{n-2}} + ||d chi||_{X_{n-2}} <= tol.

    Never raises on non-convergence: the returned solution carries
    ``converged=False`` and a ``status`` naming the reason.
    """
    control = control or SolverControl()
    regime = classify_regime(p)
    if regime is FlowRegime.IMPERMEABLE:
        raise RegimeError("impermeable data has a closed-form solution; use impermeable_solution")
    d = derive_constants(p)
    g = grid or build_grid(p, d, R_max=control.R_max, N=control.N)
    step = inflow_iterate if regime is FlowRegime.INFLOW else outflow_iterate

    state = initial_state(p, d, g)
    status = f"max_iter={control.max_iter} reached"
    converged = False
    streak = 0
    for _ in range(control.max_iter):
        try:
            nxt = step(state, p, d, g)
        except AdmissibilityError as exc:
            status = f"aborted: {exc}"
            break
        incs = nxt.increment_norms
        state = nxt
        if not np.isfinite(incs[-1]):
            status = "aborted: non-finite increment"
            break
        streak = streak + 1 if len(incs) > 1 and incs[-1] > incs[-2] else 0
        if streak >= DIVERGENCE_STREAK:
            status = f"diverged: increment grew {DIVERGENCE_STREAK} times in a row"
            break
        if incs[-1] <= control.tol:
            converged = True
            status = "converged"
            break

    fp_res = float("nan")
    if converged:
        try:
            fp_res = step(state, p, d, g).increment_norms[-1]
        except AdmissibilityError:
            pass
    incs = state.increment_norms
    return StationarySolution(
        state=state,
        converged=converged,
        iterations=state.m,
        final_increment=float(incs[-1]) if incs else float("nan"),
        contraction_ratios=_ratios(incs),
        params=p,
        method="fixed-point",
        status=status,
        fixed_point_residual=fp_res,
        smallness=smallness_check(p),
    )


# ---------------------------------------------------------------------------
# physical fields


def reconstruct_physical(sol: StationarySolution, p: Parameters | None = None) -> PhysicalProfile:
    """rho = 1/v, u = eps v / r^(n-1), theta = theta_+ + chi, p = R rho theta."""
    p = p or sol.params
    g = sol.grid
    n = p.n
    r = g.nodes
    v = p.v_plus + sol.eta.values
    if classify_regime(p) is FlowRegime.INFLOW:
        eps = p.u_minus / p.v_minus
    else:
        eps = p.u_minus / v[0]
    rho = 1.0 / v
    u = eps * v / r ** (n - 1)
    theta = p.theta_plus + sol.chi.values
    return PhysicalProfile(
        eta=sol.eta,
        chi=sol.chi,
        zeta=sol.zeta,
        rho=SampledField(g, rho, n - 2.0),
        u=SampledField(g, u, n - 1.0),
        theta=SampledField(g, theta, 0.0),
        p=SampledField(g, p.R_gas * rho * theta, 0.0),
        mass_flux=eps,
    )


def impermeable_solution(p: Parameters, g: RadialGrid) -> PhysicalProfile:
    """theta = theta_+ + chi_- r^(2-n), rho = rho_+ theta_+ / theta, u = 0."""
    if classify_regime(p) is not FlowRegime.IMPERMEABLE:
        raise RegimeError("closed form applies only to u_- = 0")
    n = p.n
    r = g.nodes
    decay = r ** (-(n - 2))
    chi = p.chi_minus * decay
    theta = p.theta_plus + chi
    rho = p.rho_plus * p.theta_plus / theta
    eta = 1.0 / rho - p.v_plus
    # eta = v_+ chi / theta_+ exactly, so its derivative is closed form too
    zeta = -(p.v_plus / p.theta_plus) * (n - 2) * p.chi_minus * r ** (-(n - 1))
    pressure = np.full(g.N, p.R_gas * p.rho_plus * p.theta_plus)
    return PhysicalProfile(
        eta=SampledField(g, eta, n - 2.0),
        chi=SampledField(g, chi, n - 2.0),
        zeta=SampledField(g, zeta, n - 1.0),
        rho=SampledField(g, rho, 0.0),
        u=SampledField(g, np.zeros(g.N), 0.0),
        theta=SampledField(g, theta, 0.0),
        p=SampledField(g, pressure, 0.0),
        mass_flux=0.0,
    )


def impermeable_stationary(p: Parameters, g: RadialGrid) -> StationarySolution:
    """Closed form wrapped as a StationarySolution, for uniform downstream handling."""
    prof = impermeable_solution(p, g)
    state = IterationState(
        eta=prof.eta, chi=prof.chi, zeta=prof.zeta, alpha=p.kappa * (p.n - 2) * p.chi_minus, epsilon=0.0
    )
    return StationarySolution(
        state=state,
        converged=True,
        iterations=0,
        final_increment=0.0,
        contraction_ratios=np.empty(0),
        params=p,
        method="closed-form",
        status="closed-form",
        fixed_point_residual=0.0,
        smallness=smallness_check(p),
    )
