"""Pointwise right-hand sides and the nonlocal functionals of the reformulated system.

Unknowns are the deviations eta = v - v_+ (specific volume) and chi = theta - theta_+
(temperature), with zeta = eta_r. The pointwise functions accept complex arrays so
the boundary-value solver can differentiate them by complex step; the
SampledField wrappers are real-valued and used by the fixed-point iteration.
"""

from __future__ import annotations

import numpy as np

from .grid import SampledField
from .model import Parameters
from .quadrature import cumulative_tail_integrals

__all__ = [
    "AdmissibilityError",
    "linear_coefficients",
    "forcing_F",
    "dissipation_Phi",
    "eta_slope",
    "energy_bracket",
    "chi_slope",
    "eta_tail_moment",
    "F_nonlinearity",
    "Phi_dissipation",
    "H_functional",
]


class AdmissibilityError(ArithmeticError):
    """A field left the physical set (v <= 0 or theta <= 0); ``radius`` locates it."""

    def __init__(self, message: str, radius: float):
        self.radius = radius
        super().__init__(f"{message} at r = {radius:.6g}")


def linear_coefficients(p: Parameters, eps: float, r):
    """(A, B) in eta_r = -A eta + B chi + F."""
    rn1 = r ** (p.n - 1)
    A = p.R_gas * p.theta_plus * rn1 / (eps * p.mu * p.v_plus**2)
    B = p.R_gas * rn1 / (eps * p.mu * p.v_plus)
    return A, B


def forcing_F(p: Parameters, eps: float, r, eta, chi, z):
    """Nonlinear and flux-driven part of the eta equation.

    ``z`` is the tail moment int_r^inf eta(s) s^(1-2n) ds.
    """
    n, mu, vp = p.n, p.mu, p.v_plus
    v = vp + eta
    rn1 = r ** (n - 1)
    return (
        -p.R_gas * rn1 * chi * eta / (eps * mu * vp * v)
        + p.R_gas * p.theta_plus * rn1 * eta**2 / (eps * mu * vp**2 * v)
        + eps * vp / (2.0 * mu * rn1)
        + eps * eta / (mu * rn1)
        - eps * (n - 1) * rn1 * z / mu
    )


def dissipation_Phi(p: Parameters, eps: float, r, eta, zeta):
    n, nu = p.n, p.nu
    v = p.v_plus + eta
    return -4.0 * eps**2 * nu * (n - 1) * v * zeta / r**n + 2.0 * eps**2 * nu * n * (n - 1) * v**2 / r ** (n + 1)


def eta_slope(p: Parameters, eps: float, r, eta, chi, z):
    A, B = linear_coefficients(p, eps, r)
    return -A * eta + B * chi + forcing_F(p, eps, r, eta, chi, z)


def energy_bracket(p: Parameters, eps: float, r, eta, chi, zeta, w):
    """Integrated energy flux minus alpha; chi_r = (bracket - alpha) / (kappa r^(n-1)).

    ``w`` is int_r^inf Phi ds.
    """
    n = p.n
    v = p.v_plus + eta
    c_P = p.R_gas + p.c_V
    return (
        eps * c_P * chi
        + 0.5 * eps**3 * v**2 / r ** (2 * n - 2)
        - eps**2 * p.mu * v * zeta / r ** (n - 1)
        + w
    )


def chi_slope(p: Parameters, eps: float, r, eta, chi, zeta, w, alpha):
    return (energy_bracket(p, eps, r, eta, chi, zeta, w) - alpha) / (p.kappa * r ** (p.n - 1))


# ---------------------------------------------------------------------------
# field-level wrappers


def _check_admissible(p: Parameters, eta: SampledField, chi: SampledField | None = None):
    v = p.v_plus + eta.values
    if np.any(v <= 0):
        i = int(np.flatnonzero(v <= 0)[0])
        raise AdmissibilityError("specific volume collapse", float(eta.r[i]))
    if chi is not None:
        th = p.theta_plus + chi.values
        if np.any(th <= 0):
            i = int(np.flatnonzero(th <= 0)[0])
            raise AdmissibilityError("temperature collapse", float(chi.r[i]))


def _same_grid(*fields: SampledField):
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid is not g:
            raise ValueError("fields live on different grids")


def eta_tail_moment(eta: SampledField) -> SampledField:
    """z(r) = int_r^inf eta(s) / s^(2n-1) ds."""
    n = eta.grid.n
    return cumulative_tail_integrals(eta, 2 * n - 1)


def F_nonlinearity(eta: SampledField, chi: SampledField, tail_eta: SampledField, p: Parameters, eps: float) -> SampledField:
    if eps == 0:
        raise ValueError("F is undefined for zero mass flux")
    _same_grid(eta, chi, tail_eta)
    _check_admissible(p, eta)
    vals = forcing_F(p, eps, eta.r, eta.values, chi.values, tail_eta.values)
    return SampledField(eta.grid, vals, p.n - 3.0)


def Phi_dissipation(eta: SampledField, zeta: SampledField, p: Parameters, eps: float) -> SampledField:
    _same_grid(eta, zeta)
    vals = dissipation_Phi(p, eps, eta.r, eta.values, zeta.values)
    return SampledField(eta.grid, vals, p.n + 1.0)


def H_functional(eta: SampledField, zeta: SampledField, chi: SampledField, p: Parameters, eps: float) -> SampledField:
    """H(r) = -int_r^inf bracket(tau) / (kappa tau^(n-1)) dtau, O(N) via backward sweeps.

    Each term of the bracket is integrated with its own algebraic tail; the
    constant part v_+^2 of the kinetic term is integrated exactly.
    """
    _same_grid(eta, zeta, chi)
    n, vp, kappa = p.n, p.v_plus, p.kappa
    g = eta.grid
    r = g.nodes
    c_P = p.R_gas + p.c_V
    W = cumulative_tail_integrals(Phi_dissipation(eta, zeta, p, eps), 0.0)

    heat = cumulative_tail_integrals(chi, n - 1).values * (eps * c_P)
    dv2 = SampledField(g, 2.0 * vp * eta.values + eta.values**2, eta.tail_exponent)
    kinetic = 0.5 * eps**3 * (
        vp**2 * r ** (-(3 * n - 4)) / (3 * n - 4) + cumulative_tail_integrals(dv2, 3 * n - 3).values
    )
    vzeta = SampledField(g, (vp + eta.values) * zeta.values, zeta.tail_exponent)
    viscous = -(eps**2) * p.mu * cumulative_tail_integrals(vzeta, 2 * n - 2).values
    work = cumulative_tail_integrals(W, n - 1).values

    H = -(heat + kinetic + viscous + work) / kappa
    tail = min(chi.tail_exponent + n - 2, 2.0 * n - 2)
    return SampledField(g, H, tail)
