"""Physical parameters, derived constants and flow-regime classification.

All quantities are nondimensional and the inner sphere radius is normalized
to one. A configuration that states a physical radius ``r0`` is rescaled at
parse time: lengths are divided by ``r0``, which divides the diffusive
coefficients (nu, lambda, kappa) by ``r0`` and leaves velocities unchanged.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Any, Mapping

__all__ = [
    "ParameterError",
    "Parameters",
    "DerivedConstants",
    "FlowRegime",
    "SmallnessReport",
    "build_parameters",
    "classify_regime",
    "derive_constants",
    "smallness_check",
]


class ParameterError(ValueError):
    """Invalid physical configuration; ``condition`` names the failed check."""

    def __init__(self, condition: str, message: str | None = None):
        self.condition = condition
        super().__init__(message or condition)


class FlowRegime(enum.Enum):
    INFLOW = "inflow"
    IMPERMEABLE = "impermeable"
    OUTFLOW = "outflow"


@dataclass(frozen=True)
class Parameters:
    """Gas constants and boundary/far-field data (far-field velocity is zero)."""

    n: int
    R_gas: float
    c_V: float
    nu: float
    lam: float
    kappa: float
    v_plus: float
    theta_plus: float
    u_minus: float
    eta_minus: float
    chi_minus: float

    @property
    def mu(self) -> float:
        return 2.0 * self.nu + self.lam

    @property
    def rho_plus(self) -> float:
        return 1.0 / self.v_plus

    @property
    def v_minus(self) -> float:
        return self.v_plus + self.eta_minus

    @property
    def rho_minus(self) -> float:
        return 1.0 / self.v_minus

    @property
    def theta_minus(self) -> float:
        return self.theta_plus + self.chi_minus

    def data_size(self) -> float:
        """|u_-| + |eta_-| + |chi_-| (inflow) or |u_-| + |chi_-| otherwise."""
        size = abs(self.u_minus) + abs(self.chi_minus)
        if self.u_minus > 0:
            size += abs(self.eta_minus)
        return size

    def replace(self, **changes: Any) -> "Parameters":
        """Copy with fields changed; the copy is re-validated."""
        raw = {f: getattr(self, f) for f in self.__dataclass_fields__}
        raw.update(changes)
        return _validated(Parameters(**raw))


@dataclass(frozen=True)
class DerivedConstants:
    mu: float
    c_P: float
    omega: float
    omega_bar: float
    epsilon_inflow: float | None


@dataclass(frozen=True)
class SmallnessReport:
    eta_half: bool
    eta_half_margin: float
    u_layer: bool
    u_layer_margin: float
    u_unit: bool
    u_unit_margin: float
    data_size: float

    @property
    def within_proven_regime(self) -> bool:
        return self.eta_half and self.u_layer and self.u_unit

    @property
    def stamp(self) -> str:
        if self.within_proven_regime:
            return "within proven smallness regime"
        return "outside proven smallness regime"


# accepted spellings in configuration records
_ALIASES = {
    "R": "R_gas",
    "lambda": "lam",
    "cV": "c_V",
    "c_v": "c_V",
}

_REQUIRED = ("n", "R_gas", "c_V", "nu", "lam", "kappa", "theta_plus", "u_minus")


def _number(raw: Mapping[str, Any], key: str) -> float:
    value = raw[key]
    if isinstance(value, bool):
        raise ParameterError(f"{key} must be numeric", f"field '{key}' must be numeric, got {value!r}")
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ParameterError(f"{key} must be numeric", f"field '{key}' must be numeric, got {value!r}") from None
    if not math.isfinite(x):
        raise ParameterError(f"{key} must be finite", f"field '{key}' is not finite: {value!r}")
    return x


def build_parameters(raw: Mapping[str, Any]) -> Parameters:
    """Validate a configuration record and return :class:`Parameters`.

    Densities may be given as ``rho_plus``/``rho_minus`` instead of
    ``v_plus``/``eta_minus`` and the boundary temperature as ``theta_minus``
    instead of ``chi_minus``. ``eta_minus`` is only required for inflow.
    """
    rec: dict[str, Any] = {}
    for key, value in raw.items():
        rec[_ALIASES.get(key, key)] = value

    for key in _REQUIRED:
        if key not in rec:
            raise ParameterError(f"missing field {key}", f"missing required field '{key}'")

    if "u_plus" in rec and _number(rec, "u_plus") != 0.0:
        raise ParameterError(
            "u_plus must be 0",
            "nonzero far-field velocity u_plus: stationary radial solutions require u_plus = 0",
        )

    n_val = rec["n"]
    if isinstance(n_val, bool) or float(n_val) != int(float(n_val)):
        raise ParameterError("n must be an integer", f"space dimension n must be an integer, got {n_val!r}")
    n = int(float(n_val))
    if n < 3:
        raise ParameterError("n >= 3 required", f"n >= 3 required, got n = {n}")

    if "v_plus" in rec:
        v_plus = _number(rec, "v_plus")
    elif "rho_plus" in rec:
        v_plus = 1.0 / _number(rec, "rho_plus")
    else:
        raise ParameterError("missing field v_plus", "missing required field 'v_plus' (or 'rho_plus')")

    theta_plus = _number(rec, "theta_plus")
    if "chi_minus" in rec:
        chi_minus = _number(rec, "chi_minus")
    elif "theta_minus" in rec:
        chi_minus = _number(rec, "theta_minus") - theta_plus
    else:
        raise ParameterError("missing field chi_minus", "missing required field 'chi_minus' (or 'theta_minus')")

    u_minus = _number(rec, "u_minus")
    if "eta_minus" in rec:
        eta_minus = _number(rec, "eta_minus")
    elif "rho_minus" in rec:
        eta_minus = 1.0 / _number(rec, "rho_minus") - v_plus
    elif u_minus > 0:
        raise ParameterError("missing field eta_minus", "inflow requires 'eta_minus' (or 'rho_minus')")
    else:
        eta_minus = 0.0

    nu = _number(rec, "nu")
    lam = _number(rec, "lam")
    kappa = _number(rec, "kappa")
    r0 = _number(rec, "r0") if "r0" in rec else 1.0
    if r0 <= 0:
        raise ParameterError("r0 > 0 required")
    nu, lam, kappa = nu / r0, lam / r0, kappa / r0

    p = Parameters(
        n=n,
        R_gas=_number(rec, "R_gas"),
        c_V=_number(rec, "c_V"),
        nu=nu,
        lam=lam,
        kappa=kappa,
        v_plus=v_plus,
        theta_plus=theta_plus,
        u_minus=u_minus,
        eta_minus=eta_minus,
        chi_minus=chi_minus,
    )
    return _validated(p)


def _validated(p: Parameters) -> Parameters:
    if p.n < 3:
        raise ParameterError("n >= 3 required", f"n >= 3 required, got n = {p.n}")
    for name in ("R_gas", "c_V", "kappa", "v_plus", "theta_plus"):
        value = getattr(p, name)
        if not value > 0:
            raise ParameterError(f"{name} > 0 required", f"{name} must be strictly positive, got {value}")
    if not p.nu > 0:
        raise ParameterError("nu > 0 required", f"nu must be strictly positive, got {p.nu}")
    if 2.0 * p.nu + p.n * p.lam < 0:
        raise ParameterError(
            "2nu + n*lambda >= 0 violated",
            f"2nu + n*lambda >= 0 violated: 2*{p.nu} + {p.n}*{p.lam} = {2 * p.nu + p.n * p.lam}",
        )
    if not p.mu > 0:
        raise ParameterError("mu = 2nu + lambda > 0 required")
    if p.theta_minus <= 0:
        raise ParameterError("theta_minus > 0 required", f"boundary temperature must be positive, got {p.theta_minus}")
    if p.u_minus > 0 and p.v_minus <= 0:
        raise ParameterError("v_minus > 0 required", f"boundary specific volume must be positive, got {p.v_minus}")
    # follows from the two viscosity conditions; kept as a guard
    assert p.nu / p.mu <= p.n / (2.0 * (p.n - 1)) * (1 + 1e-12)
    return p


def classify_regime(p: Parameters) -> FlowRegime:
    if p.u_minus > 0:
        return FlowRegime.INFLOW
    if p.u_minus < 0:
        return FlowRegime.OUTFLOW
    return FlowRegime.IMPERMEABLE


def derive_constants(p: Parameters) -> DerivedConstants:
    eps = p.u_minus / p.v_minus if p.u_minus > 0 else None
    return DerivedConstants(
        mu=p.mu,
        c_P=p.R_gas + p.c_V,
        omega=p.R_gas * p.theta_plus / (p.v_plus**2 * p.n),
        omega_bar=p.R_gas * p.theta_plus / (p.v_plus * p.n),
        epsilon_inflow=eps,
    )


def smallness_check(p: Parameters) -> SmallnessReport:
    """Evaluate the smallness hypotheses of the existence theory.

    Margins are ratios quantity/bound, so a margin <= 1 means the flag holds.
    """
    d = derive_constants(p)
    eta_bound = p.v_plus / 2.0
    u_bound = p.n * d.omega * p.v_plus / (2.0 * (p.n - 2) * p.mu)
    u = abs(p.u_minus)
    eta = abs(p.eta_minus) if p.u_minus > 0 else 0.0
    return SmallnessReport(
        eta_half=eta <= eta_bound,
        eta_half_margin=eta / eta_bound,
        u_layer=u <= u_bound,
        u_layer_margin=u / u_bound,
        u_unit=u <= 1.0,
        u_unit_margin=u,
        data_size=p.data_size(),
    )
