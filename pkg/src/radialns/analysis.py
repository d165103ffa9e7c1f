"""Norms, decay fits, residuals of the original equations, bound checks and sweeps."""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .fixedpoint import (
    PhysicalProfile,
    SolverControl,
    StationarySolution,
    reconstruct_physical,
    solve_stationary,
)
from .grid import RadialGrid, SampledField, build_grid
from .model import (
    DerivedConstants,
    FlowRegime,
    ParameterError,
    Parameters,
    classify_regime,
    derive_constants,
)
from .quadrature import kernel_G, kernel_integrals_from_boundary, kernel_integrals_to_infinity

__all__ = [
    "DecayFit",
    "ResidualReport",
    "BoundCheckReport",
    "SweepTable",
    "FitError",
    "weighted_norm",
    "fit_decay_exponent",
    "default_window",
    "fd_derivative",
    "residual_report",
    "RESIDUAL_THRESHOLD",
    "check_kernel_lemma",
    "kernel_constant",
    "kernel_constant_spread",
    "check_theorem_bounds",
    "layer_amplitude",
    "sweep",
    "max_workers",
    "WORKERS_ENV",
]

WORKERS_ENV = "RADIALNS_MAX_WORKERS"

# relative residual accepted as a solution: reference runs reach ~1e-6 at N=4096
# and ~1e-5 at N=2048, while corrupting one stored value by 1% gives >= 1e-3
RESIDUAL_THRESHOLD = 1e-4
# equations whose terms all vanish (u = 0) are normalized by this fraction of p_+
_SCALE_FLOOR = 1e-8


class FitError(ValueError):
    pass


# ---------------------------------------------------------------------------
# norms and fits


def weighted_norm(f: SampledField, l: float) -> float:
    """sup_r r^l |f(r)| over the nodes; the algebraic tail peaks at R_max when tail_exponent >= l."""
    if f.tail_valid and f.tail_exponent < l:
        warnings.warn("norm dominated by unresolved tail", RuntimeWarning, stacklevel=2)
    return float(np.max(np.abs(f.r**l * f.values)))


@dataclass(frozen=True)
class DecayFit:
    exponent: float
    r_squared: float
    window: tuple
    amplitude: float
    nodes: int


def default_window(g: RadialGrid) -> tuple:
    return (g.R_max / 4.0, 3.0 * g.R_max / 4.0)


def fit_decay_exponent(f: SampledField, window: tuple | None = None) -> DecayFit:
    """Least-squares line through (log r, log |f|) on the window nodes."""
    lo, hi = window or default_window(f.grid)
    if not (1.0 <= lo < hi <= f.grid.R_max):
        raise FitError(f"window [{lo}, {hi}] not inside [1, {f.grid.R_max}]")
    r = f.r
    mask = (r >= lo) & (r <= hi)
    if np.count_nonzero(mask) < 10:
        raise FitError(f"fit window [{lo}, {hi}] holds fewer than 10 nodes")
    vals = f.values[mask]
    if np.all(vals == 0):
        raise FitError("field vanishes on the fit window")
    if np.any(vals == 0) or np.any(np.sign(vals) != np.sign(vals[0])):
        raise FitError("oscillatory field, no power fit")
    x = np.log(r[mask])
    y = np.log(np.abs(vals))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(float(slope), r2, (float(lo), float(hi)), float(np.sign(vals[0]) * math.exp(intercept)), int(mask.sum()))


# ---------------------------------------------------------------------------
# residuals of the original stationary equations


def _fd_weights(r: np.ndarray, order: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Five-point weights for the ``order``-th derivative at every node (fourth-order for order 1)."""
    N = len(r)
    start = np.clip(np.arange(N) - 2, 0, N - 5)
    idx = start[:, None] + np.arange(5)[None, :]
    h = np.empty(N)
    h[:-1] = np.diff(r)
    h[-1] = h[-2]
    d = (r[idx] - r[:, None]) / h[:, None]
    M = d[:, None, :] ** np.arange(5)[None, :, None]
    rhs = np.zeros((N, 5))
    rhs[:, order] = math.factorial(order)
    w = np.linalg.solve(M, rhs[:, :, None])[:, :, 0]
    return w / h[:, None] ** order, idx


def fd_derivative(r: np.ndarray, f: np.ndarray) -> np.ndarray:
    w, idx = _fd_weights(r)
    return np.sum(w * f[idx], axis=1)


@dataclass(frozen=True)
class ResidualReport:
    """Residuals per equation over interior nodes.

    ``relative`` divides the sup residual by the largest summed magnitude of
    the equation's individual terms, so it is comparable across data sizes.
    The ``consistency`` entry compares the stored rho and theta with the
    values implied by eta and chi.
    """

    sup: dict
    rms: dict
    relative: dict
    interior: tuple
    threshold: float = RESIDUAL_THRESHOLD

    @property
    def worst_relative(self) -> float:
        return max(self.relative.values())

    @property
    def passed(self) -> bool:
        return bool(self.worst_relative <= self.threshold)


def residual_report(prof: PhysicalProfile, p: Parameters, threshold: float = RESIDUAL_THRESHOLD, skip: int = 4) -> ResidualReport:
    """Substitute (rho, u, theta, p) into the conservative stationary mass, momentum
    and energy equations and the state law, using fourth-order finite differences.

    Flux derivatives are expanded by the product rule and only deviations from
    the far-field state are differenced, which keeps rounding noise (amplified
    by 1/h per derivative) well below the truncation error.
    """
    r = prof.r
    n = p.n
    rho, u, th, pr = prof.rho.values, prof.u.values, prof.theta.values, prof.p.values
    eta, chi = prof.eta.values, prof.chi.values
    p_plus = p.R_gas * p.rho_plus * p.theta_plus
    D = lambda f: fd_derivative(r, f)  # noqa: E731
    rn1 = r ** (n - 1)

    # deviations from the far field, formed without cancellation
    d_rho = -eta / (p.v_plus * (p.v_plus + eta))
    d_p = p.R_gas * (p.rho_plus * chi + d_rho * (p.theta_plus + chi))
    rho_r = D(d_rho)
    u_r = D(u)
    u_rr = D(u_r)
    th_r = D(chi)
    th_rr = D(th_r)
    p_r = D(d_p)

    # (r^(n-1) rho u)_r / r^(n-1)
    m_terms = [u * rho_r, rho * u_r, (n - 1) * rho * u / r]
    mass = sum(m_terms)
    flux_r = mass * rn1
    flux = rn1 * rho * u

    # div u and its radial derivative
    div_r_terms = [u_rr, (n - 1) * u_r / r, -(n - 1) * u / r**2]
    div_r = sum(div_r_terms)
    div_u = u_r + (n - 1) * u / r

    mo_terms = [flux * u_r / rn1, u * flux_r / rn1, p_r] + [-p.mu * t for t in div_r_terms]
    momentum = sum(mo_terms)

    e_tot = p.c_V * th + 0.5 * u**2
    en_terms = [
        flux * (p.c_V * th_r + u * u_r) / rn1,
        e_tot * flux_r / rn1,
        pr * div_u,
        u * p_r,
        -p.kappa * th_rr,
        -p.kappa * (n - 1) * th_r / r,
        -p.mu * u * div_r,
        -2 * p.nu * u_r**2,
        -2 * p.nu * (n - 1) * (u / r) ** 2,
        -p.lam * div_u**2,
    ]
    energy = sum(en_terms)

    # the stored rho, theta, p columns must agree with (eta, chi) and the state law
    st_terms = [pr - p_plus, -(p.R_gas * rho * th - p_plus)]
    state = sum(st_terms)
    consistency = np.maximum(np.abs(rho - p.rho_plus - d_rho) / p.rho_plus, np.abs(th - p.theta_plus - chi) / p.theta_plus)

    sl = slice(skip, len(r) - skip)
    sup, rms, rel = {}, {}, {}
    floors = {"mass": _SCALE_FLOOR * p.rho_plus, "consistency": 1.0}
    for name, res, terms in (
        ("mass", mass, m_terms),
        ("momentum", momentum, mo_terms),
        ("energy", energy, en_terms),
        ("state", state, st_terms + [p_plus]),
        ("consistency", consistency, [1.0]),
    ):
        rr = res[sl]
        sup[name] = float(np.max(np.abs(rr)))
        rms[name] = float(np.sqrt(np.mean(rr**2)))
        scale = float(np.max(sum(np.abs(t[sl] if np.ndim(t) else t) for t in terms)))
        rel[name] = sup[name] / max(scale, floors.get(name, _SCALE_FLOOR * p_plus))
    return ResidualReport(sup, rms, rel, (float(r[skip]), float(r[-skip - 1])), threshold)


# ---------------------------------------------------------------------------
# bound checks


@dataclass(frozen=True)
class BoundCheckReport:
    name: str
    holds: bool
    worst_margin: float
    empirical_constant: float
    hypothesis: bool = True
    details: dict = field(default_factory=dict)


def _kernel_coefficient(p: Parameters, d: DerivedConstants, eps: float | None):
    """(coefficient, scale) with scale = eps*mu (inflow) or mu*|u_-| (outflow)."""
    if classify_regime(p) is FlowRegime.OUTFLOW:
        b = d.omega_bar / (abs(p.u_minus) * d.mu)
        return b, d.mu * abs(p.u_minus), False
    eps = d.epsilon_inflow if eps is None else eps
    if eps is None:
        raise ParameterError("kernel lemma needs nonzero mass flux")
    return d.omega / (d.mu * eps), eps * d.mu, True


def kernel_constant(p: Parameters, d: DerivedConstants, g: RadialGrid, epsilon: float | None = None) -> float:
    """Empirical C0 = max over test functions s^(-l), l in {-n, 0, n-2}, of
    sup_r r^(l+n-1) |kernel integral| / (scale * ||f||_{X_l})."""
    coeff, scale, forward = _kernel_coefficient(p, d, epsilon)
    n = p.n
    r = g.nodes
    best = 0.0
    for l in (-n, 0, n - 2):
        f = SampledField(g, r ** (-float(l)), float(l))
        if forward:
            K = kernel_integrals_from_boundary(f, coeff)
        else:
            K = kernel_integrals_to_infinity(f, coeff)
        best = max(best, float(np.max(r ** (l + n - 1) * np.abs(K))) / scale)
    return best


def check_kernel_lemma(p: Parameters, d: DerivedConstants, g: RadialGrid, epsilon: float | None = None) -> BoundCheckReport:
    """Pointwise r^(n-2) G(r,1) <= 1 (inflow kernel) and the empirical integral-bound constant.

    ``epsilon`` overrides the mass flux, which is how the negative control
    evaluates the check outside its hypothesis.
    """
    n = p.n
    r = g.nodes
    regime = classify_regime(p)
    if regime is FlowRegime.INFLOW or epsilon is not None:
        eps = d.epsilon_inflow if epsilon is None else epsilon
        a = d.omega / (d.mu * eps)
        worst = float(np.max(r ** (n - 2) * kernel_G(r, 1.0, a, n)))
        hyp = eps <= n * d.omega / ((n - 2) * d.mu)
        c0 = kernel_constant(p, d, g, eps) if regime is FlowRegime.INFLOW else float("nan")
        return BoundCheckReport("lemma31", worst <= 1.0 + 1e-15, worst, c0, hyp, {"epsilon": eps})
    c0 = kernel_constant(p, d, g)
    return BoundCheckReport("lemma41", True, 0.0, c0, True, {"u_minus": p.u_minus})


def kernel_constant_spread(
    base: Parameters,
    eps_values=(1e-4, 1e-3, 1e-2),
    mu_values=(0.1, 1.0),
    R_max: float = 200.0,
    N: int = 4096,
) -> dict:
    """Empirical C0 over an (eps, mu) sample for the base regime's kernel; eps means |u_-|/v_+ for outflow."""
    values = {}
    ratio_nu = base.nu / base.mu
    for mu in mu_values:
        nu = ratio_nu * mu
        p = base.replace(nu=nu, lam=mu - 2 * nu)
        for eps in eps_values:
            if classify_regime(base) is FlowRegime.OUTFLOW:
                q = p.replace(u_minus=-eps * p.v_plus)
            else:
                q = p.replace(u_minus=eps * p.v_minus)
            d = derive_constants(q)
            g = build_grid(q, d, R_max=R_max, N=N)
            values[(eps, mu)] = kernel_constant(q, d, g)
    c = np.array(list(values.values()))
    return {"values": values, "min": float(c.min()), "max": float(c.max()), "spread": float(c.max() / c.min())}


def check_theorem_bounds(sol: StationarySolution, prof: PhysicalProfile, p: Parameters | None = None) -> BoundCheckReport:
    """C = max(||eta||, ||chi||)_{X_{n-2}} / data size, and the velocity band r^(n-1)|u|/|u_-|."""
    p = p or sol.params
    n = p.n
    r = prof.r
    ne = float(np.max(np.abs(r ** (n - 2) * sol.eta.values)))
    nc = float(np.max(np.abs(r ** (n - 2) * sol.chi.values)))
    size = p.data_size()
    C = max(ne, nc) / size if size > 0 else 0.0
    if p.u_minus != 0:
        band = r ** (n - 1) * np.abs(prof.u.values) / abs(p.u_minus)
        lo, hi = float(band.min()), float(band.max())
    else:
        lo = hi = float("nan")
    holds = bool(np.isfinite(C) and (p.u_minus == 0 or (lo > 0 and np.isfinite(hi))))
    return BoundCheckReport(
        "theorem11",
        holds,
        0.0 if holds else float("inf"),
        C,
        True,
        {
            "eta_norm": ne,
            "chi_norm": nc,
            "C_eta": ne / size if size else 0.0,
            "C_chi": nc / size if size else 0.0,
            "data_size": size,
            "velocity_band_inf": lo,
            "velocity_band_sup": hi,
        },
    )


# ---------------------------------------------------------------------------
# sweeps


def layer_amplitude(prof: PhysicalProfile, p: Parameters, delta: float = 0.5) -> float:
    """|rho(1+delta) - rho_+ theta_+ / theta~(1+delta)| against the impermeable temperature profile."""
    r0 = 1.0 + delta
    rho = float(CubicSpline(prof.r, prof.rho.values)(r0))
    theta_imp = p.theta_plus + p.chi_minus * r0 ** (-(p.n - 2))
    return abs(rho - p.rho_plus * p.theta_plus / theta_imp)


@dataclass(frozen=True)
class SweepTable:
    axis: str
    rows: list

    @property
    def columns(self) -> list:
        cols = []
        for row in self.rows:
            for k in row:
                if k not in cols:
                    cols.append(k)
        return cols

    def column(self, name: str) -> np.ndarray:
        return np.array([row.get(name, np.nan) for row in self.rows], dtype=float)


SWEEP_AXES = ("u_minus", "mu", "scale", "eta_minus", "chi_minus", "kappa", "nu", "n")


def max_workers(requested: int | None = None) -> int:
    env = os.environ.get(WORKERS_ENV)
    cap = int(env) if env else (os.cpu_count() or 1)
    if requested is not None:
        cap = min(cap, requested)
    return max(1, cap)


def apply_axis(base: Parameters, axis: str, value: float) -> Parameters:
    if axis == "mu":
        ratio = base.nu / base.mu
        nu = ratio * value
        return base.replace(nu=nu, lam=value - 2 * nu)
    if axis == "scale":
        return base.replace(
            u_minus=base.u_minus * value, eta_minus=base.eta_minus * value, chi_minus=base.chi_minus * value
        )
    if axis == "n":
        return base.replace(n=int(value))
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis '{axis}'; choose from {', '.join(SWEEP_AXES)}")
    return base.replace(**{axis: value})


def _sweep_row(args) -> dict:
    axis, value, base, control, window, delta = args
    row: dict = {axis: value}
    try:
        p = apply_axis(base, axis, value)
        sol = solve_stationary(p, control)
    except Exception as exc:  # a failed row is data, not a crash
        row.update(converged=0, status=f"error: {exc}")
        return row
    row.update(converged=int(sol.converged), status=sol.status, iterations=sol.iterations)
    ratios = sol.contraction_ratios
    row["max_ratio"] = float(np.max(ratios)) if ratios.size else 0.0
    row["final_increment"] = sol.final_increment
    if not sol.converged:
        return row
    prof = reconstruct_physical(sol)
    tb = check_theorem_bounds(sol, prof, p)
    row.update(
        eta_norm=tb.details["eta_norm"],
        chi_norm=tb.details["chi_norm"],
        C=tb.empirical_constant,
        velocity_band_inf=tb.details["velocity_band_inf"],
        velocity_band_sup=tb.details["velocity_band_sup"],
        alpha=sol.alpha,
        epsilon=sol.epsilon,
        rho_1=float(prof.rho.values[0]),
        wall_mismatch=abs(float(prof.rho.values[0]) - p.rho_plus * p.theta_plus / p.theta_minus),
        layer_amplitude=layer_amplitude(prof, p, delta),
        within_regime=int(sol.smallness.within_proven_regime),
    )
    for name, f in (("eta", sol.eta), ("chi", sol.chi), ("u", prof.u)):
        try:
            row[f"{name}_exponent"] = fit_decay_exponent(f, window).exponent
        except FitError:
            row[f"{name}_exponent"] = float("nan")
    return row


def sweep(
    axis: str,
    values,
    base: Parameters,
    control: SolverControl | None = None,
    window: tuple | None = None,
    delta: float = 0.5,
    workers: int | None = None,
) -> SweepTable:
    """Solve and measure one row per axis value; rows come back sorted by value."""
    values = sorted(float(v) for v in values)
    if not values:
        raise ValueError("sweep axis has no values")
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis '{axis}'; choose from {', '.join(SWEEP_AXES)}")
    control = control or SolverControl()
    jobs = [(axis, v, base, control, window, delta) for v in values]
    nw = max_workers(workers if workers is not None else len(jobs))
    if nw == 1 or len(jobs) == 1:
        rows = [_sweep_row(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=nw) as pool:
            rows = list(pool.map(_sweep_row, jobs))
    return SweepTable(axis, rows)
