"""Exponential kernels and quadrature on a RadialGrid.

Kernel integrals are evaluated by product integration in t = s**n, where the
kernels are plain exponentials: the remaining factor f(s) / (n s**(n-1)) is
replaced by its cubic Lagrange interpolant on each interval and integrated
exactly against the exponential. Whole-grid evaluations are single O(N) sweeps
using G(r_{i+1}, s) = G(r_{i+1}, r_i) G(r_i, s).

Non-kernel tail integrals use the same cubic interpolant in r and close the
range beyond R_max with the field's algebraic tail.
"""

from __future__ import annotations

import math

import numpy as np

from .grid import RadialGrid, SampledField

__all__ = [
    "TailError",
    "pow_diff",
    "kernel_G",
    "kernel_G_tilde",
    "kernel_integrals_from_boundary",
    "kernel_integrals_to_infinity",
    "integrate_kernel_from_boundary",
    "integrate_kernel_to_infinity",
    "tail_integral_powerlaw",
    "cumulative_tail_integrals",
    "powerlaw_tail",
]

# below this exponent exp() is subnormal; results are flushed to zero
_LOG_TINY = math.log(np.finfo(float).tiny)


class TailError(ValueError):
    pass


def pow_diff(r, s, n: int):
    """r**n - s**n via (r - s) * sum_k r**k s**(n-1-k), free of cancellation for r ~ s."""
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    acc = np.zeros(np.broadcast(r, s).shape)
    for k in range(n):
        acc = acc + r**k * s ** (n - 1 - k)
    return (r - s) * acc


def _flushed_exp(expo):
    expo = np.asarray(expo, dtype=float)
    out = np.exp(np.maximum(expo, _LOG_TINY))
    out = np.where(expo < _LOG_TINY, 0.0, out)
    return out if out.ndim else float(out)


def kernel_G(r, s, a: float, n: int):
    """exp(-a (r**n - s**n)) for 1 <= s <= r."""
    if np.any(np.asarray(s) > np.asarray(r)):
        raise ValueError("kernel_G requires s <= r")
    if a <= 0:
        raise ValueError("kernel decay coefficient must be positive")
    return _flushed_exp(-a * pow_diff(r, s, n))


def kernel_G_tilde(r, s, b: float, n: int):
    """exp(-b (s**n - r**n)) for 1 <= r <= s."""
    if np.any(np.asarray(s) < np.asarray(r)):
        raise ValueError("kernel_G_tilde requires s >= r")
    if b <= 0:
        raise ValueError("kernel decay coefficient must be positive")
    return _flushed_exp(-b * pow_diff(s, r, n))


# ---------------------------------------------------------------------------
# local interpolation rules


def _stencils(N: int) -> np.ndarray:
    """Four-node stencil start for each interval [i, i+1], shifted inward at the ends."""
    if N < 4:
        raise ValueError("at least 4 nodes required")
    return np.clip(np.arange(N - 1) - 1, 0, N - 4)


def _basis_coeffs(sig: np.ndarray) -> np.ndarray:
    """Monomial coefficients of the 4 Lagrange basis polynomials.

    ``sig`` has shape (M, 4); returns C with C[m, j, k] the coefficient of
    sigma**k in the j-th basis polynomial of row m.
    """
    M = sig.shape[0]
    C = np.empty((M, 4, 4))
    for j in range(4):
        others = [sig[:, k] for k in range(4) if k != j]
        a, b, c = others
        denom = (sig[:, j] - a) * (sig[:, j] - b) * (sig[:, j] - c)
        C[:, j, 3] = 1.0 / denom
        C[:, j, 2] = -(a + b + c) / denom
        C[:, j, 1] = (a * b + b * c + c * a) / denom
        C[:, j, 0] = -(a * b * c) / denom
    return C


def _exp_moments(x: np.ndarray) -> np.ndarray:
    """m_k(x) = int_0^1 exp(-x s) s**k ds for k = 0..3, shape (M, 4)."""
    x = np.asarray(x, dtype=float)
    m = np.empty(x.shape + (4,))
    small = x < 2.0
    xs = x[small]
    # series: m_k = sum_j (-x)^j / (j! (j + k + 1))
    term = np.ones_like(xs)
    acc = np.zeros((xs.size, 4))
    for j in range(60):
        for k in range(4):
            acc[:, k] += term / (j + k + 1)
        term = term * (-xs) / (j + 1)
    m[small] = acc
    xl = x[~small]
    e = _flushed_exp(-xl)
    ml = np.empty((xl.size, 4))
    ml[:, 0] = -np.expm1(-xl) / xl
    for k in range(1, 4):
        ml[:, k] = (k * ml[:, k - 1] - e) / xl
    m[~small] = ml
    return m


def _kernel_weights(grid: RadialGrid, coeff: float, forward: bool):
    """Per-interval transfer factors and stencil weights for a kernel sweep.

    forward=True:  local_i = int_{t_i}^{t_{i+1}} exp(-coeff (t_{i+1} - t)) g dt
    forward=False: local_i = int_{t_i}^{t_{i+1}} exp(-coeff (t - t_i)) g dt
    """
    key = ("kernel", coeff, forward)
    cached = grid._cache.get(key)
    if cached is not None:
        return cached
    r = grid.nodes
    N = grid.N
    n = grid.n
    start = _stencils(N)
    idx = start[:, None] + np.arange(4)[None, :]
    i = np.arange(N - 1)
    dt = pow_diff(r[i + 1], r[i], n)
    anchor = r[i + 1] if forward else r[i]
    # signed offsets of stencil nodes from the anchor, in units of dt
    if forward:
        sig = pow_diff(anchor[:, None], r[idx], n) / dt[:, None]
    else:
        sig = pow_diff(r[idx], anchor[:, None], n) / dt[:, None]
    C = _basis_coeffs(sig)
    x = coeff * dt
    mom = _exp_moments(x)
    W = np.einsum("mjk,mk->mj", C, mom) * dt[:, None]
    transfer = _flushed_exp(-x)
    out = (transfer, W, idx)
    grid._cache[key] = out
    return out


def _g_values(f: SampledField, n: int) -> np.ndarray:
    r = f.grid.nodes
    return f.values / (n * r ** (n - 1))


def kernel_integrals_from_boundary(f: SampledField, a: float) -> np.ndarray:
    """I_i = int_1^{r_i} G(r_i, s) f(s) ds at every node (forward sweep)."""
    if a <= 0:
        raise ValueError("kernel decay coefficient must be positive")
    n = f.grid.n
    transfer, W, idx = _kernel_weights(f.grid, a, forward=True)
    g = _g_values(f, n)
    local = np.sum(W * g[idx], axis=1)
    out = np.empty(f.grid.N)
    acc = 0.0
    out[0] = 0.0
    for i in range(f.grid.N - 1):
        acc = transfer[i] * acc + local[i]
        out[i + 1] = acc
    return out


def _tail_kernel_closure(gR: float, tR: float, b: float, q: float) -> float:
    """int_T^inf exp(-b (t - T)) gR (t / T)**(-q) dt by its asymptotic series in 1/(bT)."""
    z = b * tR
    total = 1.0
    term = 1.0
    for k in range(8):
        nxt = -term * (q + k) / z
        if abs(nxt) >= abs(term):
            break
        term = nxt
        total += term
        if abs(term) < 1e-17:
            break
    return gR / b * total


def kernel_integrals_to_infinity(f: SampledField, b: float) -> np.ndarray:
    """J_i = int_{r_i}^inf G~(r_i, s) f(s) ds at every node (backward sweep)."""
    if b <= 0:
        raise ValueError("kernel decay coefficient must be positive")
    if not f.tail_valid:
        raise TailError("tail closure unavailable")
    n = f.grid.n
    transfer, W, idx = _kernel_weights(f.grid, b, forward=False)
    g = _g_values(f, n)
    local = np.sum(W * g[idx], axis=1)
    R = f.grid.R_max
    q = (f.tail_exponent + n - 1) / n
    out = np.empty(f.grid.N)
    acc = _tail_kernel_closure(g[-1], R**n, b, q)
    out[-1] = acc
    for i in range(f.grid.N - 2, -1, -1):
        acc = transfer[i] * acc + local[i]
        out[i] = acc
    return out


def integrate_kernel_from_boundary(f: SampledField, r: float, a: float) -> float:
    """int_1^r G(r, s) f(s) ds for a grid node r."""
    i = f.grid.index_of(r)
    return float(kernel_integrals_from_boundary(f, a)[i])


def integrate_kernel_to_infinity(f: SampledField, r: float, b: float) -> float:
    """int_r^inf G~(r, s) f(s) ds for a grid node r."""
    i = f.grid.index_of(r)
    return float(kernel_integrals_to_infinity(f, b)[i])


# ---------------------------------------------------------------------------
# algebraic tail integrals


def _cubic_weights(grid: RadialGrid) -> tuple[np.ndarray, np.ndarray]:
    cached = grid._cache.get("cubic")
    if cached is not None:
        return cached
    r = grid.nodes
    start = _stencils(grid.N)
    idx = start[:, None] + np.arange(4)[None, :]
    i = np.arange(grid.N - 1)
    h = r[i + 1] - r[i]
    sig = (r[idx] - r[i][:, None]) / h[:, None]
    C = _basis_coeffs(sig)
    W = np.einsum("mjk,k->mj", C, 1.0 / np.arange(1, 5)) * h[:, None]
    grid._cache["cubic"] = (W, idx)
    return W, idx


def powerlaw_tail(value_at_R: float, R: float, exponent: float):
    """int_R^inf v (s/R)**(-p) ds = v R / (p - 1); requires p > 1."""
    if not exponent > 1:
        raise TailError(f"non-integrable tail: integrand exponent {exponent} <= 1")
    return value_at_R * R / (exponent - 1.0)


def _integrand(f: SampledField, extra_power: float):
    if not f.tail_valid:
        raise TailError("tail closure unavailable")
    p = f.tail_exponent + extra_power
    if not p > 1:
        raise TailError(f"non-integrable tail: tail exponent {f.tail_exponent} + extra power {extra_power} <= 1")
    return f.values * f.grid.nodes ** (-extra_power), p


def cumulative_tail_integrals(f: SampledField, extra_power: float = 0.0) -> SampledField:
    """int_{r_i}^inf f(s) s**(-extra_power) ds at every node (backward sweep).

    The result decays with exponent tail_exponent + extra_power - 1.
    """
    h, p = _integrand(f, extra_power)
    W, idx = _cubic_weights(f.grid)
    pieces = np.sum(W * h[idx], axis=1)
    tail = powerlaw_tail(h[-1], f.grid.R_max, p)
    out = np.empty(f.grid.N)
    out[-1] = tail
    out[:-1] = np.cumsum(pieces[::-1])[::-1] + tail
    return SampledField(f.grid, out, p - 1.0, True)


def tail_integral_powerlaw(f: SampledField, r: float, extra_power: float = 0.0) -> float:
    """int_r^inf f(s) s**(-extra_power) ds for any r >= 1."""
    h, p = _integrand(f, extra_power)
    grid = f.grid
    R = grid.R_max
    if r >= R:
        # pure algebraic tail: f(R) (s/R)^(-l) s^(-extra)
        return float(h[-1] * R**p * r ** (1.0 - p) / (p - 1.0))
    if r < 1.0:
        raise ValueError("r must be >= 1")
    W, idx = _cubic_weights(grid)
    pieces = np.sum(W * h[idx], axis=1)
    nodes = grid.nodes
    i = int(np.searchsorted(nodes, r, side="right")) - 1
    i = min(i, grid.N - 2)
    total = float(np.sum(pieces[i + 1 :][::-1])) + powerlaw_tail(h[-1], R, p)
    if r == nodes[i]:
        return total + float(pieces[i])
    # partial interval [r, r_{i+1}] of the same cubic
    hi = nodes[i + 1] - nodes[i]
    sig = (nodes[idx[i]] - nodes[i]) / hi
    C = _basis_coeffs(sig[None, :])[0]
    sa = (r - nodes[i]) / hi
    k = np.arange(4)
    wk = (1.0 - sa ** (k + 1)) / (k + 1)
    return total + float(hi * np.sum((C @ wk) * h[idx[i]]))
