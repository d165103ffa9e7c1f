"""Graded radial mesh on [1, R_max] and fields sampled on it."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .model import DerivedConstants, Parameters

__all__ = ["GridError", "RadialGrid", "SampledField", "build_grid", "LAYER_FRACTION", "MIN_LAYER_NODES"]

# fraction of the mapped coordinate reserved for [1, 1 + 10*layer_width]
LAYER_FRACTION = 1.0 / 64.0
MIN_LAYER_NODES = 16


class GridError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Nodes r_i = 1 + (R_max - 1) * expm1(k xi_i) / expm1(k), xi uniform on [0, 1].

    ``stretch`` is k. With k = ln(R_max) the mesh is exactly log-spaced; larger k
    clusters nodes at r = 1. Doubling the node count at fixed k halves every
    spacing, which the refinement studies rely on.
    """

    nodes: np.ndarray
    layer_width: float
    stretch: float
    n: int = 3
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def R_max(self) -> float:
        return float(self.nodes[-1])

    @property
    def N(self) -> int:
        return len(self.nodes)

    def nodes_in_layer(self) -> int:
        if self.layer_width <= 0:
            return 0
        return int(np.count_nonzero(self.nodes <= 1.0 + 10.0 * self.layer_width))

    def index_of(self, r: float) -> int:
        """Index of the node equal to ``r`` (to rounding), else ValueError."""
        i = int(np.searchsorted(self.nodes, r))
        for j in (i - 1, i):
            if 0 <= j < self.N and abs(self.nodes[j] - r) <= 1e-13 * max(1.0, r):
                return j
        raise ValueError(f"radius {r} is not a grid node")

    def pinned(self, radii) -> "RadialGrid":
        """Same node count with the nearest interior node moved onto each of ``radii``."""
        r = self.nodes.copy()
        for x in np.atleast_1d(np.asarray(radii, dtype=float)):
            if not 1.0 <= x <= self.R_max:
                raise GridError(f"radius {x} outside [1, {self.R_max}]")
            i = int(np.argmin(np.abs(r - x)))
            if i in (0, self.N - 1) and r[i] != x:
                raise GridError(f"radius {x} too close to an end node")
            r[i] = x
        if np.any(np.diff(r) <= 0):
            raise GridError("pinned radii are closer than the local spacing")
        return RadialGrid(nodes=r, layer_width=self.layer_width, stretch=self.stretch, n=self.n)

    def refined(self, factor: int = 2) -> "RadialGrid":
        """Same mapping with (N - 1) * factor + 1 nodes."""
        return _mapped_grid((self.N - 1) * factor + 1, self.R_max, self.stretch, self.layer_width, self.n)


@dataclass(frozen=True, eq=False)
class SampledField:
    """Values on a grid plus the algebraic tail f(s) ~ f(R_max) (s/R_max)^(-tail_exponent)."""

    grid: RadialGrid
    values: np.ndarray
    tail_exponent: float = 0.0
    tail_valid: bool = True

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.nodes.shape:
            raise ValueError(f"field has {values.shape} values for {self.grid.N} nodes")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise ValueError(f"non-finite field value at r = {self.grid.nodes[bad]}")
        object.__setattr__(self, "values", values)

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    def with_values(self, values, tail_exponent: float | None = None) -> "SampledField":
        te = self.tail_exponent if tail_exponent is None else tail_exponent
        return SampledField(self.grid, values, te, self.tail_valid)


def _mapped_grid(N: int, R_max: float, k: float, layer_width: float, n: int) -> RadialGrid:
    xi = np.linspace(0.0, 1.0, N)
    r = 1.0 + (R_max - 1.0) * np.expm1(k * xi) / math.expm1(k)
    r[0] = 1.0
    r[-1] = R_max
    if np.any(np.diff(r) <= 0):
        raise GridError("grid mapping is not strictly increasing; reduce the stretch or R_max")
    return RadialGrid(nodes=r, layer_width=layer_width, stretch=k, n=n)


def _layer_stretch(R_max: float, layer_width: float) -> float:
    """Stretch k placing LAYER_FRACTION of the mapped coordinate in [1, 1 + 10 lw]."""
    c = 10.0 * layer_width / (R_max - 1.0)
    if c >= LAYER_FRACTION:
        return 0.0

    def excess(k):
        return math.log1p(c * math.expm1(k)) - LAYER_FRACTION * k

    hi = 1.0
    while excess(hi) < 0:
        hi *= 2.0
        if hi > 700:
            raise GridError(f"layer width {layer_width} too thin to resolve")
    return brentq(excess, 1e-12, hi, xtol=1e-14)


def build_grid(
    p: Parameters,
    d: DerivedConstants,
    R_max: float = 200.0,
    N: int = 4096,
    epsilon_scale: float | None = None,
) -> RadialGrid:
    """Mesh resolving the kernel e-folding width mu*eps/(n*omega) at r = 1.

    ``epsilon_scale`` is |eps| (inflow) or |u_-|/v_+ (outflow guess); it
    defaults from the parameters, and 0 or None gives a plain log-spaced mesh.
    """
    if R_max < 10:
        raise GridError(f"R_max >= 10 required, got {R_max}")
    if N < 64:
        raise GridError(f"insufficient nodes: N >= 64 required, got {N}")
    if epsilon_scale is None:
        if p.u_minus > 0:
            epsilon_scale = d.epsilon_inflow
        else:
            epsilon_scale = abs(p.u_minus) / p.v_plus
    layer_width = d.mu * abs(epsilon_scale) / (p.n * d.omega) if epsilon_scale else 0.0

    k = math.log(R_max)
    if 0 < layer_width < R_max / 10.0:
        k = max(k, _layer_stretch(R_max, layer_width))
    grid = _mapped_grid(N, R_max, k, layer_width, p.n)

    if 0 < layer_width < (R_max - 1.0) / 10.0:
        count = grid.nodes_in_layer()
        if count < MIN_LAYER_NODES:
            frac = math.log1p(10.0 * layer_width * math.expm1(k) / (R_max - 1.0)) / k
            need = int(math.ceil(MIN_LAYER_NODES / frac)) + 1
            raise GridError(
                f"insufficient nodes: {count} nodes in the boundary layer [1, {1 + 10 * layer_width:.3g}], "
                f"N >= {need} required"
            )
    return grid
