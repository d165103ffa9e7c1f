"""Radially symmetric stationary solutions of the compressible Navier-Stokes equations
for a heat-conductive ideal gas outside the unit sphere in n >= 3 dimensions."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    DerivedConstants,
    FlowRegime,
    ParameterError,
    Parameters,
    build_parameters,
    classify_regime,
    derive_constants,
    smallness_check,
)
from .grid import RadialGrid, SampledField, build_grid  # noqa: E402
from .fixedpoint import (  # noqa: E402
    SolverControl,
    StationarySolution,
    PhysicalProfile,
    solve_stationary,
    reconstruct_physical,
    impermeable_solution,
)
from .oracle import solve_bvp, compare_solutions  # noqa: E402

__all__ = [
    "__version__",
    "DerivedConstants",
    "FlowRegime",
    "ParameterError",
    "Parameters",
    "build_parameters",
    "classify_regime",
    "derive_constants",
    "smallness_check",
    "RadialGrid",
    "SampledField",
    "build_grid",
    "SolverControl",
    "StationarySolution",
    "PhysicalProfile",
    "solve_stationary",
    "reconstruct_physical",
    "impermeable_solution",
    "solve_bvp",
    "compare_solutions",
]
