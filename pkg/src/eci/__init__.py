"""Hard-constrained zero-shot sampling for functional flow-matching models
trained on analytic PDE solution families."""

__version__ = "0.1.0"

from .grid import Domain, GridFunction, RegionMask, grid_coordinates, mse, resample, riemann_sum

__all__ = [
    "Domain",
    "GridFunction",
    "RegionMask",
    "grid_coordinates",
    "mse",
    "resample",
    "riemann_sum",
    "__version__",
]
