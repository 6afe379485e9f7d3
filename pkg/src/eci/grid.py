"""Uniform-grid discretized functions, quadrature, resampling, and arithmetic.

Fields live on tensor-product grids over bounded rectangular domains. Values
are stored as a flat float64 array in row-major order with the last axis
fastest. By convention the axis order is (space..., time) whenever a time
axis exists.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator


class DomainMismatchError(ValueError):
    """Two grid objects that must share a Domain do not."""


class BoundsMismatchError(ValueError):
    """Target grid bounds differ from the source grid bounds."""


@dataclass(frozen=True)
class Domain:
    """Bounded rectangular domain with a uniform grid on each axis.

    ``axes`` is one ``(lower, upper, resolution)`` triple per axis. Grids
    include both endpoints, so ``resolution`` counts grid points, not cells.
    """

    axes: tuple[tuple[float, float, int], ...]

    def __post_init__(self):
        axes = tuple((float(lo), float(hi), int(res)) for lo, hi, res in self.axes)
        object.__setattr__(self, "axes", axes)
        if not axes:
            raise ValueError("Domain needs at least one axis")
        for lo, hi, res in axes:
            if not hi > lo:
                raise ValueError(f"axis upper bound {hi} must exceed lower bound {lo}")
            if res < 2:
                raise ValueError(f"axis resolution {res} must be >= 2")

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(res for _, _, res in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axis_points(self, i: int) -> np.ndarray:
        lo, hi, res = self.axes[i]
        return np.linspace(lo, hi, res)

    def spacing(self, i: int) -> float:
        lo, hi, res = self.axes[i]
        return (hi - lo) / (res - 1)

    @property
    def bounds(self) -> tuple[tuple[float, float], ...]:
        return tuple((lo, hi) for lo, hi, _ in self.axes)

    def with_shape(self, shape: tuple[int, ...]) -> "Domain":
        """Same bounds, different resolutions."""
        if len(shape) != self.ndim:
            raise ValueError("shape rank does not match domain rank")
        return Domain(tuple((lo, hi, r) for (lo, hi, _), r in zip(self.axes, shape)))


def coordinate_array(domain: Domain) -> np.ndarray:
    """Grid point coordinates as an ``(n_points, ndim)`` array, row-major."""
    grids = np.meshgrid(*[domain.axis_points(i) for i in range(domain.ndim)], indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def grid_coordinates(domain: Domain) -> list[tuple[float, ...]]:
    """All grid points as coordinate tuples, row-major (last axis fastest)."""
    return [tuple(float(v) for v in row) for row in coordinate_array(domain)]


@dataclass
class GridFunction:
    """Real scalar field sampled on a uniform grid.

    ``values`` is flat, row-major, float64. Non-finite values are rejected
    unless the function is flagged as diagnostic output.
    """

    domain: Domain
    values: np.ndarray
    diagnostic: bool = field(default=False, compare=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.values.size != self.domain.size:
            raise ValueError(
                f"values length {self.values.size} does not match grid size {self.domain.size}"
            )
        if not self.diagnostic and not np.all(np.isfinite(self.values)):
            raise ValueError("GridFunction values must be finite")

    @property
    def grid(self) -> np.ndarray:
        """Values reshaped to the grid shape (a view)."""
        return self.values.reshape(self.domain.shape)

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.domain, np.asarray(values, dtype=np.float64).ravel())

    def copy(self) -> "GridFunction":
        return GridFunction(self.domain, self.values.copy())

    def _check_same_domain(self, other: "GridFunction"):
        if self.domain != other.domain:
            raise DomainMismatchError("GridFunctions live on different domains")

    def __add__(self, other: "GridFunction") -> "GridFunction":
        self._check_same_domain(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        self._check_same_domain(other)
        return self.with_values(self.values - other.values)

    def __mul__(self, scalar: float) -> "GridFunction":
        return self.with_values(self.values * float(scalar))

    __rmul__ = __mul__

    @classmethod
    def from_callable(cls, domain: Domain, fn) -> "GridFunction":
        """Sample ``fn(*coords)`` on the grid (vectorized over coordinate arrays)."""
        coords = coordinate_array(domain)
        vals = fn(*[coords[:, i] for i in range(domain.ndim)])
        return cls(domain, np.broadcast_to(np.asarray(vals, dtype=np.float64), (domain.size,)).copy())

    @classmethod
    def constant(cls, domain: Domain, value: float) -> "GridFunction":
        return cls(domain, np.full(domain.size, float(value)))


@dataclass
class RegionMask:
    """Boolean flags over a grid, same layout as GridFunction values."""

    domain: Domain
    flags: np.ndarray

    def __post_init__(self):
        self.flags = np.asarray(self.flags, dtype=bool).ravel()
        if self.flags.size != self.domain.size:
            raise ValueError("mask length does not match grid size")

    @property
    def grid(self) -> np.ndarray:
        return self.flags.reshape(self.domain.shape)

    @property
    def count(self) -> int:
        return int(self.flags.sum())

    @classmethod
    def full(cls, domain: Domain) -> "RegionMask":
        return cls(domain, np.ones(domain.size, dtype=bool))

    @classmethod
    def empty(cls, domain: Domain) -> "RegionMask":
        return cls(domain, np.zeros(domain.size, dtype=bool))


def trapezoid_weights(domain: Domain) -> np.ndarray:
    """Tensor-product trapezoid quadrature weights, flat layout.

    Half weight at the endpoints of every axis; exact for affine integrands.
    """
    w = np.ones(domain.shape)
    for i in range(domain.ndim):
        h = domain.spacing(i)
        wi = np.full(domain.shape[i], h)
        wi[0] = wi[-1] = h / 2
        shape = [1] * domain.ndim
        shape[i] = domain.shape[i]
        w = w * wi.reshape(shape)
    return w.ravel()


def region_weights(mask: RegionMask) -> np.ndarray:
    """Quadrature weights adapted to a masked region, flat layout.

    Per axis, weights are trapezoid weights over the index range spanned by
    the mask along that axis; an axis where the region is a single slice
    contributes a unit factor. For a time-slice mask this yields the spatial
    integral over the slice rather than a space-time slab measure.
    """
    if mask.count == 0:
        return np.zeros(mask.domain.size)
    domain = mask.domain
    grid = mask.grid
    w = np.ones(domain.shape)
    for i in range(domain.ndim):
        present = np.any(grid, axis=tuple(j for j in range(domain.ndim) if j != i))
        idx = np.nonzero(present)[0]
        lo_i, hi_i = idx[0], idx[-1]
        wi = np.zeros(domain.shape[i])
        if lo_i == hi_i:
            wi[lo_i] = 1.0
        else:
            h = domain.spacing(i)
            wi[lo_i : hi_i + 1] = h
            wi[lo_i] = wi[hi_i] = h / 2
        shape = [1] * domain.ndim
        shape[i] = domain.shape[i]
        w = w * wi.reshape(shape)
    return w.ravel()


def riemann_sum(f: GridFunction, mask: RegionMask) -> float:
    """Weighted sum of ``f`` over the masked points (trapezoid quadrature)."""
    if f.domain != mask.domain:
        raise DomainMismatchError("function and mask live on different domains")
    w = region_weights(mask)
    return float(np.sum(f.values[mask.flags] * w[mask.flags]))


def resample(f: GridFunction, target: Domain) -> GridFunction:
    """Multilinear interpolation of ``f`` onto ``target`` (same bounds)."""
    if target.ndim != f.domain.ndim or target.bounds != f.domain.bounds:
        raise BoundsMismatchError("target domain bounds differ from source bounds")
    if target == f.domain:
        return f.copy()
    interp = RegularGridInterpolator(
        tuple(f.domain.axis_points(i) for i in range(f.domain.ndim)),
        f.grid,
        method="linear",
        bounds_error=False,
        fill_value=None,
    )
    return GridFunction(target, interp(coordinate_array(target)))


def mse(a: GridFunction, b: GridFunction) -> float:
    """Mean squared pointwise difference."""
    if a.domain != b.domain:
        raise DomainMismatchError("GridFunctions live on different domains")
    return float(np.mean((a.values - b.values) ** 2))
