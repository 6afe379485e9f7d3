"""Constraint operators and their exact closed-form corrections.

Value constraints prescribe exact field values on a masked subregion and are
corrected by overwriting the masked points. Region constraints prescribe
exact integrals over disjoint masked regions and are corrected by a constant
shift on each region (an oblique projection). Both corrections are idempotent
and leave unconstrained points untouched.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from . import pde
from .grid import Domain, DomainMismatchError, GridFunction, RegionMask, region_weights, riemann_sum


@dataclass
class ValueConstraint:
    mask: RegionMask
    targets: GridFunction  # read only where the mask is set

    def __post_init__(self):
        if self.mask.domain != self.targets.domain:
            raise DomainMismatchError("mask and targets live on different domains")
        if not np.all(np.isfinite(self.targets.values[self.mask.flags])):
            raise ValueError("constraint targets must be finite on the masked set")


@dataclass
class RegionConstraint:
    regions: list[tuple[RegionMask, float]]

    def __post_init__(self):
        if not self.regions:
            raise ValueError("need at least one region")
        domain = self.regions[0][0].domain
        seen = np.zeros(domain.size, dtype=bool)
        for mask, _ in self.regions:
            if mask.domain != domain:
                raise DomainMismatchError("region masks live on different domains")
            if mask.count == 0:
                raise ValueError("region masks must be nonempty")
            if np.any(seen & mask.flags):
                raise ValueError("region masks must be pairwise disjoint")
            seen |= mask.flags

    @property
    def domain(self) -> Domain:
        return self.regions[0][0].domain


@dataclass
class IdentityConstraint:
    """No-op constraint for baselines and tests."""


Constraint = Union[ValueConstraint, RegionConstraint, IdentityConstraint]


def correct_value(u1: GridFunction, c: ValueConstraint) -> GridFunction:
    """Overwrite masked points with the targets; bit-exact elsewhere."""
    if u1.domain != c.mask.domain:
        raise DomainMismatchError("field and constraint live on different domains")
    return u1.with_values(np.where(c.mask.flags, c.targets.values, u1.values))


def correct_region(u1: GridFunction, c: RegionConstraint) -> GridFunction:
    """Shift each region by a constant so its quadrature hits the target."""
    if u1.domain != c.domain:
        raise DomainMismatchError("field and constraint live on different domains")
    out = u1.values.copy()
    for mask, target in c.regions:
        w = region_weights(mask)
        measure = float(np.sum(w[mask.flags]))
        if measure <= 0.0:
            raise ValueError("region has zero quadrature measure")
        integral = float(np.sum(out[mask.flags] * w[mask.flags]))
        out[mask.flags] += (target - integral) / measure
    return u1.with_values(out)


def correct(u1: GridFunction, c: Constraint) -> GridFunction:
    if isinstance(c, ValueConstraint):
        return correct_value(u1, c)
    if isinstance(c, RegionConstraint):
        return correct_region(u1, c)
    if isinstance(c, IdentityConstraint):
        return u1
    raise TypeError(f"unknown constraint type {type(c).__name__}")


def constraint_error(u: GridFunction, c: Constraint) -> float:
    """Mean squared constraint violation on the constrained region."""
    if isinstance(c, ValueConstraint):
        if c.mask.count == 0:
            return 0.0
        diff = u.values[c.mask.flags] - c.targets.values[c.mask.flags]
        return float(np.mean(diff**2))
    if isinstance(c, RegionConstraint):
        errs = [(riemann_sum(u, mask) - target) ** 2 for mask, target in c.regions]
        return float(np.mean(errs))
    if isinstance(c, IdentityConstraint):
        return 0.0
    raise TypeError(f"unknown constraint type {type(c).__name__}")


def _slice_mask(domain: Domain, axis: int, index: int) -> RegionMask:
    flags = np.zeros(domain.shape, dtype=bool)
    sl = [slice(None)] * domain.ndim
    sl[axis] = index
    flags[tuple(sl)] = True
    return RegionMask(domain, flags)


def make_ic(domain: Domain, g_values: np.ndarray) -> ValueConstraint:
    """Pin the first time slice (last axis, index 0) to the given values."""
    mask = _slice_mask(domain, domain.ndim - 1, 0)
    g_values = np.asarray(g_values, dtype=np.float64).ravel()
    if g_values.size != mask.count:
        raise ValueError(f"IC values length {g_values.size} != slice size {mask.count}")
    targets = np.zeros(domain.shape)
    sl = [slice(None)] * domain.ndim
    sl[-1] = 0
    targets[tuple(sl)] = g_values.reshape(domain.shape[:-1])
    return ValueConstraint(mask, GridFunction(domain, targets))


def make_bc(domain: Domain, f_values: np.ndarray) -> ValueConstraint:
    """Pin the first spatial slice (first axis, index 0) to the given values."""
    mask = _slice_mask(domain, 0, 0)
    f_values = np.asarray(f_values, dtype=np.float64).ravel()
    if f_values.size != mask.count:
        raise ValueError(f"BC values length {f_values.size} != slice size {mask.count}")
    targets = np.zeros(domain.shape)
    targets[0] = f_values.reshape(domain.shape[1:])
    return ValueConstraint(mask, GridFunction(domain, targets))


def merge_value_constraints(constraints: list[ValueConstraint]) -> ValueConstraint:
    """Union of value constraints; later constraints win on overlaps."""
    if not constraints:
        raise ValueError("need at least one constraint")
    domain = constraints[0].mask.domain
    flags = np.zeros(domain.size, dtype=bool)
    targets = np.zeros(domain.size)
    for c in constraints:
        if c.mask.domain != domain:
            raise DomainMismatchError("constraints live on different domains")
        targets[c.mask.flags] = c.targets.values[c.mask.flags]
        flags |= c.mask.flags
    return ValueConstraint(RegionMask(domain, flags), GridFunction(domain, targets))


def boundary_shell(domain: Domain) -> RegionMask:
    """Mask of all outermost grid points along every axis (Darcy-style BC shell)."""
    flags = np.zeros(domain.shape, dtype=bool)
    for axis in range(domain.ndim):
        sl = [slice(None)] * domain.ndim
        sl[axis] = 0
        flags[tuple(sl)] = True
        sl[axis] = -1
        flags[tuple(sl)] = True
    return RegionMask(domain, flags)


def make_conservation(domain: Domain, family: str, params) -> RegionConstraint:
    """One region per time slice, targeting the family's conservation value."""
    t_axis = domain.ndim - 1
    times = domain.axis_points(t_axis)
    regions = []
    for j, t in enumerate(times):
        if family == "stefan" and t <= 0.0:
            continue  # no conserved mass before the process starts
        target = pde.conservation_value(family, params, float(t))
        regions.append((_slice_mask(domain, t_axis, j), target))
    return RegionConstraint(regions)


def make_scatter(domain: Domain, indices: np.ndarray, values: np.ndarray) -> ValueConstraint:
    """Value constraint on scattered grid points given by multi-indices."""
    indices = np.asarray(indices, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64).ravel()
    if indices.ndim != 2 or indices.shape[1] != domain.ndim:
        raise ValueError("indices must be (n_points, ndim)")
    if indices.shape[0] != values.size:
        raise ValueError("one value per point required")
    flat = np.ravel_multi_index(tuple(indices.T), domain.shape)
    flags = np.zeros(domain.size, dtype=bool)
    flags[flat] = True
    targets = np.zeros(domain.size)
    targets[flat] = values
    return ValueConstraint(RegionMask(domain, flags), GridFunction(domain, targets))


def from_spec(spec: dict, domain: Domain) -> Constraint:
    """Build a constraint from a declarative spec dictionary.

    Supported types: ``identity``; ``ic``/``bc``/``ic_bc`` referencing an
    analytic family and its parameters; ``conservation`` likewise; and
    ``value_mask`` with explicit grid indices and values.
    """
    kind = spec.get("type")
    if kind not in ("identity", "value_mask", "ic", "bc", "ic_bc", "conservation"):
        raise ValueError(f"unknown constraint type {kind!r}")
    if kind == "identity":
        return IdentityConstraint()
    if kind == "value_mask":
        return make_scatter(domain, np.asarray(spec["points"]), np.asarray(spec["values"]))
    family = spec["family"]
    params = pde.make_params(family, spec.get("params", {}))
    if kind == "conservation":
        return make_conservation(domain, family, params)
    x = domain.axis_points(0)
    t = domain.axis_points(1)
    if family == "stefan":
        t = np.maximum(t, 1e-9)  # the closed form is defined for t > 0 only
    if kind == "ic":
        return make_ic(domain, pde.exact_solution(family, params, x, np.full_like(x, t[0])))
    if kind == "bc":
        return make_bc(domain, pde.exact_solution(family, params, np.zeros_like(t), t))
    ic = make_ic(domain, pde.exact_solution(family, params, x, np.full_like(x, t[0])))
    bc = make_bc(domain, pde.exact_solution(family, params, np.zeros_like(t), t))
    return merge_value_constraints([ic, bc])
