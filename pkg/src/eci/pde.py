"""Analytic PDE solution families and dataset generation.

Four closed-form families are supported: the 1D Stokes problem, the periodic
1D heat equation, the porous medium equation (PME), and the Stefan problem.
Each provides an exact solution on a canonical (x, t) domain, a uniform prior
over its parameters, and (except Stokes) a global conservation law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .grid import Domain, GridFunction


@dataclass(frozen=True)
class StokesParams:
    amplitude: float = 2.0
    omega: float = 6.0
    k: float = 5.0

    def __post_init__(self):
        if self.amplitude <= 0 or self.omega <= 0 or self.k <= 0:
            raise ValueError("Stokes parameters must be positive")

    @property
    def viscosity(self) -> float:
        return self.omega / (2.0 * self.k**2)


@dataclass(frozen=True)
class HeatParams:
    alpha: float = 1.0
    phi: float = 0.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("diffusion coefficient must be positive")
        if not 0.0 <= self.phi <= math.pi:
            raise ValueError("phase must lie in [0, pi]")


@dataclass(frozen=True)
class PmeParams:
    m: float = 1.0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("PME degree must be >= 1")


@dataclass(frozen=True)
class StefanParams:
    u_star: float = 0.6
    alpha_star: float | None = None  # solved and cached on construction

    def __post_init__(self):
        if not 0.0 < self.u_star < 1.0:
            raise ValueError("shock value must lie in (0, 1)")
        if self.alpha_star is None:
            object.__setattr__(self, "alpha_star", solve_stefan_alpha(self.u_star))


FAMILIES = ("stokes", "heat", "pme", "stefan")

# Canonical (x, t) bounds per family.
FAMILY_BOUNDS = {
    "stokes": ((0.0, 1.0), (0.0, 1.0)),
    "heat": ((0.0, 2.0 * math.pi), (0.0, 1.0)),
    "pme": ((0.0, 1.0), (0.0, 1.0)),
    "stefan": ((0.0, 1.0), (0.0, 0.1)),
}


@dataclass(frozen=True)
class ParamRange:
    """Uniform prior intervals for a family's free parameters."""

    family: str
    intervals: tuple[tuple[str, float, float], ...]

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        for name, lo, hi in self.intervals:
            if hi < lo:
                raise ValueError(f"empty interval for parameter {name!r}")

    def replace(self, **fixed: tuple[float, float]) -> "ParamRange":
        intervals = tuple(
            (name, *fixed[name]) if name in fixed else (name, lo, hi)
            for name, lo, hi in self.intervals
        )
        return ParamRange(self.family, intervals)


def default_param_range(family: str) -> ParamRange:
    """Pre-training priors: the amplitude of the Stokes problem is fixed at 2."""
    table = {
        "stokes": (("omega", 2.0, 8.0), ("k", 2.0, 20.0), ("amplitude", 2.0, 2.0)),
        "heat": (("alpha", 1.0, 5.0), ("phi", 0.0, math.pi)),
        "pme": (("m", 1.0, 6.0)),
        "stefan": (("u_star", 0.55, 0.7),),
    }
    intervals = table[family]
    if isinstance(intervals[0], str):  # single-parameter family
        intervals = (intervals,)
    return ParamRange(family, tuple(intervals))


def stokes_exact(p: StokesParams, x, t):
    """u = A exp(-k x) cos(k x - omega t)."""
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    return p.amplitude * np.exp(-p.k * x) * np.cos(p.k * x - p.omega * t)


def heat_exact(p: HeatParams, x, t):
    """u = exp(-alpha t) sin(x + phi)."""
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    return np.exp(-p.alpha * t) * np.sin(x + p.phi)


def pme_exact(p: PmeParams, x, t):
    """u = (m relu(t - x))^(1/m); zero ahead of the moving front x = t."""
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    return (p.m * np.maximum(t - x, 0.0)) ** (1.0 / p.m)


def stefan_exact(p: StefanParams, x, t):
    """Sharp-interface solution; zero where the smooth branch drops below u*."""
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if np.any(t <= 0):
        raise ValueError("Stefan solution requires t > 0")
    branch = 1.0 - (1.0 - p.u_star) * erf(x / (2.0 * np.sqrt(t))) / erf(p.alpha_star)
    return np.where(branch >= p.u_star, branch, 0.0)


def _stefan_alpha_residual(alpha: float, u_star: float) -> float:
    return u_star * math.erf(alpha) * alpha * math.exp(alpha**2) - (1.0 - u_star) / math.sqrt(math.pi)


def solve_stefan_alpha(u_star: float) -> float:
    """Bisection for the shock coefficient on [1e-6, 3]; residual < 1e-10."""
    if not 0.5 < u_star < 0.9:
        raise ValueError("shock value outside the supported bracket (0.5, 0.9)")
    lo, hi = 1e-6, 3.0
    flo = _stefan_alpha_residual(lo, u_star)
    fhi = _stefan_alpha_residual(hi, u_star)
    if flo * fhi > 0:
        raise ValueError("no sign change in the bisection bracket")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fmid = _stefan_alpha_residual(mid, u_star)
        if flo * fmid <= 0:
            hi = mid
        else:
            lo, flo = mid, fmid
    return 0.5 * (lo + hi)


_PARAM_CLASSES = {
    "stokes": StokesParams,
    "heat": HeatParams,
    "pme": PmeParams,
    "stefan": StefanParams,
}


def make_params(family: str, values: dict):
    """Build a family's parameter object from a name -> value mapping."""
    return _PARAM_CLASSES[family](**values)


def sample_params(prange: ParamRange, rng: np.random.Generator):
    """Independent uniform draws; Stefan additionally solves its shock coefficient."""
    values = {name: float(rng.uniform(lo, hi)) if hi > lo else lo for name, lo, hi in prange.intervals}
    return make_params(prange.family, values)


_EXACT = {
    "stokes": stokes_exact,
    "heat": heat_exact,
    "pme": pme_exact,
    "stefan": stefan_exact,
}


def exact_solution(family: str, params, x, t):
    return _EXACT[family](params, x, t)


def solution_field(family: str, params, domain: Domain) -> GridFunction:
    """Exact solution sampled on an (x, t) grid.

    The Stefan time axis may start at 0; its t=0 row is filled with the
    initial/boundary data (1 at x=0, 0 elsewhere), the limit of the closed form.
    """
    if domain.ndim != 2:
        raise ValueError("solution fields are defined on 2D (x, t) grids")
    x = domain.axis_points(0)
    t = domain.axis_points(1)
    xx, tt = np.meshgrid(x, t, indexing="ij")
    if family == "stefan" and t[0] <= 0.0:
        vals = np.empty_like(xx)
        vals[:, 1:] = stefan_exact(params, xx[:, 1:], tt[:, 1:])
        vals[:, 0] = np.where(x == 0.0, 1.0, 0.0)
    else:
        vals = exact_solution(family, params, xx, tt)
    return GridFunction(domain, vals)


def check_family_domain(family: str, domain: Domain) -> None:
    if domain.ndim != 2:
        raise ValueError(f"{family} expects a 2D (x, t) domain")
    for (lo, hi), (blo, bhi) in zip(domain.bounds, FAMILY_BOUNDS[family]):
        if not (math.isclose(lo, blo, abs_tol=1e-12) and math.isclose(hi, bhi, rel_tol=1e-12)):
            raise ValueError(f"domain bounds {domain.bounds} do not match {family} bounds")


def generate_dataset(
    family: str,
    n: int,
    domain: Domain,
    prange: ParamRange,
    rng: np.random.Generator,
    return_params: bool = False,
):
    """n exact-solution fields on the grid, reproducible given the generator state.

    Parameters are drawn from per-sample derived RNG streams so the result is
    independent of any parallel evaluation order.
    """
    check_family_domain(family, domain)
    if prange.family != family:
        raise ValueError("parameter range is for a different family")
    streams = rng.spawn(n) if n else []
    params = [sample_params(prange, s) for s in streams]
    fields = [solution_field(family, p, domain) for p in params]
    if return_params:
        return fields, params
    return fields


def conservation_value(family: str, params, t: float) -> float:
    """Analytic value of the family's spatial conservation law at time t."""
    if family == "heat":
        return 0.0
    if family == "pme":
        m = params.m
        return (m * t) ** (1.0 + 1.0 / m) / (m + 1.0)
    if family == "stefan":
        return 2.0 * (1.0 - params.u_star) / math.erf(params.alpha_star) * math.sqrt(t / math.pi)
    raise ValueError(f"family {family!r} has no conservation law")


def _diffusivity(family: str, params, u: np.ndarray) -> np.ndarray:
    if family == "heat":
        return np.full_like(u, params.alpha)
    if family == "stokes":
        return np.full_like(u, params.viscosity)
    if family == "pme":
        return u**params.m
    if family == "stefan":
        return (u >= params.u_star).astype(np.float64)
    raise ValueError(f"unknown family {family!r}")


def residual_check(f: GridFunction, family: str, params) -> float:
    """Mean squared finite-difference residual of u_t - d/dx(k(u) u_x), interior only.

    Second-order central stencils; the nonlinear flux uses face diffusivities
    averaged from the adjacent nodes.
    """
    if any(res < 3 for res in f.domain.shape):
        raise ValueError("residual check needs resolution >= 3 on every axis")
    u = f.grid
    hx = f.domain.spacing(0)
    ht = f.domain.spacing(1)
    u_t = (u[1:-1, 2:] - u[1:-1, :-2]) / (2.0 * ht)
    k = _diffusivity(family, params, u)
    k_face_hi = 0.5 * (k[1:-1, :] + k[2:, :])
    k_face_lo = 0.5 * (k[1:-1, :] + k[:-2, :])
    flux_div = (k_face_hi * (u[2:, :] - u[1:-1, :]) - k_face_lo * (u[1:-1, :] - u[:-2, :])) / hx**2
    resid = u_t - flux_div[:, 1:-1]
    return float(np.mean(resid**2))
