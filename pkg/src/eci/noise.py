"""Prior noise measure: Matérn Gaussian-process fields and white noise.

Matérn sampling builds the dense covariance over all grid points and draws
through a Cholesky factor, so it is restricted to small 1D/2D grids. The
factor is cached per (domain, spec) since repeated draws dominate training
and sampling. Distances are Euclidean on per-axis normalized coordinates.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

from .grid import Domain, GridFunction, coordinate_array

MATERN_MAX_POINTS = 4096
MATERN_MAX_DIMS = 2
_JITTER_CEILING = 1e-4


class CholeskyError(RuntimeError):
    """Covariance factorization failed even after jitter escalation."""


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "matern"  # "matern" or "white"
    kernel_length: float = 0.05
    kernel_variance: float = 1.0
    smoothness: str = "three_halves"  # "half", "three_halves", "five_halves"
    jitter: float = 1e-10

    def __post_init__(self):
        if self.kind not in ("matern", "white"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kernel_length <= 0 or self.kernel_variance <= 0:
            raise ValueError("kernel length and variance must be positive")
        if self.smoothness not in ("half", "three_halves", "five_halves"):
            raise ValueError(f"unknown smoothness {self.smoothness!r}")
        if not 1e-12 <= self.jitter <= 1e-4:
            raise ValueError("jitter must lie in [1e-12, 1e-4]")


def matern(r: np.ndarray, length: float, smoothness: str) -> np.ndarray:
    """Standard Matérn correlation at distance r for the supported smoothnesses."""
    s = r / length
    if smoothness == "half":
        return np.exp(-s)
    if smoothness == "three_halves":
        a = math.sqrt(3.0) * s
        return (1.0 + a) * np.exp(-a)
    a = math.sqrt(5.0) * s
    return (1.0 + a + a**2 / 3.0) * np.exp(-a)


def covariance_matrix(coords, spec: NoiseSpec) -> np.ndarray:
    """Dense Matérn covariance over the given points, jitter on the diagonal."""
    if spec.kind != "matern":
        raise ValueError("covariance matrix is only defined for the matern kind")
    pts = np.asarray(coords, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.size == 0:
        raise ValueError("need at least one point")
    diff = pts[:, None, :] - pts[None, :, :]
    r = np.sqrt(np.sum(diff**2, axis=-1))
    k = spec.kernel_variance * matern(r, spec.kernel_length, spec.smoothness)
    k[np.diag_indices_from(k)] += spec.jitter
    return k


def _normalized_coords(domain: Domain) -> np.ndarray:
    pts = coordinate_array(domain)
    for i, (lo, hi) in enumerate(domain.bounds):
        pts[:, i] = (pts[:, i] - lo) / (hi - lo)
    return pts


def _cholesky_with_escalation(k: np.ndarray, jitter: float) -> np.ndarray:
    extra = 0.0
    step = jitter
    while True:
        try:
            return np.linalg.cholesky(k + extra * np.eye(k.shape[0]))
        except np.linalg.LinAlgError:
            step *= 10.0
            extra = step
            if extra > _JITTER_CEILING:
                raise CholeskyError("covariance not factorizable within the jitter budget")


_factor_cache: dict[tuple, np.ndarray] = {}
_cache_lock = threading.Lock()


def _matern_factor(domain: Domain, spec: NoiseSpec) -> np.ndarray:
    key = (domain, spec)
    with _cache_lock:
        cached = _factor_cache.get(key)
    if cached is not None:
        return cached
    k = covariance_matrix(_normalized_coords(domain), spec)
    factor = _cholesky_with_escalation(k, spec.jitter)
    with _cache_lock:
        _factor_cache[key] = factor
    return factor


def sample_noise(domain: Domain, spec: NoiseSpec, rng: np.random.Generator) -> GridFunction:
    """One draw from the prior noise measure on the given grid."""
    if spec.kind == "white":
        vals = rng.normal(0.0, math.sqrt(spec.kernel_variance), size=domain.size)
        return GridFunction(domain, vals)
    if domain.ndim > MATERN_MAX_DIMS:
        raise ValueError("matern noise is limited to 1D/2D grids; use white noise")
    if domain.size > MATERN_MAX_POINTS:
        raise ValueError(
            f"grid has {domain.size} points; matern sampling is limited to {MATERN_MAX_POINTS}"
        )
    factor = _matern_factor(domain, spec)
    return GridFunction(domain, factor @ rng.standard_normal(domain.size))
