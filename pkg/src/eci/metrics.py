"""Distributional evaluation: pointwise statistics, MMSE/SMSE, constraint
error aggregation, pointwise Gaussian log-likelihood, and Fréchet feature
distance with a pluggable extractor."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .constraints import Constraint, constraint_error
from .grid import DomainMismatchError, GridFunction, mse

STD_FLOOR = 1e-6
COV_REGULARIZER = 1e-6
_POOL_BINS = 8


@dataclass
class SampleSet:
    samples: list[GridFunction]
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.samples:
            raise ValueError("sample set is empty")
        domain = self.samples[0].domain
        for s in self.samples:
            if s.domain != domain:
                raise DomainMismatchError("samples live on different domains")

    @property
    def domain(self):
        return self.samples[0].domain

    def stacked(self) -> np.ndarray:
        return np.stack([s.values for s in self.samples])


@dataclass
class EvalReport:
    mmse: float
    smse: float
    ce: float
    fpd: float
    ll: float | None = None
    n_generated: int = 0
    n_reference: int = 0
    extractor: str = "pooled-patches"

    def to_dict(self) -> dict:
        return asdict(self)


def pointwise_stats(s: SampleSet) -> tuple[GridFunction, GridFunction]:
    """Per-grid-point sample mean and population (divide-by-n) standard deviation."""
    if len(s.samples) < 2:
        raise ValueError("need at least two samples for a standard deviation")
    stack = s.stacked()
    return (
        GridFunction(s.domain, stack.mean(axis=0)),
        GridFunction(s.domain, stack.std(axis=0)),
    )


def mmse_smse(generated: SampleSet, reference: SampleSet) -> tuple[float, float]:
    """MSEs between the two sets' pointwise means and standard deviations."""
    mean_g, std_g = pointwise_stats(generated)
    mean_r, std_r = pointwise_stats(reference)
    return mse(mean_g, mean_r), mse(std_g, std_r)


def log_likelihood(truth: GridFunction, mean: GridFunction, std: GridFunction) -> float:
    """Mean pointwise Gaussian log-density of the truth under (mean, std).

    The standard deviation is floored at 1e-6 so degenerate (zero-variance)
    generations stay finite. The residual enters squared, i.e. the standard
    Gaussian log-density.
    """
    sigma = np.maximum(std.values, STD_FLOOR)
    resid = truth.values - mean.values
    ll = -(resid**2) / (2.0 * sigma**2) - np.log(sigma) - 0.5 * math.log(2.0 * math.pi)
    return float(np.mean(ll))


def _sym_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(features_a: np.ndarray, features_b: np.ndarray) -> float:
    """Fréchet distance between Gaussian fits of two feature matrices.

    The cross term uses the symmetric product S1^(1/2) S2 S1^(1/2); tiny
    negative eigenvalues of that product are clamped to zero. Both covariances
    are regularized with 1e-6 I.
    """
    a = np.asarray(features_a, dtype=np.float64)
    b = np.asarray(features_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError("feature matrices must be 2D with equal feature dimension")
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ValueError("need at least two feature rows per set")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    dim = a.shape[1]
    cov_a = np.cov(a, rowvar=False).reshape(dim, dim) + COV_REGULARIZER * np.eye(dim)
    cov_b = np.cov(b, rowvar=False).reshape(dim, dim) + COV_REGULARIZER * np.eye(dim)
    sqrt_a = _sym_sqrt(cov_a)
    product = sqrt_a @ cov_b @ sqrt_a
    eigs = np.linalg.eigvalsh(product)
    if np.any(eigs < -1e-8):
        raise ValueError("cross-covariance product is not PSD within tolerance")
    cross = 2.0 * np.sum(np.sqrt(np.clip(eigs, 0.0, None)))
    return float(np.sum((mu_a - mu_b) ** 2) + np.trace(cov_a) + np.trace(cov_b) - cross)


def _pool_axis(arr: np.ndarray, axis: int, bins: int) -> np.ndarray:
    """Mean-pool one axis into at most ``bins`` roughly equal blocks."""
    n = arr.shape[axis]
    bins = min(bins, n)
    edges = np.linspace(0, n, bins + 1).astype(int)
    chunks = [arr.take(range(edges[i], edges[i + 1]), axis=axis).mean(axis=axis, keepdims=True)
              for i in range(bins)]
    return np.concatenate(chunks, axis=axis)


def _sample_features(f: GridFunction) -> np.ndarray:
    grid = f.grid
    if grid.ndim == 3:  # pool per frame along the last (time) axis, then average
        pooled = np.stack(
            [_pool_frame(grid[..., j]) for j in range(grid.shape[-1])]
        ).mean(axis=0)
    else:
        pooled = _pool_frame(grid)
    stats = np.array([grid.mean(), grid.std(), grid.min(), grid.max()])
    return np.concatenate([pooled.ravel(), stats])


def _pool_frame(frame: np.ndarray) -> np.ndarray:
    out = frame
    for axis in range(frame.ndim):
        out = _pool_axis(out, axis, _POOL_BINS)
    return out


def default_features(s: SampleSet) -> np.ndarray:
    """Mean-pooled patch features plus global summary stats, one row per sample."""
    return np.stack([_sample_features(f) for f in s.samples])


def evaluate(
    generated: SampleSet,
    reference: SampleSet,
    c: Constraint,
    truth: GridFunction | None = None,
) -> EvalReport:
    """Full metric suite; log-likelihood only in regression mode (truth given)."""
    if generated.domain != reference.domain:
        raise DomainMismatchError("generated and reference sets live on different domains")
    mmse, smse = mmse_smse(generated, reference)
    ce = float(np.mean([constraint_error(u, c) for u in generated.samples]))
    fpd = frechet_distance(default_features(generated), default_features(reference))
    ll = None
    if truth is not None:
        mean_g, std_g = pointwise_stats(generated)
        ll = log_likelihood(truth, mean_g, std_g)
    return EvalReport(
        mmse=mmse,
        smse=smse,
        ce=ce,
        fpd=fpd,
        ll=ll,
        n_generated=len(generated.samples),
        n_reference=len(reference.samples),
    )
