"""Empirical W1 distances and robust moment estimates for heavy-tailed samples."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DomainError, UnequalSampleCounts

# sqrt(pi/2): asymptotic standard-error inflation of a median over a mean
_MEDIAN_SE = math.sqrt(math.pi / 2.0)


class EmpiricalMeasure:
    """Equal-weight atoms at the rows of an ``(n, d)`` sample matrix.

    One-dimensional measures keep a sorted copy of their samples, so the
    order statistics are computed once.
    """

    __slots__ = ("samples", "sorted_flag")

    def __init__(self, samples, sort: bool = True):
        x = np.asarray(samples, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] == 0:
            raise DomainError("samples must be a non-empty (n, d) array")
        if not np.all(np.isfinite(x)):
            raise DomainError("samples contain non-finite entries")
        self.sorted_flag = bool(sort and x.shape[1] == 1)
        self.samples = np.sort(x, axis=0) if self.sorted_flag else x.copy()
        self.samples.setflags(write=False)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def __repr__(self) -> str:
        return f"EmpiricalMeasure(n={self.n}, dim={self.dim}, sorted={self.sorted_flag})"


@dataclass(frozen=True)
class W1Estimate:
    value: float
    std_error: float
    n_blocks: int = 1


def _as_measure(m) -> EmpiricalMeasure:
    return m if isinstance(m, EmpiricalMeasure) else EmpiricalMeasure(m)


def _sorted_column(m: EmpiricalMeasure) -> np.ndarray:
    return m.samples[:, 0] if m.sorted_flag else np.sort(m.samples[:, 0])


def w1_1d(mu, nu) -> W1Estimate:
    """Exact W1 between two equal-size one-dimensional empirical measures.

    ``std_error`` is the plain standard error of the matched absolute
    differences; it is a dispersion proxy, not a confidence statement.
    """
    mu, nu = _as_measure(mu), _as_measure(nu)
    if mu.dim != 1 or nu.dim != 1:
        raise DimensionMismatch("w1_1d needs one-dimensional measures")
    if mu.n != nu.n:
        raise UnequalSampleCounts(f"sample counts differ: {mu.n} vs {nu.n}")
    diff = np.abs(_sorted_column(mu) - _sorted_column(nu))
    se = float(diff.std() / math.sqrt(diff.size)) if diff.size > 1 else 0.0
    return W1Estimate(float(diff.mean()), se, 1)


def uniform_directions(n: int, dim: int, seed: int) -> np.ndarray:
    g = np.random.default_rng(seed).standard_normal((n, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def w1_sliced(mu, nu, n_projections: int = 64, seed: int = 0) -> W1Estimate:
    """Sliced W1: the mean of exact 1d W1 over uniformly random directions.

    A surrogate for trends in ``d > 1``; it lower-bounds W1.
    """
    mu, nu = _as_measure(mu), _as_measure(nu)
    if mu.dim != nu.dim:
        raise DimensionMismatch(f"dimensions differ: {mu.dim} vs {nu.dim}")
    if mu.n != nu.n:
        raise UnequalSampleCounts(f"sample counts differ: {mu.n} vs {nu.n}")
    if n_projections < 1:
        raise DomainError("n_projections must be >= 1")
    dirs = uniform_directions(n_projections, mu.dim, seed)
    a = np.sort(mu.samples @ dirs.T, axis=0)
    b = np.sort(nu.samples @ dirs.T, axis=0)
    per_dir = np.abs(a - b).mean(axis=0)
    se = float(per_dir.std(ddof=1) / math.sqrt(n_projections)) if n_projections > 1 else 0.0
    return W1Estimate(float(per_dir.mean()), se, n_projections)


def empirical_cf(mu, u) -> complex:
    """``(1/n) sum_j exp(i <u, x_j>)``."""
    mu = _as_measure(mu)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.size != mu.dim:
        raise DimensionMismatch(f"u has dimension {u.size}, measure {mu.dim}")
    phase = mu.samples @ u
    return complex(np.cos(phase).mean(), np.sin(phase).mean())


def median_of_means(values, n_blocks: int = 32, seed: int = 0) -> W1Estimate:
    """Median of block means after a seeded shuffle of the sorted values.

    Sorting first makes the estimate independent of the input order.  The
    reported error is ``sqrt(pi/2)`` times the standard error of the block
    means.
    """
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if n_blocks < 1 or v.size < n_blocks:
        raise DomainError(f"need at least n_blocks={n_blocks} values, got {v.size}")
    v = v[np.random.default_rng(seed).permutation(v.size)]
    means = np.array([b.mean() for b in np.array_split(v, n_blocks)])
    se = _MEDIAN_SE * means.std(ddof=1) / math.sqrt(n_blocks) if n_blocks > 1 else 0.0
    return W1Estimate(float(np.median(means)), float(se), n_blocks)


def mom_abs_moment(mu, power: float, n_blocks: int = 32, seed: int = 0) -> W1Estimate:
    """Median-of-means estimate of ``E|X|^power`` (Euclidean norm for ``d > 1``)."""
    mu = _as_measure(mu)
    if power <= 0:
        raise DomainError("power must be positive")
    norms = np.abs(mu.samples[:, 0]) if mu.dim == 1 else np.linalg.norm(mu.samples, axis=1)
    return median_of_means(norms**power, n_blocks, seed)
