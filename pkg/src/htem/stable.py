"""Symmetric alpha-stable and symmetric Pareto variates.

Conventions: a unit stable variable ``S`` has characteristic function
``exp(-|u|**alpha)``; its Levy measure is ``p_alpha / |z|**(1 + alpha)``.
The Pareto component has density ``alpha / (2 |z|**(alpha + 1))`` on
``|z| > 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numba as nb
import numpy as np
from scipy import integrate, interpolate, special

from .errors import DomainError, MomentUndefined
from .rng import RngStream


def compute_p_alpha(alpha: float) -> float:
    """Levy-measure constant ``alpha 2^(alpha-1) Gamma((alpha+1)/2) / (sqrt(pi) Gamma(1-alpha/2))``."""
    if not (0.0 < alpha < 2.0):
        raise DomainError(f"p_alpha needs 0 < alpha < 2, got {alpha}")
    log_p = (
        math.log(alpha)
        + (alpha - 1.0) * math.log(2.0)
        - 0.5 * math.log(math.pi)
        + special.gammaln(0.5 * alpha + 0.5)
        - special.gammaln(1.0 - 0.5 * alpha)
    )
    return math.exp(log_p)


@dataclass(frozen=True)
class StableSpec:
    """Stability index and dimension of the driving noise."""

    alpha: float
    dim: int = 1
    p_alpha: float = field(init=False)
    sigma: float = field(init=False)

    def __post_init__(self):
        if not (1.0 < self.alpha < 2.0):
            raise DomainError(f"alpha must lie strictly inside (1, 2), got {self.alpha}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise DomainError(f"dim must be a positive integer, got {self.dim}")
        p = compute_p_alpha(self.alpha)
        object.__setattr__(self, "p_alpha", p)
        object.__setattr__(self, "sigma", (self.alpha / (2.0 * p)) ** (1.0 / self.alpha))


# ---------------------------------------------------------------------------
# Transforms from uniforms


def cms_transform(alpha: float, u0: np.ndarray, u1: np.ndarray) -> np.ndarray:
    """Chambers-Mallows-Stuck map of two open-interval uniforms to unit stable draws."""
    a = np.pi * (u0 - 0.5)
    w = -np.log(u1)
    return (
        np.sin(alpha * a)
        / np.cos(a) ** (1.0 / alpha)
        * (np.cos((1.0 - alpha) * a) / w) ** ((1.0 - alpha) / alpha)
    )


def pareto_transform(alpha: float, u: np.ndarray, sign: np.ndarray) -> np.ndarray:
    """Inverse-CDF map ``|Z| = U^(-1/alpha)`` with an independent sign."""
    return sign * np.exp(np.log(u) * (-1.0 / alpha))


# ---------------------------------------------------------------------------
# Samplers


def sample_stable(stream: RngStream, alpha: float, scale: float = 1.0, size: int = 1) -> np.ndarray:
    """``size`` draws with characteristic function ``exp(-scale^alpha |u|^alpha)``."""
    if not scale > 0:
        raise DomainError("scale must be positive")
    u0, u1, _ = stream.blocks(size)
    return scale * cms_transform(alpha, u0, u1)


def sample_stable_1d(stream: RngStream, alpha: float, scale: float = 1.0) -> float:
    return float(sample_stable(stream, alpha, scale, 1)[0])


def sample_pareto(stream: RngStream, alpha: float, size: int = 1) -> np.ndarray:
    u0, _, sign = stream.blocks(size)
    return pareto_transform(alpha, u0, sign)


def sample_pareto_1d(stream: RngStream, alpha: float) -> float:
    return float(sample_pareto(stream, alpha, 1)[0])


def sample_stable_vector(stream: RngStream, spec: StableSpec, scale: float = 1.0) -> np.ndarray:
    """One ``spec.dim``-vector of i.i.d. stable components."""
    return sample_stable(stream, spec.alpha, scale, spec.dim)


# ---------------------------------------------------------------------------
# Distribution function and quantile tables
#
# P(|S| > x) = (2/pi) int_0^{pi/2} exp(-x^{alpha/(alpha-1)} V(theta)) dtheta,
# V(theta) = (cos theta / sin(alpha theta))^{alpha/(alpha-1)} cos((alpha-1) theta) / cos theta.


def _nolan_v(theta, alpha):
    c = np.cos(theta)
    return (c / np.sin(alpha * theta)) ** (alpha / (alpha - 1.0)) * np.cos((alpha - 1.0) * theta) / c


def _two_sided_tail_quad(x: float, alpha: float) -> float:
    """``P(|S| > x)`` by quadrature of the integral representation."""
    lx = alpha / (alpha - 1.0) * math.log(x)

    def tail(th):
        return math.exp(-math.exp(lx) * _nolan_v(th, alpha)) if th > 0 else 0.0

    # For large x the mass sits near theta = pi/2 where cos(theta) ~ x^-alpha.
    edge = math.pi / 2 - min(1.0, 0.5 * x ** (-alpha))
    pts = [edge] if 0 < edge < math.pi / 2 else None
    t = integrate.quad(tail, 0.0, math.pi / 2, epsabs=0.0, epsrel=1e-13, limit=400, points=pts)[0]
    return 2.0 / math.pi * t


def stable_body_series(x: float, alpha: float, terms: int = 60) -> float:
    """``P(|S| <= x)`` from the (everywhere convergent) power series; use for ``x <= 1``."""
    total = 0.0
    for k in range(terms):
        n = 2 * k + 1
        term = math.exp(special.gammaln(n / alpha) - special.gammaln(n + 1) + n * math.log(x))
        total += term if k % 2 == 0 else -term
        if term < 1e-18 * abs(total):
            break
    return 2.0 / (math.pi * alpha) * total


def stable_tail_asymptotic(x, alpha: float, terms: int = 12):
    """Large-``x`` series for ``P(|S| > x)``."""
    x = np.asarray(x, dtype=float)
    total = np.zeros_like(x)
    for k in range(1, terms + 1):
        coef = (-1) ** (k + 1) * math.exp(special.gammaln(alpha * k) - special.gammaln(k + 1))
        total += coef * math.sin(k * math.pi * alpha / 2) * x ** (-alpha * k)
    return 2.0 / math.pi * total


_ASYM_FROM = 40.0


def stable_two_sided_tail(x: float, alpha: float) -> float:
    """``P(|S| > x)`` for a unit symmetric stable ``S``."""
    if x <= 0:
        return 1.0
    if x <= 1.0:
        return 1.0 - stable_body_series(x, alpha)
    if x >= _ASYM_FROM:
        return float(stable_tail_asymptotic(x, alpha))
    return _two_sided_tail_quad(x, alpha)


def stable_cdf(x: float, alpha: float) -> float:
    if x == 0:
        return 0.5
    t = stable_two_sided_tail(abs(x), alpha)
    return 1.0 - 0.5 * t if x > 0 else 0.5 * t


_V_MAX = 45.0
_V_NODES = 1 << 14
_Y_MIN, _Y_MAX = -25.0, 40.0
_Y_NODES = 1 << 15


@dataclass(frozen=True)
class StableTables:
    """Uniform-grid lookup tables for the |S| quantile and tail functions.

    ``r`` tabulates ``sigma * x * exp(-v/alpha)`` against ``v = -log P(|S|>x)``
    (smooth, 0 at v=0 and tending to 1); ``v_of_y`` tabulates ``v`` against
    ``y = log x``.
    """

    alpha: float
    sigma: float
    r: np.ndarray
    v_of_y: np.ndarray

    def quantile_abs(self, u: np.ndarray) -> np.ndarray:
        """``x`` with ``P(|S| > x) = u``."""
        u = np.asarray(u, dtype=float)
        out = np.empty(u.shape)
        _abs_quantile_kernel(u.ravel(), self.r, self.alpha, self.sigma, out.ravel())
        return out

    def tail_abs(self, x: np.ndarray) -> np.ndarray:
        """``P(|S| > x)`` from the table."""
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape)
        _abs_tail_kernel(np.abs(x).ravel(), self.v_of_y, self.alpha, self.sigma, out.ravel())
        return out


@lru_cache(maxsize=16)
def stable_tables(alpha: float) -> StableTables:
    spec = StableSpec(alpha)
    xs = np.concatenate([np.geomspace(1e-7, 1.0, 500, endpoint=False), np.geomspace(1.0, _ASYM_FROM, 1200)])
    v = np.empty(xs.size)
    for i, x in enumerate(xs):
        if x <= 1.0:
            v[i] = -math.log1p(-stable_body_series(float(x), alpha))
        else:
            v[i] = -math.log(_two_sided_tail_quad(float(x), alpha))
    x_far = np.geomspace(_ASYM_FROM, 1e40, 1500)[1:]
    v_far = -np.log(stable_tail_asymptotic(x_far, alpha))
    xs = np.concatenate([[0.0], xs, x_far])
    v = np.concatenate([[0.0], v, v_far])
    # v(y) on a log-x grid
    y = np.log(xs[1:])
    v_of_y_spline = interpolate.CubicSpline(y, v[1:])
    y_grid = np.linspace(_Y_MIN, _Y_MAX, _Y_NODES)
    v_of_y = v_of_y_spline(y_grid)
    # r(v) on a uniform v grid
    r = spec.sigma * xs * np.exp(-v / alpha)
    keep = v <= _V_MAX + 1.0
    r_spline = interpolate.CubicSpline(v[keep], r[keep])
    r_grid = r_spline(np.linspace(0.0, _V_MAX, _V_NODES))
    r_grid[0] = 0.0
    return StableTables(alpha, spec.sigma, r_grid, v_of_y)


@nb.njit(inline="always", cache=True)
def _cubic_lookup(table, pos):
    n = table.shape[0]
    i = int(pos)
    if i < 1:
        i = 1
    elif i > n - 3:
        i = n - 3
    t = pos - i
    p0 = table[i - 1]
    p1 = table[i]
    p2 = table[i + 1]
    p3 = table[i + 2]
    return (
        -t * (t - 1.0) * (t - 2.0) / 6.0 * p0
        + (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0 * p1
        - (t + 1.0) * t * (t - 2.0) / 2.0 * p2
        + (t + 1.0) * t * (t - 1.0) / 6.0 * p3
    )


@nb.njit(inline="always", cache=True)
def abs_quantile_from_log(log_u, r, alpha, sigma):
    """``x`` with ``log P(|S| > x) = log_u``, using the ``r(v)`` table."""
    v = -log_u
    h = 45.0 / (r.shape[0] - 1)
    if v >= 45.0:
        rv = r[r.shape[0] - 1]
    else:
        rv = _cubic_lookup(r, v / h)
    return math.exp(v / alpha) * rv / sigma


@nb.njit(inline="always", cache=True)
def log_tail_from_abs(x, v_of_y, alpha, sigma):
    """``log P(|S| > x)`` using the ``v(y)`` table."""
    if x <= 0.0:
        return 0.0
    y = math.log(x)
    n = v_of_y.shape[0]
    h = (40.0 + 25.0) / (n - 1)
    if y <= -25.0:
        # v ~ v(y_min) * e^(y - y_min) as x -> 0
        return -v_of_y[0] * math.exp(y + 25.0)
    if y >= 40.0:
        return -(v_of_y[n - 1] + alpha * (y - 40.0))
    return -_cubic_lookup(v_of_y, (y + 25.0) / h)


@nb.njit(parallel=True, cache=True)
def _abs_quantile_kernel(u, r, alpha, sigma, out):
    for i in nb.prange(u.shape[0]):
        out[i] = abs_quantile_from_log(math.log(u[i]), r, alpha, sigma)


@nb.njit(parallel=True, cache=True)
def _abs_tail_kernel(x, v_of_y, alpha, sigma, out):
    for i in nb.prange(x.shape[0]):
        out[i] = math.exp(log_tail_from_abs(x[i], v_of_y, alpha, sigma))


# ---------------------------------------------------------------------------
# Moments


def stable_abs_moment(alpha: float, p: float) -> float:
    """``E|S|^p`` for a unit symmetric stable ``S``, ``0 <= p < alpha``."""
    if p >= alpha:
        raise MomentUndefined(f"E|S|^p is infinite for p={p} >= alpha={alpha}")
    if p < 0:
        raise DomainError("negative moments are not supported")
    if p == 0:
        return 1.0
    log_m = (
        p * math.log(2.0)
        + special.gammaln(0.5 * (1.0 + p))
        + special.gammaln(1.0 - p / alpha)
        - 0.5 * math.log(math.pi)
        - special.gammaln(1.0 - 0.5 * p)
    )
    return math.exp(log_m)
