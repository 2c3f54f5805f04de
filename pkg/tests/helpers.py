"""Shared Monte Carlo helpers for the test modules."""

import numpy as np

from htem.rng import RngStream
from htem.stable import StableSpec, sample_pareto


def pareto_sums(alpha, n, m, seed=1):
    """``m`` normalised sums ``sigma^-1 n^(-1/alpha) sum_{i<=n} zeta_i``, generated in chunks."""
    spec = StableSpec(alpha)
    s = RngStream(seed, n)
    out = np.empty(m)
    step = max(1, 2_000_000 // n)
    for i in range(0, m, step):
        k = min(step, m - i)
        out[i:i + k] = sample_pareto(s, alpha, n * k).reshape(k, n).sum(axis=1)
    return out / (spec.sigma * n ** (1.0 / alpha))


def pareto_sum_cf_errors(alpha=1.5, ns=(100, 1000, 10_000), m=20_000, seed=1):
    """``(n, |CF(1) - e^-1|, standard error)`` per ``n``."""
    rows = []
    for n in ns:
        c = np.cos(pareto_sums(alpha, n, m, seed))
        rows.append((n, abs(c.mean() - np.exp(-1.0)), c.std() / np.sqrt(m)))
    return rows


def cf_deviation(samples, u, alpha):
    """``|empirical CF(u) - exp(-|u|^alpha)|`` and the tolerance ``3 / sqrt(n)``."""
    z = u * samples
    cf = complex(np.cos(z).mean(), np.sin(z).mean())
    return abs(cf - np.exp(-abs(u) ** alpha)), 3.0 / np.sqrt(samples.size)
