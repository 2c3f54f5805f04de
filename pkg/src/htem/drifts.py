"""Drift functions with certified regularity and dissipativity constants."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .errors import ConfigInvalid, DomainError

# Componentwise drift families understood by the compiled kernels.
KIND_OU, KIND_SINE, KIND_TANH, KIND_CUSTOM = 0, 1, 2, 3
_KIND_NAMES = {"ou": KIND_OU, "sine": KIND_SINE, "tanh": KIND_TANH, "custom": KIND_CUSTOM}

# max |tanh''| = 4 / (3 sqrt 3) at tanh^2 = 1/3, max |tanh'''| = 2 at 0.
TANH_D2_MAX = 4.0 / (3.0 * math.sqrt(3.0))
TANH_D3_MAX = 2.0


@dataclass(frozen=True)
class DriftModel:
    """A drift ``b: R^d -> R^d`` together with the constants the bounds need.

    ``func`` maps an ``(n, d)`` array of points to the ``(n, d)`` array of
    drift values.  ``kind``/``param`` identify the built-in componentwise
    families so that compiled kernels can evaluate them directly.
    """

    func: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    theta1: float
    theta2: float
    theta3: float
    theta4: float
    K: float
    b0_norm: float
    dim: int
    kind: str = "custom"
    param: float = 0.0

    def __post_init__(self):
        if min(self.theta1, self.theta2, self.theta3, self.K) < 0 or self.theta4 <= 0:
            raise DomainError("need theta1..3 >= 0, K >= 0 and theta4 > 0")
        if self.dim < 1:
            raise DomainError("dim must be positive")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return self.func(x[None, :])[0]
        return self.func(x)

    @property
    def L0(self) -> float:
        """Radius beyond which the drift contracts: ``sqrt(2K/theta4)``."""
        return math.sqrt(2.0 * self.K / self.theta4)

    @property
    def kind_code(self) -> int:
        return _KIND_NAMES[self.kind]

    @property
    def is_linear(self) -> bool:
        return self.kind == "ou"

    def stepsize_gate(self) -> float:
        """Largest stepsize for which the convergence bounds hold."""
        return min(1.0, self.theta4 / (8.0 * self.theta1**2), 1.0 / self.theta4)

    def to_config(self) -> dict[str, Any]:
        cfg: dict[str, Any] = {"kind": self.kind, "dim": self.dim}
        if self.kind == "ou":
            cfg["theta"] = self.param
        elif self.kind == "sine":
            cfg["a"] = self.param
        return cfg

    def constants(self) -> dict[str, float]:
        return {
            "theta1": self.theta1,
            "theta2": self.theta2,
            "theta3": self.theta3,
            "theta4": self.theta4,
            "K": self.K,
            "b0_norm": self.b0_norm,
            "L0": self.L0,
        }


def drift_ou(theta: float = 1.0, dim: int = 1) -> DriftModel:
    """Linear drift ``b(x) = -theta x``."""
    if not theta > 0:
        raise DomainError(f"theta must be positive, got {theta}")
    return DriftModel(
        func=lambda x: -theta * x,
        theta1=theta, theta2=0.0, theta3=0.0, theta4=theta, K=0.0,
        b0_norm=0.0, dim=dim, kind="ou", param=float(theta),
    )


def drift_sine_perturbed(a: float, dim: int = 1) -> DriftModel:
    """``b_i(x) = -x_i + a sin(x_i)`` for ``0 < a < 1``; globally dissipative."""
    if not 0.0 < a < 1.0:
        raise DomainError(f"a must lie in (0, 1), got {a}")
    return DriftModel(
        func=lambda x: -x + a * np.sin(x),
        theta1=1.0 + a, theta2=a, theta3=a, theta4=1.0 - a, K=0.0,
        b0_norm=0.0, dim=dim, kind="sine", param=float(a),
    )


def drift_tanh_distant(dim: int = 1) -> DriftModel:
    """``b_i(x) = -x_i + 2 tanh(x_i)``: expanding near 0, contracting far out.

    Per coordinate ``-d^2 + 2 (tanh x - tanh y) d <= -d^2/2 + 8`` with
    ``d = x - y``, hence ``K = 8 dim`` for ``theta4 = 1/2``.
    """
    return DriftModel(
        func=lambda x: -x + 2.0 * np.tanh(x),
        theta1=1.0, theta2=2.0 * TANH_D2_MAX, theta3=2.0 * TANH_D3_MAX,
        theta4=0.5, K=8.0 * dim, b0_norm=0.0, dim=dim, kind="tanh",
    )


def custom_drift(func, *, theta1, theta2, theta3, theta4, K, dim, samples=10_000,
                 radius=50.0, seed=0) -> DriftModel:
    """Wrap a user drift; the declared constants are certified before use."""
    b0 = float(np.linalg.norm(func(np.zeros((1, dim)))[0]))
    model = DriftModel(func=func, theta1=theta1, theta2=theta2, theta3=theta3,
                       theta4=theta4, K=K, b0_norm=b0, dim=dim)
    report = certify(model, samples=samples, radius=radius, seed=seed)
    if not report.passed:
        raise ConfigInvalid(f"declared drift constants fail certification: {report.summary()}")
    return model


def drift_from_config(cfg: dict[str, Any]) -> DriftModel:
    """Build a shipped drift from ``{"kind": ..., "theta"/"a": ..., "dim": ...}``."""
    kind = cfg.get("kind")
    dim = int(cfg.get("dim", 1))
    if kind == "ou":
        return drift_ou(float(cfg.get("theta", 1.0)), dim)
    if kind == "sine":
        if "a" not in cfg:
            raise ConfigInvalid("sine drift needs parameter 'a'")
        return drift_sine_perturbed(float(cfg["a"]), dim)
    if kind == "tanh":
        return drift_tanh_distant(dim)
    raise ConfigInvalid(f"unknown drift kind {kind!r}")


# ---------------------------------------------------------------------------
# Certification


@dataclass
class CertificationReport:
    passed: bool
    samples: int
    radius: float
    max_jacobian_norm: float
    jacobian_witness: np.ndarray
    min_dissipativity_slack: float
    dissipativity_witness: tuple[np.ndarray, np.ndarray]
    tolerance: float

    def summary(self) -> str:
        return (
            f"passed={self.passed} max|Db|={self.max_jacobian_norm:.6g} "
            f"min slack={self.min_dissipativity_slack:.6g}"
        )


def uniform_ball(rng: np.random.Generator, n: int, dim: int, radius: float) -> np.ndarray:
    g = rng.standard_normal((n, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * (radius * rng.uniform(size=(n, 1)) ** (1.0 / dim))


def jacobian_fd(model: DriftModel, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobians, shape ``(n, d, d)``."""
    n, d = x.shape
    jac = np.empty((n, d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        jac[:, :, j] = (model.func(x + e) - model.func(x - e)) / (2 * h)
    return jac


def certify(model: DriftModel, samples: int = 10_000, radius: float = 50.0, seed: int = 0,
            tol: float = 1e-6, batch: int = 50_000) -> CertificationReport:
    """Monte Carlo check of the declared Jacobian bound and dissipativity inequality.

    Points are uniform in the ball of the given radius.  A bound counts as
    violated when the Jacobian operator norm exceeds ``theta1 (1 + tol)`` or
    ``<b(x)-b(y), x-y>`` exceeds ``-theta4 |x-y|^2 + K + tol``.
    """
    if samples < 1 or radius <= 0:
        raise DomainError("samples must be >= 1 and radius > 0")
    rng = np.random.default_rng(seed)
    d = model.dim
    worst_j, witness_j = -np.inf, None
    worst_s, witness_s = np.inf, None
    done = 0
    while done < samples:
        m = min(batch, samples - done)
        x = uniform_ball(rng, m, d, radius)
        y = uniform_ball(rng, m, d, radius)
        jac = jacobian_fd(model, x)
        norms = np.abs(jac[:, 0, 0]) if d == 1 else np.linalg.norm(jac, ord=2, axis=(1, 2))
        k = int(np.argmax(norms))
        if norms[k] > worst_j:
            worst_j, witness_j = float(norms[k]), x[k].copy()
        diff = x - y
        inner = np.einsum("ij,ij->i", model.func(x) - model.func(y), diff)
        slack = -model.theta4 * np.einsum("ij,ij->i", diff, diff) + model.K - inner
        k = int(np.argmin(slack))
        if slack[k] < worst_s:
            worst_s, witness_s = float(slack[k]), (x[k].copy(), y[k].copy())
        done += m
    passed = worst_j <= model.theta1 * (1 + tol) and worst_s >= -tol
    return CertificationReport(passed, samples, radius, worst_j, witness_j, worst_s, witness_s, tol)
