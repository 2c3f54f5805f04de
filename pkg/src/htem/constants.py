"""Explicit constants of the moment, contraction and convergence bounds.

Every function is a direct evaluation of a closed form.  ``build_ledger``
assembles them for one drift, noise and stepsize, records where each input
came from and flags degenerate cases instead of hiding them.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Any

from .drifts import DriftModel
from .errors import DomainError, LambdaOutOfRange, MissingC2
from .fraclap import FracLaplConfig, frac_laplacian_drift_at_zero
from .stable import StableSpec, stable_abs_moment

DEFAULT_C2 = 10.0


class DegenerateK(UserWarning):
    """``K = 0``: the coupling constant ``c1`` collapses to 0."""


def _check_lambda(lam: float, alpha: float) -> None:
    if not (1.0 <= lam < alpha):
        raise LambdaOutOfRange(f"lambda must lie in [1, alpha={alpha}), got {lam}")


def compute_c1(theta1: float, theta4: float, K: float, alpha: float, p_alpha: float) -> float:
    """Coupling rate ``c1``; equals its limit 0 when ``K = 0`` (a :class:`DegenerateK` warning is raised)."""
    if theta1 <= 0 or theta4 <= 0 or K < 0:
        raise DomainError("need theta1 > 0, theta4 > 0, K >= 0")
    if K == 0:
        warnings.warn("K = 0: c1 degenerates to 0", DegenerateK, stacklevel=2)
        return 0.0
    L0 = math.sqrt(2.0 * K / theta4)
    inner = (theta1 * (2.0 - alpha) / (4.0 * p_alpha)
             * (theta4 / (2.0 * K)) ** ((1.0 - alpha) / 2.0) * math.exp(-2.0 * L0))
    return inner ** (1.0 / (alpha - 1.0))


def compute_C5(theta1: float, theta4: float, K: float, c1: float) -> float:
    """Contraction rate; the magnitude of the displayed (negative) expression.

    For ``K = 0`` the second and third arguments of the minimum are infinite
    or undefined and only ``2 theta1`` remains.
    """
    if K == 0:
        return 2.0 * theta1
    L0 = math.sqrt(2.0 * K / theta4)
    lead = math.exp(-2.0 * c1 * L0)
    pw = (2.0 * K / theta4) ** (theta4 / 2.0 - 1.0)
    third = c1 / (8.0 * math.sqrt(2.0)) * (lead / 20.0 + 1.0) * theta4**1.5 / math.sqrt(K) * pw
    return abs(-lead * min(2.0 * theta1, theta4 / 2.0 * pw, third))


def decay_prefactor(c1: float, L0: float) -> float:
    """``2 (1 - e^(-c1 L0)) / L0``, with the limit ``2 c1`` at ``L0 = 0``."""
    if L0 == 0:
        return 2.0 * c1
    return -2.0 * math.expm1(-c1 * L0) / L0


def compute_C3(lam: float, theta4: float, K: float, b0_norm: float, d: int, alpha: float,
               p_alpha: float) -> float:
    _check_lambda(lam, alpha)
    inner = (
        lam * (theta4 + K)
        + theta4 ** (1.0 - lam) * b0_norm**lam
        + 2.0 * p_alpha * lam * (3.0 - lam) * math.sqrt(d) / (2.0 * (2.0 - alpha))
        + 2.0 * p_alpha * lam / (alpha - lam)
        + (theta4 / 4.0) ** (1.0 - lam) * (2.0 * p_alpha / (alpha - 1.0)) ** lam
    )
    return 2.0 / theta4 * inner + 1.0


def _eta_block(theta4, K, b0, eta):
    return eta * 2.0 * b0**2 / theta4 + 2.0 * eta**2 * b0**2 + 1.0 + 2.0 * eta * K


def compute_C4(lam: float, eta: float, theta1: float, theta4: float, K: float, b0_norm: float,
               d: int, alpha: float, p_alpha: float, e_abs_L_pow: float) -> float:
    """``e_abs_L_pow`` is ``E|L_1|^(lam - 1)`` for the driving noise."""
    _check_lambda(lam, alpha)
    b0 = b0_norm
    bracket = (
        theta4 * lam / 2.0 * _eta_block(theta4, K, b0, eta)
        + lam * b0**2 / theta4
        + 2.0 * lam * eta * b0**2
        + lam * K
        + 2.0 * lam * p_alpha * ((3.0 - alpha) * math.sqrt(d) / (2.0 * (2.0 - alpha))
                                 + 1.0 / (alpha - lam) + b0 ** (lam - 1.0)
                                 + e_abs_L_pow / (alpha - 1.0))
        + (2.0 * p_alpha * (1.0 + theta1 ** (lam - 1.0)) / (alpha - 1.0)) ** lam
        * (2.0 / theta4) ** (lam - 1.0)
    )
    return 1.0 + 2.0 / theta4 * bracket


def compute_C7(eta: float, theta4: float, K: float, b0_norm: float, d: int, alpha: float,
               sigma: float) -> float:
    b0 = b0_norm
    return (
        d * alpha / sigma * (1.0 / ((2.0 - alpha) * sigma) + 1.0 / (alpha - 1.0))
        + theta4 / 2.0 * _eta_block(theta4, K, b0, eta)
        + b0**2 / theta4
        + 2.0 * eta * b0**2
        + K
    )


def noise_abs_moment(alpha: float, d: int, p: float) -> float:
    """``E|L_1|^p`` (Euclidean norm) for ``0 <= p <= 1``.

    Exact for ``d = 1``.  For ``d > 1`` returns the upper bound
    ``d E|S|^p`` from subadditivity of ``t -> t^p``.
    """
    if not 0.0 <= p <= 1.0:
        raise DomainError("only 0 <= p <= 1 is supported")
    m = stable_abs_moment(alpha, p)
    return m if d == 1 or p == 0 else d * m


def compute_script_C(*, theta1, theta2, d, alpha, p_alpha, C3_1, C4_1, x_norm, frac_lap_b0,
                     c1, L0, C5) -> tuple[float, dict[str, float]]:
    """Stable-scheme constant and its factors."""
    decay = decay_prefactor(c1, L0)
    outer = 1.0 + decay / C5
    lipschitz_part = theta1**2 + 4.0 * d * theta2 * p_alpha / ((2.0 - alpha) * (alpha - 1.0))
    inner = lipschitz_part * C3_1 * C4_1 * math.sqrt(1.0 + x_norm**2) + frac_lap_b0
    return outer * inner, {"outer": outer, "drift_factor": lipschitz_part, "inner": inner}


def compute_script_C_prime(*, theta1, theta4, d, alpha, p_alpha, sigma, C3_1, C7, x_norm,
                           e_abs_L, e_abs_L_2ma, c1, L0, C5, C2=None) -> tuple[float, dict[str, float]]:
    """Pareto-scheme constant; ``C2`` has no closed form and must be supplied."""
    if C2 is None:
        raise MissingC2("the Pareto constant needs C2 (no closed form); pass C2 explicitly")
    ratio = decay_prefactor(c1, L0) / C5
    B = 2.0 * theta1 / (1.0 + 1.0 / alpha) * (
        theta1 * C3_1 * (math.sqrt(1.0 + x_norm**2) + 2.0 * C7 / theta4) + e_abs_L)
    A = B + d * p_alpha / sigma**alpha + 2.0 * d * alpha * p_alpha * e_abs_L_2ma / (
        (2.0 - alpha) * (alpha - 1.0))
    bracket = ratio + C2 * (ratio + 1.0)
    return A * bracket + B, {"A": A, "B": B, "bracket": bracket}


@dataclass
class ConstantLedger:
    inputs: dict[str, Any]
    values: dict[str, float]
    breakdown: dict[str, dict[str, float]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def C3(self, lam: float) -> float:
        i = self.inputs
        return compute_C3(lam, i["theta4"], i["K"], i["b0_norm"], i["dim"], i["alpha"],
                          self.values["p_alpha"])

    def C4(self, lam: float) -> float:
        i = self.inputs
        return compute_C4(lam, i["eta"], i["theta1"], i["theta4"], i["K"], i["b0_norm"], i["dim"],
                          i["alpha"], self.values["p_alpha"],
                          noise_abs_moment(i["alpha"], i["dim"], lam - 1.0))

    def contraction_bound(self, t: float, distance: float) -> float:
        """``2 (1 - e^(-c1 L0)) / L0 * e^(-C5 t) * |x - y|``."""
        v = self.values
        return decay_prefactor(v["c1"], v["L0"]) * math.exp(-v["C5"] * t) * distance

    def to_dict(self) -> dict[str, Any]:
        return {"inputs": self.inputs, "values": self.values, "breakdown": self.breakdown,
                "warnings": self.warnings}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def build_ledger(model: DriftModel, spec: StableSpec, eta: float, x0=None, C2: float | None = None,
                 frac_cfg: FracLaplConfig | None = None) -> ConstantLedger:
    """Evaluate every constant for the given drift, noise, stepsize and start ``x0``.

    ``C2`` defaults to the conservative value 10 with a warning entry.
    """
    if model.dim != spec.dim:
        raise DomainError("drift and noise dimensions differ")
    d, alpha, p = spec.dim, spec.alpha, spec.p_alpha
    x_norm = 0.0 if x0 is None else float(math.sqrt(sum(float(v) ** 2 for v in _flat(x0))))
    notes: list[str] = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        c1 = compute_c1(model.theta1, model.theta4, model.K, alpha, p)
    if any(issubclass(w.category, DegenerateK) for w in caught):
        notes.append("DegenerateK: K = 0 so c1 = 0 and the analytic contraction bound is void")
    if C2 is None:
        C2 = DEFAULT_C2
        notes.append(f"C2 not supplied; conservative default {DEFAULT_C2} used")
    gate = model.stepsize_gate()
    if eta > gate:
        notes.append(f"StepsizeGate: eta={eta} exceeds the stepsize gate {gate:.6g}")
    L0 = model.L0
    C5 = compute_C5(model.theta1, model.theta4, model.K, c1)
    C3_1 = compute_C3(1.0, model.theta4, model.K, model.b0_norm, d, alpha, p)
    e_L = noise_abs_moment(alpha, d, 1.0)
    e_L0 = noise_abs_moment(alpha, d, 0.0)
    e_L2ma = noise_abs_moment(alpha, d, 2.0 - alpha)
    C4_1 = compute_C4(1.0, eta, model.theta1, model.theta4, model.K, model.b0_norm, d, alpha, p, e_L0)
    C7 = compute_C7(eta, model.theta4, model.K, model.b0_norm, d, alpha, spec.sigma)
    fl = frac_laplacian_drift_at_zero(model, spec, frac_cfg)
    sC, sC_parts = compute_script_C(theta1=model.theta1, theta2=model.theta2, d=d, alpha=alpha,
                                    p_alpha=p, C3_1=C3_1, C4_1=C4_1, x_norm=x_norm,
                                    frac_lap_b0=fl.value, c1=c1, L0=L0, C5=C5)
    sCp, sCp_parts = compute_script_C_prime(theta1=model.theta1, theta4=model.theta4, d=d,
                                            alpha=alpha, p_alpha=p, sigma=spec.sigma, C3_1=C3_1,
                                            C7=C7, x_norm=x_norm, e_abs_L=e_L, e_abs_L_2ma=e_L2ma,
                                            c1=c1, L0=L0, C5=C5, C2=C2)
    if d > 1:
        notes.append("d > 1: E|L_1|^p replaced by its upper bound d E|S|^p")
    inputs = {"alpha": alpha, "dim": d, "drift": model.to_config(), **model.constants(),
              "eta": eta, "x0_norm": x_norm, "C2": C2, "stepsize_gate": gate}
    values = {
        "p_alpha": p, "sigma": spec.sigma, "L0": L0, "c1": c1, "C5": C5,
        "decay_prefactor": decay_prefactor(c1, L0), "C3_1": C3_1, "C4_1": C4_1, "C7": C7,
        "E_abs_L1": e_L, "E_abs_L1_pow_2_minus_alpha": e_L2ma, "E_abs_L1_pow_0": e_L0,
        "frac_lap_b0": fl.value, "frac_lap_b0_error": fl.error,
        "script_C": sC, "script_C_prime": sCp,
    }
    return ConstantLedger(inputs, values, {"script_C": sC_parts, "script_C_prime": sCp_parts}, notes)


def _flat(x):
    try:
        return [v for v in x]
    except TypeError:
        return [x]
