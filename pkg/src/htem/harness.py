"""Convergence studies, the closed-form OU oracle and ergodicity audits."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Any

import mpmath
import numpy as np
from scipy import stats

from .constants import ConstantLedger, build_ledger
from .distances import EmpiricalMeasure, mom_abs_moment, w1_1d, w1_sliced
from .drifts import DriftModel, drift_from_config
from .errors import BoundViolated, ConfigInvalid
from .rng import derive_seed
from .schemes import (
    Scheme,
    SchemeConfig,
    ou_transition_scale,
    pareto_vs_exact_ou,
    scheme_vs_fine_reference,
    simulate_ensemble,
    stable_vs_exact_ou_aggregated,
    stable_vs_exact_ou_stepwise,
)
from .stable import StableSpec, sample_stable, stable_abs_moment
from .rng import RngStream

SCHEMA_VERSION = 1
IQR_WARN_RATIO = 0.30
# standard error of a median from an IQR: 1.2533 * (IQR / 1.349) / sqrt(R)
_IQR_TO_MEDIAN_SE = math.sqrt(math.pi / 2.0) / 1.3489795003921634


class InsufficientTrajectories(UserWarning):
    """W1 spread across repeats exceeds 30% of the median at some stepsize."""


@dataclass(frozen=True)
class ConvergenceStudy:
    """One rate experiment: a scheme, a drift and a grid of stepsizes.

    ``reference`` is ``"auto"`` (exact OU chain for the OU drift, otherwise
    StableEM at ``eta / refine``), ``"exact"`` or ``"fine"``.  For StableEM on
    the OU drift with the exact reference, ``stable_ou_method`` selects the
    closed-form terminal laws (``"aggregate"``) or step-by-step simulation
    (``"stepwise"``).
    """

    eta_grid: tuple[float, ...]
    scheme: Scheme
    drift: DriftModel
    alpha: float
    horizon_T: float = 10.0
    n_traj: int = 200_000
    repeats: int = 16
    seed: int = 0
    x0: tuple[float, ...] = (0.0,)
    reference: str = "auto"
    refine: int = 16
    stable_ou_method: str = "aggregate"
    C2: float | None = None
    enforce_gate: bool = True

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "eta_grid", tuple(float(e) for e in self.eta_grid))
        object.__setattr__(self, "x0", tuple(float(v) for v in np.atleast_1d(self.x0)))
        if self.scheme is Scheme.EXACT_OU:
            raise ConfigInvalid("a convergence study compares StableEM or ParetoEM to a reference")
        if not self.eta_grid:
            raise ConfigInvalid("eta_grid is empty")
        if any(a <= b for a, b in zip(self.eta_grid, self.eta_grid[1:])):
            raise ConfigInvalid("eta_grid must be strictly descending")
        if self.enforce_gate:
            gate = self.drift.stepsize_gate()
            bad = [e for e in self.eta_grid if e > gate]
            if bad:
                raise ConfigInvalid(f"stepsizes {bad} exceed the stepsize gate {gate:.6g}")
        if self.n_traj < 2 or self.repeats < 1 or self.horizon_T <= 0:
            raise ConfigInvalid("need n_traj >= 2, repeats >= 1 and horizon_T > 0")
        if self.reference not in ("auto", "exact", "fine"):
            raise ConfigInvalid(f"unknown reference {self.reference!r}")
        if self.reference == "exact" and not self.drift.is_linear:
            raise ConfigInvalid("the exact reference exists only for the OU drift")
        if self.stable_ou_method not in ("aggregate", "stepwise"):
            raise ConfigInvalid(f"unknown stable_ou_method {self.stable_ou_method!r}")
        if len(self.x0) != self.drift.dim:
            raise ConfigInvalid("x0 and drift dimensions differ")

    @property
    def spec(self) -> StableSpec:
        return StableSpec(self.alpha, self.drift.dim)

    @property
    def reference_kind(self) -> str:
        if self.reference == "auto":
            return "exact" if self.drift.is_linear else "fine"
        return self.reference

    def steps_for(self, eta: float) -> int:
        """``N = T / eta`` rounded to the nearest integer (at least 1)."""
        return max(1, int(round(self.horizon_T / eta)))


@dataclass
class EtaRow:
    eta: float
    n_steps: int
    w1_median: float
    w1_iqr: float
    w1_values: list[float]
    bound: float
    bound_ok: bool


@dataclass
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    slope_stderr: float
    per_eta: list[EtaRow]
    theory_order: float
    bound_name: str
    bound_ok: bool
    warnings: list[str] = field(default_factory=list)

    def rows(self) -> list[tuple[float, float, float]]:
        return [(r.eta, r.w1_median, r.w1_iqr) for r in self.per_eta]

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        for row in out["per_eta"]:
            row.pop("w1_values")
        return out


def fit_rate(etas, w1s) -> tuple[float, float, float, float]:
    """Least-squares line through ``(log2 eta, log2 W1)``; NaN when underdetermined."""
    etas = np.asarray(etas, dtype=float)
    w1s = np.asarray(w1s, dtype=float)
    if etas.size < 2 or np.any(w1s <= 0):
        return math.nan, math.nan, math.nan, math.nan
    if etas.size == 2:
        x, y = np.log2(etas), np.log2(w1s)
        slope = (y[1] - y[0]) / (x[1] - x[0])
        return float(slope), float(y[0] - slope * x[0]), 1.0, math.nan
    res = stats.linregress(np.log2(etas), np.log2(w1s))
    return float(res.slope), float(res.intercept), float(res.rvalue**2), float(res.stderr)


def _pair(study: ConvergenceStudy, eta: float, n_steps: int, seed: int):
    spec = study.spec
    theta = study.drift.theta1
    if study.reference_kind == "exact":
        if study.scheme is Scheme.PARETO:
            return pareto_vs_exact_ou(theta, spec, eta, n_steps, study.x0, seed, study.n_traj)
        fn = (stable_vs_exact_ou_aggregated if study.stable_ou_method == "aggregate"
              else stable_vs_exact_ou_stepwise)
        return fn(theta, spec, eta, n_steps, study.x0, seed, study.n_traj)
    return scheme_vs_fine_reference(study.drift, spec, study.scheme, eta, n_steps, study.x0, seed,
                                    study.n_traj, study.refine)


def _w1(a: np.ndarray, b: np.ndarray, seed: int) -> float:
    if a.shape[1] == 1:
        return w1_1d(a[:, 0], b[:, 0]).value
    return w1_sliced(EmpiricalMeasure(a, sort=False), EmpiricalMeasure(b, sort=False),
                     n_projections=64, seed=seed).value


def run_convergence(study: ConvergenceStudy, ledger: ConstantLedger | None = None,
                    progress=None) -> RateFit:
    """Measure W1 between scheme and reference at each stepsize and fit the log-log slope.

    Repeat ``r`` uses ``derive_seed(seed, r)`` at every stepsize, so the
    grid shares random numbers within a repeat (common random numbers) and
    repeats are independent.  Bound dominance compares the median plus three
    standard errors against ``script_C * eta`` (StableEM) or
    ``script_C_prime * eta^(2/alpha - 1)`` (ParetoEM).
    """
    spec = study.spec
    if ledger is None:
        ledger = build_ledger(study.drift, spec, study.eta_grid[0], study.x0, C2=study.C2)
    if study.scheme is Scheme.STABLE:
        order, const, name = 1.0, ledger.values["script_C"], "script_C*eta"
    else:
        order, const, name = 2.0 / study.alpha - 1.0, ledger.values["script_C_prime"], \
            "script_C_prime*eta^(2/alpha-1)"
    notes: list[str] = []
    C5 = ledger.values["C5"]
    if study.horizon_T < 5.0 / C5:
        notes.append(f"horizon_T={study.horizon_T} is below 5/C5={5.0 / C5:.3g}")
    rows: list[EtaRow] = []
    for eta in study.eta_grid:
        n_steps = study.steps_for(eta)
        vals = []
        for r in range(study.repeats):
            seed_r = derive_seed(study.seed, r)
            a, b = _pair(study, eta, n_steps, seed_r)
            vals.append(_w1(a, b, seed_r))
            if progress:
                progress(eta, r)
        med = float(np.median(vals))
        q25, q75 = np.percentile(vals, [25, 75])
        iqr = float(q75 - q25)
        se = _IQR_TO_MEDIAN_SE * iqr / math.sqrt(len(vals))
        bound = const * eta**order
        rows.append(EtaRow(eta, n_steps, med, iqr, [float(v) for v in vals], bound,
                           bool(med + 3.0 * se <= bound)))
        if study.repeats > 1 and iqr > IQR_WARN_RATIO * med:
            msg = f"InsufficientTrajectories: IQR {iqr:.3g} > 30% of median {med:.3g} at eta={eta}"
            notes.append(msg)
            warnings.warn(msg, InsufficientTrajectories, stacklevel=2)
    slope, intercept, r2, se_slope = fit_rate([r.eta for r in rows], [r.w1_median for r in rows])
    return RateFit(slope, intercept, r2, se_slope, rows, order, name,
                   all(r.bound_ok for r in rows), notes)


RATE_CSV_HEADER = "eta,w1_median,w1_iqr,n_traj,repeats"


def rate_csv(fit: RateFit, study: ConvergenceStudy) -> str:
    lines = [RATE_CSV_HEADER]
    for r in fit.per_eta:
        lines.append(f"{r.eta!r},{r.w1_median!r},{r.w1_iqr!r},{study.n_traj},{study.repeats}")
    return "\n".join(lines) + "\n"


def study_from_config(cfg: dict[str, Any]) -> ConvergenceStudy:
    """Build a study from the versioned JSON config."""
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ConfigInvalid(f"schema_version must be {SCHEMA_VERSION}")
    try:
        drift = drift_from_config(cfg["drift"])
        grid = cfg.get("eta_grid")
        if grid is None:
            lo, hi = cfg.get("eta_exponents", [4, 9])
            grid = [2.0 ** -k for k in range(int(lo), int(hi) + 1)]
        return ConvergenceStudy(
            eta_grid=tuple(grid), scheme=cfg["scheme"], drift=drift, alpha=float(cfg["alpha"]),
            horizon_T=float(cfg.get("horizon_T", 10.0)), n_traj=int(cfg.get("n_traj", 200_000)),
            repeats=int(cfg.get("repeats", 16)), seed=int(cfg.get("seed", 0)),
            x0=tuple(cfg.get("x0", [0.0] * drift.dim)), reference=cfg.get("reference", "auto"),
            refine=int(cfg.get("refine", 16)),
            stable_ou_method=cfg.get("stable_ou_method", "aggregate"),
            C2=cfg.get("C2"),
        )
    except KeyError as exc:
        raise ConfigInvalid(f"missing config key {exc}") from None
    except ValueError as exc:
        if isinstance(exc, ConfigInvalid):
            raise
        raise ConfigInvalid(str(exc)) from None


# ---------------------------------------------------------------------------
# Closed-form OU oracle


@dataclass(frozen=True)
class OuOracleReport:
    alpha: float
    eta: float
    P_exact: float
    stationary_scale_X: float
    stationary_scale_Y: float
    first_order_coeff: float
    first_order_approx: float
    series_coeff: float
    series_approx: float

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


def ou_oracle(alpha: float, eta: float) -> OuOracleReport:
    """Stationary scales of the unit-rate OU process and its StableEM chain.

    ``P = (eta / (1 - (1 - eta)^alpha))^(1/alpha) - (1/alpha)^(1/alpha)`` is
    evaluated in 40-digit arithmetic, since the difference cancels to
    ``O(eta)``.

    ``first_order_coeff`` is the comparison value
    ``(1/alpha)^(1/alpha) (alpha+1)/(2 alpha)``.  The actual Taylor
    coefficient of ``P`` is ``series_coeff = (1/alpha)^(1/alpha) (alpha-1)/(2 alpha)``,
    because ``1 - (1-eta)^alpha = alpha eta (1 - (alpha-1) eta / 2 + O(eta^2))``.
    """
    if not (1.0 < alpha < 2.0 and 0.0 < eta < 1.0):
        raise ConfigInvalid("need 1 < alpha < 2 and 0 < eta < 1")
    with mpmath.workdps(40):
        a = mpmath.mpf(alpha)
        e = mpmath.mpf(eta)
        sx = (1 / a) ** (1 / a)
        sy = (e / (1 - (1 - e) ** a)) ** (1 / a)
        p = sy - sx
        coeff = sx * (a + 1) / (2 * a)
        series = sx * (a - 1) / (2 * a)
        return OuOracleReport(alpha, eta, float(p), float(sx), float(sy), float(coeff), float(coeff * e),
                              float(series), float(series * e))


@dataclass
class OuInvariantCheck:
    alpha: float
    eta: float
    n_traj: int
    bound: float
    w1_coupled: float
    w1_independent: float
    w1_independent_se: float
    coupled_ratio: float
    coupled_se: float
    bound_ok: bool

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def ou_invariant_w1_check(alpha: float, eta: float, n_traj: int = 1_000_000, seed: int = 0) -> OuInvariantCheck:
    """Compare the two stationary laws of the unit-rate OU example by sampling.

    The coupled distance scales one set of unit draws by both stationary
    scales and is compared with the bound ``E|xi| |P|``.  The distance
    between independent draws is reported as a diagnostic only: its Monte
    Carlo floor, of order ``n^(1/alpha - 1)``, exceeds the bound at
    practical ``n``.
    """
    rep = ou_oracle(alpha, eta)
    e_abs = stable_abs_moment(alpha, 1.0)
    bound = e_abs * abs(rep.P_exact)
    s = sample_stable(RngStream(seed, 0), alpha, 1.0, n_traj)
    s2 = sample_stable(RngStream(seed, 1), alpha, 1.0, n_traj)
    x = rep.stationary_scale_X * s
    coupled = w1_1d(x, rep.stationary_scale_Y * s)
    ind = w1_1d(x, rep.stationary_scale_Y * s2)
    ratio = coupled.value / bound if bound > 0 else math.nan
    return OuInvariantCheck(alpha, eta, n_traj, bound, coupled.value, ind.value, ind.std_error, ratio,
                            coupled.std_error, bool(coupled.value <= bound + 3.0 * coupled.std_error))


# ---------------------------------------------------------------------------
# Ergodicity audit


@dataclass
class MomentCheck:
    what: str
    start: list[float]
    checkpoint: float
    estimate: float
    std_error: float
    bound: float

    @property
    def margin(self) -> float:
        return self.bound - self.estimate

    @property
    def ok(self) -> bool:
        return self.estimate <= self.bound


@dataclass
class AuditReport:
    scheme: str
    drift: dict[str, Any]
    alpha: float
    eta: float
    checks: list[MomentCheck]
    mixing: list[dict[str, float]]
    mixing_ok: bool
    ledger: dict[str, float]

    @property
    def ok(self) -> bool:
        return self.mixing_ok and all(c.ok for c in self.checks)

    def to_dict(self) -> dict[str, Any]:
        return {
            "scheme": self.scheme, "drift": self.drift, "alpha": self.alpha, "eta": self.eta,
            "checks": [dict(asdict(c), margin=c.margin, ok=c.ok) for c in self.checks],
            "mixing": self.mixing, "mixing_ok": self.mixing_ok, "ledger": self.ledger, "ok": self.ok,
        }


def _reference_terminal(model: DriftModel, spec: StableSpec, x0, t: float, n_traj: int, seed: int,
                        eta_ref: float) -> np.ndarray:
    """Samples of ``X_t``: exact for the OU drift, fine-grid StableEM otherwise."""
    if model.is_linear:
        theta = model.theta1
        s = np.empty((n_traj, spec.dim))
        for c in range(spec.dim):
            s[:, c] = sample_stable(RngStream(seed, c), spec.alpha, 1.0, n_traj)
        return math.exp(-theta * t) * np.asarray(x0) + ou_transition_scale(theta, t, spec.alpha) * s
    n_steps = max(1, int(round(t / eta_ref)))
    cfg = SchemeConfig(t / n_steps, n_steps, Scheme.STABLE, tuple(x0), seed, n_traj)
    return simulate_ensemble(cfg, model, spec).terminal_states


def run_ergodicity_audit(scheme, model: DriftModel, alpha: float, eta: float,
                         checkpoints=(10, 1000), starts=None, times=(1.0, 10.0),
                         n_traj: int = 20_000, seed: int = 0, mixing_starts=None,
                         raise_on_violation: bool = True, refine: int = 4) -> AuditReport:
    """Check the moment bounds at each checkpoint and that two starts merge.

    ``scheme`` is StableEM (bound ``C4(1) (1+|x|^2)^(1/2)``) or ParetoEM
    (bound ``(1+|x|^2)^(1/2) + 2 C7 / theta4``).  The continuous-time bound
    ``C3(1) (1+|x|^2)^(1/2)`` is checked at ``times`` on the exact (OU) or
    fine-grid reference.  Mixing: W1 between the ensembles started from the
    two ``mixing_starts`` (sharing noise) must shrink from the first to the
    last checkpoint by more than three standard errors.
    """
    scheme = Scheme(scheme)
    if scheme is Scheme.EXACT_OU:
        raise ConfigInvalid("audit the discrete schemes StableEM or ParetoEM")
    spec = StableSpec(alpha, model.dim)
    d = model.dim
    e1 = [0.0] * d
    e1_2 = [2.0] + [0.0] * (d - 1)
    starts = [list(s) for s in (starts or [e1, e1_2])]
    mixing_starts = [list(s) for s in (mixing_starts or [e1, [4.0] + [0.0] * (d - 1)])]
    ledger = build_ledger(model, spec, eta)
    C3, C4, C7 = ledger.values["C3_1"], ledger.values["C4_1"], ledger.values["C7"]
    checks: list[MomentCheck] = []
    for x0 in starts:
        v1 = math.sqrt(1.0 + sum(v * v for v in x0))
        for k in checkpoints:
            cfg = SchemeConfig(eta, int(k), scheme, tuple(x0), seed, n_traj)
            ens = simulate_ensemble(cfg, model, spec).terminal_states
            est = mom_abs_moment(ens, 1.0, seed=seed)
            if scheme is Scheme.STABLE:
                checks.append(MomentCheck("C4 discrete moment", x0, k, est.value, est.std_error, C4 * v1))
            else:
                checks.append(MomentCheck("C7 Pareto moment", x0, k, est.value, est.std_error,
                                          v1 + 2.0 * C7 / model.theta4))
        for t in times:
            ref = _reference_terminal(model, spec, x0, t, n_traj, derive_seed(seed, 7), eta / refine)
            est = mom_abs_moment(ref, 1.0, seed=seed)
            checks.append(MomentCheck("C3 continuous moment", x0, t, est.value, est.std_error, C3 * v1))
    mixing = []
    a0, b0 = (np.asarray(s) for s in mixing_starts)
    mixing.append({"checkpoint": 0, "w1": float(np.linalg.norm(a0 - b0)), "std_error": 0.0})
    for k in checkpoints:
        ea = simulate_ensemble(SchemeConfig(eta, int(k), scheme, tuple(a0), seed, n_traj), model, spec)
        eb = simulate_ensemble(SchemeConfig(eta, int(k), scheme, tuple(b0), seed, n_traj), model, spec)
        if d == 1:
            w = w1_1d(ea.terminal_states[:, 0], eb.terminal_states[:, 0])
        else:
            w = w1_sliced(ea.terminal_states, eb.terminal_states, 64, seed)
        mixing.append({"checkpoint": int(k), "w1": w.value, "std_error": w.std_error})
    first, last = mixing[1], mixing[-1]
    mixing_ok = last["w1"] + 3 * last["std_error"] < first["w1"] - 3 * first["std_error"] \
        if len(mixing) > 2 else True
    report = AuditReport(scheme.value, model.to_config(), alpha, eta, checks, mixing, mixing_ok,
                         {k: ledger.values[k] for k in ("C3_1", "C4_1", "C7")})
    if raise_on_violation:
        for c in checks:
            if not c.ok:
                raise BoundViolated(c.what, c.checkpoint, c.margin)
        if not mixing_ok:
            raise BoundViolated("mixing between starts", last["checkpoint"], first["w1"] - last["w1"])
    return report


# ---------------------------------------------------------------------------
# Contraction between two starts


@dataclass
class ContractionCheck:
    times: list[float]
    w1: list[float]
    std_error: list[float]
    bound: list[float]
    analytic_available: bool

    @property
    def decreasing(self) -> bool:
        return all(b <= a for a, b in zip(self.w1, self.w1[1:]))

    @property
    def within_bound(self) -> bool:
        return self.analytic_available and all(
            w - 3 * s <= b for w, s, b in zip(self.w1, self.std_error, self.bound))


def contraction_check(model: DriftModel, alpha: float, x, y, times=(1.0, 5.0, 10.0),
                      n_traj: int = 20_000, seed: int = 0, eta_ref: float = 1.0 / 256) -> ContractionCheck:
    """W1 between the flows from ``x`` and ``y`` (fine-grid StableEM, shared noise) against the ledger bound.

    For ``K = 0`` the analytic bound is void (``c1 = 0``) and only the
    empirical decay is reported.
    """
    spec = StableSpec(alpha, model.dim)
    ledger = build_ledger(model, spec, eta_ref)
    dist = float(np.linalg.norm(np.asarray(x, float) - np.asarray(y, float)))
    w1s, ses, bounds = [], [], []
    for t in times:
        n = max(1, int(round(t / eta_ref)))
        cfg_x = SchemeConfig(t / n, n, Scheme.STABLE, tuple(np.atleast_1d(x)), seed, n_traj)
        cfg_y = SchemeConfig(t / n, n, Scheme.STABLE, tuple(np.atleast_1d(y)), seed, n_traj)
        a = simulate_ensemble(cfg_x, model, spec).terminal_states
        b = simulate_ensemble(cfg_y, model, spec).terminal_states
        w = w1_1d(a[:, 0], b[:, 0]) if model.dim == 1 else w1_sliced(a, b, 64, seed)
        w1s.append(w.value)
        ses.append(w.std_error)
        bounds.append(ledger.contraction_bound(t, dist))
    return ContractionCheck(list(times), w1s, ses, bounds, model.K > 0)
