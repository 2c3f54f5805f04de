"""Euler-Maruyama schemes for SDEs driven by alpha-stable noise, with rate studies and explicit constants."""

from .constants import ConstantLedger, build_ledger
from .distances import EmpiricalMeasure, W1Estimate, empirical_cf, mom_abs_moment, w1_1d, w1_sliced
from .drifts import (
    DriftModel,
    certify,
    custom_drift,
    drift_from_config,
    drift_ou,
    drift_sine_perturbed,
    drift_tanh_distant,
)
from .errors import (
    BoundViolated,
    ConfigInvalid,
    DimensionMismatch,
    DomainError,
    HtemError,
    MissingC2,
    TrajectoryDiverged,
    UnequalSampleCounts,
)
from .fraclap import FracLaplConfig, frac_laplacian, frac_laplacian_drift_at_zero
from .harness import (
    ConvergenceStudy,
    RateFit,
    contraction_check,
    ou_invariant_w1_check,
    ou_oracle,
    run_convergence,
    run_ergodicity_audit,
)
from .rng import RngStream
from .schemes import Scheme, SchemeConfig, TrajectoryEnsemble, simulate_ensemble
from .stable import (
    StableSpec,
    compute_p_alpha,
    sample_pareto_1d,
    sample_stable_1d,
    sample_stable_vector,
    stable_abs_moment,
)

__version__ = "0.1.0"
