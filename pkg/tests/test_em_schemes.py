import math
import os
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import cf_deviation
from htem.distances import mom_abs_moment, w1_1d
from htem.drifts import DriftModel, drift_ou, drift_sine_perturbed, drift_tanh_distant
from htem.errors import ConfigInvalid, DimensionMismatch, TrajectoryDiverged
from htem.rng import RngStream, derive_seed
from htem.schemes import (
    CHUNK,
    Scheme,
    SchemeConfig,
    em_linear_scale,
    exact_ou_step,
    ou_transition_scale,
    pareto_vs_exact_ou,
    read_binary,
    scheme_vs_fine_reference,
    simulate_ensemble,
    stable_vs_exact_ou_aggregated,
    stable_vs_exact_ou_stepwise,
    step_pareto,
    step_stable,
    write_binary,
    write_csv,
)
from htem.stable import StableSpec, sample_stable

OU = drift_ou(1.0, 1)
S15 = StableSpec(1.5)


# ---------------------------------------------------------------------------
# single steps


def test_step_stable_examples():
    assert step_stable([2.0], OU, 0.1, [0.3])[0] == pytest.approx(2.1, abs=1e-15)
    assert step_stable([0.0], OU, 0.1, [0.0])[0] == 0.0
    assert step_stable([1.5], OU, 0.0, [0.25])[0] == 1.75


def test_step_pareto_examples():
    spec1 = SimpleNamespace(alpha=1.0, sigma=math.pi / 2)  # alpha = 1 only as an arithmetic check
    assert step_pareto([0.0], OU, 0.01, [1.5], spec1)[0] == pytest.approx(0.01 / (math.pi / 2) * 1.5, rel=1e-14)
    assert step_pareto([0.7], OU, 0.0, [3.0], S15)[0] == 0.7
    eta = 0.05
    zeta = np.array([1.0001, -1.2, 7.0])
    noise = step_pareto(np.zeros(3), drift_ou(1.0, 3), eta, zeta, StableSpec(1.5, 3))
    assert np.all(np.abs(noise) >= eta ** (1 / 1.5) / S15.sigma)


def test_steps_raise_on_overflow():
    with pytest.raises(TrajectoryDiverged):
        step_stable([1.0], OU, 0.1, [np.inf], step=4)
    with pytest.raises(TrajectoryDiverged):
        step_pareto([np.nan], OU, 0.1, [1.0], S15)


@pytest.mark.parametrize("model", [OU, drift_sine_perturbed(0.5), drift_tanh_distant()], ids=["ou", "sine", "tanh"])
def test_zero_noise_schemes_coincide(model):
    y = u = np.array([3.0])
    for _ in range(200):
        y = step_stable(y, model, 0.02, [0.0])
        u = step_pareto(u, model, 0.02, [0.0], S15)
    assert np.array_equal(y, u)


# ---------------------------------------------------------------------------
# exact OU transition


def test_ou_scale_limits():
    assert ou_transition_scale(1.0, 1e3, 1.5) == pytest.approx((1 / 1.5) ** (1 / 1.5), rel=1e-15)
    t = 1e-8
    assert ou_transition_scale(1.0, t, 1.5) / t ** (1 / 1.5) == pytest.approx(1.0, rel=1e-7)
    assert ou_transition_scale(1.0, 1.0, 1.5) == pytest.approx(((1 - math.exp(-1.5)) / 1.5) ** (2 / 3), rel=1e-15)


def test_exact_ou_step_mean_factor():
    s = RngStream(0, 0)
    a = exact_ou_step([2.0], 1.0, 0.5, S15, s.fork())
    noise = sample_stable(s.fork(), 1.5, ou_transition_scale(1.0, 0.5, 1.5), 1)
    assert a[0] == pytest.approx(2.0 * math.exp(-0.5) + noise[0], rel=1e-15)


def test_exact_ou_cf_at_t1():
    cfg = SchemeConfig(1.0, 1, Scheme.EXACT_OU, (0.0,), 3, 1_000_000)
    x = simulate_ensemble(cfg, OU, S15).terminal_states[:, 0]
    scale = ou_transition_scale(1.0, 1.0, 1.5)
    dev, tol = cf_deviation(x / scale, 1.0, 1.5)
    assert dev <= tol


def test_fine_em_matches_exact_ou_cf():
    # EM at eta = 1e-3 is within O(eta) of the exact law
    cfg = SchemeConfig(1e-3, 1000, Scheme.STABLE, (0.0,), 4, 100_000)
    x = simulate_ensemble(cfg, OU, S15).terminal_states[:, 0]
    exact = math.exp(-ou_transition_scale(1.0, 1.0, 1.5) ** 1.5)
    assert abs(complex(np.cos(x).mean(), np.sin(x).mean()) - exact) <= 3 / math.sqrt(x.size) + 2e-3


def test_exact_ou_stationary_mean_abs():
    cfg = SchemeConfig(1.0, 20, Scheme.EXACT_OU, (0.0,), 5, 1_000_000)
    x = simulate_ensemble(cfg, OU, S15).terminal_states
    direct = (1 / 1.5) ** (1 / 1.5) * sample_stable(RngStream(6, 0), 1.5, 1.0, 1_000_000)
    a = mom_abs_moment(x, 1.0)
    b = mom_abs_moment(direct, 1.0)
    assert abs(a.value - b.value) <= 3 * math.hypot(a.std_error, b.std_error)


def test_em_linear_scale_matches_sum():
    theta, eta, n, alpha = 0.8, 0.05, 37, 1.4
    s = sum(abs(1 - theta * eta) ** (alpha * j) for j in range(n))
    assert em_linear_scale(theta, eta, n, alpha) == pytest.approx((eta * s) ** (1 / alpha), rel=1e-13)
    assert em_linear_scale(theta, eta, 0, alpha) == 0.0


# ---------------------------------------------------------------------------
# ensembles


def test_zero_steps_returns_x0():
    cfg = SchemeConfig(0.1, 0, Scheme.STABLE, (1.25, -2.0), 0, 1)
    ens = simulate_ensemble(cfg, drift_ou(1.0, 2), StableSpec(1.5, 2))
    assert np.array_equal(ens.terminal_states, [[1.25, -2.0]])


@pytest.mark.parametrize("scheme", [Scheme.STABLE, Scheme.PARETO, Scheme.EXACT_OU])
def test_repeat_runs_identical(scheme):
    cfg = SchemeConfig(0.05, 30, scheme, (0.5,), 77, 5000)
    a = simulate_ensemble(cfg, OU, S15).terminal_states
    b = simulate_ensemble(cfg, OU, S15).terminal_states
    assert np.array_equal(a, b)


def test_thread_count_invariance(monkeypatch):
    cfg = SchemeConfig(0.05, 8, Scheme.STABLE, (0.0, 1.0), 9, 2 * CHUNK + 123)
    model, spec = drift_tanh_distant(2), StableSpec(1.5, 2)
    monkeypatch.setenv("HTEM_THREADS", "1")
    a = simulate_ensemble(cfg, model, spec).terminal_states
    monkeypatch.setenv("HTEM_THREADS", "8")
    b = simulate_ensemble(cfg, model, spec).terminal_states
    assert np.array_equal(a, b)


def test_trajectory_i_uses_stream_i():
    cfg = SchemeConfig(0.1, 3, Scheme.STABLE, (0.0,), 13, 10)
    full = simulate_ensemble(cfg, OU, S15).terminal_states
    one = simulate_ensemble(SchemeConfig(0.1, 3, Scheme.STABLE, (0.0,), 13, 1, stream0=7), OU, S15).terminal_states
    assert np.array_equal(full[7], one[0])
    y = np.zeros(1)
    s = RngStream(13, 7)
    for _ in range(3):
        y = step_stable(y, OU, 0.1, 0.1 ** (1 / 1.5) * sample_stable(s, 1.5, 1.0, 1))
    assert y[0] == pytest.approx(full[7, 0], rel=1e-13)


def test_full_path_shape():
    cfg = SchemeConfig(0.1, 5, Scheme.PARETO, (0.0, 0.0), 1, 4)
    ens = simulate_ensemble(cfg, drift_ou(1.0, 2), StableSpec(1.5, 2), full_path=True)
    assert ens.paths.shape == (4, 6, 2)
    assert np.array_equal(ens.paths[:, -1], ens.terminal_states)
    assert np.all(ens.paths[:, 0] == 0.0)


def test_config_validation():
    with pytest.raises(ConfigInvalid):
        SchemeConfig(0.0, 1, Scheme.STABLE)
    with pytest.raises(ConfigInvalid):
        SchemeConfig(1.5, 1, Scheme.STABLE)
    with pytest.raises(ConfigInvalid):
        simulate_ensemble(SchemeConfig(0.1, 1, Scheme.EXACT_OU), drift_sine_perturbed(0.5), S15)
    with pytest.raises(DimensionMismatch):
        simulate_ensemble(SchemeConfig(0.1, 1, Scheme.STABLE, (0.0, 0.0)), OU, S15)


def test_gate_flag():
    sine = drift_sine_perturbed(0.5)
    assert not SchemeConfig(2.0**-4, 1, Scheme.STABLE).gate_holds(sine)
    assert SchemeConfig(2.0**-6, 1, Scheme.STABLE).gate_holds(sine)
    ens = simulate_ensemble(SchemeConfig(2.0**-4, 1, Scheme.STABLE), sine, S15)
    assert ens.gate_ok is False


@pytest.mark.filterwarnings("ignore:overflow")
def test_divergence_reports_trajectory_and_step():
    blowup = DriftModel(func=lambda x: 1e200 * x * np.abs(x), theta1=1, theta2=0, theta3=0, theta4=1,
                        K=0, b0_norm=0, dim=1)
    with pytest.raises(TrajectoryDiverged) as info:
        simulate_ensemble(SchemeConfig(1.0, 10, Scheme.STABLE, (1.0,), 0, 3), blowup, S15)
    assert info.value.step < 10 and 0 <= info.value.trajectory < 3


def test_csv_and_binary_round_trip(tmp_path):
    states = np.array([[0.1, -2.5], [1e-300, 3.0e10]])
    write_csv(tmp_path / "a.csv", states)
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "x0,x1"
    assert np.array_equal(np.loadtxt(tmp_path / "a.csv", delimiter=",", skiprows=1), states)
    write_binary(tmp_path / "a.bin", states)
    raw = (tmp_path / "a.bin").read_bytes()
    assert raw[:5] == b"HTEM1" and len(raw) == 5 + 16 + 32
    assert np.array_equal(read_binary(tmp_path / "a.bin"), states)
    (tmp_path / "b.bin").write_bytes(raw[:-3])
    with pytest.raises(ConfigInvalid):
        read_binary(tmp_path / "b.bin")


# ---------------------------------------------------------------------------
# coupled pairs


def test_pareto_pair_scheme_chain_is_simulate_ensemble():
    u, x = pareto_vs_exact_ou(1.0, S15, 0.05, 40, [0.3], 21, 3000)
    ens = simulate_ensemble(SchemeConfig(0.05, 40, Scheme.PARETO, (0.3,), 21, 3000), OU, S15)
    assert np.array_equal(u, ens.terminal_states)


def test_pareto_pair_reference_has_exact_law():
    _, x = pareto_vs_exact_ou(1.0, S15, 0.05, 40, [0.0], 22, 400_000)
    scale = ou_transition_scale(1.0, 2.0, 1.5)
    for uu in (0.5, 1.0):
        dev, tol = cf_deviation(x[:, 0] / scale, uu, 1.5)
        assert dev <= tol


def test_stepwise_pair_scheme_chain_is_simulate_ensemble():
    y, x = stable_vs_exact_ou_stepwise(1.0, S15, 0.05, 40, [0.3], 23, 3000)
    ens = simulate_ensemble(SchemeConfig(0.05, 40, Scheme.STABLE, (0.3,), 23, 3000), OU, S15)
    assert np.array_equal(y, ens.terminal_states)


def test_aggregated_laws():
    eta, n = 0.05, 40
    y, x = stable_vs_exact_ou_aggregated(1.0, S15, eta, n, [0.0], 24, 400_000)
    dev, tol = cf_deviation(y[:, 0] / em_linear_scale(1.0, eta, n, 1.5), 1.0, 1.5)
    assert dev <= tol
    dev, tol = cf_deviation(x[:, 0] / ou_transition_scale(1.0, eta * n, 1.5), 1.0, 1.5)
    assert dev <= tol


def test_aggregated_agrees_with_stepwise():
    for eta in (2.0**-4, 2.0**-5):
        n = int(10 / eta)
        agg, stp = [], []
        for r in range(4):
            seed = derive_seed(0, r)
            a, b = stable_vs_exact_ou_aggregated(1.0, S15, eta, n, [0.0], seed, 100_000)
            agg.append(w1_1d(a[:, 0], b[:, 0]).value)
            a, b = stable_vs_exact_ou_stepwise(1.0, S15, eta, n, [0.0], seed, 100_000)
            stp.append(w1_1d(a[:, 0], b[:, 0]).value)
        assert abs(np.median(stp) / np.median(agg) - 1) < 0.15


def test_fine_reference_laws_for_ou():
    eta, n = 0.05, 20
    y, x = scheme_vs_fine_reference(OU, S15, Scheme.STABLE, eta, n, [0.0], 25, 200_000, refine=8)
    dev, tol = cf_deviation(y[:, 0] / em_linear_scale(1.0, eta, n, 1.5), 1.0, 1.5)
    assert dev <= tol
    dev, tol = cf_deviation(x[:, 0] / em_linear_scale(1.0, eta / 8, 8 * n, 1.5), 1.0, 1.5)
    assert dev <= tol


def test_fine_reference_pareto_chain_support():
    y, x = scheme_vs_fine_reference(drift_tanh_distant(), S15, Scheme.PARETO, 0.05, 1, [0.0], 26, 10_000, refine=4)
    jump = y[:, 0] / (0.05 ** (1 / 1.5) / S15.sigma)
    assert np.all(np.abs(jump) > 1.0 - 1e-12)


def test_fine_reference_rejects_custom_and_exact():
    with pytest.raises(ConfigInvalid):
        scheme_vs_fine_reference(OU, S15, Scheme.EXACT_OU, 0.1, 1, [0.0], 0, 10)


@given(eta=st.floats(1e-3, 1.0), theta=st.floats(0.1, 5.0), n=st.integers(1, 500))
def test_em_linear_scale_positive(eta, theta, n):
    s = em_linear_scale(theta, eta, n, 1.5)
    assert s > 0 and math.isfinite(s)
