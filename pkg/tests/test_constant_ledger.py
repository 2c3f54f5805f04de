import json
import math
import warnings

import pytest

from conftest import rel_close
from htem.constants import (
    DEFAULT_C2,
    DegenerateK,
    build_ledger,
    compute_C3,
    compute_C4,
    compute_C5,
    compute_C7,
    compute_c1,
    compute_script_C_prime,
    decay_prefactor,
    noise_abs_moment,
)
from htem.drifts import drift_ou, drift_sine_perturbed, drift_tanh_distant
from htem.errors import DomainError, LambdaOutOfRange, MissingC2
from htem.stable import StableSpec, compute_p_alpha, stable_abs_moment

DRIFTS = {"ou": lambda: drift_ou(1.0), "sine_a0.5": lambda: drift_sine_perturbed(0.5),
          "tanh": drift_tanh_distant}
KEYS = ("c1", "C5", "decay_prefactor", "C3_1", "C4_1", "C7", "script_C", "script_C_prime")


@pytest.mark.parametrize("name", list(DRIFTS))
@pytest.mark.parametrize("alpha", [1.3, 1.5, 1.7])
def test_ledger_matches_independent_evaluator(golden, name, alpha):
    ref = golden["ledger"][f"{name}|{alpha}|0.01|C2=1"]
    led = build_ledger(DRIFTS[name](), StableSpec(alpha), 0.01, [0.0], C2=1.0)
    for key in KEYS:
        assert rel_close(led.values[key], ref[key], 12), (key, led.values[key], ref[key])


def test_c1_homogeneity():
    p = compute_p_alpha(1.5)
    a = compute_c1(1.0, 0.5, 8.0, 1.5, p)
    b = compute_c1(2.0, 0.5, 8.0, 1.5, p)
    assert b / a == pytest.approx(2 ** (1 / 0.5), rel=1e-13)


def test_c1_limit_at_two():
    # p_alpha ~ (2 - alpha) near 2, so the bracket tends to theta1/4 (2K/theta4)^(1/2) e^(-2 L0)
    L0 = math.sqrt(2 * 8.0 / 0.5)
    limit = 0.25 * L0 * math.exp(-2 * L0)
    vals = [compute_c1(1.0, 0.5, 8.0, a, compute_p_alpha(a)) for a in (1.5, 1.7, 1.9, 1.999)]
    assert vals[0] < vals[1] < vals[2] < vals[3] < limit
    assert vals[3] == pytest.approx(limit, rel=0.02)


def test_k_zero_convention():
    with pytest.warns(DegenerateK):
        c1 = compute_c1(1.0, 1.0, 0.0, 1.5, compute_p_alpha(1.5))
    assert c1 == 0.0
    assert compute_C5(1.0, 1.0, 0.0, c1) == 2.0
    assert decay_prefactor(0.3, 0.0) == 0.6
    assert decay_prefactor(0.3, 1e-12) == pytest.approx(0.6, rel=1e-10)
    led = build_ledger(drift_ou(1.0), StableSpec(1.5), 0.01)
    assert any("DegenerateK" in w for w in led.warnings)


def test_C5_bounded_by_first_argument():
    p = compute_p_alpha(1.5)
    for K in (0.5, 2.0, 8.0):
        c1 = compute_c1(1.0, 0.5, K, 1.5, p)
        L0 = math.sqrt(2 * K / 0.5)
        assert 0 < compute_C5(1.0, 0.5, K, c1) <= 2.0 * math.exp(-2 * c1 * L0)


def test_C3_properties():
    p = compute_p_alpha(1.5)
    assert compute_C3(1.49, 1.0, 0.0, 0.0, 1, 1.5, p) > compute_C3(1.4, 1.0, 0.0, 0.0, 1, 1.5, p)
    for lam in (1.0, 1.2, 1.45):
        assert compute_C3(lam, 1.0, 0.0, 0.0, 1, 1.5, p) >= 1
    with pytest.raises(LambdaOutOfRange):
        compute_C3(1.5, 1.0, 0.0, 0.0, 1, 1.5, p)
    with pytest.raises(LambdaOutOfRange):
        compute_C3(0.9, 1.0, 0.0, 0.0, 1, 1.5, p)


def test_C4_properties():
    p = compute_p_alpha(1.5)
    args = dict(theta1=1.0, theta4=1.0, K=0.0, b0_norm=0.0, d=1, alpha=1.5, p_alpha=p, e_abs_L_pow=1.0)
    a = compute_C4(1.0, 1e-4, **args)
    b = compute_C4(1.0, 1e-6, **args)
    assert abs(a - b) < 1e-3 * b and b >= 1
    # b0 = 0 at lambda = 1: 0^0 = 1 is the convention
    assert compute_C4(1.0, 0.01, **args) > 1
    with pytest.raises(LambdaOutOfRange):
        compute_C4(1.6, 0.01, **args)


def test_C7_dimension_scaling():
    sigma = StableSpec(1.5).sigma
    rest = 0.5 * (1.0 + 0.02 * 0.0)  # theta4/2 times the eta block for OU with b0 = K = 0
    base = compute_C7(0.01, 1.0, 0.0, 0.0, 1, 1.5, sigma) - rest
    for d in (2, 4):
        assert (compute_C7(0.01, 1.0, 0.0, 0.0, d, 1.5, sigma) - rest) / base == pytest.approx(d, rel=1e-14)
    assert base > 0


def test_script_C_monotone_in_start():
    vals = [build_ledger(drift_tanh_distant(), StableSpec(1.5), 0.01, [x], C2=1.0).values["script_C"]
            for x in (0.0, 1.0, 2.0)]
    assert vals[0] < vals[1] < vals[2]


def test_script_C_ou_structure():
    led = build_ledger(drift_ou(1.0), StableSpec(1.5), 0.01, [0.0], C2=1.0)
    v = led.values
    # theta2 = 0 and the fractional term vanishes; the decay prefactor is 0 at K = 0
    assert v["script_C"] == pytest.approx(1.0 * v["C3_1"] * v["C4_1"], rel=1e-14)


def test_script_C_prime_in_C2():
    spec = StableSpec(1.5)
    led = build_ledger(drift_tanh_distant(), spec, 0.01, [0.0], C2=1.0)
    v = led.values
    kw = dict(theta1=1.0, theta4=0.5, d=1, alpha=1.5, p_alpha=v["p_alpha"], sigma=v["sigma"],
              C3_1=v["C3_1"], C7=v["C7"], x_norm=0.0, e_abs_L=v["E_abs_L1"],
              e_abs_L_2ma=v["E_abs_L1_pow_2_minus_alpha"], c1=v["c1"], L0=v["L0"], C5=v["C5"])
    one, parts = compute_script_C_prime(**kw, C2=1.0)
    two, _ = compute_script_C_prime(**kw, C2=2.0)
    zero, zparts = compute_script_C_prime(**kw, C2=0.0)
    assert one == pytest.approx(v["script_C_prime"], rel=1e-14)
    assert two > one > zero
    ratio = decay_prefactor(v["c1"], v["L0"]) / v["C5"]
    assert zparts["bracket"] == pytest.approx(ratio, rel=1e-14)
    # linear in C2
    assert two - one == pytest.approx(one - zero, rel=1e-12)
    with pytest.raises(MissingC2):
        compute_script_C_prime(**kw)


def test_default_C2_is_recorded():
    led = build_ledger(drift_ou(1.0), StableSpec(1.5), 0.01)
    assert led.inputs["C2"] == DEFAULT_C2
    assert any("C2 not supplied" in w for w in led.warnings)


def test_noise_moments():
    assert noise_abs_moment(1.5, 1, 0.0) == 1.0
    assert noise_abs_moment(1.5, 1, 1.0) == stable_abs_moment(1.5, 1.0)
    assert noise_abs_moment(1.5, 3, 0.5) == 3 * stable_abs_moment(1.5, 0.5)
    with pytest.raises(DomainError):
        noise_abs_moment(1.5, 1, 1.2)


def test_gate_warning_and_dimension_mismatch():
    led = build_ledger(drift_sine_perturbed(0.5), StableSpec(1.5), 0.1, C2=1.0)
    assert any("StepsizeGate" in w for w in led.warnings)
    with pytest.raises(DomainError):
        build_ledger(drift_ou(1.0, 2), StableSpec(1.5), 0.01)


def test_json_layout():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        led = build_ledger(drift_tanh_distant(), StableSpec(1.5), 0.01, [0.0], C2=1.0)
    doc = json.loads(led.to_json())
    assert set(doc) >= {"inputs", "values", "warnings"}
    for key in ("p_alpha", "c1", "C5", "C3_1", "C4_1", "C7", "script_C", "script_C_prime"):
        assert math.isfinite(doc["values"][key])
    assert doc["values"]["script_C"] > 0 and doc["values"]["script_C_prime"] > 0
    assert led.C3(1.0) == led.values["C3_1"] and led.C4(1.0) == led.values["C4_1"]


def test_tanh_contraction_bound_is_tiny():
    # recorded in the decisions ledger: c1 ~ 1e-10 makes the analytic bound vacuous in practice
    led = build_ledger(drift_tanh_distant(), StableSpec(1.5), 0.01, [0.0], C2=1.0)
    assert led.values["c1"] < 1e-8
    assert led.contraction_bound(1.0, 4.0) < 1e-7
