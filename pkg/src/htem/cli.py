"""Command-line entry point: ``htem <subcommand> ...``.

Exit codes: 0 success, 1 configuration error, 2 bound violation or
divergence.  Outputs never contain timings, so identical inputs give
identical bytes.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any

import numpy as np

from .constants import build_ledger
from .drifts import drift_from_config
from .errors import BoundViolated, ConfigInvalid, HtemError, TrajectoryDiverged
from .harness import (
    SCHEMA_VERSION,
    ou_invariant_w1_check,
    ou_oracle,
    rate_csv,
    run_convergence,
    run_ergodicity_audit,
    study_from_config,
)
from .rng import RngStream, set_threads_from_env
from .schemes import Scheme, SchemeConfig, simulate_ensemble, write_binary, write_csv
from .stable import StableSpec, sample_pareto, sample_stable

EXIT_OK, EXIT_CONFIG, EXIT_BOUND = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; here 2 means a violated bound
    def error(self, message):
        raise _UsageError(message)


def _dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _emit(text: str, path: str | None) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _load_config(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigInvalid("config must be a JSON object")
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ConfigInvalid(f"schema_version must be {SCHEMA_VERSION}")
    return cfg


def _drift_cfg(args, cfg: dict[str, Any]) -> dict[str, Any]:
    drift = dict(cfg.get("drift", {}))
    for key, val in (("kind", args.drift), ("theta", args.theta), ("a", args.a), ("dim", args.dim)):
        if val is not None:
            drift[key] = val
    drift.setdefault("kind", "ou")
    return drift


def _pick(args, cfg, name, default=None):
    val = getattr(args, name, None)
    if val is not None:
        return val
    return cfg.get(name, default)


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config (schema_version 1)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--drift", choices=["ou", "sine", "tanh"])
    p.add_argument("--theta", type=float, help="OU rate")
    p.add_argument("--a", type=float, help="sine perturbation amplitude")
    p.add_argument("--dim", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--seed", type=int)


def _x0(args, cfg, dim: int) -> list[float]:
    x0 = _pick(args, cfg, "x0")
    if x0 is None:
        return [0.0] * dim
    x0 = [float(v) for v in np.atleast_1d(x0)]
    if len(x0) != dim:
        raise ConfigInvalid(f"x0 has {len(x0)} entries, drift dimension is {dim}")
    return x0


def _require(value, name):
    if value is None:
        raise ConfigInvalid(f"missing required setting '{name}'")
    return value


# ---------------------------------------------------------------------------
# subcommands


def cmd_sample(args) -> int:
    StableSpec(args.alpha, args.dim)  # validates alpha and dim
    out = np.empty((args.n, args.dim))
    for c in range(args.dim):
        stream = RngStream(args.seed, args.stream + c)
        if args.kind == "stable":
            out[:, c] = sample_stable(stream, args.alpha, args.scale, args.n)
        else:
            out[:, c] = sample_pareto(stream, args.alpha, args.n)
    write_csv(args.out if args.out not in (None, "-") else sys.stdout, out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    model = drift_from_config(_drift_cfg(args, cfg))
    alpha = float(_require(_pick(args, cfg, "alpha"), "alpha"))
    spec = StableSpec(alpha, model.dim)
    scheme = Scheme(_pick(args, cfg, "scheme", "StableEM"))
    eta = float(_require(_pick(args, cfg, "eta"), "eta"))
    n_steps = int(_require(_pick(args, cfg, "n_steps"), "n_steps"))
    conf = SchemeConfig(eta, n_steps, scheme, tuple(_x0(args, cfg, model.dim)),
                        int(_pick(args, cfg, "seed", 0)), int(_pick(args, cfg, "n_traj", 1000)))
    ens = simulate_ensemble(conf, model, spec)
    if args.format == "binary":
        if args.out in (None, "-"):
            raise ConfigInvalid("binary output needs --out PATH")
        write_binary(args.out, ens.terminal_states)
    else:
        write_csv(args.out if args.out not in (None, "-") else sys.stdout, ens.terminal_states)
    return EXIT_OK


def cmd_converge(args) -> int:
    cfg = _load_config(_require(args.config, "--config"))
    for key in ("n_traj", "repeats", "seed"):
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    study = study_from_config(cfg)
    fit = run_convergence(study)
    _emit(rate_csv(fit, study), args.csv)
    report = fit.to_dict()
    report["study"] = {
        "scheme": study.scheme.value, "alpha": study.alpha, "drift": study.drift.to_config(),
        "horizon_T": study.horizon_T, "n_traj": study.n_traj, "repeats": study.repeats,
        "seed": study.seed, "reference": study.reference_kind, "eta_grid": list(study.eta_grid),
    }
    if args.fit_json:
        Path(args.fit_json).write_text(_dumps(report))
    if not fit.bound_ok:
        bad = [r for r in fit.per_eta if not r.bound_ok][0]
        raise BoundViolated(fit.bound_name, bad.eta, bad.bound - bad.w1_median)
    return EXIT_OK


def cmd_constants(args) -> int:
    cfg = _load_config(args.config)
    model = drift_from_config(_drift_cfg(args, cfg))
    alpha = float(_require(_pick(args, cfg, "alpha"), "alpha"))
    eta = float(_pick(args, cfg, "eta", 0.01))
    ledger = build_ledger(model, StableSpec(alpha, model.dim), eta, _x0(args, cfg, model.dim),
                          C2=_pick(args, cfg, "C2"))
    _emit(ledger.to_json() + "\n", args.out)
    return EXIT_OK


def cmd_oracle_ou(args) -> int:
    out: dict[str, Any] = ou_oracle(args.alpha, args.eta).to_dict()
    if args.w1_check:
        out["w1_check"] = ou_invariant_w1_check(args.alpha, args.eta, args.n_traj, args.seed).to_dict()
    _emit(_dumps(out), args.out)
    return EXIT_OK


def cmd_audit(args) -> int:
    cfg = _load_config(args.config)
    model = drift_from_config(_drift_cfg(args, cfg))
    alpha = float(_require(_pick(args, cfg, "alpha"), "alpha"))
    eta = float(_pick(args, cfg, "eta", 0.01))
    checkpoints = _pick(args, cfg, "checkpoints", [10, 1000])
    report = run_ergodicity_audit(
        _pick(args, cfg, "scheme", "StableEM"), model, alpha, eta,
        checkpoints=tuple(int(k) for k in checkpoints),
        n_traj=int(_pick(args, cfg, "n_traj", 20_000)), seed=int(_pick(args, cfg, "seed", 0)),
        raise_on_violation=False)
    _emit(_dumps(report.to_dict()), args.out)
    if not report.ok:
        bad = next((c for c in report.checks if not c.ok), None)
        if bad is not None:
            raise BoundViolated(bad.what, bad.checkpoint, bad.margin)
        raise BoundViolated("mixing between starts", checkpoints[-1], 0.0)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable errors on stderr")
    p = _Parser(prog="htem", description="Heavy-tailed SDE schemes, constants and rate studies.",
                parents=[common])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("sample", parents=[common], help="raw stable or Pareto draws as CSV")
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--kind", choices=["stable", "pareto"], default="stable")
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--dim", type=int, default=1)
    s.add_argument("--scale", type=float, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--stream", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("simulate", parents=[common], help="terminal states of an ensemble")
    _add_model_args(s)
    s.add_argument("--scheme", choices=[m.value for m in Scheme])
    s.add_argument("--n-steps", dest="n_steps", type=int)
    s.add_argument("--n-traj", dest="n_traj", type=int)
    s.add_argument("--x0", type=float, nargs="+")
    s.add_argument("--format", choices=["csv", "binary"], default="csv")
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("converge", parents=[common], help="convergence-rate study from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--csv", default="-", help="rate CSV path (default stdout)")
    s.add_argument("--fit-json", dest="fit_json", help="path for the fit JSON")
    s.add_argument("--n-traj", dest="n_traj", type=int)
    s.add_argument("--repeats", type=int)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_converge)

    s = sub.add_parser("constants", parents=[common], help="constant ledger as JSON")
    _add_model_args(s)
    s.add_argument("--x0", type=float, nargs="+")
    s.add_argument("--C2", type=float)
    s.add_argument("--out")
    s.set_defaults(func=cmd_constants)

    s = sub.add_parser("oracle-ou", parents=[common], help="closed-form OU stationary comparison")
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--eta", type=float, required=True)
    s.add_argument("--w1-check", dest="w1_check", action="store_true")
    s.add_argument("--n-traj", dest="n_traj", type=int, default=1_000_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_oracle_ou)

    s = sub.add_parser("audit", parents=[common], help="moment-bound and mixing audit")
    _add_model_args(s)
    s.add_argument("--scheme", choices=["StableEM", "ParetoEM"])
    s.add_argument("--checkpoints", type=int, nargs="+")
    s.add_argument("--n-traj", dest="n_traj", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_audit)
    return p


def _fail(code: int, exc: BaseException, as_json: bool) -> int:
    if as_json:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "exit_code": code,
                                     "message": str(exc)}, sort_keys=True) + "\n")
    else:
        sys.stderr.write(f"htem: error: {exc}\n")
    return code


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    as_json = "--json" in argv
    set_threads_from_env()
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        return _fail(EXIT_CONFIG, ConfigInvalid(str(exc)), as_json)
    except (BoundViolated, TrajectoryDiverged) as exc:
        return _fail(EXIT_BOUND, exc, as_json)
    except (HtemError, ValueError) as exc:
        return _fail(EXIT_CONFIG, exc, as_json)


if __name__ == "__main__":
    sys.exit(main())
