"""Command-line front end (``lrmc``).

Exit codes: 0 success, 1 invalid input, 2 solver did not converge (fit).
Every output embeds the resolved configuration and seed; wall-clock timings
go only to ``*.timing.log`` sidecars so the primary outputs are
byte-reproducible.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import __version__
from .diagnostics import diagnose
from .estimator import RegularizationSpec, SolverConfig, fit, objective
from .experiments import (
    AXES,
    TrialParams,
    calibrate_params,
    sweep,
    write_records_csv,
    write_timing_sidecar,
)
from .io import (
    dumps_json,
    read_distribution,
    read_observations,
    read_truth,
    write_distribution,
    write_observations,
    write_truth,
)
from .lowerbound import build_packing, check_packing_conditions, export_packing
from .model import (
    NOISE_KINDS,
    Dimensions,
    NoiseModel,
    ValidationError,
    generate_dataset,
    parse_distribution,
    random_ground_truth,
)

LAMBDA_MODE_FLAGS = {"explicit": "explicit", "theorem": "theorem_rule", "optimal": "optimal_rule",
                     "calibrated": "calibrated"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def _write(path, text):
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot write {path}: {exc.strerror}") from None


def _load_config(path) -> TrialParams:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc.msg})") from None
    if not isinstance(d, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    d = d.get("params", d)
    try:
        return TrialParams.from_dict(d)
    except TypeError as exc:
        raise ValidationError(f"{path}: {exc}") from None


# --- subcommands ------------------------------------------------------------

def cmd_generate(ns):
    dims = Dimensions(*ns.dims)
    pi = parse_distribution(ns.pi, dims)
    truth = random_ground_truth(dims, ns.rank, ns.a, seed=ns.seed, kind=ns.truth_kind)
    noise = NoiseModel(ns.noise, ns.sigma)
    ds = generate_dataset(pi, truth, noise, ns.n, ns.seed)
    config = {"command": "generate", "dims": list(ns.dims), "rank": ns.rank, "sigma": ns.sigma, "a": ns.a,
              "n": ns.n, "pi": ns.pi, "noise": ns.noise, "truth_kind": ns.truth_kind, "seed": ns.seed}
    ds.provenance["config"] = config
    write_observations(ns.out, ds)
    write_truth(ns.truth_out or f"{ns.out}.truth.json", truth)
    write_distribution(ns.pi_out or f"{ns.out}.pi", pi)
    return 0


def cmd_fit(ns):
    ds = read_observations(ns.data)
    pi = read_distribution(ns.pi)
    if pi.dims != ds.dims:
        raise ValidationError(f"dimension mismatch: pi {pi.dims.shape} vs data {ds.dims.shape}")
    prov = ds.provenance or {}
    mode = LAMBDA_MODE_FLAGS[ns.lambda_mode]
    sigma = ns.sigma if ns.sigma is not None else prov.get("sigma")
    a = ns.a if ns.a is not None else prov.get("entry_bound")
    if mode != "explicit" and (sigma is None or a is None):
        raise ValidationError("rule-based lambda needs --sigma and --a (or data provenance)")
    if mode == "calibrated" and ns.C is None:
        raise ValidationError("calibrated mode needs --C (see the calibrate command)")
    beta = NoiseModel(prov.get("noise_kind", "gaussian"), 1.0).psi_exponent
    reg = RegularizationSpec.from_rule(mode, sigma or 0.0, a or 0.0, ds.dims, ds.n, t=ns.t,
                                       C=1.0 if ns.C is None else ns.C, beta=beta, rule=ns.rule, lam=ns.lam)
    result = fit(pi, ds, reg, SolverConfig(max_iterations=ns.max_iterations))
    out = {
        "config": {"command": "fit", "data": str(ns.data), "pi": str(ns.pi), "lambda_mode": ns.lambda_mode,
                   "lambda": ns.lam, "C": ns.C, "t": ns.t, "rule": ns.rule, "sigma": sigma, "a": a,
                   "max_iterations": ns.max_iterations},
        "seed": prov.get("seed"),
        "lambda": result.resolved_lambda,
        "converged": result.converged,
        "iterations": result.iterations_used,
        "objective": objective(pi, ds, result.estimate, result.resolved_lambda),
        "warnings": list(reg.warnings),
        "estimate": result.estimate,
    }
    _write(ns.out, dumps_json(out))
    if not result.converged:
        print(f"fit: solver did not converge in {result.iterations_used} iterations", file=sys.stderr)
        return 2
    return 0


def cmd_diagnose(ns):
    pi = read_distribution(ns.pi)
    truth = read_truth(ns.truth) if ns.truth else None
    ds = read_observations(ns.data) if ns.data else None
    if ds is not None and truth is None:
        raise ValidationError("--data needs --truth to evaluate the stochastic errors")
    report = diagnose(pi, truth, ds, c0=ns.c0, alpha=ns.alpha, t=ns.t, restarts=ns.restarts,
                      seed=ns.seed, mu_samples=ns.mu_samples, noise_C=ns.noise_C)
    d = report.to_dict()
    d["config"] = {"command": "diagnose", "pi": str(ns.pi), "truth": ns.truth and str(ns.truth),
                   "data": ns.data and str(ns.data), "c0": ns.c0, "alpha": ns.alpha, "t": ns.t,
                   "restarts": ns.restarts, "mu_samples": ns.mu_samples, "noise_C": ns.noise_C}
    d["seed"] = ns.seed
    _write(ns.out, dumps_json(d))
    return 0


def cmd_sweep(ns):
    base = _load_config(ns.config)
    result = sweep(ns.axis, ns.grid, base, trials_per_point=ns.trials, seed=ns.seed, threads=ns.threads)
    d = result.to_dict()
    d["config"] = {"command": "sweep", "axis": ns.axis, "grid": ns.grid, "trials": ns.trials,
                   "params": base.to_dict()}
    _write(ns.out, dumps_json(d))
    csv_path = ns.csv or f"{ns.out}.csv"
    write_records_csv(csv_path, result.records, {**d["config"], "seed": ns.seed})
    write_timing_sidecar(f"{ns.out}.timing.log", result.records)
    return 0


def cmd_lowerbound(ns):
    m1, m2 = ns.dims
    if m1 < m2:
        raise ValidationError("lowerbound needs m1 >= m2 (pass the larger dimension first)")
    dims = Dimensions(m1, m2)
    packing = build_packing(dims, ns.rank, ns.sigma, ns.a, ns.n, ns.gamma, seed=ns.seed,
                            max_attempts=ns.max_attempts)
    report = check_packing_conditions(packing, alpha=ns.alpha)
    config = {"command": "lowerbound", "dims": list(ns.dims), "rank": ns.rank, "gamma": ns.gamma,
              "sigma": ns.sigma, "a": ns.a, "n": ns.n, "alpha": ns.alpha, "max_attempts": ns.max_attempts,
              "seed": ns.seed}
    export_packing(packing, report, ns.out, config)
    return 0


def cmd_calibrate(ns):
    base = _load_config(ns.config)
    params = dataclasses.replace(base, lambda_mode="calibrated", C=None, calibration_quantile=ns.quantile,
                                 calibration_trials=ns.trials)
    params = calibrate_params(params, ns.seed)
    out = {"config": {"command": "calibrate", "quantile": ns.quantile, "trials": ns.trials,
                      "params": base.to_dict()},
           "seed": ns.seed, "C": params.C, "rule": params.effective_rule,
           "lambda": params.regularization().lam}
    _write(ns.out, dumps_json(out))
    return 0


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lrmc", description="Nuclear-norm penalized matrix completion toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="simulate observations")
    g.add_argument("--dims", nargs=2, type=int, required=True, metavar=("M1", "M2"))
    g.add_argument("--rank", type=int, required=True)
    g.add_argument("--sigma", type=float, required=True)
    g.add_argument("--a", type=float, required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--pi", default="uniform", help="uniform or powerlaw:ROW_EXP,COL_EXP,FLOOR")
    g.add_argument("--noise", default="gaussian", choices=list(NOISE_KINDS))
    g.add_argument("--truth-kind", default="sign", choices=["sign", "gaussian"])
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--truth-out")
    g.add_argument("--pi-out")
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="fit the penalized estimator")
    f.add_argument("--data", required=True)
    f.add_argument("--pi", required=True)
    f.add_argument("--lambda-mode", required=True, choices=list(LAMBDA_MODE_FLAGS))
    f.add_argument("--lambda", dest="lam", type=float)
    f.add_argument("--C", type=float)
    f.add_argument("--t", type=float, default=3.0)
    f.add_argument("--rule", default="optimal", choices=["theorem", "optimal"],
                   help="formula scaled by C in calibrated mode")
    f.add_argument("--sigma", type=float)
    f.add_argument("--a", type=float)
    f.add_argument("--max-iterations", type=int, default=5000)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    d = sub.add_parser("diagnose", help="sampling-geometry diagnostics")
    d.add_argument("--pi", required=True)
    d.add_argument("--truth")
    d.add_argument("--data")
    d.add_argument("--c0", type=float, default=5.0)
    d.add_argument("--alpha", type=float, default=2.0)
    d.add_argument("--t", type=float, default=3.0)
    d.add_argument("--restarts", type=int, default=10)
    d.add_argument("--mu-samples", type=int, default=100)
    d.add_argument("--noise-C", dest="noise_C", type=float, default=1.0)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("sweep", help="Monte Carlo rate sweep")
    s.add_argument("--axis", required=True, choices=list(AXES))
    s.add_argument("--grid", nargs="+", type=float, required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--trials", type=int, default=30)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--csv")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    lb = sub.add_parser("lowerbound", help="build and check a packing set")
    lb.add_argument("--dims", nargs=2, type=int, required=True, metavar=("M1", "M2"))
    lb.add_argument("--rank", type=int, required=True)
    lb.add_argument("--gamma", type=float, required=True)
    lb.add_argument("--sigma", type=float, default=1.0)
    lb.add_argument("--a", type=float, default=1.0)
    lb.add_argument("--n", type=int, required=True)
    lb.add_argument("--alpha", type=float, default=1.0 / 16.0)
    lb.add_argument("--max-attempts", type=int, default=100_000)
    lb.add_argument("--seed", type=int, default=0)
    lb.add_argument("--out", required=True, help="output directory")
    lb.set_defaults(func=cmd_lowerbound)

    c = sub.add_parser("calibrate", help="Monte Carlo constant for the lambda rule")
    c.add_argument("--config", required=True)
    c.add_argument("--quantile", type=float, default=0.95)
    c.add_argument("--trials", type=int, default=200)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        return ns.func(ns)
    except ValidationError as exc:
        print(f"error: {str(exc).splitlines()[0]}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
