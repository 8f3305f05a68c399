"""Monte Carlo harness: single trials, parameter sweeps and slope fits.

Trial seeds are derived from ``(seed, point, trial)`` so results do not depend
on scheduling, and tables are sorted before they are written.
"""

from __future__ import annotations

import csv
import dataclasses
import io as _io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .diagnostics import (
    IncoherenceCertificate,
    certify_incoherence,
    kappa1,
    projector_decompose,
    stochastic_errors,
    oracle_error_bound,
)
from .estimator import (
    RegularizationSpec,
    SolverConfig,
    calibrate_lambda_constant,
    fit,
    optimal_rule_sample_condition,
)
from .io import dumps_json, fmt, plain
from .linalg import nuclear_norm, spectral_norm
from .model import (
    Dimensions,
    NoiseModel,
    ValidationError,
    derive_seed,
    generate_dataset,
    l2pi_norm,
    parse_distribution,
    random_ground_truth,
)

AXES = ("n", "M", "r", "sigma")
CONE_SLACK = 1e-6
_CALIBRATION_KEY = 7919


@dataclass(frozen=True)
class TrialParams:
    """Everything needed to regenerate one Monte Carlo instance."""

    m1: int = 10
    m2: int = 10
    rank: int = 2
    a: float = 1.0
    sigma: float = 1.0
    n: int = 1000
    noise: str = "gaussian"
    pi: str = "uniform"
    truth_kind: str = "sign"
    truth_seed: int = 0
    lambda_mode: str = "calibrated"
    rule: str = "theorem"
    C: float | None = None
    lam: float | None = None
    t: float = 3.0
    alpha: float = 2.0
    c0: float = 5.0
    calibration_quantile: float = 0.95
    calibration_trials: int = 200
    max_iterations: int = 5000

    def __post_init__(self):
        if self.lambda_mode not in ("explicit", "theorem_rule", "optimal_rule", "calibrated"):
            raise ValidationError(f"unknown lambda mode {self.lambda_mode!r}")
        if self.rule not in ("theorem", "optimal"):
            raise ValidationError(f"unknown lambda rule {self.rule!r}")
        if self.n < 1:
            raise ValidationError("n must be at least 1")

    @classmethod
    def from_dict(cls, d: dict) -> TrialParams:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ValidationError(f"unknown trial parameters: {', '.join(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def dims(self) -> Dimensions:
        return Dimensions(self.m1, self.m2)

    @property
    def effective_rule(self) -> str:
        return {"theorem_rule": "theorem", "optimal_rule": "optimal"}.get(self.lambda_mode, self.rule)

    def instance(self):
        """``(pi, truth, noise)`` for these parameters."""
        dims = self.dims
        pi = parse_distribution(self.pi, dims)
        truth = random_ground_truth(dims, self.rank, self.a, seed=self.truth_seed, kind=self.truth_kind)
        return pi, truth, NoiseModel(self.noise, self.sigma)

    def regularization(self) -> RegularizationSpec:
        if self.lambda_mode == "calibrated" and self.C is None:
            raise ValidationError("calibrated mode needs C; call calibrate_params first")
        C = 1.0 if self.C is None else self.C
        return RegularizationSpec.from_rule(
            self.lambda_mode, self.sigma, self.a, self.dims, self.n, t=self.t, C=C,
            beta=NoiseModel(self.noise, self.sigma).psi_exponent, rule=self.effective_rule, lam=self.lam)

    def valid(self) -> bool:
        """False when the optimal rule is used below its sample-size threshold."""
        if self.lambda_mode == "explicit" or self.effective_rule != "optimal":
            return True
        return optimal_rule_sample_condition(self.dims, self.n, NoiseModel(self.noise, self.sigma).psi_exponent)


def calibrate_params(params: TrialParams, seed: int = 0) -> TrialParams:
    """Fill in ``C`` for calibrated mode (no-op otherwise)."""
    if params.lambda_mode != "calibrated" or params.C is not None:
        return params
    pi, truth, noise = params.instance()
    C = calibrate_lambda_constant(pi, truth, noise, params.n, trials=params.calibration_trials,
                                  quantile=params.calibration_quantile,
                                  seed=derive_seed(seed, _CALIBRATION_KEY), rule=params.effective_rule, t=params.t)
    if not C > 0:
        raise ValidationError("calibration returned C = 0 (no stochastic error); use explicit lambda")
    return dataclasses.replace(params, C=C)


@dataclass
class TrialRecord:
    seed: int
    point: int
    trial: int
    m1: int
    m2: int
    rank: int
    a: float
    sigma: float
    n: int
    lam: float
    C: float | None
    t: float
    spectral_error: float
    frobenius_error: float
    nuclear_error: float
    l2pi_error: float
    M1_norm: float
    M2_norm: float
    M_norm: float
    oracle_event: bool
    cone_perp: float
    cone_part: float
    cone_event: bool
    theorem1_bound: float
    theorem1_satisfied: bool | None
    converged: bool
    iterations: int
    runtime_ms: float = field(default=0.0, compare=False)


CSV_COLUMNS = tuple(f.name for f in dataclasses.fields(TrialRecord) if f.name != "runtime_ms")


def run_trial(params: TrialParams, seed: int, certificate: IncoherenceCertificate | None = None,
              point: int = 0, trial: int = 0) -> TrialRecord:
    """Generate, fit and score one dataset.

    ``theorem1_satisfied`` is ``None`` unless the oracle event holds and the
    incoherence certificate is ``holds``.  Non-convergence is recorded in
    ``converged``.
    """
    start = time.perf_counter()
    pi, truth, noise = params.instance()
    reg = params.regularization()
    lam = reg.lam
    ds = generate_dataset(pi, truth, noise, params.n, seed)
    result = fit(pi, ds, reg, SolverConfig(max_iterations=params.max_iterations))
    delta = result.estimate - truth.matrix
    M1, M2 = stochastic_errors(pi, ds, truth)
    m1n, m2n, mn = spectral_norm(M1), spectral_norm(M2), spectral_norm(M1 + M2)
    oracle = bool(lam >= 3.0 * mn)
    part, perp = projector_decompose(truth, delta)
    cp, cq = nuclear_norm(perp), nuclear_norm(part)
    k1, _ = kappa1(pi)
    if certificate is None:
        certificate = certify_incoherence(pi, params.c0, params.alpha, max(truth.rank, 1))
    bound = oracle_error_bound(lam, k1, params.alpha)
    err = spectral_norm(delta)
    satisfied = bool(err <= bound) if (oracle and certificate.holds) else None
    return TrialRecord(
        seed=int(seed), point=point, trial=trial, m1=params.m1, m2=params.m2, rank=params.rank,
        a=params.a, sigma=params.sigma, n=params.n, lam=lam, C=reg.C, t=params.t,
        spectral_error=err, frobenius_error=float(np.linalg.norm(delta)), nuclear_error=nuclear_norm(delta),
        l2pi_error=l2pi_norm(pi, delta), M1_norm=m1n, M2_norm=m2n, M_norm=mn, oracle_event=oracle,
        cone_perp=cp, cone_part=cq, cone_event=bool(cp <= params.c0 * cq + CONE_SLACK),
        theorem1_bound=bound, theorem1_satisfied=satisfied, converged=result.converged,
        iterations=result.iterations_used, runtime_ms=1000.0 * (time.perf_counter() - start),
    )


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return fmt(v)
    return str(v)


def records_to_csv(records, config: dict | None = None) -> str:
    """Fixed-column CSV sorted by ``(point, trial, seed)``; timings are omitted."""
    buf = _io.StringIO()
    buf.write("# columns: " + ",".join(CSV_COLUMNS) + "\n")
    if config is not None:
        buf.write("# config " + json.dumps(plain(config), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rec in sorted(records, key=lambda r: (r.point, r.trial, r.seed)):
        w.writerow([_cell(getattr(rec, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def write_records_csv(path, records, config: dict | None = None):
    Path(path).write_text(records_to_csv(records, config), encoding="utf-8")


def write_timing_sidecar(path, records):
    """Per-trial wall-clock times, kept out of the deterministic outputs."""
    rows = sorted(records, key=lambda r: (r.point, r.trial, r.seed))
    lines = ["point,trial,seed,runtime_ms"] + [f"{r.point},{r.trial},{r.seed},{r.runtime_ms:.3f}" for r in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# --- slopes and sweeps ------------------------------------------------------

def slope_fit(xs, ys):
    """Least-squares line through ``(log x, log y)``.

    Returns ``(slope, intercept, stderr)``; `stderr` is 0 for three or more
    collinear points and NaN for exactly two points.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("xs and ys must be equal-length sequences")
    if x.size < 3:
        raise ValidationError("slope fit needs at least 3 points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValidationError("slope fit needs positive values")
    if np.unique(x).size != x.size:
        raise ValidationError("xs must be distinct")
    res = stats.linregress(np.log(x), np.log(y))
    stderr = float(res.stderr)
    if stderr < 1e-12 * max(1.0, abs(res.slope)):
        stderr = 0.0
    return float(res.slope), float(res.intercept), stderr


def binomial_interval(successes: int, trials: int, level: float = 0.95):
    """Clopper-Pearson interval for a binomial proportion."""
    if trials < 1:
        raise ValidationError("need at least one trial")
    ci = stats.binomtest(int(successes), int(trials)).proportion_ci(confidence_level=level, method="exact")
    return float(ci.low), float(ci.high)


def _with_axis(params: TrialParams, axis: str, value) -> TrialParams:
    if axis == "n":
        return dataclasses.replace(params, n=int(value))
    if axis == "M":
        return dataclasses.replace(params, m1=int(value), m2=int(value))
    if axis == "r":
        return dataclasses.replace(params, rank=int(value))
    if axis == "sigma":
        return dataclasses.replace(params, sigma=float(value))
    raise ValidationError(f"unknown sweep axis {axis!r}; expected one of {AXES}")


def _fit_abscissa(axis: str, p: TrialParams) -> float:
    if axis == "M":
        return math.sqrt(p.dims.M * math.log(p.dims.m))
    return float({"n": p.n, "r": p.rank, "sigma": p.sigma}[axis])


@dataclass
class SweepResult:
    axis: str
    grid: list
    points: list
    fitted_slope: float
    intercept: float
    slope_stderr: float
    fit_abscissa: list
    excluded: list
    C: float | None
    seed: int
    trials_per_point: int
    base_params: dict
    records: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("records")
        return d

    def to_json(self) -> str:
        return dumps_json(self.to_dict())


def _summary(records, params: TrialParams, valid: bool) -> dict:
    err = np.array([r.spectral_error for r in records])
    norm = err / (max(params.sigma, params.a) * math.sqrt(params.m1 * params.m2))
    oracle = sum(r.oracle_event for r in records)
    lo, hi = binomial_interval(oracle, len(records))
    return {
        "valid": valid,
        "trials": len(records),
        "median": float(np.median(norm)),
        "q10": float(np.quantile(norm, 0.10)),
        "q25": float(np.quantile(norm, 0.25)),
        "q75": float(np.quantile(norm, 0.75)),
        "q90": float(np.quantile(norm, 0.90)),
        "median_spectral_error": float(np.median(err)),
        "normalized_errors": norm.tolist(),
        "oracle_frequency": oracle / len(records),
        "oracle_ci95": [lo, hi],
        "nonconverged": sum(not r.converged for r in records),
    }


def sweep(axis: str, grid, base_params: TrialParams, trials_per_point: int = 30, seed: int = 0,
          threads: int = 1) -> SweepResult:
    """Median normalized spectral error along one axis, with a log-log slope.

    In calibrated mode ``C`` is computed once at `base_params` and reused at
    every grid point.  Points outside the validity region of the optimal
    rule are flagged and left out of the fit.  For ``axis="M"`` the grid
    gives square dimensions and the abscissa is ``sqrt(M log m)``.
    """
    if axis not in AXES:
        raise ValidationError(f"unknown sweep axis {axis!r}; expected one of {AXES}")
    grid = list(grid)
    if len(grid) < 1 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValidationError("grid must be strictly increasing")
    if trials_per_point < 30:
        raise ValidationError("sweeps need at least 30 trials per point")
    if threads < 1:
        raise ValidationError("threads must be at least 1")
    base = calibrate_params(base_params, seed)
    params = [_with_axis(base, axis, g) for g in grid]
    certs = [certify_incoherence(p.instance()[0], p.c0, p.alpha, max(p.rank, 1)) for p in params]
    tasks = [(i, k) for i in range(len(grid)) for k in range(trials_per_point)]

    def work(task):
        i, k = task
        return run_trial(params[i], derive_seed(seed, i, k), certs[i], point=i, trial=k)

    if threads == 1:
        records = [work(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(work, tasks))
    records.sort(key=lambda r: (r.point, r.trial, r.seed))
    points, xs, ys, excluded = [], [], [], []
    for i, p in enumerate(params):
        valid = p.valid()
        s = _summary([r for r in records if r.point == i], p, valid)
        s["value"] = grid[i]
        s["abscissa"] = _fit_abscissa(axis, p)
        points.append(s)
        if valid:
            xs.append(s["abscissa"])
            ys.append(s["median"])
        else:
            excluded.append(grid[i])
    if len(xs) >= 3:
        slope, intercept, stderr = slope_fit(xs, ys)
    else:
        slope = intercept = stderr = math.nan
    return SweepResult(axis, grid, points, slope, intercept, stderr, xs, excluded, base.C, seed,
                       trials_per_point, base.to_dict(), records)


def oracle_event_frequency(params: TrialParams, trials: int, seed: int = 0) -> float:
    """Fraction of datasets on which ``lam >= 3 ||M1 + M2||``."""
    if trials < 1:
        raise ValidationError("trials must be positive")
    params = calibrate_params(params, seed)
    pi, truth, noise = params.instance()
    lam = params.regularization().lam
    hits = 0
    for k in range(trials):
        ds = generate_dataset(pi, truth, noise, params.n, derive_seed(seed, 1, k))
        M1, M2 = stochastic_errors(pi, ds, truth)
        hits += lam >= 3.0 * spectral_norm(M1 + M2)
    return hits / trials
