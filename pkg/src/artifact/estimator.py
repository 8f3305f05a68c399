"""Nuclear-norm penalized least squares on the completion basis.

The estimator minimizes

    F(A) = ||A||^2_{L2(pi)} - 2 <S, A> + lam * ||A||_1

where ``S = (1/n) sum_i Y_i E_{j_i k_i}`` is the empirical moment matrix.  The
smooth part has gradient ``2 pi * A - 2 S`` (entrywise), whose Lipschitz
constant is exactly ``2 max(pi)``.

Prox convention: with step ``h`` the update is
``A+ = svt_prox(A - h * grad, h * lam)``, where ``svt_prox(X, tau)``
minimizes ``0.5 ||Z - X||_F^2 + tau ||Z||_1``.  For uniform ``pi`` and
``h = 1/(2 max pi) = m1 m2 / 2`` a single step from any point lands on
``svt_prox(m1 m2 S, lam m1 m2 / 2)``, the closed form.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .linalg import nuclear_norm, svt_prox
from .model import (
    Dataset,
    Dimensions,
    GroundTruth,
    NoiseModel,
    SamplingDistribution,
    ValidationError,
    derive_seed,
    generate_dataset,
)

__all__ = [
    "FitResult",
    "RegularizationSpec",
    "SolverConfig",
    "calibrate_lambda_constant",
    "closed_form_uniform",
    "empirical_moment",
    "fit",
    "kkt_residuals",
    "lambda_formula",
    "objective",
    "optimal_rule_sample_condition",
    "resolve_lambda",
    "smooth_gradient",
    "stochastic_norm_samples",
    "svt_prox",
]

LAMBDA_MODES = ("explicit", "theorem_rule", "optimal_rule", "calibrated")


class SampleSizeWarning(UserWarning):
    """n is below the range where the optimal lambda rule is justified."""


def empirical_moment(dataset: Dataset) -> np.ndarray:
    """``S[j, k] = (1/n) * sum of Y_i over observations of entry (j, k)``."""
    if dataset.n == 0:
        raise ValidationError("dataset is empty")
    d = dataset.dims
    return _kernels.accumulate(dataset.rows, dataset.cols, dataset.values, d.m1, d.m2) / dataset.n


def _check(pi, dataset, A=None):
    if pi.dims != dataset.dims:
        raise ValidationError(f"dimension mismatch: pi {pi.dims.shape} vs data {dataset.dims.shape}")
    if A is not None and np.shape(A) != pi.dims.shape:
        raise ValidationError(f"matrix shape {np.shape(A)} does not match dims {pi.dims.shape}")


def _smooth_value(pmf, S, A):
    return float(np.sum(pmf * A * A) - 2.0 * np.sum(S * A))


def objective(pi: SamplingDistribution, dataset: Dataset, A, lam: float) -> float:
    _check(pi, dataset, A)
    A = np.asarray(A, dtype=float)
    return _smooth_value(pi.pmf, empirical_moment(dataset), A) + lam * nuclear_norm(A)


def smooth_gradient(pi: SamplingDistribution, dataset: Dataset, A) -> np.ndarray:
    _check(pi, dataset, A)
    return 2.0 * pi.pmf * np.asarray(A, dtype=float) - 2.0 * empirical_moment(dataset)


# --- regularization -------------------------------------------------------

def _log_factor(min_dim, beta):
    if math.isinf(beta):
        return 1.0
    return math.log(min_dim) ** (1.0 / beta)


def lambda_formula(rule: str, sigma: float, a: float, dims: Dimensions, n: int, t: float = 3.0, beta: float = 2.0) -> float:
    """The regularization level with constant ``C = 1``.

    ``rule="theorem"`` is the high-probability level for confidence `t`;
    ``rule="optimal"`` is the rate-optimal choice ``(sigma v a) sqrt(log m / ((m1 ^ m2) n))``.
    """
    if n < 1:
        raise ValidationError("n must be positive")
    if sigma < 0 or a < 0:
        raise ValidationError("sigma and a must be nonnegative")
    scale = max(sigma, a)
    lm = math.log(dims.m)
    if rule == "optimal":
        return scale * math.sqrt(lm / (dims.min_dim * n))
    if rule == "theorem":
        if t is None or t <= 0:
            raise ValidationError("theorem rule needs t > 0")
        first = math.sqrt((t + lm) / (dims.min_dim * n))
        second = (t + lm) * _log_factor(dims.min_dim, beta) / n
        return scale * max(first, second)
    raise ValidationError(f"unknown lambda rule {rule!r}")


def optimal_rule_sample_condition(dims: Dimensions, n: int, beta: float = 2.0) -> bool:
    """True when ``n > M * log(m)**(1 + 2/beta)``."""
    expo = 1.0 if math.isinf(beta) else 1.0 + 2.0 / beta
    return n > dims.M * math.log(dims.m) ** expo


def resolve_lambda(mode, sigma, a, dims, n, t=3.0, C=1.0, beta=2.0, rule="optimal", lam=None) -> float:
    """Evaluate the regularization level for `mode`.

    ``calibrated`` scales `rule` by a Monte Carlo constant `C`.  For the
    optimal rule a :class:`SampleSizeWarning` is issued when `n` is too small.
    """
    if mode == "explicit":
        if lam is None or not lam > 0:
            raise ValidationError("explicit mode needs lambda > 0")
        return float(lam)
    if sigma < 0 or a < 0 or (sigma == 0 and a == 0):
        raise ValidationError("need sigma >= 0, a >= 0 and max(sigma, a) > 0")
    if C is None or not C > 0:
        raise ValidationError("constant C must be positive")
    if mode == "theorem_rule":
        rule = "theorem"
    elif mode == "optimal_rule":
        rule = "optimal"
    elif mode != "calibrated":
        raise ValidationError(f"unknown lambda mode {mode!r}; expected one of {LAMBDA_MODES}")
    if rule == "optimal" and not optimal_rule_sample_condition(dims, n, beta):
        warnings.warn(
            f"n={n} is not above M*log(m)^(1+2/beta) for dims {dims.shape}; optimal lambda rule not justified",
            SampleSizeWarning,
            stacklevel=2,
        )
    return C * lambda_formula(rule, sigma, a, dims, n, t, beta)


@dataclass(frozen=True)
class RegularizationSpec:
    mode: str
    lam: float
    C: float | None = None
    t: float | None = None
    rule: str | None = None
    warnings: tuple = ()

    def __post_init__(self):
        if self.mode not in LAMBDA_MODES:
            raise ValidationError(f"unknown lambda mode {self.mode!r}")
        if not self.lam > 0:
            raise ValidationError("resolved lambda must be positive")

    @classmethod
    def explicit(cls, lam):
        return cls("explicit", float(lam))

    @classmethod
    def from_rule(cls, mode, sigma, a, dims, n, t=3.0, C=1.0, beta=2.0, rule="optimal", lam=None):
        """Resolve `mode` and record any sample-size warning instead of emitting it."""
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", SampleSizeWarning)
            value = resolve_lambda(mode, sigma, a, dims, n, t=t, C=C, beta=beta, rule=rule, lam=lam)
        notes = tuple(str(w.message) for w in caught if issubclass(w.category, SampleSizeWarning))
        if mode == "theorem_rule":
            rule = "theorem"
        elif mode == "optimal_rule":
            rule = "optimal"
        elif mode == "explicit":
            rule, C = None, None
        return cls(mode, value, C=C, t=t if rule == "theorem" else None, rule=rule, warnings=notes)


# --- solver -----------------------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 5000
    relative_objective_tolerance: float = 1e-10
    # relative size of one prox-gradient step at the returned point
    fixed_point_tolerance: float = 1e-9
    step_size: float | str = "auto"
    acceleration: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be at least 1")
        if not self.relative_objective_tolerance > 0 or not self.fixed_point_tolerance > 0:
            raise ValidationError("tolerances must be positive")
        if self.step_size != "auto" and not (isinstance(self.step_size, (int, float)) and self.step_size > 0):
            raise ValidationError("step_size must be 'auto' or a positive number")


@dataclass
class FitResult:
    estimate: np.ndarray
    objective_trace: list = field(default_factory=list)
    iterations_used: int = 0
    converged: bool = False
    resolved_lambda: float = 0.0


def _prox_step(pmf, S, X, step, lam):
    Z = X - step * (2.0 * pmf * X - 2.0 * S)
    U, s, Vt = np.linalg.svd(Z, full_matrices=False)
    shrunk = np.maximum(s - step * lam, 0.0)
    keep = shrunk > 0
    out = (U[:, keep] * shrunk[keep]) @ Vt[keep] if np.any(keep) else np.zeros_like(X)
    return out, float(shrunk.sum())


def fit(pi: SamplingDistribution, dataset: Dataset, reg, config: SolverConfig | None = None) -> FitResult:
    """Accelerated proximal gradient from the zero matrix.

    Momentum is reset (and the step redone from the last iterate) whenever it
    would increase the objective, so the trace is nonincreasing in both modes.
    """
    config = config or SolverConfig()
    _check(pi, dataset)
    lam = reg.lam if isinstance(reg, RegularizationSpec) else float(reg)
    if not lam > 0:
        raise ValidationError("lambda must be positive")
    pmf = pi.pmf
    S = empirical_moment(dataset)
    step = 1.0 / (2.0 * pi.max_prob) if config.step_size == "auto" else float(config.step_size)

    def F(A, nuc):
        return _smooth_value(pmf, S, A) + lam * nuc

    x = np.zeros(pi.dims.shape)
    fx = 0.0
    y, t = x, 1.0
    trace = [fx]
    converged = False
    it = 0
    for it in range(1, config.max_iterations + 1):
        x_new, nuc = _prox_step(pmf, S, y, step, lam)
        f_new = F(x_new, nuc)
        if config.acceleration and f_new > fx and y is not x:
            t = 1.0
            x_new, nuc = _prox_step(pmf, S, x, step, lam)
            f_new = F(x_new, nuc)
        trace.append(f_new)
        rel = abs(fx - f_new) / max(abs(fx), abs(f_new), 1e-300)
        if rel <= config.relative_objective_tolerance:
            probe, probe_nuc = _prox_step(pmf, S, x_new, step, lam)
            scale = max(np.linalg.norm(x_new), 1e-300)
            if np.linalg.norm(probe - x_new) <= config.fixed_point_tolerance * scale:
                x, fx = x_new, f_new
                converged = True
                break
        if config.acceleration:
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            y = x_new + ((t - 1.0) / t_next) * (x_new - x)
            t = t_next
        else:
            y = x_new
        x, fx = x_new, f_new
    return FitResult(x, trace, it, converged, lam)


def closed_form_uniform(dataset: Dataset, dims: Dimensions, lam: float) -> np.ndarray:
    """Exact minimizer when every entry has probability ``1/(m1 m2)``."""
    if dataset.dims != dims:
        raise ValidationError("dataset dims differ from dims")
    mm = dims.size
    return svt_prox(mm * empirical_moment(dataset), lam * mm / 2.0)


def kkt_residuals(pi: SamplingDistribution, dataset: Dataset, A, lam: float, rtol: float = 1e-8):
    """Optimality gaps at `A`.

    Returns ``(on_support, off_support)``: the Frobenius norm of
    ``P_T(G) + lam U V^T`` and ``max(0, ||P_T^perp(G)||_inf - lam)``, where
    ``G`` is the smooth gradient and ``T`` the tangent space of `A`.
    """
    G = smooth_gradient(pi, dataset, A)
    U, s, Vt = np.linalg.svd(np.asarray(A, dtype=float), full_matrices=False)
    r = int(np.sum(s > rtol * max(s[0], 1e-300))) if s.size and s[0] > 0 else 0
    U, V = U[:, :r], Vt[:r].T
    P1 = np.eye(A.shape[0]) - U @ U.T
    P2 = np.eye(A.shape[1]) - V @ V.T
    off = P1 @ G @ P2
    on = G - off
    on_res = float(np.linalg.norm(on + lam * (U @ V.T)))
    off_norm = float(np.linalg.norm(off, 2)) if off.size else 0.0
    return on_res, max(0.0, off_norm - lam)


# --- calibration ------------------------------------------------------------

def stochastic_norm_samples(pi, truth: GroundTruth, noise: NoiseModel, n: int, trials: int, seed: int) -> np.ndarray:
    """Spectral norms ``(||M1||, ||M2||, ||M1 + M2||)`` over `trials` datasets."""
    from .diagnostics import stochastic_errors

    out = np.empty((trials, 3))
    for i in range(trials):
        ds = generate_dataset(pi, truth, noise, n, derive_seed(seed, i))
        M1, M2 = stochastic_errors(pi, ds, truth)
        out[i] = np.linalg.norm(M1, 2), np.linalg.norm(M2, 2), np.linalg.norm(M1 + M2, 2)
    return out


def calibrate_lambda_constant(pi, truth, noise, n, trials=200, quantile=0.95, seed=0, rule="theorem", t=3.0) -> float:
    """Constant C making ``C * lambda_formula(rule)`` exceed ``3 ||M1 + M2||``
    with probability close to `quantile`.

    Returns 0.0 when the stochastic error vanishes identically (no noise and a
    zero truth).
    """
    if trials < 30:
        raise ValidationError("calibration needs at least 30 trials")
    if not 0.5 < quantile < 1.0:
        raise ValidationError("quantile must lie in (0.5, 1)")
    raw = 3.0 * stochastic_norm_samples(pi, truth, noise, n, trials, seed)[:, 2]
    q = float(np.quantile(raw, quantile))
    if q == 0.0:
        return 0.0
    base = lambda_formula(rule, noise.sigma, truth.entry_bound, pi.dims, n, t, noise.psi_exponent)
    if base == 0.0:
        raise ValidationError("degenerate noise: sigma = 0 and a = 0")
    return q / base
