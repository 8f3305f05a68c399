"""Sampling-geometry diagnostics and stochastic error bounds.

The distortion constants kappa_1 / kappa_1' have a closed form on the
completion basis (square roots of the smallest and largest entry
probability).  The coherence rho and the restricted constant mu_{c0} are
suprema over continua, so the searches below return lower bounds together
with the witnesses that achieve them.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .linalg import nuclear_norm, project_nuclear_ball, spectral_norm
from .model import (
    Dataset,
    GroundTruth,
    SamplingDistribution,
    ValidationError,
    l2pi_norm,
    make_rng,
)


# --- distortion constants ---------------------------------------------------

def kappa1(pi: SamplingDistribution) -> tuple[float, float]:
    """``(sqrt(min pi), sqrt(max pi))``.

    For unit rank-one ``B = u v^T`` the weighted norm is a bilinear form in
    ``(u**2, v**2)`` over a product of simplices, so its extremes sit at
    vertices, i.e. at single entries.
    """
    return math.sqrt(pi.min_prob), math.sqrt(pi.max_prob)


def _orthonormal_completion(Q, r, rng):
    """Extend the orthonormal columns of Q to r columns."""
    m, k = Q.shape
    if k >= r:
        return Q[:, :r]
    extra = rng.standard_normal((m, r - k))
    extra -= Q @ (Q.T @ extra)
    full, _ = np.linalg.qr(np.hstack([Q, extra]))
    return full[:, :r]


def _extreme_half_step(pmf, V, largest):
    """Best U for fixed orthonormal V: one row of U, chosen blockwise by eigenvalue."""
    # Q_j = sum_k pi[j,k] v_k v_k^T for every row j
    Q = np.einsum("jk,ka,kb->jab", pmf, V, V)
    w, vecs = np.linalg.eigh(Q)
    col = -1 if largest else 0
    vals = w[:, col]
    j = int(np.argmax(vals) if largest else np.argmin(vals))
    U = np.zeros((pmf.shape[0], V.shape[1]))
    U[j] = vecs[j, :, col]
    return U, float(vals[j])


def _range_basis(B):
    U, s, _ = np.linalg.svd(B, full_matrices=False)
    return U[:, s > 1e-12 * max(s[0], 1e-300)]


def _alternate(pmf, V, largest, sweeps, rng):
    r = V.shape[1]
    value = None
    for _ in range(sweeps):
        U, _ = _extreme_half_step(pmf, V, largest)
        Ub = _orthonormal_completion(_range_basis(U @ V.T), r, rng)
        Vn, new = _extreme_half_step(pmf.T, Ub, largest)
        V = _orthonormal_completion(_range_basis((Ub @ Vn.T).T), r, rng)
        if value is not None and abs(new - value) <= 1e-15:
            return new
        value = new
    return value


def kappa_r_heuristic(pi: SamplingDistribution, r: int, restarts: int = 20, seed: int = 0) -> tuple[float, float]:
    """Search-based estimates of ``(kappa_r, kappa_r')``.

    Alternates exact blockwise minimization (maximization) of
    ``||U V^T||_{L2(pi)}`` over one factor with the other held orthonormal.
    Starts: every coordinate subspace spanned by consecutive basis vectors
    plus `restarts` random orthonormal frames.  The first value is an upper
    bound on kappa_r and the second a lower bound on kappa_r'.
    """
    m1, m2 = pi.dims.shape
    if not 1 <= r <= pi.dims.min_dim:
        raise ValidationError("r must lie in [1, min(m1, m2)]")
    rng = make_rng(seed)
    pmf = pi.pmf
    starts = []
    for k in range(m2):
        idx = [(k + i) % m2 for i in range(r)]
        starts.append(np.eye(m2)[:, idx])
    for _ in range(restarts):
        starts.append(np.linalg.qr(rng.standard_normal((m2, r)))[0])
    lo, hi = math.inf, 0.0
    for V in starts:
        lo = min(lo, _alternate(pmf, V, False, 50, rng))
        hi = max(hi, _alternate(pmf, V, True, 50, rng))
    return math.sqrt(max(lo, 0.0)), math.sqrt(hi)


# --- coherence --------------------------------------------------------------

def _weighted_ratio(pmf, A, B):
    den = nuclear_norm(A) * nuclear_norm(B)
    if den == 0:
        return 0.0
    return abs(float(np.sum(pmf * A * B))) / den


def _project_out(B, A):
    return B - (np.sum(A * B) / np.sum(A * A)) * A


def _nuclear_subgradient(A):
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    keep = s > 1e-12 * max(s[0], 1e-300)
    return U[:, keep] @ Vt[keep]


def _rho_ascent(pmf, A, B, iterations):
    A = A / np.linalg.norm(A)
    B = _project_out(B, A)
    B = B / np.linalg.norm(B)
    f = _weighted_ratio(pmf, A, B)
    eta = 0.1
    for _ in range(iterations):
        inner = float(np.sum(pmf * A * B))
        if inner == 0.0:
            break
        sgn = math.copysign(1.0, inner)
        nA, nB = nuclear_norm(A), nuclear_norm(B)
        gA = sgn * pmf * B / (nA * nB) - f * _nuclear_subgradient(A) / nA
        gB = sgn * pmf * A / (nA * nB) - f * _nuclear_subgradient(B) / nB
        while eta > 1e-10:
            A2 = A + eta * gA
            A2 /= np.linalg.norm(A2)
            B2 = _project_out(B + eta * gB, A2)
            nb = np.linalg.norm(B2)
            if nb > 0:
                B2 /= nb
                f2 = _weighted_ratio(pmf, A2, B2)
                if f2 > f:
                    A, B, f = A2, B2, f2
                    eta *= 1.5
                    break
            eta *= 0.5
        else:
            break
    return f, A, B


def rho_search(pi: SamplingDistribution, restarts: int = 20, seed: int = 0, iterations: int = 200, seeds=()):
    """Lower bound on the coherence ``rho(pi)`` with a trace-orthogonal witness.

    Returns ``(value, A, B)`` where ``<A, B> = 0`` and
    ``value = |<A, B>_{L2(pi)}| / (||A||_1 ||B||_1)``.  Pairs passed in
    `seeds` are orthogonalized and used as extra starting points, so the
    result is never below their ratio.
    """
    rng = make_rng(seed)
    pmf = pi.pmf
    shape = pi.dims.shape
    starts = [(np.asarray(a, dtype=float), np.asarray(b, dtype=float)) for a, b in seeds]
    for i in range(restarts):
        if i % 2 == 0:
            starts.append((rng.standard_normal(shape), rng.standard_normal(shape)))
        else:
            # diagonal-structured start: A ~ positive weights, B ~ signed weights
            A = np.zeros(shape)
            B = np.zeros(shape)
            d = min(shape)
            A[np.arange(d), np.arange(d)] = rng.uniform(0.5, 1.5, d)
            B[np.arange(d), np.arange(d)] = rng.standard_normal(d)
            starts.append((A + 0.01 * rng.standard_normal(shape), B))
    best = (0.0, None, None)
    for A, B in starts:
        if not np.any(A) or not np.any(_project_out(B, A)):
            continue
        f, A, B = _rho_ascent(pmf, A, B, iterations)
        if f > best[0] or best[1] is None:
            best = (f, A, B)
    value, A, B = best
    if A is None:
        A = np.zeros(shape)
        B = np.zeros(shape)
    return float(value), A, B


# --- incoherence certificate ------------------------------------------------

@dataclass(frozen=True)
class IncoherenceCertificate:
    status: str  # "holds", "not_refuted" or "refuted"
    rho: float
    threshold: float
    c0: float
    alpha: float
    r: int
    exact: bool
    search_restarts: int = 0

    @property
    def holds(self) -> bool:
        return self.status == "holds"


def incoherence_threshold(kappa1_value, c0, alpha, r):
    return kappa1_value**2 / ((1 + 2 * c0) * alpha * r)


def check_assumption_incoherence(kappa1_value, rho_value, c0, alpha, r, exact=False, search_restarts=0) -> IncoherenceCertificate:
    """Compare ``rho`` with ``kappa1**2 / ((1 + 2 c0) alpha r)``.

    With ``exact=False`` the rho value is a search lower bound, so passing the
    comparison only means "not refuted".
    """
    if alpha <= 1:
        raise ValidationError("alpha must exceed 1")
    if c0 < 0 or r < 1:
        raise ValidationError("need c0 >= 0 and r >= 1")
    thr = incoherence_threshold(kappa1_value, c0, alpha, r)
    if rho_value <= thr:
        status = "holds" if exact else "not_refuted"
    else:
        status = "refuted"
    return IncoherenceCertificate(status, float(rho_value), float(thr), float(c0), float(alpha), int(r), bool(exact), search_restarts)


def certify_incoherence(pi: SamplingDistribution, c0=5.0, alpha=2.0, r=1, restarts=10, seed=0) -> IncoherenceCertificate:
    """Certificate for `pi`: exact under uniform sampling (rho = 0), searched otherwise."""
    k1, _ = kappa1(pi)
    if pi.is_uniform:
        return check_assumption_incoherence(k1, 0.0, c0, alpha, r, exact=True)
    rho, _, _ = rho_search(pi, restarts=restarts, seed=seed)
    return check_assumption_incoherence(k1, rho, c0, alpha, r, exact=False, search_restarts=restarts)


# --- projectors and cone ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class ProjectorPair:
    S1_basis: np.ndarray
    S2_basis: np.ndarray

    def __post_init__(self):
        for Q in (self.S1_basis, self.S2_basis):
            k = Q.shape[1]
            if np.abs(Q.T @ Q - np.eye(k)).max(initial=0.0) > 1e-10:
                raise ValidationError("support bases must have orthonormal columns")

    @classmethod
    def of(cls, truth: GroundTruth):
        return cls(truth.left_factors, truth.right_factors)

    def complement(self, B):
        U, V = self.S1_basis, self.S2_basis
        left = B - U @ (U.T @ B)
        return left - (left @ V) @ V.T

    def support(self, B):
        return B - self.complement(B)


def projector_decompose(truth: GroundTruth, B):
    """``(P_A0(B), P_A0^perp(B))`` for the row/column support of the truth."""
    B = np.asarray(B, dtype=float)
    if B.shape != truth.dims.shape:
        raise ValidationError(f"matrix shape {B.shape} does not match dims {truth.dims.shape}")
    proj = ProjectorPair.of(truth)
    perp = proj.complement(B)
    return B - perp, perp


def cone_membership(truth: GroundTruth, B, c0: float, tol: float = 1e-10) -> bool:
    if c0 < 0:
        raise ValidationError("c0 must be nonnegative")
    part, perp = projector_decompose(truth, B)
    return nuclear_norm(perp) <= c0 * nuclear_norm(part) + tol


# --- restricted constant mu_{c0} ------------------------------------------------

def mu_ratio(pi: SamplingDistribution, truth: GroundTruth, B) -> float:
    """``||P_A0(B)||_2 / ||B||_{L2(pi)}``."""
    part, _ = projector_decompose(truth, B)
    den = l2pi_norm(pi, B)
    return float(np.linalg.norm(part)) / den if den > 0 else math.inf


def mu_c0_search(pi: SamplingDistribution, truth: GroundTruth, c0: float, samples: int = 200, seed: int = 0, refine_steps: int = 50) -> float:
    """Lower bound on ``mu_{c0}(A0)`` from sampled cone members.

    Each sample fixes a support part ``P`` and a complement part within the
    nuclear budget ``c0 ||P||_1``; the complement part is then improved by
    projected gradient on ``||P + Q||_{L2(pi)}``.  The first sample is the
    deterministic witness ``A0 / ||A0||_2`` with no complement part.
    """
    if c0 < 0:
        raise ValidationError("c0 must be nonnegative")
    if truth.rank == 0:
        return 0.0
    rng = make_rng(seed)
    proj = ProjectorPair.of(truth)
    pmf = pi.pmf
    step = 1.0 / (2.0 * pi.max_prob)
    A0 = truth.matrix
    best = mu_ratio(pi, truth, A0 / np.linalg.norm(A0))
    for _ in range(samples):
        P = proj.support(rng.standard_normal(pi.dims.shape))
        P /= np.linalg.norm(P)
        budget = c0 * nuclear_norm(P)
        Q = proj.complement(rng.standard_normal(pi.dims.shape))
        nq = nuclear_norm(Q)
        if nq > 0:
            Q *= budget * rng.uniform(0.0, 1.0) / nq
        for _ in range(refine_steps):
            Q = proj.complement(Q - step * 2.0 * pmf * (P + Q))
            Q = project_nuclear_ball(Q, budget)
        # keep the sample feasible after floating point drift
        Q = proj.complement(Q)
        nq = nuclear_norm(Q)
        if nq > budget:
            Q *= budget / nq
        best = max(best, mu_ratio(pi, truth, P + Q))
    return float(best)


def mu_cap(kappa1_value, alpha):
    """``(1/kappa1) sqrt(alpha/(alpha-1))``."""
    if alpha <= 1:
        raise ValidationError("alpha must exceed 1")
    return math.sqrt(alpha / (alpha - 1.0)) / kappa1_value


# --- stochastic errors ------------------------------------------------------

def stochastic_errors(pi: SamplingDistribution, dataset: Dataset, truth: GroundTruth, noise=None):
    """The noise matrix ``M1`` and the sampling matrix ``M2``.

    ``M1 = (1/n) sum xi_i E_i`` and
    ``M2 = (1/n) sum a0(j_i, k_i) E_i - pi * A0`` (the centered form used for
    Bernstein control).  Noise values are ``Y - a0`` unless given.
    """
    if not (pi.dims == dataset.dims == truth.dims):
        raise ValidationError("pi, dataset and truth must share dims")
    if dataset.n == 0:
        raise ValidationError("dataset is empty")
    m1, m2 = pi.dims.shape
    A0 = truth.matrix
    signal = A0[dataset.rows, dataset.cols]
    xi = dataset.values - signal if noise is None else np.asarray(noise, dtype=float)
    if xi.shape != (dataset.n,):
        raise ValidationError("noise draws must have one value per observation")
    M1 = _kernels.accumulate(dataset.rows, dataset.cols, xi, m1, m2) / dataset.n
    M2 = _kernels.accumulate(dataset.rows, dataset.cols, signal, m1, m2) / dataset.n - pi.pmf * A0
    return M1, M2


def bernstein_bound_bounded(sigma_Z, U, n, m, t) -> float:
    """Deviation level for a mean of ``n`` bounded centered random matrices."""
    if min(sigma_Z, U, n, m, t) <= 0:
        raise ValidationError("all inputs must be positive")
    x = (t + math.log(m)) / n
    return 2.0 * max(sigma_Z * math.sqrt(x), U * x)


def bernstein_bound_psi(sigma_Z, U_beta, beta, n, m, t, C=1.0) -> float:
    """Deviation level when ``||Z||`` only has a finite psi_beta norm ``U_beta``."""
    if sigma_Z <= 0 or n <= 0 or m <= 0 or t <= 0:
        raise ValidationError("sigma_Z, n, m and t must be positive")
    if beta < 1:
        raise ValidationError("beta must be at least 1")
    if U_beta < sigma_Z:
        raise ValidationError("U_beta must be at least sigma_Z (log(U_beta / sigma_Z) would be negative)")
    x = (t + math.log(m)) / n
    log_term = math.log(U_beta / sigma_Z)
    tail = 1.0 if math.isinf(beta) and log_term > 0 else log_term ** (1.0 / beta)
    return C * max(sigma_Z * math.sqrt(x), U_beta * tail * x)


def noise_error_bound(sigma, dims, n, t, beta=2.0, C=1.0) -> float:
    """High-probability level for ``||M1||``:
    ``C sigma max{sqrt((t+log m)/((m1^m2) n)), (t+log m) log^{1/beta}(m1^m2) / n}``."""
    lm = math.log(dims.m)
    lf = 1.0 if math.isinf(beta) else math.log(dims.min_dim) ** (1.0 / beta)
    return C * sigma * max(math.sqrt((t + lm) / (dims.min_dim * n)), (t + lm) * lf / n)


def sampling_error_bound(a, c1_prime, dims, n, t) -> float:
    """High-probability level for ``||M2||``:
    ``2 c1' a max{sqrt((t+log m)/((m1^m2) n)), 2 (t+log m)/n}``."""
    lm = math.log(dims.m)
    return 2.0 * c1_prime * a * max(math.sqrt((t + lm) / (dims.min_dim * n)), 2.0 * (t + lm) / n)


def oracle_error_bound(lam, kappa1_value, alpha) -> float:
    """Spectral error bound ``(5/6 + 6 sqrt(2) / (11 (alpha - 1))) lam / kappa1**2``."""
    if alpha <= 1:
        raise ValidationError("alpha must exceed 1")
    if kappa1_value <= 0:
        raise ValidationError("kappa1 must be positive")
    return (5.0 / 6.0 + 6.0 * math.sqrt(2.0) / (11.0 * (alpha - 1.0))) * lam / kappa1_value**2


def weighted_error_bound(lam, mu5, rank) -> float:
    """``lam * mu5 * sqrt(rank)``, the weighted-norm error level."""
    if lam < 0 or mu5 < 0 or rank < 0:
        raise ValidationError("inputs must be nonnegative")
    return lam * mu5 * math.sqrt(rank)


# --- report -----------------------------------------------------------------

@dataclass
class DiagnosticsReport:
    kappa1: float
    kappa1_prime: float
    rho_lower: float
    rho_witness: tuple
    mu_c0_lower: float | None
    assumption1_certificate: dict
    assumption3_constants: tuple
    M1_norm: float | None = None
    M2_norm: float | None = None
    bernstein_bounds: dict = field(default_factory=dict)
    settings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rho_witness"] = [np.asarray(w).tolist() for w in self.rho_witness]
        d["assumption3_constants"] = {"c1": self.assumption3_constants[0], "c1_prime": self.assumption3_constants[1]}
        return d

    def to_json(self) -> str:
        from .io import dumps_json

        return dumps_json(self.to_dict())


def diagnose(pi: SamplingDistribution, truth: GroundTruth | None = None, dataset: Dataset | None = None,
             c0=5.0, alpha=2.0, rank=None, t=3.0, restarts=10, seed=0, mu_samples=100, noise_C=1.0) -> DiagnosticsReport:
    k1, k1p = kappa1(pi)
    r = rank if rank is not None else (truth.rank if truth is not None and truth.rank > 0 else 1)
    if pi.is_uniform:
        rho, A, B = 0.0, np.zeros(pi.dims.shape), np.zeros(pi.dims.shape)
        cert = check_assumption_incoherence(k1, rho, c0, alpha, r, exact=True)
    else:
        rho, A, B = rho_search(pi, restarts=restarts, seed=seed)
        cert = check_assumption_incoherence(k1, rho, c0, alpha, r, exact=False, search_restarts=restarts)
    mu = mu_c0_search(pi, truth, c0, samples=mu_samples, seed=seed) if truth is not None else None
    bounds = {"mu_cap": mu_cap(k1, alpha), "t": t}
    M1n = M2n = None
    if dataset is not None and truth is not None:
        M1, M2 = stochastic_errors(pi, dataset, truth)
        M1n, M2n = spectral_norm(M1), spectral_norm(M2)
        sigma = float(dataset.provenance.get("sigma", 0.0)) if dataset.provenance else 0.0
        bounds["sampling_error_bound"] = sampling_error_bound(truth.entry_bound, pi.c1_prime, pi.dims, dataset.n, t)
        bounds["noise_error_bound"] = noise_error_bound(sigma, pi.dims, dataset.n, t, C=noise_C)
        bounds["noise_error_constant"] = noise_C
        bounds["oracle_threshold"] = 3.0 * spectral_norm(M1 + M2)
    settings = {"c0": c0, "alpha": alpha, "rank": r, "restarts": restarts, "seed": seed, "mu_samples": mu_samples}
    return DiagnosticsReport(
        kappa1=k1,
        kappa1_prime=k1p,
        rho_lower=rho,
        rho_witness=(A, B),
        mu_c0_lower=mu,
        assumption1_certificate=asdict(cert),
        assumption3_constants=(pi.c1, pi.c1_prime),
        M1_norm=M1n,
        M2_norm=M2n,
        bernstein_bounds=bounds,
        settings=settings,
    )


def report_from_json(text: str) -> dict:
    return json.loads(text)
