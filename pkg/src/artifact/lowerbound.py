"""Packing sets of low-rank matrices for the minimax lower bound.

Members are binary ``m1 x r`` blocks scaled by ``delta`` and tiled across the
columns.  Codewords are drawn at random and kept when their Hamming distance
to every accepted codeword (the zero word included) is at least
``ceil(r m1 / 8)``.  With

    delta = (gamma / sqrt 2) (sigma ^ a) sqrt(m1 r / n) sqrt(m2 / (T r)),

where ``T = floor(m2 / r)`` is the number of tiles, every pair satisfies

    (gamma^2/16) (sigma ^ a)^2 m1^2 m2 r / n <= ||A1 - A2||_2^2
                                             <= (gamma^2/2) (sigma ^ a)^2 m1^2 m2 r / n.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .io import dumps_json, write_matrix_csv
from .linalg import numerical_rank, spectral_norm
from .model import Dimensions, SamplingDistribution, ValidationError, l2pi_norm, make_rng, uniform_distribution


class PackingError(ValidationError):
    """Raised when rejection sampling stops short of the target cardinality."""

    def __init__(self, message, achieved):
        super().__init__(message)
        self.achieved = achieved


@dataclass
class PackingSet:
    dims: Dimensions
    rank_budget: int
    entry_magnitude: float
    gamma: float
    members: list
    min_hamming: int
    sigma: float = 1.0
    a: float = 1.0
    n: int = 1
    tiles: int = 1
    seed: int = 0
    codes: np.ndarray | None = field(default=None, repr=False)

    @property
    def cardinality(self) -> int:
        return len(self.members)

    @property
    def scale(self) -> float:
        """``(sigma ^ a)`` times the rate ``sqrt(m1^2 m2 / n)``."""
        d = self.dims
        return min(self.sigma, self.a) * math.sqrt(d.m1**2 * d.m2 / self.n)


def target_cardinality(m1: int, r: int) -> int:
    """Smallest integer not below ``2^(r m1 / 8) + 1``."""
    return math.ceil(2.0 ** (r * m1 / 8.0)) + 1


def packing_delta(dims: Dimensions, r: int, sigma: float, a: float, n: int, gamma: float) -> float:
    tiles = dims.m2 // r
    base = gamma / math.sqrt(2.0) * min(sigma, a) * math.sqrt(dims.m1 * r / n)
    return base * math.sqrt(dims.m2 / (tiles * r))


def _member(code, dims, r, delta, tiles):
    block = delta * code.reshape(dims.m1, r).astype(float)
    A = np.zeros(dims.shape)
    A[:, : tiles * r] = np.tile(block, (1, tiles))
    return A


def build_packing(dims: Dimensions, r: int, sigma: float, a: float, n: int, gamma: float,
                  seed: int = 0, max_attempts: int = 100_000) -> PackingSet:
    """Random binary-block packing containing the zero matrix.

    Requires ``m1 >= m2``, ``1 <= r <= m2`` and ``m1 r <= n``.  Raises
    :class:`PackingError` (carrying the achieved cardinality) when
    `max_attempts` candidates do not yield the target cardinality.
    """
    m1, m2 = dims.shape
    if m1 < m2:
        raise ValidationError("packing construction needs m1 >= m2 (transpose the problem)")
    if not 1 <= r <= m2:
        raise ValidationError("rank must lie in [1, min(m1, m2)]")
    if dims.M * r > n:
        raise ValidationError("packing construction needs M r <= n")
    if not (sigma > 0 and a > 0 and gamma > 0):
        raise ValidationError("sigma, a and gamma must be positive")
    tiles = m2 // r
    delta = packing_delta(dims, r, sigma, a, n, gamma)
    if delta > a * (1 + 1e-12):
        raise ValidationError(f"entry magnitude {delta!r} exceeds a={a!r}; decrease gamma")
    length = r * m1
    dmin = math.ceil(length / 8.0)
    target = target_cardinality(m1, r)
    rng = make_rng(seed)
    codes = np.zeros((target, length), dtype=np.uint8)
    k = 1  # row 0 is the zero word
    attempts = 0
    while k < target and attempts < max_attempts:
        attempts += 1
        cand = rng.integers(0, 2, size=length, dtype=np.uint8)
        if _kernels.min_hamming(cand, codes, k) >= dmin:
            codes[k] = cand
            k += 1
    if k < target:
        raise PackingError(f"reached cardinality {k} of {target} after {max_attempts} attempts", k)
    members = [_member(c, dims, r, delta, tiles) for c in codes]
    H = _kernels.pairwise_hamming(codes)
    achieved = int(H[np.triu_indices(target, 1)].min()) if target > 1 else length
    return PackingSet(dims, r, delta, gamma, members, achieved, sigma, a, n, tiles, seed, codes)


def kl_gaussian(pi: SamplingDistribution, A, sigma: float, n: int) -> float:
    """``(n / (2 sigma^2)) ||A||_{L2(pi)}^2``."""
    if not sigma > 0:
        raise ValidationError("sigma must be positive")
    return n / (2.0 * sigma**2) * l2pi_norm(pi, A) ** 2


def check_packing_conditions(packing: PackingSet, pi: SamplingDistribution | None = None,
                             sigma: float | None = None, alpha: float = 1.0 / 16.0) -> dict:
    """Pass/fail with margins for the separation and divergence conditions.

    ``frobenius_bracket``: every pairwise ``||A1 - A2||_2^2`` inside
    ``[(gamma^2/16) s^2, gamma^2 s^2] r`` with ``s`` the packing scale.
    ``l2pi_separation``: ``||A1 - A2||_{L2(pi)}^2 >= c1 (gamma^2/16) (sigma ^ a)^2 m1 r / n``.
    ``spectral_separation``: ``||A1 - A2||_inf >= sqrt(c1/c1') (gamma/4) s``, the
    value implied by the previous condition and ``rank(A1 - A2) <= r``; the
    threshold with ``sqrt(gamma/16)`` in place of ``gamma/4`` is reported as
    ``alternate_threshold`` for comparison.
    ``average_kl``: mean divergence from the zero member at most
    ``alpha log(card - 1)``.
    """
    if not 0 < alpha < 1.0 / 8.0:
        raise ValidationError("alpha must lie in (0, 1/8)")
    dims = packing.dims
    pi = pi or uniform_distribution(dims)
    if pi.dims != dims:
        raise ValidationError("pi and packing dims differ")
    sigma = packing.sigma if sigma is None else sigma
    g, r, s = packing.gamma, packing.rank_budget, packing.scale
    sa = min(packing.sigma, packing.a)
    c1, c1p = pi.c1, pi.c1_prime
    card = packing.cardinality
    members = packing.members
    report = {"cardinality": card, "trivial": card < 2, "alpha": alpha, "sigma": sigma}

    lo_f, hi_f = g**2 / 16.0 * s**2 * r, g**2 * s**2 * r
    l2_thr = c1 * g**2 / 16.0 * sa**2 * dims.m1 * r / packing.n
    spec_thr = math.sqrt(c1 / c1p) * g / 4.0 * s
    alt_thr = math.sqrt(c1 / c1p) * math.sqrt(g / 16.0) * s
    fro, l2, spec = [], [], []
    for i in range(card):
        for j in range(i + 1, card):
            D = members[i] - members[j]
            fro.append(float(np.sum(D * D)))
            l2.append(l2pi_norm(pi, D) ** 2)
            spec.append(spectral_norm(D))
    tol = 1e-12

    def cond(ok, **kw):
        return {"pass": bool(ok), **kw}

    if fro:
        report["frobenius_bracket"] = cond(
            min(fro) >= lo_f * (1 - tol) and max(fro) <= hi_f * (1 + tol),
            lower=lo_f, upper=hi_f, min=min(fro), max=max(fro), margin=min(min(fro) - lo_f, hi_f - max(fro)))
        report["l2pi_separation"] = cond(min(l2) >= l2_thr * (1 - tol), threshold=l2_thr, min=min(l2),
                                         margin=min(l2) - l2_thr)
        report["spectral_separation"] = cond(
            min(spec) >= spec_thr * (1 - tol), threshold=spec_thr, min=min(spec), margin=min(spec) - spec_thr,
            alternate_threshold=alt_thr, alternate_pass=bool(min(spec) >= alt_thr * (1 - tol)))
        kl = [kl_gaussian(pi, A, sigma, packing.n) for A in members]
        avg = sum(kl) / (card - 1)
        kl_thr = alpha * math.log(card - 1) if card > 2 else 0.0
        report["average_kl"] = cond(avg <= kl_thr * (1 + tol), average=avg, threshold=kl_thr, margin=kl_thr - avg)
    else:
        for name in ("frobenius_bracket", "l2pi_separation", "spectral_separation", "average_kl"):
            report[name] = cond(True, vacuous=True)
    ranks = [numerical_rank(A) for A in members]
    report["class_membership"] = cond(
        max(ranks) <= r and max(float(np.abs(A).max()) for A in members) <= packing.a * (1 + tol),
        max_rank=max(ranks), max_entry=max(float(np.abs(A).max()) for A in members))
    report["all_pass"] = all(v["pass"] for v in report.values() if isinstance(v, dict))
    return report


def rate_constant(packing: PackingSet) -> float:
    """Minimum pairwise spectral gap over ``sqrt(m1 m2) sqrt(M r / n)``."""
    d = packing.dims
    gaps = [spectral_norm(packing.members[i] - packing.members[j])
            for i in range(packing.cardinality) for j in range(i + 1, packing.cardinality)]
    return min(gaps) / (math.sqrt(d.m1 * d.m2) * math.sqrt(d.M * packing.rank_budget / packing.n))


def sweep_gamma(dims: Dimensions, r: int, sigma: float, a: float, n: int, pi: SamplingDistribution | None = None,
                alpha: float = 1.0 / 16.0, start: float = 1.0, factor: float = 0.8, min_gamma: float = 1e-6,
                seed: int = 0, max_attempts: int = 100_000):
    """Shrink gamma geometrically from `start` until every condition passes.

    Returns ``(packing, report)``.
    """
    if not 0 < factor < 1:
        raise ValidationError("factor must lie in (0, 1)")
    g = start
    while g >= min_gamma:
        try:
            packing = build_packing(dims, r, sigma, a, n, g, seed=seed, max_attempts=max_attempts)
        except PackingError:
            raise
        except ValidationError:
            g *= factor
            continue
        report = check_packing_conditions(packing, pi, alpha=alpha)
        if report["all_pass"]:
            return packing, report
        g *= factor
    raise ValidationError(f"no gamma above {min_gamma!r} satisfies every packing condition")


def export_packing(packing: PackingSet, report: dict, directory, config: dict | None = None):
    """Write ``member_XXX.csv`` files and ``manifest.json`` into `directory`."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for i, A in enumerate(packing.members):
        name = f"member_{i:03d}.csv"
        write_matrix_csv(out / name, A)
        names.append(name)
    manifest = {
        "config": config or {},
        "m1": packing.dims.m1,
        "m2": packing.dims.m2,
        "rank": packing.rank_budget,
        "gamma": packing.gamma,
        "delta": packing.entry_magnitude,
        "sigma": packing.sigma,
        "a": packing.a,
        "n": packing.n,
        "seed": packing.seed,
        "tiles": packing.tiles,
        "cardinality": packing.cardinality,
        "target_cardinality": target_cardinality(packing.dims.m1, packing.rank_budget),
        "min_hamming": packing.min_hamming,
        "members": names,
        "conditions": report,
    }
    (out / "manifest.json").write_text(dumps_json(manifest), encoding="utf-8")
    return out / "manifest.json"


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
