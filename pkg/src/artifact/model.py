"""Trace regression on the matrix completion basis.

An observation picks an entry ``(j, k)`` with probability ``pi[j, k]`` and
reports ``Y = A0[j, k] + xi``.  Everything here is immutable once built and
every random draw goes through a seeded Philox generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

RNG_ALGORITHM = "numpy.random.Philox"

NOISE_KINDS = ("gaussian", "laplace", "bounded_uniform")


class ValidationError(ValueError):
    """An input violates a documented invariant."""


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator; `seed` may be an int or a SeedSequence."""
    return np.random.Generator(np.random.Philox(seed))


def derive_seed(seed: int, *keys: int) -> int:
    """Independent 63-bit child seed for the stream identified by `keys`."""
    ss = np.random.SeedSequence([int(seed), *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dimensions:
    m1: int
    m2: int

    def __post_init__(self):
        if int(self.m1) != self.m1 or int(self.m2) != self.m2 or self.m1 < 1 or self.m2 < 1:
            raise ValidationError(f"dimensions must be positive integers, got {self.m1}x{self.m2}")
        object.__setattr__(self, "m1", int(self.m1))
        object.__setattr__(self, "m2", int(self.m2))

    @property
    def m(self) -> int:
        return self.m1 + self.m2

    @property
    def M(self) -> int:
        return max(self.m1, self.m2)

    @property
    def min_dim(self) -> int:
        return min(self.m1, self.m2)

    @property
    def size(self) -> int:
        return self.m1 * self.m2

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m1, self.m2)


@dataclass(frozen=True, eq=False)
class SamplingDistribution:
    """Dense probability mass over the ``m1 x m2`` entries."""

    dims: Dimensions
    pmf: np.ndarray
    label: str = "custom"

    def __post_init__(self):
        pmf = _frozen(self.pmf)
        if pmf.shape != self.dims.shape:
            raise ValidationError(f"pmf shape {pmf.shape} does not match dims {self.dims.shape}")
        if not np.all(np.isfinite(pmf)) or np.any(pmf <= 0):
            raise ValidationError("pmf must be strictly positive on every entry")
        total = float(pmf.sum())
        if abs(total - 1.0) > 1e-12:
            raise ValidationError(f"pmf must sum to 1 within 1e-12 (sum is {total!r})")
        object.__setattr__(self, "pmf", pmf)

    @property
    def min_prob(self) -> float:
        return float(self.pmf.min())

    @property
    def max_prob(self) -> float:
        return float(self.pmf.max())

    @property
    def is_uniform(self) -> bool:
        return self.min_prob == self.max_prob

    @property
    def c1(self) -> float:
        """Lower sampling constant: ``m1*m2*min(pi)``."""
        return self.dims.size * self.min_prob

    @property
    def c1_prime(self) -> float:
        return self.dims.size * self.max_prob


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Rank-r matrix stored by its thin SVD, with an entrywise bound."""

    dims: Dimensions
    left_factors: np.ndarray
    singular_values: np.ndarray
    right_factors: np.ndarray
    entry_bound: float

    def __post_init__(self):
        U = _frozen(self.left_factors).reshape(self.dims.m1, -1)
        s = _frozen(self.singular_values).ravel()
        V = _frozen(self.right_factors).reshape(self.dims.m2, -1)
        r = s.size
        if U.shape[1] != r or V.shape[1] != r:
            raise ValidationError("factor widths must equal the number of singular values")
        if r > self.dims.min_dim:
            raise ValidationError("rank exceeds min(m1, m2)")
        if np.any(s <= 0) or np.any(np.diff(s) > 0):
            raise ValidationError("singular values must be strictly positive and nonincreasing")
        eye = np.eye(r)
        if np.abs(U.T @ U - eye).max(initial=0.0) > 1e-10 or np.abs(V.T @ V - eye).max(initial=0.0) > 1e-10:
            raise ValidationError("factor columns must be orthonormal within 1e-10")
        if self.entry_bound < 0:
            raise ValidationError("entry_bound must be nonnegative")
        object.__setattr__(self, "left_factors", U)
        object.__setattr__(self, "singular_values", s)
        object.__setattr__(self, "right_factors", V)
        object.__setattr__(self, "entry_bound", float(self.entry_bound))
        A = _frozen((U * s) @ V.T)
        if np.abs(A).max(initial=0.0) > self.entry_bound * (1 + 1e-12):
            raise ValidationError("max entry magnitude exceeds entry_bound")
        object.__setattr__(self, "_matrix", A)

    @property
    def rank(self) -> int:
        return int(self.singular_values.size)

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @classmethod
    def from_matrix(cls, A, entry_bound=None, rtol=1e-10):
        A = np.asarray(A, dtype=float)
        dims = Dimensions(*A.shape)
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
        keep = s > rtol * s[0] if s.size and s[0] > 0 else np.zeros(s.size, dtype=bool)
        bound = float(np.abs(A).max()) if entry_bound is None else entry_bound
        return cls(dims, U[:, keep], s[keep], Vt[keep].T, bound)

    @classmethod
    def zero(cls, dims: Dimensions, entry_bound: float = 0.0):
        return cls(dims, np.zeros((dims.m1, 0)), np.zeros(0), np.zeros((dims.m2, 0)), entry_bound)


@dataclass(frozen=True)
class NoiseModel:
    """Centered i.i.d. noise with standard deviation `sigma`.

    ``bounded_uniform`` is uniform on ``[-sigma*sqrt(3), sigma*sqrt(3)]`` and
    ``laplace`` uses scale ``sigma/sqrt(2)``, so every kind has variance
    ``sigma**2``.
    """

    kind: str = "gaussian"
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValidationError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        if not self.sigma >= 0 or not math.isfinite(self.sigma):
            raise ValidationError("noise sigma must be finite and nonnegative")

    @property
    def psi_exponent(self) -> float:
        return {"gaussian": 2.0, "laplace": 1.0, "bounded_uniform": math.inf}[self.kind]

    @property
    def variance(self) -> float:
        return self.sigma**2

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "gaussian":
            z = rng.standard_normal(size)
        elif self.kind == "laplace":
            z = rng.laplace(0.0, 1.0 / math.sqrt(2.0), size)
        else:
            z = rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size)
        return self.sigma * z


@dataclass(frozen=True, eq=False)
class Dataset:
    dims: Dimensions
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        rows = _frozen(self.rows, np.int64).ravel()
        cols = _frozen(self.cols, np.int64).ravel()
        values = _frozen(self.values).ravel()
        if not (rows.size == cols.size == values.size):
            raise ValidationError("rows, cols and values must have equal length")
        if rows.size and (rows.min() < 0 or rows.max() >= self.dims.m1 or cols.min() < 0 or cols.max() >= self.dims.m2):
            raise ValidationError("observation index outside dims")
        if not np.all(np.isfinite(values)):
            raise ValidationError("observation values must be finite")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return int(self.values.size)

    def entries(self):
        for j, k, y in zip(self.rows.tolist(), self.cols.tolist(), self.values.tolist()):
            yield j, k, y

    def permuted(self, order) -> Dataset:
        order = np.asarray(order)
        return Dataset(self.dims, self.rows[order], self.cols[order], self.values[order], dict(self.provenance))


def uniform_distribution(dims: Dimensions) -> SamplingDistribution:
    return SamplingDistribution(dims, np.full(dims.shape, 1.0 / dims.size), label="uniform")


def power_law_distribution(dims: Dimensions, row_exponent=1.0, col_exponent=0.0, floor_ratio=0.01):
    """Entry weights ``j**-row_exponent * k**-col_exponent`` (1-based), floored at
    ``floor_ratio`` times the largest weight, then normalized."""
    if not floor_ratio > 0 or floor_ratio > 1:
        raise ValidationError("floor_ratio must lie in (0, 1]")
    if row_exponent < 0 or col_exponent < 0:
        raise ValidationError("exponents must be nonnegative")
    j = np.arange(1, dims.m1 + 1, dtype=float)
    k = np.arange(1, dims.m2 + 1, dtype=float)
    w = np.outer(j**-row_exponent, k**-col_exponent)
    w = np.maximum(w, floor_ratio * w.max())
    pmf = w / w.sum()
    label = f"powerlaw:{row_exponent!r},{col_exponent!r},{floor_ratio!r}"
    return SamplingDistribution(dims, pmf, label=label)


def parse_distribution(spec: str, dims: Dimensions) -> SamplingDistribution:
    """``uniform`` or ``powerlaw:ROW_EXP,COL_EXP,FLOOR``."""
    if spec == "uniform":
        return uniform_distribution(dims)
    if spec.startswith("powerlaw:"):
        parts = spec.split(":", 1)[1].split(",")
        if len(parts) != 3:
            raise ValidationError(f"powerlaw spec needs three numbers, got {spec!r}")
        re_, ce, floor = (float(p) for p in parts)
        return power_law_distribution(dims, re_, ce, floor)
    raise ValidationError(f"unknown sampling distribution {spec!r}")


def random_ground_truth(dims: Dimensions, rank: int, a: float, seed: int = 0, kind: str = "sign") -> GroundTruth:
    """Rank-`rank` matrix rescaled so its largest entry magnitude equals `a`.

    ``kind="sign"`` builds ``H @ K.T`` from a column of ones and balanced random
    sign columns, which spreads mass evenly over entries (large singular
    values relative to `a`).  ``kind="gaussian"`` uses Haar-random factors with
    singular values ``rank, rank-1, ..., 1``.
    """
    if not 0 <= rank <= dims.min_dim:
        raise ValidationError("rank must lie in [0, min(m1, m2)]")
    if rank == 0 or a == 0:
        return GroundTruth.zero(dims, a)
    rng = make_rng(seed)
    if kind == "sign":
        def signs(m):
            H = np.ones((m, rank))
            base = np.r_[np.ones(m // 2), -np.ones(m - m // 2)]
            for c in range(1, rank):
                H[:, c] = rng.permutation(base)
            return H
        A = signs(dims.m1) @ signs(dims.m2).T
    elif kind == "gaussian":
        U, _ = np.linalg.qr(rng.standard_normal((dims.m1, rank)))
        V, _ = np.linalg.qr(rng.standard_normal((dims.m2, rank)))
        A = (U * np.arange(rank, 0, -1.0)) @ V.T
    else:
        raise ValidationError(f"unknown ground truth kind {kind!r}")
    A = A * (a / np.abs(A).max())
    return GroundTruth.from_matrix(A, entry_bound=a)


def generate_dataset(pi: SamplingDistribution, truth: GroundTruth, noise: NoiseModel, n: int, seed: int) -> Dataset:
    """Draw `n` i.i.d. entries from `pi` and add noise to the true values."""
    if pi.dims != truth.dims:
        raise ValidationError(f"dimension mismatch: pi {pi.dims.shape} vs truth {truth.dims.shape}")
    if n < 1:
        raise ValidationError("n must be at least 1")
    rng = make_rng(seed)
    dims = pi.dims
    flat = rng.choice(dims.size, size=n, p=pi.pmf.ravel())
    rows, cols = np.divmod(flat, dims.m2)
    xi = noise.sample(rng, n)
    values = truth.matrix[rows, cols] + xi
    provenance = {
        "seed": int(seed),
        "rng": RNG_ALGORITHM,
        "pi": pi.label,
        "noise_kind": noise.kind,
        "sigma": float(noise.sigma),
        "rank": truth.rank,
        "entry_bound": truth.entry_bound,
    }
    return Dataset(dims, rows, cols, values, provenance)


def _check_shape(pi, *mats):
    for A in mats:
        if np.shape(A) != pi.dims.shape:
            raise ValidationError(f"matrix shape {np.shape(A)} does not match dims {pi.dims.shape}")


def l2pi_inner(pi: SamplingDistribution, A, B) -> float:
    """Sampling-weighted inner product ``sum(pi * A * B)``."""
    _check_shape(pi, A, B)
    return float(np.sum(pi.pmf * np.asarray(A) * np.asarray(B)))


def l2pi_norm(pi: SamplingDistribution, A) -> float:
    return math.sqrt(max(l2pi_inner(pi, A, A), 0.0))


def entry_counts(dataset: Dataset) -> np.ndarray:
    return _kernels.count(dataset.rows, dataset.cols, dataset.dims.m1, dataset.dims.m2)
