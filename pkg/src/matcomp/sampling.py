"""Synthetic incoherent low-rank matrices and reveal-set models.

All randomness flows through :func:`rng_for`, a Philox (counter-based)
generator keyed by ``(seed, stream)``, so draws are reproducible across
platforms and independent between the factor and reveal stages.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sparsemat import SparseObserved

FRAME_TOL = 1e-10
EXACT_SCAN_LIMIT = 10**7
SCAN_SAMPLES = 10**6

STREAM_FACTORS = 0
STREAM_REVEAL = 1
STREAM_SCAN = 2

REVEAL_KINDS = ("uniform_fixed_size", "bernoulli", "heavy_tail_rows")


def rng_for(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), stream])))


def frame_error(a: np.ndarray) -> float:
    """max |A^T A / n - 1| for an ``n x r`` frame."""
    n, r = a.shape
    return float(np.max(np.abs(a.T @ a / n - np.eye(r)))) if r else 0.0


@dataclass(frozen=True, eq=False)
class LowRankFactors:
    """``M = U diag(sigma) V^T`` with ``U^T U = m 1`` and ``V^T V = n 1``.

    ``sigma`` is nonincreasing. Ground truth requires it strictly positive;
    reconstructions may carry zeros (a rank-deficient projection).
    """

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        U = np.asarray(self.U, dtype=np.float64)
        V = np.asarray(self.V, dtype=np.float64)
        sigma = np.asarray(self.sigma, dtype=np.float64).ravel()
        if U.ndim != 2 or V.ndim != 2 or U.shape[1] != V.shape[1] or U.shape[1] != sigma.size:
            raise ValueError("inconsistent factor shapes")
        if np.any(sigma < 0) or np.any(np.diff(sigma) > 0):
            raise ValueError("sigma must be nonnegative and nonincreasing")
        for name, a in (("U", U), ("V", V)):
            if frame_error(a) > FRAME_TOL:
                raise ValueError(f"{name} violates the frame normalization")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def from_xsy(cls, X, S, Y) -> "LowRankFactors":
        """Repackage ``X S Y^T`` (frames X, Y, arbitrary core S) with a diagonal core."""
        a, s, bt = np.linalg.svd(np.asarray(S, dtype=np.float64))
        return cls(X @ a, s, Y @ bt.T)

    @property
    def m(self) -> int:
        return self.U.shape[0]

    @property
    def n(self) -> int:
        return self.V.shape[0]

    @property
    def r(self) -> int:
        return self.sigma.size

    @property
    def alpha(self) -> float:
        return self.m / self.n

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m, self.n)

    def dense(self) -> np.ndarray:
        return (self.U * self.sigma) @ self.V.T

    def entries(self, rows, cols) -> np.ndarray:
        return np.einsum("ik,k,ik->i", self.U[rows], self.sigma, self.V[cols])


@dataclass(frozen=True)
class RevealModel:
    """How the set E of revealed positions is drawn.

    ``parameter`` is ``|E|`` for ``uniform_fixed_size`` and the sample
    budget ``eps = |E| / sqrt(mn)`` for the other two kinds.
    """

    kind: str
    parameter: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in REVEAL_KINDS:
            raise ValueError(f"unknown reveal model {self.kind!r}")
        if not self.parameter > 0:
            raise ValueError("reveal parameter must be positive")
        if self.kind == "uniform_fixed_size" and int(self.parameter) != self.parameter:
            raise ValueError("uniform_fixed_size needs an integer |E|")

    def check(self, m: int, n: int) -> None:
        if self.kind == "uniform_fixed_size":
            if self.parameter > m * n:
                raise ValueError(f"|E| = {int(self.parameter)} exceeds m*n = {m * n}")
        elif self.parameter > np.sqrt(m * n):
            raise ValueError("eps exceeds sqrt(m n)")


@dataclass(frozen=True)
class IncoherenceReport:
    mu0_hat: float
    mu1_hat: float
    M_max: float
    exact: bool


def random_low_rank(m: int, n: int, r: int, sigma, seed: int = 0) -> LowRankFactors:
    """Haar-random frames scaled to ``U^T U = m 1``, ``V^T V = n 1``."""
    sigma = np.sort(np.asarray(sigma, dtype=np.float64).ravel())[::-1]
    if m < 1 or n < 1 or not 1 <= r <= min(m, n):
        raise ValueError("need 1 <= r <= min(m, n)")
    if sigma.size != r or np.any(sigma <= 0):
        raise ValueError("sigma must hold r positive values")
    rng = rng_for(seed, STREAM_FACTORS)
    return LowRankFactors(_haar_frame(rng, m, r), sigma.copy(), _haar_frame(rng, n, r))


def _haar_frame(rng, n, r):
    q, rr = np.linalg.qr(rng.standard_normal((n, r)))
    # sign fix makes the QR factor Haar distributed
    q = q * np.where(np.diag(rr) < 0, -1.0, 1.0)
    q *= np.sqrt(n)
    return q


def heavy_tail_pmf(n: int, mean: float) -> np.ndarray:
    """Row-degree law on ``k = 1..n`` with ``P{N=k} = const / k^3`` above a cutoff.

    The support starts at an integer ``k0`` whose mass is down-weighted by
    ``w in (0, 1]`` so that the mean equals ``mean`` exactly; every
    ``k > k0`` keeps the pure ``k^-3`` weight. Returns probabilities
    indexed by ``k - 1``. Targets below the mean of the untruncated law
    (about 1.37) fall back to that law.
    """
    k = np.arange(1, n + 1, dtype=np.float64)
    w = k ** -3.0
    tail0 = np.cumsum(w[::-1])[::-1]          # sum_{j >= k} w_j
    tail1 = np.cumsum((k * w)[::-1])[::-1]    # sum_{j >= k} j w_j
    if mean >= n:
        p = np.zeros(n)
        p[-1] = 1.0
        return p
    if mean <= tail1[0] / tail0[0]:
        return w / tail0[0]
    for k0 in range(1, n):
        s0, s1 = tail0[k0], tail1[k0]         # sums over j > k0
        if s1 / s0 >= mean:
            a0 = w[k0 - 1]
            weight = (s1 - mean * s0) / (a0 * (mean - k0))
            if 0 < weight <= 1:
                p = np.zeros(n)
                p[k0 - 1] = weight * a0
                p[k0:] = w[k0:]
                return p / p.sum()
    raise ValueError("cannot match the requested mean degree")  # pragma: no cover


def reveal(factors: LowRankFactors, model: RevealModel) -> SparseObserved:
    """Draw the revealed set E and copy the corresponding entries of ``U S V^T``.

    ``heavy_tail_rows`` draws each row degree from :func:`heavy_tail_pmf`
    with target mean ``eps * sqrt(n/m)`` (so ``|E| ~ eps sqrt(mn)``; the
    target is ``eps`` when ``m == n``) and picks that many distinct columns
    uniformly.
    """
    m, n = factors.shape
    model.check(m, n)
    rng = rng_for(model.seed, STREAM_REVEAL)
    mn = m * n
    if model.kind == "uniform_fixed_size":
        lin = _distinct_positions(rng, mn, int(model.parameter))
        rows, cols = np.divmod(lin, n)
    elif model.kind == "bernoulli":
        p = model.parameter / np.sqrt(mn)
        count = int(rng.binomial(mn, p))
        lin = _distinct_positions(rng, mn, count)
        rows, cols = np.divmod(lin, n)
    else:
        pmf = heavy_tail_pmf(n, model.parameter * np.sqrt(n / m))
        degrees = rng.choice(np.arange(1, n + 1), size=m, p=pmf)
        rows = np.repeat(np.arange(m), degrees)
        cols = np.concatenate([rng.choice(n, d, replace=False) for d in degrees])
    meta = {"model": model.kind, "parameter": float(model.parameter), "seed": int(model.seed)}
    return SparseObserved(m, n, rows, cols, factors.entries(rows, cols), meta)


def _distinct_positions(rng, population, count):
    if count == population:
        return np.arange(population, dtype=np.int64)
    return np.sort(rng.choice(population, size=count, replace=False))


def max_abs_entry(factors: LowRankFactors, exact: bool | None = None, seed: int = 0):
    """``(max |M_ij|, exact_flag)``; sampled scan of 10^6 pairs above 10^7 entries."""
    m, n = factors.shape
    if exact is None:
        exact = m * n <= EXACT_SCAN_LIMIT
    A = factors.U * factors.sigma
    if exact:
        best = 0.0
        step = max(1, EXACT_SCAN_LIMIT // (10 * n))
        for start in range(0, m, step):
            best = max(best, float(np.max(np.abs(A[start:start + step] @ factors.V.T))))
        return best, True
    rng = rng_for(seed, STREAM_SCAN)
    rows = rng.integers(0, m, SCAN_SAMPLES)
    cols = rng.integers(0, n, SCAN_SAMPLES)
    return float(np.max(np.abs(factors.entries(rows, cols)))), False


def incoherence_report(factors: LowRankFactors, exact: bool | None = None) -> IncoherenceReport:
    r = factors.r
    mu0 = max(np.max(np.sum(factors.U ** 2, axis=1)), np.max(np.sum(factors.V ** 2, axis=1))) / r
    M_max, was_exact = max_abs_entry(factors, exact)
    # A2: |sum_k U_ik (S_k/S_1) V_jk| / sqrt(r), i.e. max|M_ij| / (S_1 sqrt(r))
    s1 = factors.sigma[0]
    mu1 = M_max / (s1 * np.sqrt(r)) if s1 > 0 else 0.0
    return IncoherenceReport(float(mu0), float(mu1), float(M_max), was_exact)
