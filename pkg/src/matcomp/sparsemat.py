"""Sparse observed matrices and top-r singular triplets by subspace iteration."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITERS = 300
DENSE_SVD_CAP = 512


class DimensionError(ValueError):
    """Operand shapes do not agree."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SparseObserved:
    """Revealed entries of an ``n_rows x n_cols`` matrix in coordinate form.

    Entries are stored row-major sorted; positions outside the list are
    treated as zero. ``meta`` carries free-form reveal information
    (model name, seed, ...) and does not take part in arithmetic.
    """

    n_rows: int
    n_cols: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValueError("matrix dimensions must be positive")
        rows = np.asarray(self.rows, dtype=np.int64).ravel()
        cols = np.asarray(self.cols, dtype=np.int64).ravel()
        values = np.asarray(self.values, dtype=np.float64).ravel()
        if not (rows.size == cols.size == values.size):
            raise ValueError("rows, cols and values must have equal length")
        if rows.size:
            if rows.min() < 0 or rows.max() >= self.n_rows:
                raise IndexError("row index out of range")
            if cols.min() < 0 or cols.max() >= self.n_cols:
                raise IndexError("column index out of range")
        lin = rows * self.n_cols + cols
        order = np.argsort(lin, kind="stable")
        lin = lin[order]
        if lin.size > 1 and np.any(lin[1:] == lin[:-1]):
            raise ValueError("duplicate (row, col) entry")
        object.__setattr__(self, "rows", _frozen(rows[order]))
        object.__setattr__(self, "cols", _frozen(cols[order]))
        object.__setattr__(self, "values", _frozen(values[order]))

    @classmethod
    def from_dense(cls, dense, mask=None, meta=None) -> "SparseObserved":
        """Reveal ``dense[mask]`` (all nonzeros when ``mask`` is None)."""
        dense = np.asarray(dense, dtype=np.float64)
        if mask is None:
            mask = dense != 0
        rows, cols = np.nonzero(mask)
        return cls(dense.shape[0], dense.shape[1], rows, cols, dense[rows, cols],
                   dict(meta or {}))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    @property
    def eps(self) -> float:
        """Sample budget ``|E| / sqrt(m n)``."""
        return self.nnz / np.sqrt(self.n_rows * self.n_cols)

    @cached_property
    def csr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, (self.rows, self.cols)), shape=self.shape)

    @cached_property
    def csr_t(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, (self.cols, self.rows)),
                             shape=(self.n_cols, self.n_rows))

    def row_degrees(self) -> np.ndarray:
        return np.bincount(self.rows, minlength=self.n_rows)

    def col_degrees(self) -> np.ndarray:
        return np.bincount(self.cols, minlength=self.n_cols)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.rows, self.cols] = self.values
        return out

    def select(self, keep: np.ndarray, meta=None) -> "SparseObserved":
        """Sub-pattern made of the entries where boolean ``keep`` is true."""
        return SparseObserved(self.n_rows, self.n_cols, self.rows[keep], self.cols[keep],
                              self.values[keep], dict(self.meta if meta is None else meta))

    def with_values(self, values) -> "SparseObserved":
        return SparseObserved(self.n_rows, self.n_cols, self.rows, self.cols, values,
                              dict(self.meta))

    def same_entries(self, other: "SparseObserved") -> bool:
        return (self.shape == other.shape
                and np.array_equal(self.rows, other.rows)
                and np.array_equal(self.cols, other.cols)
                and np.array_equal(self.values, other.values))


@dataclass(frozen=True, eq=False)
class SvdTriplet:
    """Leading singular triplets ``left @ diag(s) @ right.T``.

    ``converged`` and ``iterations`` are solver diagnostics; dense
    decompositions always report ``converged=True``.
    """

    left: np.ndarray
    s: np.ndarray
    right: np.ndarray
    converged: bool = True
    iterations: int = 0

    @property
    def k(self) -> int:
        return int(self.s.size)

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.s) @ self.right.T


def spmv(a: SparseObserved, v, transpose: bool = False) -> np.ndarray:
    """Exact product ``a @ v`` (or ``a.T @ v``); ``v`` may be a vector or a block."""
    v = np.asarray(v, dtype=np.float64)
    need = a.n_rows if transpose else a.n_cols
    if v.shape[0] != need:
        raise DimensionError(f"vector length {v.shape[0]} does not match {need}")
    return (a.csr_t if transpose else a.csr) @ v


def _fix_signs(left: np.ndarray, right: np.ndarray) -> None:
    # largest-magnitude entry of each left vector made nonnegative
    if left.size == 0:
        return
    idx = np.argmax(np.abs(left), axis=0)
    flip = left[idx, np.arange(left.shape[1])] < 0
    left[:, flip] *= -1
    right[:, flip] *= -1


def subspace_iteration(matmat: Callable, rmatmat: Callable, shape: tuple[int, int], k: int,
                       oversample: int | None = None, max_iters: int = DEFAULT_MAX_ITERS,
                       tol: float = DEFAULT_TOL, seed: int = 0,
                       vectors: int | None = None) -> SvdTriplet:
    """Block subspace iteration for the ``k`` leading singular triplets of an operator.

    Parameters
    ----------
    matmat, rmatmat : callable
        ``B -> A @ B`` and ``B -> A.T @ B`` for dense blocks ``B``.
    shape : (m, n)
        Operator shape.
    k : int
        Number of triplets returned.
    oversample : int, optional
        Extra block columns; defaults to ``min(5, min(m, n) - k)``.
    max_iters, tol : int, float
        A sweep is final once the largest relative change of the ``k``
        Ritz values drops below ``tol``.
    seed : int
        Seed of the Gaussian starting block.
    vectors : int, optional
        Number of leading triplets (default all ``k``) whose Ritz residual
        ``|A v_i - s_i u_i|`` must also fall below ``tol * s_1``. Singular
        values settle about twice as fast as vectors, so callers that only
        need values pass 0.

    Each sweep applies the operator and its transpose once to the block,
    re-orthonormalizes with QR and extracts Ritz triplets from the small
    projected matrix.
    """
    m, n = shape
    kmax = min(m, n)
    if not 1 <= k <= kmax:
        raise ValueError(f"rank {k} outside [1, {kmax}]")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    nv = k if vectors is None else min(max(vectors, 0), k)
    p = min(5, kmax - k) if oversample is None else min(oversample, kmax - k)
    block = k + p
    rng = np.random.Generator(np.random.Philox(seed))
    basis, _ = np.linalg.qr(rng.standard_normal((n, block)))
    prev = s = left = None
    converged = False
    it = 0
    y = matmat(basis)
    while it < max_iters:
        it += 1
        q, _ = np.linalg.qr(y)
        pz, rz = np.linalg.qr(rmatmat(q))
        u, s, wt = np.linalg.svd(rz.T)
        left = q @ u
        basis = pz @ wt.T
        y = matmat(basis)
        if prev is not None:
            top = s[:k]
            if top[0] == 0.0:
                converged = True
                break
            denom = np.maximum(top, np.finfo(float).eps * top[0])
            if np.max(np.abs(top - prev) / denom) < tol:
                # the product for the next sweep doubles as the residual check
                res = np.linalg.norm(y[:, :nv] - left[:, :nv] * top[:nv]) if nv else 0.0
                if res <= tol * top[0]:
                    converged = True
                    break
        prev = s[:k].copy()
    left = np.ascontiguousarray(left[:, :k])
    right = np.ascontiguousarray(basis[:, :k])
    _fix_signs(left, right)
    return SvdTriplet(left, s[:k].copy(), right, converged, it)


def top_r_svd(a: SparseObserved, r: int, max_iters: int = DEFAULT_MAX_ITERS,
              tol: float = DEFAULT_TOL, seed: int = 0,
              vectors: int | None = None) -> SvdTriplet:
    """The ``r`` largest singular triplets of a sparse matrix.

    ``vectors`` limits the residual test to the leading triplets, see
    :func:`subspace_iteration`.

    Each sweep costs ``O(|E| (r + p))`` for the two sparse block products
    plus the QR re-orthonormalization.
    """
    if not 1 <= r <= min(a.shape):
        raise ValueError(f"rank {r} outside [1, {min(a.shape)}]")
    return subspace_iteration(a.csr.dot, a.csr_t.dot, a.shape, r,
                              max_iters=max_iters, tol=tol, seed=seed, vectors=vectors)


def dense_svd(a) -> SvdTriplet:
    """Full (thin) SVD of a small dense matrix, used as an oracle."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError("dense_svd expects a 2-D array")
    if min(a.shape) > DENSE_SVD_CAP:
        raise ValueError(f"dense_svd is capped at min(m, n) <= {DENSE_SVD_CAP}")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    right = np.ascontiguousarray(vt.T)
    u = np.ascontiguousarray(u)
    _fix_signs(u, right)
    return SvdTriplet(u, s, right, True, 0)
