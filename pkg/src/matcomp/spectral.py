"""Trimming of over-represented rows/columns, the rescaled rank-r projection and
spectral diagnostics of the trimmed matrix."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .sampling import LowRankFactors, max_abs_entry
from .sparsemat import SparseObserved, SvdTriplet, subspace_iteration, top_r_svd


@dataclass(frozen=True, eq=False)
class TrimReport:
    """What :func:`trim` removed.

    A row is zeroed iff its degree is strictly above ``row_threshold``
    (``2|E|/m``); likewise for columns with ``2|E|/n``. Degrees are counted
    on the untrimmed input.
    """

    kept_rows: np.ndarray
    kept_cols: np.ndarray
    row_threshold: float
    col_threshold: float
    zeroed_rows: int
    zeroed_cols: int
    row_degrees: np.ndarray
    col_degrees: np.ndarray
    num_revealed: int
    num_kept: int

    def degree_histogram(self, axis: str = "row") -> list[tuple[int, int]]:
        """``(degree, count)`` pairs for nonempty degree values."""
        deg = self.row_degrees if axis == "row" else self.col_degrees
        counts = np.bincount(deg)
        return [(int(d), int(c)) for d, c in enumerate(counts) if c]

    def summary(self) -> dict:
        return {
            "row_threshold": float(self.row_threshold),
            "col_threshold": float(self.col_threshold),
            "zeroed_rows": int(self.zeroed_rows),
            "zeroed_cols": int(self.zeroed_cols),
            "num_revealed": int(self.num_revealed),
            "num_kept": int(self.num_kept),
            "max_row_degree": int(self.row_degrees.max(initial=0)),
            "max_col_degree": int(self.col_degrees.max(initial=0)),
        }


def trim(a: SparseObserved, thresholds: tuple[float, float] | None = None):
    """Zero every row of degree > 2|E|/m and every column of degree > 2|E|/n.

    ``thresholds=(row, col)`` freezes the cut-offs (e.g. to re-trim an
    already trimmed matrix with the original values). Returns the trimmed
    matrix and a :class:`TrimReport`.
    """
    if a.nnz == 0:
        raise ValueError("cannot trim a matrix with no revealed entries")
    m, n = a.shape
    if thresholds is None:
        thresholds = (2.0 * a.nnz / m, 2.0 * a.nnz / n)
    row_thr, col_thr = thresholds
    rdeg = a.row_degrees()
    cdeg = a.col_degrees()
    row_ok = rdeg <= row_thr
    col_ok = cdeg <= col_thr
    keep = row_ok[a.rows] & col_ok[a.cols]
    out = a.select(keep)
    report = TrimReport(
        kept_rows=np.flatnonzero(row_ok),
        kept_cols=np.flatnonzero(col_ok),
        row_threshold=float(row_thr),
        col_threshold=float(col_thr),
        zeroed_rows=int(m - row_ok.sum()),
        zeroed_cols=int(n - col_ok.sum()),
        row_degrees=rdeg,
        col_degrees=cdeg,
        num_revealed=a.nnz,
        num_kept=out.nnz,
    )
    return out, report


def project_Tr(trimmed: SparseObserved, r: int, num_revealed: int,
               svd: SvdTriplet | None = None, seed: int = 0) -> LowRankFactors:
    """Factors of ``(mn/|E|) sum_{i<=r} s_i x_i y_i^T`` for the trimmed matrix.

    ``num_revealed`` is ``|E|`` before trimming. In frame normalization the
    core values are ``s_i sqrt(mn) / |E|`` (that is ``s_i / eps``). A
    precomputed ``svd`` with at least ``r`` triplets may be passed in.
    """
    m, n = trimmed.shape
    if not 1 <= r <= min(m, n):
        raise ValueError(f"rank {r} outside [1, {min(m, n)}]")
    if num_revealed < 1:
        raise ValueError("num_revealed must be positive")
    if svd is None or svd.k < r:
        svd = top_r_svd(trimmed, r, seed=seed)
    U = svd.left[:, :r] * np.sqrt(m)
    V = svd.right[:, :r] * np.sqrt(n)
    return LowRankFactors(U, svd.s[:r] * np.sqrt(m * n) / num_revealed, V)


@dataclass(frozen=True)
class SpectralDiagnostics:
    sigma: list
    sigma_over_eps: list
    deviations: list
    max_deviation: float
    opnorm_deviation: float
    normalized_opnorm: float
    gap_ratio: float | None
    eps: float
    M_max: float
    svd_converged: bool
    opnorm_converged: bool

    def to_dict(self) -> dict:
        return asdict(self)


def deviation_opnorm(truth: LowRankFactors, trimmed: SparseObserved, eps: float,
                     tol: float = 1e-8, max_iters: int = 300, seed: int = 0):
    """``|(eps/sqrt(mn)) M - trimmed|_2`` with M applied in factored form.

    Returns ``(norm, converged)``.
    """
    m, n = trimmed.shape
    c = eps / np.sqrt(m * n)
    US = truth.U * (c * truth.sigma)
    VS = truth.V * (c * truth.sigma)
    A, At = trimmed.csr, trimmed.csr_t

    def matmat(b):
        return US @ (truth.V.T @ b) - A @ b

    def rmatmat(b):
        return VS @ (truth.U.T @ b) - At @ b

    res = subspace_iteration(matmat, rmatmat, (m, n), 1, oversample=10,
                             max_iters=max_iters, tol=tol, seed=seed, vectors=0)
    return float(res.s[0]), res.converged


def spectral_diagnostics(truth: LowRankFactors, trimmed: SparseObserved, r: int,
                         eps: float, svd: SvdTriplet | None = None,
                         seed: int = 0) -> SpectralDiagnostics:
    """Singular values of the trimmed matrix against the rescaled truth.

    ``eps`` is the sample budget of the untrimmed reveal. The leading
    ``r + 1`` singular values are always computed so the gap
    ``s_r / s_{r+1}`` can be reported.
    """
    if truth.shape != trimmed.shape:
        raise ValueError("ground truth and observed dimensions differ")
    k = min(r + 1, min(trimmed.shape))
    if svd is None or svd.k < k:
        svd = top_r_svd(trimmed, k, seed=seed, vectors=0)
    s = svd.s[:k]
    scaled = s / eps
    Sigma = np.zeros(k)
    Sigma[:min(truth.r, k)] = truth.sigma[:k]
    dev = np.abs(scaled - Sigma)
    opnorm, op_conv = deviation_opnorm(truth, trimmed, eps, seed=seed)
    M_max, _ = max_abs_entry(truth)
    normalized = opnorm / (M_max * np.sqrt(truth.alpha * eps)) if M_max > 0 else 0.0
    gap = float(s[r - 1] / s[r]) if k > r and s[r] > 0 else None
    return SpectralDiagnostics(
        sigma=[float(v) for v in s],
        sigma_over_eps=[float(v) for v in scaled],
        deviations=[float(v) for v in dev],
        max_deviation=float(dev.max()),
        opnorm_deviation=opnorm,
        normalized_opnorm=float(normalized),
        gap_ratio=gap,
        eps=float(eps),
        M_max=float(M_max),
        svd_converged=bool(svd.converged),
        opnorm_converged=bool(op_conv),
    )
