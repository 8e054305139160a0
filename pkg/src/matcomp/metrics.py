"""Reconstruction error measures, evaluated densely at desk scale and in factored form above it."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .sampling import EXACT_SCAN_LIMIT, SCAN_SAMPLES, STREAM_SCAN, LowRankFactors, max_abs_entry, rng_for


@dataclass(frozen=True)
class ErrorReport:
    rmse: float
    rel_frobenius: float
    max_abs_error: float
    M_max: float
    thm_bound: float | None = None
    exact: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def _dense_ok(truth: LowRankFactors, dense: bool | None) -> bool:
    return truth.m * truth.n <= EXACT_SCAN_LIMIT if dense is None else dense


def frobenius_diff(truth: LowRankFactors, approx: LowRankFactors, dense: bool | None = None) -> float:
    """``|U S V^T - X T Y^T|_F``.

    The factored path stacks ``[U S, -X T]`` and ``[V, Y]``, takes thin QR
    factors of both and measures ``|R1 R2^T|_F``; this avoids the
    cancellation of the expanded Gram-trace identity when the error is tiny.
    """
    if truth.shape != approx.shape:
        raise ValueError("dimension mismatch")
    if _dense_ok(truth, dense):
        return float(np.linalg.norm(truth.dense() - approx.dense()))
    left = np.hstack([truth.U * truth.sigma, -approx.U * approx.sigma])
    right = np.hstack([truth.V, approx.V])
    r1 = np.linalg.qr(left, mode="r")
    r2 = np.linalg.qr(right, mode="r")
    return float(np.linalg.norm(r1 @ r2.T))


def frobenius_norm(f: LowRankFactors) -> float:
    # U^T U = m 1 and V^T V = n 1, so |U S V^T|_F = sqrt(mn) |S|
    return float(np.sqrt(f.m * f.n) * np.linalg.norm(f.sigma))


def _max_abs_error(truth, approx, dense):
    m, n = truth.shape
    if dense:
        return float(np.max(np.abs(truth.dense() - approx.dense())))
    rng = rng_for(0, STREAM_SCAN)
    rows = rng.integers(0, m, SCAN_SAMPLES)
    cols = rng.integers(0, n, SCAN_SAMPLES)
    return float(np.max(np.abs(truth.entries(rows, cols) - approx.entries(rows, cols))))


def rmse(truth: LowRankFactors, approx: LowRankFactors, num_revealed: int | None = None,
         C: float = 1.0, dense: bool | None = None) -> ErrorReport:
    """Relative RMSE ``[|M - Mhat|_F^2 / (m n M_max^2)]^{1/2}`` plus companions.

    ``thm_bound`` is ``C alpha^{3/2} r n / |E|``, the right-hand side the
    squared RMSE is compared against; it is only filled in when
    ``num_revealed`` is given.
    """
    dense = _dense_ok(truth, dense)
    M_max, _ = max_abs_entry(truth, exact=dense)
    if M_max == 0:
        raise ValueError("M_max = 0: relative RMSE undefined")
    diff = frobenius_diff(truth, approx, dense=dense)
    m, n = truth.shape
    bound = None
    if num_revealed:
        bound = float(C * truth.alpha ** 1.5 * truth.r * n / num_revealed)
    return ErrorReport(
        rmse=float(diff / (np.sqrt(m * n) * M_max)),
        rel_frobenius=float(diff / frobenius_norm(truth)),
        max_abs_error=_max_abs_error(truth, approx, dense),
        M_max=float(M_max),
        thm_bound=bound,
        exact=dense,
    )
