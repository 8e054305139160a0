"""End-to-end completion: trim, project, rescale and clean."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .cleaning import CleaningConfig, CleaningState, clean
from .grassmann import GrassmannPair
from .sampling import LowRankFactors, rng_for
from .sparsemat import SparseObserved, SvdTriplet, top_r_svd
from .spectral import TrimReport, project_Tr, trim

STREAM_HOLDOUT = 3
HOLDOUT_FRACTION = 0.1


@dataclass
class Completion:
    factors: LowRankFactors
    projection: LowRankFactors
    trim_report: TrimReport
    svd: SvdTriplet
    state: CleaningState | None
    r: int
    timings: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        """Numerical failure: the descent stalled or the inner solve was singular."""
        return self.state is not None and (self.state.stalled or self.state.degenerate)


def complete(observed: SparseObserved, r: int, config: CleaningConfig | None = None,
             skip_clean: bool = False, seed: int = 0) -> Completion:
    """Reconstruct a rank-``r`` matrix from its revealed entries.

    With ``skip_clean`` the rescaled projection of the trimmed matrix is
    returned as is.
    """
    config = config or CleaningConfig()
    if not 1 <= r <= min(observed.shape):
        raise ValueError(f"rank {r} outside [1, {min(observed.shape)}]")
    timings = {}
    t0 = time.perf_counter()
    trimmed, report = trim(observed)
    timings["trim"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    k = min(r + 1, min(observed.shape))
    svd = top_r_svd(trimmed, k, seed=seed, vectors=r)
    proj = project_Tr(trimmed, r, observed.nnz, svd=svd)
    timings["project"] = time.perf_counter() - t0
    if skip_clean:
        return Completion(proj, proj, report, svd, None, r, timings)
    t0 = time.perf_counter()
    if config.rho_mode == "sigma_scaled" and config.sigma_max is None:
        config = replace(config, sigma_max=float(svd.s[0] / observed.eps))
    x, S, state = clean(GrassmannPair(proj.U, proj.V), observed, config)
    timings["clean"] = time.perf_counter() - t0
    return Completion(LowRankFactors.from_xsy(x.X, S, x.Y), proj, report, svd, state, r, timings)


def holdout_split(observed: SparseObserved, seed: int = 0,
                  fraction: float = HOLDOUT_FRACTION):
    """Seeded ``(train, test)`` split of the revealed entries."""
    n_test = max(1, int(math.ceil(fraction * observed.nnz)))
    if n_test >= observed.nnz:
        raise ValueError("too few revealed entries for a hold-out split")
    perm = rng_for(seed, STREAM_HOLDOUT).permutation(observed.nnz)
    test = np.zeros(observed.nnz, dtype=bool)
    test[perm[:n_test]] = True
    return observed.select(~test), observed.select(test)


def rank_sweep(observed: SparseObserved, rmin: int, rmax: int,
               config: CleaningConfig | None = None, skip_clean: bool = False,
               seed: int = 0):
    """Pick r in ``[rmin, rmax]`` by RMS error on a held-out 10% of E.

    Returns ``(best_r, {r: heldout_rms})``; ties go to the smaller rank.
    """
    if not 1 <= rmin <= rmax <= min(observed.shape):
        raise ValueError("invalid rank range")
    train, test = holdout_split(observed, seed)
    scores = {}
    for r in range(rmin, rmax + 1):
        fit = complete(train, r, config, skip_clean, seed)
        pred = fit.factors.entries(test.rows, test.cols)
        scores[r] = float(np.sqrt(np.mean((pred - test.values) ** 2)))
    best = min(scores, key=lambda k: (scores[k], k))
    return best, scores
