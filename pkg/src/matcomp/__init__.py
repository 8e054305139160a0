"""Low-rank matrix completion from a sparse subset of entries.

Pipeline: trim over-represented rows and columns, project onto the leading
rank-r singular space, then clean by gradient descent over pairs of
subspaces.
"""
__version__ = "0.1.0"

from .sparsemat import SparseObserved, SvdTriplet, dense_svd, spmv, top_r_svd  # noqa: E402
from .sampling import (IncoherenceReport, LowRankFactors, RevealModel,  # noqa: E402
                       incoherence_report, random_low_rank, reveal)
from .spectral import project_Tr, spectral_diagnostics, trim  # noqa: E402
from .grassmann import (GrassmannPair, TangentPair, distances, geodesic,  # noqa: E402
                        pair_distance, principal_angles, rescale_incoherent,
                        subspace_gap_bound)
from .cleaning import (CleaningConfig, clean, cost_F, cost_G, grad_Ftilde,  # noqa: E402
                       gradient_descent, solve_S)
from .metrics import ErrorReport, rmse  # noqa: E402
from .pipeline import complete, rank_sweep  # noqa: E402
