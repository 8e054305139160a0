"""Cleaning stage: minimize the observed-entry discrepancy over pairs of subspaces.

For frames ``X`` (m x r) and ``Y`` (n x r)

    F(X, Y)  = min_S 1/2 sum_{(i,j) in E} (M_ij - (X S Y^T)_ij)^2
    Ft(X, Y) = F(X, Y) + rho * G(X, Y)

where ``G`` penalizes rows whose squared norm exceeds ``3 mu0 r``. The
minimizer is found by gradient descent along geodesics with a backtracking
(Armijo) step rule.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .grassmann import (GrassmannPair, TangentPair, pair_distance, pair_geodesic,
                        rescale_incoherent, row_norms_sq)
from .sparsemat import SparseObserved

EXP_ARG_CAP = 700.0
MU0_CAP = 2 ** 10
GRAD_TOL_SCALE = 1e-10


class GOverflowWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class CleaningConfig:
    """Parameters of the descent.

    ``rho=None`` means ``n * eps`` (``rho_mode="n_eps"``) or, with
    ``rho_mode="sigma_scaled"``, ``n * eps * sqrt(alpha) * sigma_max**2`` where
    ``sigma_max`` must be supplied (e.g. ``s_1 / eps`` from the spectral
    stage). ``mu0=None`` enables the doubling search in :func:`clean`.
    ``grad_tol=None`` scales as ``GRAD_TOL_SCALE * n * eps * s_1(S_0)**2``.
    """

    rho: float | None = None
    rho_mode: str = "n_eps"
    sigma_max: float | None = None
    mu0: float | None = None
    gamma: float = math.inf
    max_iters: int = 500
    grad_tol: float | None = None
    fit_tol: float = 1e-16
    initial_step: float = 1.0
    backtrack: float = 0.5
    armijo: float = 1e-4
    max_backtracks: int = 60
    step_growth: float = 2.0

    def __post_init__(self):
        if self.rho_mode not in ("n_eps", "sigma_scaled"):
            raise ValueError("rho_mode must be 'n_eps' or 'sigma_scaled'")
        if self.rho is not None and self.rho < 0:
            raise ValueError("rho must be nonnegative")
        if self.mu0 is not None and self.mu0 <= 0:
            raise ValueError("mu0 must be positive")
        if not self.gamma > 0 or self.max_iters < 0 or self.fit_tol < 0:
            raise ValueError("gamma must be positive, max_iters and fit_tol nonnegative")
        if not (0 < self.backtrack < 1 and 0 < self.armijo < 1 and self.initial_step > 0):
            raise ValueError("invalid line-search parameters")

    def resolve_rho(self, observed: SparseObserved) -> float:
        if self.rho is not None:
            return float(self.rho)
        m, n = observed.shape
        base = n * observed.eps
        if self.rho_mode == "sigma_scaled":
            if self.sigma_max is None:
                raise ValueError("rho_mode='sigma_scaled' needs sigma_max")
            return float(base * math.sqrt(m / n) * self.sigma_max ** 2)
        return float(base)


@dataclass
class CleaningState:
    x: GrassmannPair
    S: np.ndarray
    F: float
    G: float
    grad_norm: float
    iterations: int
    mu0: float
    rho: float
    stop_reason: str = ""
    stalled: bool = False
    degenerate: bool = False
    fit_residual0: float = 0.0
    saturations: int = 0
    trace: list = field(default_factory=list)

    @property
    def Ftilde(self) -> float:
        return self.F + self.rho * self.G

    @property
    def fit_residual(self) -> float:
        """Observed-entry residual ``1/2 sum_E (M - X S Y^T)^2``, i.e. F."""
        return self.F

    def summary(self) -> dict:
        return {
            "F": float(self.F),
            "G": float(self.G),
            "grad_norm": float(self.grad_norm),
            "iterations": int(self.iterations),
            "mu0": float(self.mu0),
            "rho": float(self.rho),
            "stop_reason": self.stop_reason,
            "stalled": bool(self.stalled),
            "degenerate": bool(self.degenerate),
            "fit_residual0": float(self.fit_residual0),
            "saturations": int(self.saturations),
        }


def _gather(x: GrassmannPair, observed: SparseObserved):
    return np.take(x.X, observed.rows, axis=0), np.take(x.Y, observed.cols, axis=0)


def _fit(xr, yc, values):
    """Inner least squares on gathered rows; returns ``(S, degenerate, residual)``."""
    r = xr.shape[1]
    A = (xr[:, :, None] * yc[:, None, :]).reshape(-1, r * r)
    N = A.T @ A
    b = A.T @ values
    evals = np.linalg.eigvalsh(N)
    degenerate = bool(evals[-1] <= 0 or evals[0] <= 1e-12 * evals[-1])
    if degenerate:
        s = np.linalg.lstsq(A, values, rcond=None)[0]
    else:
        s = np.linalg.solve(N, b)
    return s.reshape(r, r), degenerate, A @ s - values


def solve_S(x: GrassmannPair, observed: SparseObserved, return_degenerate: bool = False):
    """Exact minimizer of ``S -> 1/2 sum_E (M_ij - (X S Y^T)_ij)^2``.

    Solves the ``r^2 x r^2`` normal equations. When they are singular (too
    few entries for the subspaces) the minimum-norm least-squares solution
    is returned instead and, with ``return_degenerate``, flagged.
    """
    S, degenerate, _ = _fit(*_gather(x, observed), observed.values)
    return (S, degenerate) if return_degenerate else S


def cost_F(x: GrassmannPair, observed: SparseObserved):
    """``(F(X, Y), S)`` with S the exact inner minimizer."""
    S, _, res = _fit(*_gather(x, observed), observed.values)
    return 0.5 * float(res @ res), S


def _g1_parts(a, mu0, r, need_grad):
    z = row_norms_sq(a) / (3.0 * mu0 * r)
    over = z > 1
    if not np.any(over):
        return 0.0, (np.zeros_like(a) if need_grad else None), False
    u = z[over] - 1.0
    arg = u * u
    saturated = bool(np.any(arg > EXP_ARG_CAP))
    if saturated:
        arg = np.minimum(arg, EXP_ARG_CAP)
        u = np.minimum(u, np.sqrt(EXP_ARG_CAP))
    e = np.exp(arg)
    value = float(np.sum(np.expm1(arg)))
    grad = None
    if need_grad:
        grad = np.zeros_like(a)
        # d/dz (e^{(z-1)^2} - 1) = 2 (z-1) e^{(z-1)^2};  dz/da_i = 2 a_i / (3 mu0 r)
        coef = 2.0 * u * e * 2.0 / (3.0 * mu0 * r)
        grad[over] = coef[:, None] * a[over]
    return value, grad, saturated


def cost_G(x: GrassmannPair, mu0: float, r: int | None = None) -> float:
    """Row-incoherence penalty; zero exactly on K(3 mu0)."""
    r = x.X.shape[1] if r is None else r
    gx, _, sx = _g1_parts(x.X, mu0, r, False)
    gy, _, sy = _g1_parts(x.Y, mu0, r, False)
    if sx or sy:
        warnings.warn("regularizer argument saturated", GOverflowWarning, stacklevel=2)
    return gx + gy


@dataclass
class _Eval:
    F: float
    G: float
    S: np.ndarray
    degenerate: bool
    grad: TangentPair | None = None


class _Objective:
    """Ft and its Riemannian gradient on a fixed revealed set."""

    def __init__(self, observed: SparseObserved, mu0: float, rho: float):
        self.obs = observed
        self.mu0 = mu0
        self.rho = rho
        self.saturations = 0
        csr = observed.csr
        self._indptr = csr.indptr
        self._indices = csr.indices

    def __call__(self, x: GrassmannPair, need_grad: bool = True) -> _Eval:
        obs = self.obs
        r = x.X.shape[1]
        S, degenerate, res = _fit(*_gather(x, obs), obs.values)
        F = 0.5 * float(res @ res)
        use_g = self.rho > 0
        gx, dgx, sx = _g1_parts(x.X, self.mu0, r, need_grad and use_g)
        gy, dgy, sy = _g1_parts(x.Y, self.mu0, r, need_grad and use_g)
        self.saturations += int(sx) + int(sy)
        out = _Eval(F, gx + gy, S, degenerate)
        if need_grad:
            # entries are stored row-major, matching the CSR layout
            R = sp.csr_matrix((res, self._indices, self._indptr), shape=obs.shape)
            ex = R @ (x.Y @ S.T)
            ey = R.T @ (x.X @ S)
            if use_g:
                ex = ex + self.rho * dgx
                ey = ey + self.rho * dgy
            m, n = obs.shape
            W = ex - x.X @ (x.X.T @ ex) / m
            Z = ey - x.Y @ (x.Y.T @ ey) / n
            out.grad = TangentPair(W, Z)
        return out


def Ftilde(x: GrassmannPair, observed: SparseObserved, mu0: float, rho: float) -> float:
    ev = _Objective(observed, mu0, rho)(x, need_grad=False)
    return ev.F + rho * ev.G


def _resolve(config: CleaningConfig, observed: SparseObserved, mu0=None):
    mu0 = config.mu0 if mu0 is None else mu0
    if mu0 is None:
        mu0 = 1.0
    return mu0, config.resolve_rho(observed)


def grad_Ftilde(x: GrassmannPair, observed: SparseObserved, config: CleaningConfig) -> TangentPair:
    """Riemannian gradient of ``F + rho G``; tangent at ``x`` by construction."""
    mu0, rho = _resolve(config, observed)
    return _Objective(observed, mu0, rho)(x).grad


def gradient_descent(x0: GrassmannPair, observed: SparseObserved, config: CleaningConfig,
                     mu0: float | None = None):
    """Geodesic gradient descent on ``Ft`` from ``x0``.

    Each step moves along the geodesic with velocity ``-grad``. The step
    starts at ``initial_step / |grad|`` on the first iteration and at
    ``step_growth`` times the previous accepted step afterwards, and is
    halved (``backtrack``) until the Armijo condition holds and, for finite
    ``gamma``, the trial point stays within ``gamma`` of ``x0``.

    Stops on relative observed fit ``sum_E res^2 / sum_E M^2 <= fit_tol``,
    on ``|grad| <= grad_tol`` or after ``max_iters`` steps. A line search
    that cannot find a decrease marks the state ``stalled``.

    Returns ``(x_final, S_final, state)``.
    """
    mu0, rho = _resolve(config, observed, mu0)
    obj = _Objective(observed, mu0, rho)
    norm_m = float(observed.values @ observed.values)
    x = x0
    ev = obj(x)
    F0 = ev.F
    grad_tol = config.grad_tol
    if grad_tol is None:
        s1 = float(np.linalg.norm(ev.S, 2))
        grad_tol = GRAD_TOL_SCALE * observed.n_cols * observed.eps * s1 ** 2
    state = CleaningState(x, ev.S, ev.F, ev.G, ev.grad.norm(), 0, mu0, rho,
                          fit_residual0=F0, degenerate=ev.degenerate)
    step = None
    k = 0
    while True:
        gnorm = ev.grad.norm()
        dist = pair_distance(x, x0).geodesic if k else 0.0
        state.trace.append({"iter": k, "F": ev.F, "G": ev.G, "grad_norm": gnorm,
                            "dist_to_x0": dist, "step": step if step is not None else 0.0})
        state.x, state.S, state.F, state.G, state.grad_norm, state.iterations = (
            x, ev.S, ev.F, ev.G, gnorm, k)
        state.degenerate = state.degenerate or ev.degenerate
        if norm_m == 0 or 2.0 * ev.F <= config.fit_tol * norm_m:
            state.stop_reason = "fit_tol"
            break
        if gnorm <= grad_tol:
            state.stop_reason = "grad_tol"
            break
        if k >= config.max_iters:
            state.stop_reason = "max_iters"
            break
        f0 = ev.F + rho * ev.G
        t = config.initial_step / (gnorm + np.finfo(float).eps) if step is None \
            else step * config.step_growth
        direction = ev.grad.scaled(-1.0)
        accepted = None
        for _ in range(config.max_backtracks):
            trial = pair_geodesic(x, direction, t)
            if math.isfinite(config.gamma) and pair_distance(trial, x0).geodesic > config.gamma:
                t *= config.backtrack
                continue
            tev = obj(trial, need_grad=False)
            if tev.F + rho * tev.G <= f0 - config.armijo * t * gnorm ** 2:
                accepted = trial
                break
            t *= config.backtrack
        state.saturations = obj.saturations
        if accepted is None:
            state.stalled = True
            state.stop_reason = "stalled"
            break
        x = accepted
        ev = obj(x)
        step = t
        k += 1
    return state.x, state.S, state


def clean(x_init: GrassmannPair, observed: SparseObserved, config: CleaningConfig):
    """Rescale ``x_init`` into ``K(3 mu0)`` and descend; search ``mu0`` if unknown.

    With ``config.mu0`` set this is a single run. Otherwise ``mu0`` starts at
    1 and doubles (up to ``2**10``) while the final point still pays a
    positive penalty ``G``. Returns ``(x_final, S_final, state)`` of the last run.
    """
    mu_values = [config.mu0] if config.mu0 is not None else \
        [2.0 ** k for k in range(int(math.log2(MU0_CAP)) + 1)]
    result = None
    for mu0 in mu_values:
        x0 = GrassmannPair(rescale_incoherent(x_init.X, mu0), rescale_incoherent(x_init.Y, mu0))
        result = gradient_descent(x0, observed, replace(config, mu0=mu0))
        if result[2].G == 0:
            break
    return result
