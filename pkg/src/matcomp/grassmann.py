"""Geometry of G(m, r) x G(n, r) with frames normalized as ``A^T A = n 1``."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .sampling import LowRankFactors, frame_error

TANGENT_TOL = 1e-8


class NotTangentError(ValueError):
    pass


class RescalingError(ArithmeticError):
    """Row clipping left a frame that cannot be renormalized into K(3 mu0)."""


class BoundViolation(AssertionError):
    pass


class Distances(NamedTuple):
    geodesic: float
    chordal: float
    projection: float


@dataclass(frozen=True, eq=False)
class GrassmannPair:
    """A point ``(X, Y)``; only the column spaces matter."""

    X: np.ndarray
    Y: np.ndarray

    def rotated(self, qx, qy) -> "GrassmannPair":
        return GrassmannPair(self.X @ qx, self.Y @ qy)


@dataclass(frozen=True, eq=False)
class TangentPair:
    """A tangent vector ``(W, Z)`` with ``W^T X = 0`` and ``Z^T Y = 0``."""

    W: np.ndarray
    Z: np.ndarray

    def inner(self, other: "TangentPair") -> float:
        return float(np.vdot(self.W, other.W) + np.vdot(self.Z, other.Z))

    def norm(self) -> float:
        return float(np.sqrt(self.inner(self)))

    def scaled(self, c: float) -> "TangentPair":
        return TangentPair(c * self.W, c * self.Z)

    def __add__(self, other: "TangentPair") -> "TangentPair":
        return TangentPair(self.W + other.W, self.Z + other.Z)


def check_frame(a: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] > a.shape[0]:
        raise ValueError("a frame is an n x r array with r <= n")
    if frame_error(a) > tol:
        raise ValueError("frame violates A^T A = n 1")
    return a


def normalize_frame(a: np.ndarray) -> np.ndarray:
    """Closest frame to ``a`` in the symmetric (polar) sense: ``a (a^T a / n)^{-1/2}``."""
    n = a.shape[0]
    evals, evecs = np.linalg.eigh(a.T @ a / n)
    if evals[0] <= 1e-12 * max(evals[-1], 1e-300):
        raise RescalingError("frame is rank deficient")
    return a @ (evecs / np.sqrt(evals)) @ evecs.T


def _check_same(a, b):
    if a.shape != b.shape:
        raise ValueError(f"frame shapes differ: {a.shape} vs {b.shape}")


def _cos_sin(x1, x2):
    n = x1.shape[0]
    cross = x1.T @ x2 / n
    cos = np.clip(np.linalg.svd(cross, compute_uv=False), 0.0, 1.0)
    resid = (x2 - x1 @ cross) / np.sqrt(n)
    sin = np.clip(np.linalg.svd(resid, compute_uv=False), 0.0, 1.0)
    # cos descending pairs with sin ascending
    return cos, np.sort(sin)


def principal_angles(x1, x2) -> np.ndarray:
    """Principal angles in ``[0, pi/2]``, sorted ascending."""
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    _check_same(x1, x2)
    cos, sin = _cos_sin(x1, x2)
    return np.sort(np.arctan2(sin, cos))


def distances(x1, x2) -> Distances:
    theta = principal_angles(x1, x2)
    return Distances(float(np.linalg.norm(theta)),
                     float(np.linalg.norm(2 * np.sin(theta / 2))),
                     float(np.linalg.norm(np.sin(theta))))


def pair_distance(p1: GrassmannPair, p2: GrassmannPair) -> Distances:
    dx = distances(p1.X, p2.X)
    dy = distances(p1.Y, p2.Y)
    return Distances(*(float(np.hypot(a, b)) for a, b in zip(dx, dy)))


def project_tangent(base: np.ndarray, w: np.ndarray) -> np.ndarray:
    return w - base @ (base.T @ w) / base.shape[0]


def tangent_violation(base: np.ndarray, w: np.ndarray) -> float:
    """Scale-free size of the normal part: ``|X^T W|_F / (sqrt(m) |W|_F)``."""
    nw = np.linalg.norm(w)
    if nw == 0:
        return 0.0
    return float(np.linalg.norm(base.T @ w) / (np.sqrt(base.shape[0]) * nw))


def geodesic(base, w, t: float, tol: float = TANGENT_TOL) -> np.ndarray:
    """Point at time ``t`` on the geodesic from ``base`` with initial velocity ``w``.

    With ``w = L Theta R^T`` (``L^T L = m 1``) the curve is
    ``base R cos(Theta t) R^T + L sin(Theta t) R^T``. Drift of ``w`` out of the
    tangent space below ``tol`` is projected away; larger violations raise.
    """
    base = np.asarray(base, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    _check_same(base, w)
    if tangent_violation(base, w) > tol:
        raise NotTangentError("velocity is not tangent at the base frame")
    w = project_tangent(base, w)
    m = base.shape[0]
    lo, theta, rt = np.linalg.svd(w, full_matrices=False)
    theta = theta / np.sqrt(m)
    r_ = rt.T
    out = (base @ r_) * np.cos(theta * t) @ rt + (np.sqrt(m) * lo) * np.sin(theta * t) @ rt
    return normalize_frame(out)


def pair_geodesic(x: GrassmannPair, w: TangentPair, t: float) -> GrassmannPair:
    return GrassmannPair(geodesic(x.X, w.W, t), geodesic(x.Y, w.Z, t))


def row_norms_sq(a: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", a, a)


def in_K(a: np.ndarray, mu: float, r: int | None = None) -> bool:
    """Whether every row satisfies ``|row|^2 <= mu r``."""
    r = a.shape[1] if r is None else r
    return bool(np.all(row_norms_sq(a) <= mu * r))


def rescale_incoherent(x, mu0: float, r: int | None = None, max_rounds: int = 50) -> np.ndarray:
    """Clip rows to norm ``sqrt(mu0 r)`` and renormalize with a symmetric factor.

    Frames already inside ``K(mu0)`` are returned unchanged. The result is
    guaranteed to lie in ``K(3 mu0)``: if one clip-and-renormalize round
    leaves rows above that radius the round is repeated, and
    :class:`RescalingError` is raised when that does not settle.
    """
    x = check_frame(x, tol=1e-8)
    r = x.shape[1] if r is None else r
    cap = np.sqrt(mu0 * r)
    out = x
    for _ in range(max_rounds):
        norms = np.sqrt(row_norms_sq(out))
        if np.all(norms <= cap):
            if out is x:
                return x
        else:
            scale = np.minimum(1.0, cap / np.maximum(norms, 1e-300))
            out = normalize_frame(out * scale[:, None])
        if in_K(out, 3 * mu0, r):
            return out
    raise RescalingError("could not bring the frame inside K(3 mu0)")


class GapBound(NamedTuple):
    dp_u: float
    dp_v: float
    bound: float
    holds: bool


def subspace_gap_bound(truth: LowRankFactors, approx: LowRankFactors,
                       strict: bool = True) -> GapBound:
    """Projection distances of ``approx`` frames to ``truth`` and the Frobenius bound.

    The bound is ``|M - Mhat|_F / (sqrt(2 alpha) n Sigma_min)``. With
    ``strict`` a violation raises :class:`BoundViolation`.
    """
    from .metrics import frobenius_diff

    s_min = float(truth.sigma[-1])
    if s_min <= 0:
        raise ValueError("Sigma_min must be positive")
    if truth.shape != approx.shape:
        raise ValueError("dimension mismatch")
    dp_u = distances(truth.U, approx.U).projection
    dp_v = distances(truth.V, approx.V).projection
    bound = frobenius_diff(truth, approx) / (np.sqrt(2 * truth.alpha) * truth.n * s_min)
    slack = 1e-10 * bound + 1e-12
    holds = bool(dp_u <= bound + slack and dp_v <= bound + slack)
    if strict and not holds:
        raise BoundViolation(f"d_p = ({dp_u:.3g}, {dp_v:.3g}) exceeds bound {bound:.3g}")
    return GapBound(dp_u, dp_v, float(bound), holds)
