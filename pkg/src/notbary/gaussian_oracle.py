"""Closed-form Gaussian optimal transport.

Matrix square roots, the Bures-Wasserstein distance, the fixed-point
barycenter iteration and exact Monge maps. These are the ground truth for
the Gaussian benchmark.

Cost convention: `bures_wasserstein_sq` and `total_variance` report the
standard value (no 1/2 factor). Costs built on ``1/2 |x - y|^2`` use half of
it; convert with `to_half_convention`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
from scipy import linalg

from .distributions import GaussianDist
from .errors import ContractError, ConvergenceError

logger = logging.getLogger(__name__)

ASYMMETRY_TOL = 1e-8
EIGEN_FLOOR = 1e-12
NEGATIVE_EIGEN_TOL = 1e-10
FIXED_POINT_TOL = 1e-12
FIXED_POINT_MAX_ITER = 10_000


@dataclass(frozen=True)
class AffineMap:
    """``x -> A x + b`` acting on row batches."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        b = np.atleast_1d(np.asarray(self.b, dtype=np.float64))
        if A.shape != (b.shape[0], b.shape[0]):
            raise ContractError("affine map shapes disagree", {"A": list(A.shape), "b": list(b.shape)})
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ContractError("affine map has non-finite entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return int(self.b.shape[0])

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.A.T + self.b

    def pushforward(self, g: GaussianDist) -> GaussianDist:
        cov = self.A @ g.cov @ self.A.T
        return GaussianDist(self.A @ g.mean + self.b, 0.5 * (cov + cov.T))

    def to_json(self) -> Dict[str, Any]:
        return {"A": self.A.tolist(), "b": self.b.tolist()}

    @classmethod
    def identity(cls, dim: int) -> "AffineMap":
        return cls(np.eye(dim), np.zeros(dim))


def _symmetric_eigh(a: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractError("matrix must be square", {"shape": list(a.shape)})
    asym = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    if asym > ASYMMETRY_TOL:
        raise ContractError("matrix is not symmetric", {"max_asymmetry": asym})
    w, v = linalg.eigh(0.5 * (a + a.T))
    if w.size and w[0] < -NEGATIVE_EIGEN_TOL * max(1.0, float(np.max(np.abs(w)))):
        logger.debug("clamping negative eigenvalue %.3e", w[0])
    return np.maximum(w, EIGEN_FLOOR), v


def _matrix_power_psd(a: np.ndarray, p: float) -> np.ndarray:
    w, v = _symmetric_eigh(a)
    out = (v * w**p) @ v.T
    return 0.5 * (out + out.T)


def sqrtm_psd(a: np.ndarray) -> np.ndarray:
    """Symmetric square root via eigendecomposition with eigenvalues clamped at 1e-12.

    Raises:
        ContractError: If ``a`` is not square or its asymmetry exceeds 1e-8.
    """
    return _matrix_power_psd(a, 0.5)


def inv_sqrtm_psd(a: np.ndarray) -> np.ndarray:
    return _matrix_power_psd(a, -0.5)


def _check_same_dim(g1: GaussianDist, g2: GaussianDist) -> None:
    if g1.dim != g2.dim:
        raise ContractError("Gaussians differ in dimension", {"left": g1.dim, "right": g2.dim})


def bures_wasserstein_sq(g1: GaussianDist, g2: GaussianDist) -> float:
    """``|m1 - m2|^2 + tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2)`` (standard convention)."""
    _check_same_dim(g1, g2)
    r1 = sqrtm_psd(g1.cov)
    cross = sqrtm_psd(r1 @ g2.cov @ r1)
    value = float(np.sum((g1.mean - g2.mean) ** 2) + np.trace(g1.cov + g2.cov - 2.0 * cross))
    return max(value, 0.0)


def to_half_convention(value: float) -> float:
    """Convert a standard squared distance to the ``1/2 |x - y|^2`` cost convention."""
    return 0.5 * value


def total_variance(g: GaussianDist) -> float:
    """Trace of the covariance; the L2-UVP denominator."""
    return float(np.trace(g.cov))


def _check_weights(weights: Sequence[float], count: int) -> np.ndarray:
    lam = np.asarray(weights, dtype=np.float64)
    if lam.shape != (count,) or np.any(lam <= 0) or abs(float(lam.sum()) - 1.0) > 1e-12:
        raise ContractError(
            "weights must be positive, one per Gaussian, and sum to 1",
            {"weights": lam.tolist(), "count": count},
        )
    return lam


@dataclass(frozen=True)
class FixedPointResult:
    barycenter: GaussianDist
    iterations: int
    residual: float


def fixed_point_iteration(
    gs: Sequence[GaussianDist],
    weights: Sequence[float],
    tol: float = FIXED_POINT_TOL,
    max_iter: int = FIXED_POINT_MAX_ITER,
) -> FixedPointResult:
    """Run the covariance fixed point and report iterations and final residual.

    The update is ``S <- S^-1/2 (sum_k l_k (S^1/2 S_k S^1/2)^1/2)^2 S^-1/2``
    from ``S = sum_k l_k S_k``; it stops once the Frobenius change between
    iterates is at most ``tol * max(1, |S|_F)``.

    Raises:
        ContractError: On empty input, mixed dimensions or invalid weights.
        ConvergenceError: If ``max_iter`` updates do not reach ``tol``.
    """
    if not gs:
        raise ContractError("need at least one Gaussian")
    for g in gs[1:]:
        _check_same_dim(gs[0], g)
    lam = _check_weights(weights, len(gs))
    mean = np.sum([w * g.mean for w, g in zip(lam, gs)], axis=0)
    sigma = np.sum([w * g.cov for w, g in zip(lam, gs)], axis=0)

    residual = float("inf")
    for it in range(1, max_iter + 1):
        root = sqrtm_psd(sigma)
        inv_root = inv_sqrtm_psd(sigma)
        inner = np.sum([w * sqrtm_psd(root @ g.cov @ root) for w, g in zip(lam, gs)], axis=0)
        updated = inv_root @ inner @ inner @ inv_root
        updated = 0.5 * (updated + updated.T)
        residual = float(np.linalg.norm(updated - sigma))
        sigma = updated
        if residual <= tol * max(1.0, float(np.linalg.norm(sigma))):
            logger.debug("fixed point converged after %d iterations", it)
            return FixedPointResult(GaussianDist(mean, sigma), it, residual)
    raise ConvergenceError(
        "fixed-point barycenter did not converge",
        {"residual": residual, "iterations": max_iter},
    )


def fixed_point_barycenter(
    gs: Sequence[GaussianDist],
    weights: Sequence[float],
    tol: float = FIXED_POINT_TOL,
    max_iter: int = FIXED_POINT_MAX_ITER,
) -> GaussianDist:
    """Wasserstein barycenter of Gaussians; the mean is ``sum_k l_k m_k``."""
    return fixed_point_iteration(gs, weights, tol, max_iter).barycenter


def gaussian_monge_map(p: GaussianDist, q: GaussianDist) -> AffineMap:
    """Optimal map from ``p`` to ``q`` for the quadratic cost.

    ``A = Sp^-1/2 (Sp^1/2 Sq Sp^1/2)^1/2 Sp^-1/2`` and ``b = m_q - A m_p``.
    """
    _check_same_dim(p, q)
    root = sqrtm_psd(p.cov)
    inv_root = inv_sqrtm_psd(p.cov)
    a = inv_root @ sqrtm_psd(root @ q.cov @ root) @ inv_root
    a = 0.5 * (a + a.T)
    return AffineMap(a, q.mean - a @ p.mean)


def affine_transport_cost(p: GaussianDist, t: AffineMap) -> float:
    """Exact ``E 1/2 |x - T(x)|^2`` for ``x ~ p`` from Gaussian moments."""
    if t.dim != p.dim:
        raise ContractError("map and Gaussian differ in dimension", {"map": t.dim, "gaussian": p.dim})
    residual = np.eye(p.dim) - t.A
    shift = residual @ p.mean - t.b
    return 0.5 * float(shift @ shift + np.trace(residual @ p.cov @ residual.T))


def barycenter_maps(
    gs: Sequence[GaussianDist], barycenter: GaussianDist
) -> Tuple[List[AffineMap], List[AffineMap]]:
    """Monge maps ``P_k -> Q*`` (used by L2-UVP) and ``Q* -> P_k``."""
    to_bary = [gaussian_monge_map(g, barycenter) for g in gs]
    from_bary = [gaussian_monge_map(barycenter, g) for g in gs]
    return to_bary, from_bary


def solve_instance(payload: Dict[str, Any]) -> Dict[str, Any]:
    """Solve a JSON Gaussian instance ``{"gaussians": [...], "weights": [...]}``.

    ``weights`` defaults to uniform. The result holds the barycenter, the
    maps from each input to it and the fixed-point diagnostics.
    """
    try:
        gs = [GaussianDist.from_json(item) for item in payload["gaussians"]]
    except (KeyError, TypeError) as exc:
        raise ContractError("instance needs a 'gaussians' list of {mean, cov}") from exc
    if not gs:
        raise ContractError("instance has no Gaussians")
    weights = payload.get("weights") or [1.0 / len(gs)] * len(gs)
    result = fixed_point_iteration(gs, weights)
    to_bary, _ = barycenter_maps(gs, result.barycenter)
    return {
        "barycenter": result.barycenter.to_json(),
        "total_variance": total_variance(result.barycenter),
        "maps": [m.to_json() for m in to_bary],
        "iterations": result.iterations,
        "residual": result.residual,
    }
