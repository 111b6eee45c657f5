"""Seeded samplers and benchmark instances with known barycenters.

Samplers provide i.i.d. batches from the reference distributions P_k,
the auxiliary noise S and priors. Each sampler owns one named Philox
stream (see `notbary.utils.rng`), so two samplers built with the same
seed and stream name produce bit-identical batches.

Public API:
    - GaussianDist
    - Sampler and its variants (Gaussian, TwistedGaussian, Empirical, DiracMixture)
    - sample, twist, untwist
    - make_twister_instance, random_gaussian_instance
"""

from __future__ import annotations

import copy
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .errors import ContractError, IOErrorApp
from .utils import make_rng, read_csv, rng_state_from_json, rng_state_to_json

SYMMETRY_TOL = 1e-12
MIN_EIGENVALUE = 1e-9


@dataclass(frozen=True)
class GaussianDist:
    """Gaussian with mean vector and SPD covariance.

    Raises:
        ContractError: If shapes disagree, the covariance is not symmetric
            within 1e-12 or its smallest eigenvalue is below 1e-9.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64)).copy()
        cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64)).copy()
        d = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (d, d):
            raise ContractError(
                "mean/covariance shapes disagree",
                {"mean": list(mean.shape), "cov": list(cov.shape)},
            )
        asym = float(np.max(np.abs(cov - cov.T)))
        if asym > SYMMETRY_TOL * max(1.0, float(np.max(np.abs(cov)))):
            raise ContractError("covariance is not symmetric", {"max_asymmetry": asym})
        lam_min = float(np.linalg.eigvalsh(cov)[0])
        if lam_min < MIN_EIGENVALUE:
            raise ContractError(
                "covariance is not positive definite", {"min_eigenvalue": lam_min}
            )
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])

    @classmethod
    def isotropic(cls, mean: Sequence[float], variance: float) -> "GaussianDist":
        m = np.asarray(mean, dtype=np.float64)
        return cls(m, variance * np.eye(m.shape[0]))

    def to_json(self) -> Dict[str, Any]:
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist()}

    @classmethod
    def from_json(cls, payload: Dict[str, Any]) -> "GaussianDist":
        return cls(np.asarray(payload["mean"]), np.asarray(payload["cov"]))


# ---------------------------------------------------------------------------
# twist map
# ---------------------------------------------------------------------------


def _rotate(x: np.ndarray, angle: np.ndarray) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    out = np.empty_like(x)
    out[..., 0] = c * x[..., 0] - s * x[..., 1]
    out[..., 1] = s * x[..., 0] + c * x[..., 1]
    return out


def _check_planar(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1:] != (2,):
        raise ContractError("twist is defined on 2-vectors", {"shape": list(x.shape)})
    return x


def twist(x: np.ndarray, kappa: float) -> np.ndarray:
    """Rotate each 2-vector counter-clockwise by ``kappa * |x|``."""
    x = _check_planar(x)
    return _rotate(x, kappa * np.linalg.norm(x, axis=-1))


def untwist(y: np.ndarray, kappa: float) -> np.ndarray:
    """Inverse of `twist`: the rotation angle depends only on the preserved norm."""
    y = _check_planar(y)
    return _rotate(y, -kappa * np.linalg.norm(y, axis=-1))


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------


class Sampler(ABC):
    """Source of i.i.d. batches owning one named random stream.

    Args:
        dim: Dimension of every sample row.
        seed: Run seed.
        stream: Stream name; distinct samplers in a run must use distinct names.
    """

    kind: str = "abstract"

    def __init__(self, dim: int, seed: int, stream: str) -> None:
        self.dim = int(dim)
        self.seed = int(seed)
        self.stream = stream
        self._rng = make_rng(seed, stream)

    def sample(self, n: int) -> np.ndarray:
        """Draw ``n`` rows, advancing the stream.

        Raises:
            ContractError: If ``n < 1``.
        """
        if n < 1:
            raise ContractError("sample count must be >= 1", {"n": n})
        return self._draw(int(n))

    @abstractmethod
    def _draw(self, n: int) -> np.ndarray:
        """Produce an ``(n, dim)`` array."""

    def fork(self, stream: str) -> "Sampler":
        """Same distribution on a fresh stream; this sampler's stream is untouched."""
        clone = copy.copy(self)
        clone.stream = stream
        clone._rng = make_rng(self.seed, stream)
        return clone

    def get_state(self) -> Dict[str, Any]:
        return rng_state_to_json(self._rng)

    def set_state(self, state: Dict[str, Any]) -> None:
        rng_state_from_json(self._rng, state)


class GaussianSampler(Sampler):
    kind = "gaussian"

    def __init__(self, dist: GaussianDist, seed: int, stream: str = "gaussian") -> None:
        super().__init__(dist.dim, seed, stream)
        self.dist = dist
        self._chol = np.linalg.cholesky(dist.cov)

    def _draw(self, n: int) -> np.ndarray:
        z = self._rng.standard_normal((n, self.dim))
        return self.dist.mean + z @ self._chol.T


class TwistedGaussianSampler(GaussianSampler):
    """Pushforward of a planar Gaussian under `untwist`."""

    kind = "twisted-gaussian"

    def __init__(
        self, dist: GaussianDist, kappa: float, seed: int, stream: str = "twisted"
    ) -> None:
        if dist.dim != 2:
            raise ContractError("twisted sampler needs a 2-D Gaussian", {"dim": dist.dim})
        super().__init__(dist, seed, stream)
        self.kappa = float(kappa)

    def _draw(self, n: int) -> np.ndarray:
        return untwist(super()._draw(n), self.kappa)


class EmpiricalSampler(Sampler):
    """Rows drawn uniformly with replacement from a dataset matrix."""

    kind = "empirical"

    def __init__(self, data: np.ndarray, seed: int, stream: str = "empirical") -> None:
        data = np.atleast_2d(np.asarray(data, dtype=np.float64))
        if data.shape[0] == 0 or data.size == 0:
            raise ContractError("empirical dataset is empty")
        super().__init__(data.shape[1], seed, stream)
        self.data = data

    @classmethod
    def from_csv(cls, path: str | Path, seed: int, stream: str = "empirical") -> "EmpiricalSampler":
        """Load a header-first CSV with one sample per line.

        Raises:
            IOErrorApp: If the file is unreadable or holds non-numeric cells.
        """
        _, header, rows = read_csv(path)
        try:
            data = np.asarray([[float(v) for v in row] for row in rows], dtype=np.float64)
        except ValueError as exc:
            raise IOErrorApp("non-numeric cell in dataset", {"path": str(path)}) from exc
        if data.size == 0:
            raise ContractError("empirical dataset is empty", {"path": str(path)})
        if data.shape[1] != len(header):
            raise IOErrorApp("row width differs from header", {"path": str(path)})
        return cls(data, seed, stream)

    def _draw(self, n: int) -> np.ndarray:
        idx = self._rng.integers(0, self.data.shape[0], size=n)
        return self.data[idx]


class DiracMixtureSampler(Sampler):
    """Finite mixture of point masses."""

    kind = "dirac-mixture"

    def __init__(
        self,
        points: np.ndarray,
        weights: Optional[Sequence[float]] = None,
        *,
        seed: int,
        stream: str = "dirac",
    ) -> None:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if points.shape[0] == 0:
            raise ContractError("dirac mixture needs at least one point")
        w = np.full(points.shape[0], 1.0 / points.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
        if w.shape != (points.shape[0],) or np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ContractError("mixture weights must be positive and sum to 1", {"weights": w.tolist()})
        super().__init__(points.shape[1], seed, stream)
        self.points = points
        self.weights = w

    def _draw(self, n: int) -> np.ndarray:
        if self.points.shape[0] == 1:
            return np.repeat(self.points, n, axis=0)
        idx = self._rng.choice(self.points.shape[0], size=n, p=self.weights)
        return self.points[idx]


def sample(sampler: Sampler, n: int) -> np.ndarray:
    """Draw ``n`` rows from ``sampler`` (an ``(n, D)`` array)."""
    return sampler.sample(n)


def standard_normal_sampler(dim: int, seed: int, stream: str = "noise") -> GaussianSampler:
    """The default auxiliary distribution S = N(0, I_dim)."""
    return GaussianSampler(GaussianDist(np.zeros(dim), np.eye(dim)), seed, stream)


# ---------------------------------------------------------------------------
# benchmark instances
# ---------------------------------------------------------------------------


@dataclass
class TwisterInstance:
    """Three twisted references whose twisted-cost barycenter is N(0, sigma^2 I).

    Attributes:
        samplers: P_1..P_3, each ``untwist`` of an isotropic Gaussian.
        weights: Uniform barycenter weights.
        kappa: Twist strength used by the references and the cost.
        centers: Means of the untwisted Gaussians (vertices of a circle).
        ground_truth: The known barycenter.
    """

    samplers: List[Sampler]
    weights: np.ndarray
    kappa: float
    centers: np.ndarray
    ground_truth: GaussianDist


def make_twister_instance(
    radius: float = 3.0, sigma: float = 0.5, kappa: float = 1.0, seed: int = 0
) -> TwisterInstance:
    """Build the 2-D twister problem.

    P_k = untwist # N(m_k, sigma^2 I) with m_k at angles 90, 210 and 330
    degrees on a circle of the given radius. The centers average to zero,
    so the barycenter of the twisted images is N(0, sigma^2 I), which
    `untwist` leaves invariant.
    """
    if radius <= 0 or sigma <= 0:
        raise ContractError("radius and sigma must be positive", {"radius": radius, "sigma": sigma})
    angles = np.deg2rad([90.0, 210.0, 330.0])
    centers = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    samplers: List[Sampler] = [
        TwistedGaussianSampler(GaussianDist.isotropic(c, sigma**2), kappa, seed, f"P{k + 1}")
        for k, c in enumerate(centers)
    ]
    return TwisterInstance(
        samplers=samplers,
        weights=np.full(3, 1.0 / 3.0),
        kappa=float(kappa),
        centers=centers,
        ground_truth=GaussianDist.isotropic(np.zeros(2), sigma**2),
    )


def random_gaussian_instance(dim: int, num_refs: int, seed: int) -> List[GaussianDist]:
    """Random SPD Gaussians ``N(2 z, A A^T + 0.5 I)`` with ``A = Z / sqrt(dim)``.

    Draw order per component on the ``"gaussian-instance"`` stream: the
    ``(dim, dim)`` matrix ``Z`` first, then the ``dim`` mean entries.
    """
    if dim < 1 or num_refs < 2:
        raise ContractError("need dim >= 1 and at least two references", {"dim": dim, "K": num_refs})
    rng = make_rng(seed, "gaussian-instance")
    out = []
    for _ in range(num_refs):
        a = rng.standard_normal((dim, dim)) / np.sqrt(dim)
        mean = 2.0 * rng.standard_normal(dim)
        cov = a @ a.T + 0.5 * np.eye(dim)
        out.append(GaussianDist(mean, 0.5 * (cov + cov.T)))
    return out
