"""Ground costs and Monte-Carlo weak-cost estimators.

Three weak cost families are supported, each estimated from a batch of
mapped samples ``T(x, S)`` and differentiable through them:

- classical: ``mean_s c(x, y_s)``
- epsilon-KL: classical term plus ``epsilon * KL(N(mu(x), sigma(x)) || mu0)``
  computed in closed form for a diagonal Gaussian prior
- gamma-energy: classical term plus ``gamma`` times an unbiased estimate of
  ``E^2_l(pi(.|x), mu0)`` without its T-independent constant
  ``-E l(y0, y0')``; reported values are offset-comparable only within a run

Estimators accept a batch of inputs ``x`` of shape ``(n, D)`` with mapped
samples of shape ``(n, m, D)`` and return one value per input, or a single
input ``(D,)`` with ``(m, D)`` samples and return a scalar node.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist

from .diffmath import Node, as_node, concat
from .distributions import GaussianDist, Sampler
from .errors import ContractError

ArrayOrNode = Union[np.ndarray, Node]
CostFn = Callable[[np.ndarray, ArrayOrNode], Node]

PAIRWISE_CHUNK = 2048


# ---------------------------------------------------------------------------
# ground costs
# ---------------------------------------------------------------------------


def twist_node(y: Node, kappa: float) -> Node:
    """Differentiable twist: rotate 2-vectors by ``kappa * |y|``."""
    r = y.norm(axis=-1, keepdims=True)
    angle = r * kappa
    c, s = angle.cos(), angle.sin()
    y0, y1 = y[..., 0:1], y[..., 1:2]
    return concat([c * y0 - s * y1, s * y0 + c * y1], axis=-1)


class GroundCost(ABC):
    """``c(x, y) = 1/2 |u(x) - u(y)|^2`` for a feature map ``u``."""

    kind: str = "abstract"

    @abstractmethod
    def embed(self, y: Node) -> Node:
        """Apply the feature map to a node (last axis is the point)."""

    def __call__(self, x: ArrayOrNode, y: ArrayOrNode) -> Node:
        xn, yn = as_node(x), as_node(y)
        if xn.shape[-1:] != yn.shape[-1:]:
            raise ContractError(
                "cost arguments differ in dimension",
                {"x": list(xn.shape), "y": list(yn.shape)},
            )
        diff = self.embed(xn) - self.embed(yn)
        return (diff * diff).sum(axis=-1) * 0.5


@dataclass(frozen=True)
class SqEuclidean(GroundCost):
    kind = "sqeuclidean"

    def embed(self, y: Node) -> Node:
        return y


@dataclass(frozen=True)
class Twisted(GroundCost):
    """Squared distance after the norm-dependent rotation of the twister problem."""

    kappa: float = 1.0
    kind = "twisted"

    def embed(self, y: Node) -> Node:
        if y.shape[-1] != 2:
            raise ContractError("twisted cost is defined on 2-vectors", {"shape": list(y.shape)})
        return twist_node(y, self.kappa)


def ground_cost(c: GroundCost, x: np.ndarray, y: ArrayOrNode) -> Node:
    """Evaluate ``c`` row-wise; the result is differentiable in ``y``."""
    return c(x, y)


# ---------------------------------------------------------------------------
# semimetric
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PowerSemimetric:
    """``l(y, y') = |y - y'|^alpha`` with ``alpha`` in [1, 2]."""

    alpha: float = 1.0

    def __post_init__(self) -> None:
        if not 1.0 <= self.alpha <= 2.0:
            raise ContractError("semimetric exponent must lie in [1, 2]", {"alpha": self.alpha})

    def pairwise(self, a: ArrayOrNode, b: ArrayOrNode) -> Node:
        """``(..., p, D)`` x ``(..., q, D)`` -> ``(..., p, q)`` distances."""
        an, bn = as_node(a), as_node(b)
        lead_a, lead_b = an.shape[:-2], bn.shape[:-2]
        left = an.reshape(*lead_a, an.shape[-2], 1, an.shape[-1])
        right = bn.reshape(*lead_b, 1, bn.shape[-2], bn.shape[-1])
        d = (left - right).norm(axis=-1)
        return d if self.alpha == 1.0 else d**self.alpha

    def pairwise_sum(self, a: np.ndarray, b: np.ndarray) -> float:
        """Sum of all pairwise distances between rows of two arrays."""
        total = 0.0
        for i in range(0, a.shape[0], PAIRWISE_CHUNK):
            d = cdist(a[i : i + PAIRWISE_CHUNK], b, "euclidean")
            total += float((d if self.alpha == 1.0 else d**self.alpha).sum())
        return total

    def rowwise(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.linalg.norm(a - b, axis=-1) ** self.alpha


EUCLIDEAN = PowerSemimetric(1.0)


# ---------------------------------------------------------------------------
# weak cost specs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClassicalCost:
    ground: GroundCost
    family: str = field(default="classical", init=False)


@dataclass(frozen=True)
class KLCost:
    """epsilon-KL weak cost with a diagonal Gaussian prior."""

    ground: GroundCost
    epsilon: float
    prior: GaussianDist
    family: str = field(default="kl", init=False)

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise ContractError("KL weight must be positive", {"epsilon": self.epsilon})
        _prior_diagonal(self.prior)


@dataclass(frozen=True)
class EnergyCost:
    """gamma-Energy weak cost with a sampled prior."""

    ground: GroundCost
    gamma: float
    prior: Sampler
    semimetric: PowerSemimetric = EUCLIDEAN
    family: str = field(default="energy", init=False)

    def __post_init__(self) -> None:
        if self.gamma <= 0:
            raise ContractError("energy weight must be positive", {"gamma": self.gamma})


WeakCostSpec = Union[ClassicalCost, KLCost, EnergyCost]


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------


def _lift(x: np.ndarray, ys: ArrayOrNode) -> Tuple[np.ndarray, Node, bool]:
    x = np.asarray(x, dtype=np.float64)
    yn = as_node(ys)
    single = x.ndim == 1
    if single:
        x = x[None, :]
        yn = yn.reshape(1, *yn.shape)
    if yn.ndim != 3 or yn.shape[0] != x.shape[0] or yn.shape[2] != x.shape[1]:
        raise ContractError(
            "mapped batch must be (n, m, D) for inputs (n, D)",
            {"x": list(x.shape), "ys": list(yn.shape)},
        )
    if yn.shape[1] < 1:
        raise ContractError("mapped batch is empty")
    return x, yn, single


def _finish(value: Node, single: bool) -> Node:
    return value.reshape(()) if single else value


def _classical(c: CostFn, x: np.ndarray, ys: Node) -> Node:
    return c(x[:, None, :], ys).mean(axis=1)


def estimate_classical(c: CostFn, x: np.ndarray, ys: ArrayOrNode) -> Node:
    """``(1/|S|) sum_s c(x, T(x, s))`` per input."""
    xb, yb, single = _lift(x, ys)
    return _finish(_classical(c, xb, yb), single)


def _prior_diagonal(prior: GaussianDist) -> np.ndarray:
    d = np.diag(prior.cov)
    if np.max(np.abs(prior.cov - np.diag(d))) > 0.0:
        raise ContractError("KL prior must have a diagonal covariance")
    return d


def kl_gaussian_to_prior(mu: ArrayOrNode, sigma: ArrayOrNode, prior: GaussianDist) -> Node:
    """``KL(N(mu, diag sigma^2) || prior)`` summed over the last axis.

    Raises:
        ContractError: If any ``sigma`` entry is not positive or the prior is
            not diagonal.
    """
    mu_n, sigma_n = as_node(mu), as_node(sigma)
    if np.any(sigma_n.value <= 0.0):
        raise ContractError("Gaussian scales must be positive")
    if mu_n.shape[-1:] != (prior.dim,) or sigma_n.shape != mu_n.shape:
        raise ContractError(
            "KL argument shapes disagree with the prior",
            {"mu": list(mu_n.shape), "sigma": list(sigma_n.shape), "prior_dim": prior.dim},
        )
    d = _prior_diagonal(prior)
    diff = mu_n - prior.mean
    terms = 0.5 * np.log(d) - sigma_n.log() + (sigma_n * sigma_n + diff * diff) / (2.0 * d) - 0.5
    return terms.sum(axis=-1)


def estimate_kl_cost(
    c: CostFn,
    x: np.ndarray,
    mu: ArrayOrNode,
    sigma: ArrayOrNode,
    noise: np.ndarray,
    epsilon: float,
    prior: GaussianDist,
) -> Node:
    """Sample-mean transport term on ``mu + sigma * s`` plus ``epsilon`` times the analytic KL."""
    mu_n, sigma_n = as_node(mu), as_node(sigma)
    noise = np.asarray(noise, dtype=np.float64)
    if mu_n.ndim == 1:
        ys = mu_n.reshape(1, -1) + sigma_n.reshape(1, -1) * noise
    else:
        ys = mu_n.reshape(mu_n.shape[0], 1, mu_n.shape[1]) + sigma_n.reshape(
            sigma_n.shape[0], 1, sigma_n.shape[1]
        ) * noise
    transport = estimate_classical(c, x, ys)
    if epsilon == 0.0:
        return transport
    return transport + kl_gaussian_to_prior(mu_n, sigma_n, prior) * epsilon


def estimate_energy_cost(
    c: CostFn,
    x: np.ndarray,
    ys: ArrayOrNode,
    y0s: np.ndarray,
    gamma: float,
    ell: PowerSemimetric = EUCLIDEAN,
) -> Node:
    """Classical term plus ``gamma`` times the energy estimator against the prior batch.

    ``y0s`` is either one shared prior batch ``(m0, D)`` or one batch per
    input ``(n, m0, D)``.

    Raises:
        ContractError: If fewer than two mapped samples or no prior samples
            are given per input.
    """
    xb, yb, single = _lift(x, ys)
    transport = _classical(c, xb, yb)
    if gamma == 0.0:
        return _finish(transport, single)
    m = yb.shape[1]
    if m < 2:
        raise ContractError("energy cost needs at least two mapped samples per input", {"m": m})
    y0 = np.asarray(y0s, dtype=np.float64)
    if y0.ndim == 2:
        y0 = y0[None, :, :]
    if y0.ndim != 3 or y0.shape[1] < 1 or y0.shape[2] != xb.shape[1]:
        raise ContractError("prior batch must be (m0, D) or (n, m0, D)", {"y0s": list(y0.shape)})
    cross = ell.pairwise(yb, y0).mean(axis=(1, 2))
    within = ell.pairwise(yb, yb).sum(axis=(1, 2)) * (1.0 / (m * (m - 1)))
    return _finish(transport + (cross * 2.0 - within) * gamma, single)


def energy_distance_sq(a: np.ndarray, b: np.ndarray, ell: PowerSemimetric = EUCLIDEAN) -> float:
    """Unbiased estimate of ``E^2_l`` between the distributions of two samples.

    Equal-size samples use the paired U-statistic (cross sums exclude
    matching indices), which is exactly 0 for two copies of one sample;
    unequal sizes use the independent two-sample form. Within-sample sums
    always exclude ``i == j``.

    Raises:
        ContractError: If either sample has fewer than two rows or the
            dimensions differ.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    n, m = a.shape[0], b.shape[0]
    if n < 2 or m < 2:
        raise ContractError("energy distance needs at least two samples per side", {"n": n, "m": m})
    if a.shape[1] != b.shape[1]:
        raise ContractError("sample dimensions differ", {"a": a.shape[1], "b": b.shape[1]})
    within_a = ell.pairwise_sum(a, a) / (n * (n - 1))
    within_b = ell.pairwise_sum(b, b) / (m * (m - 1))
    if n == m:
        cross_total = ell.pairwise_sum(a, b) - float(ell.rowwise(a, b).sum())
        cross = cross_total / (n * (n - 1))
    else:
        cross = ell.pairwise_sum(a, b) / (n * m)
    return 2.0 * cross - within_a - within_b
