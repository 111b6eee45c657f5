"""Evaluation of learned plans against oracles.

- `l2_uvp`: ``100 * E |T_hat(x) - T*(x)|^2 / tr(Sigma_Q*)``; for noise-driven
  models ``T_hat(x)`` is the conditional mean over ``m`` noise draws
- `transport_cost`: Monte-Carlo ``E c(x, T_hat(x, s))`` in the 1/2 convention
  of the ground costs, together with the value without the 1/2
- `barycenter_energy_test`: squared energy distance between the pooled
  pushforward samples and ground-truth samples
- `plan_energy_distance`: ``E_x E^2(pi_a(.|x), pi_b(.|x))`` between two plans
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .costs import EUCLIDEAN, GroundCost, PowerSemimetric, energy_distance_sq
from .distributions import Sampler
from .errors import ContractError
from .gaussian_oracle import AffineMap
from .transport import PlanModel, draw_noise, pushforward_pool

CONDITIONAL_DRAWS = 64
PLAN_CHUNK = 256


def conditional_mean(
    model: PlanModel, x: np.ndarray, noise: Optional[Sampler] = None, m: int = CONDITIONAL_DRAWS
) -> np.ndarray:
    """``E_s T(x, s)`` estimated from ``m`` draws; exact for noise-free models."""
    x = np.asarray(x, dtype=np.float64)
    if not model.needs_noise:
        return model.forward(x).value
    s = draw_noise(model, noise, x.shape[0], m)
    return model.forward(x, s).value.mean(axis=1)


def l2_uvp(
    model: PlanModel,
    t_star: AffineMap,
    sampler: Sampler,
    var_q: float,
    n: int,
    noise: Optional[Sampler] = None,
    m: int = CONDITIONAL_DRAWS,
) -> float:
    """Unexplained variance percentage of ``model`` against the oracle map.

    Raises:
        ContractError: If ``var_q`` is not positive.
    """
    if not var_q > 0:
        raise ContractError("barycenter variance must be positive", {"var_q": var_q})
    x = sampler.sample(n)
    err = conditional_mean(model, x, noise, m) - t_star(x)
    return float(100.0 * np.mean(np.sum(err * err, axis=-1)) / var_q)


@dataclass(frozen=True)
class TransportCost:
    """Transport cost estimate; ``half`` uses the cost's own 1/2, ``full`` drops it."""

    half: float
    full: float
    stderr: float
    n: int
    m: int


def transport_cost(
    model: PlanModel,
    sampler: Sampler,
    c: GroundCost,
    n: int,
    m: int = 1,
    noise: Optional[Sampler] = None,
) -> TransportCost:
    """Monte-Carlo ``E_x E_s c(x, T(x, s))`` with its standard error over inputs."""
    if n < 1 or m < 1:
        raise ContractError("n and m must be >= 1", {"n": n, "m": m})
    x = sampler.sample(n)
    s = draw_noise(model, noise, n, m)
    if s is None:
        per_x = c(x, model.forward(x).value).value
    else:
        per_x = c(x[:, None, :], model.forward(x, s).value).value.mean(axis=1)
    half = float(np.mean(per_x))
    stderr = float(np.std(per_x, ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
    return TransportCost(half=half, full=2.0 * half, stderr=stderr, n=n, m=m)


def barycenter_energy_test(
    models: Sequence[PlanModel],
    samplers: Sequence[Sampler],
    weights: Sequence[float],
    gt_sampler: Sampler,
    n: int,
    noise: Optional[Sequence[Optional[Sampler]]] = None,
    ell: PowerSemimetric = EUCLIDEAN,
) -> float:
    """Squared energy distance between ``n`` pooled pushforward samples and ``n`` ground-truth samples.

    Raises:
        ContractError: If ``n < 2``.
    """
    if n < 2:
        raise ContractError("energy test needs n >= 2", {"n": n})
    pooled = pushforward_pool(models, samplers, weights, n, noise)
    return energy_distance_sq(pooled, gt_sampler.sample(n), ell)


def _draws(model: PlanModel, x: np.ndarray, noise: Optional[Sampler], m: int) -> np.ndarray:
    if not model.needs_noise:
        return model.forward(x).value[:, None, :]
    return model.forward(x, draw_noise(model, noise, x.shape[0], m)).value


def _mean_pairwise(a: np.ndarray, b: np.ndarray, ell: PowerSemimetric, exclude_diagonal: bool) -> np.ndarray:
    d = np.linalg.norm(a[:, :, None, :] - b[:, None, :, :], axis=-1) ** ell.alpha
    p = a.shape[1]
    if exclude_diagonal:
        return d.sum(axis=(1, 2)) / (p * (p - 1))
    return d.mean(axis=(1, 2))


def plan_energy_distance(
    model_a: PlanModel,
    model_b: PlanModel,
    sampler: Sampler,
    n: int,
    m: int,
    noise_a: Optional[Sampler] = None,
    noise_b: Optional[Sampler] = None,
    ell: PowerSemimetric = EUCLIDEAN,
) -> float:
    """Squared plan distance ``E_x E^2(pi_a(.|x), pi_b(.|x))`` from ``m`` conditional draws.

    Noise-free models contribute a single draw with zero within-sample term.

    Raises:
        ContractError: If a noise-driven model gets ``m < 2``.
    """
    if (model_a.needs_noise or model_b.needs_noise) and m < 2:
        raise ContractError("stochastic plans need m >= 2 conditional draws", {"m": m})
    x = sampler.sample(n)
    total = 0.0
    for i in range(0, n, PLAN_CHUNK):
        xc = x[i : i + PLAN_CHUNK]
        ya = _draws(model_a, xc, noise_a, m)
        yb = _draws(model_b, xc, noise_b, m)
        cross = _mean_pairwise(ya, yb, ell, exclude_diagonal=False)
        within_a = _mean_pairwise(ya, ya, ell, True) if ya.shape[1] > 1 else 0.0
        within_b = _mean_pairwise(yb, yb, ell, True) if yb.shape[1] > 1 else 0.0
        total += float(np.sum(2.0 * cross - within_a - within_b))
    return total / n
