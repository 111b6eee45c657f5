"""Turn a validated experiment config into a barycenter problem.

Every named experiment has a known answer used by the evaluation:

- ``twister``: three untwisted Gaussians whose twisted-cost barycenter is
  ``N(0, sigma^2 I)``
- ``gaussian-benchmark``: random Gaussians with the fixed-point barycenter
  and its Monge maps as oracle
- ``dirac-sanity``: point masses at -1 and +1, barycenter at their
  weighted midpoint
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from ..costs import (
    ClassicalCost,
    EnergyCost,
    GroundCost,
    KLCost,
    PowerSemimetric,
    SqEuclidean,
    Twisted,
    WeakCostSpec,
)
from ..distributions import (
    DiracMixtureSampler,
    GaussianDist,
    GaussianSampler,
    Sampler,
    make_twister_instance,
    random_gaussian_instance,
)
from ..errors import ConfigError
from ..gaussian_oracle import AffineMap, barycenter_maps, fixed_point_barycenter
from ..schemas import CostConfig, ExperimentConfig
from ..solver import BarycenterProblem

logger = logging.getLogger(__name__)

DIRAC_POINTS = (-1.0, 1.0)


@dataclass
class GaussianOracle:
    """Reference Gaussians, their barycenter and the maps onto it."""

    references: List[GaussianDist]
    barycenter: GaussianDist
    maps: List[AffineMap]


@dataclass
class ExperimentSetup:
    """A problem together with what is known about its solution.

    Attributes:
        problem: References, weights and costs for the solver.
        ground_truth: Sampler of the barycenter, when it is known.
        oracle: Gaussian oracle (gaussian-benchmark only).
        midpoint: Barycenter location (dirac-sanity only).
    """

    problem: BarycenterProblem
    ground_truth: Optional[Sampler] = None
    oracle: Optional[GaussianOracle] = None
    midpoint: Optional[np.ndarray] = None


def ground_cost_for(config: ExperimentConfig) -> GroundCost:
    if config.cost.ground == "twisted":
        kappa = config.twister.kappa if config.twister is not None else 1.0
        return Twisted(kappa)
    return SqEuclidean()


def prior_dist(cost: CostConfig) -> GaussianDist:
    assert cost.prior is not None
    return GaussianDist(np.asarray(cost.prior.mean), np.diag(cost.prior.variance))


def weak_costs(config: ExperimentConfig, ground: GroundCost) -> List[WeakCostSpec]:
    """One weak cost per reference; Energy priors get streams ``prior<k>``."""
    cost = config.cost
    seed = config.train.seed
    out: List[WeakCostSpec] = []
    for k in range(config.K):
        if cost.family == "classical":
            out.append(ClassicalCost(ground))
        elif cost.family == "kl":
            assert cost.epsilon is not None
            out.append(KLCost(ground, cost.epsilon, prior_dist(cost)))
        else:
            assert cost.gamma is not None
            prior = GaussianSampler(prior_dist(cost), seed, f"prior{k + 1}")
            out.append(EnergyCost(ground, cost.gamma, prior, PowerSemimetric(cost.alpha)))
    return out


def _twister(config: ExperimentConfig, costs: List[WeakCostSpec]) -> ExperimentSetup:
    tw = config.twister
    assert tw is not None
    seed = config.train.seed
    inst = make_twister_instance(tw.radius, tw.sigma, tw.kappa, seed)
    problem = BarycenterProblem(inst.samplers, np.asarray(config.weights), costs, seed=seed)
    return ExperimentSetup(
        problem=problem,
        ground_truth=GaussianSampler(inst.ground_truth, seed, "ground-truth"),
    )


def _gaussian_benchmark(config: ExperimentConfig, costs: List[WeakCostSpec]) -> ExperimentSetup:
    seed = config.train.seed
    refs = random_gaussian_instance(config.dim, config.K, seed)
    bary = fixed_point_barycenter(refs, config.weights)
    to_bary, _ = barycenter_maps(refs, bary)
    samplers: List[Sampler] = [GaussianSampler(g, seed, f"P{k + 1}") for k, g in enumerate(refs)]
    problem = BarycenterProblem(samplers, np.asarray(config.weights), costs, seed=seed)
    return ExperimentSetup(
        problem=problem,
        ground_truth=GaussianSampler(bary, seed, "ground-truth"),
        oracle=GaussianOracle(refs, bary, to_bary),
    )


def _dirac_sanity(config: ExperimentConfig, costs: List[WeakCostSpec]) -> ExperimentSetup:
    seed = config.train.seed
    points = [np.full((1, config.dim), p) for p in DIRAC_POINTS]
    samplers: List[Sampler] = [
        DiracMixtureSampler(pt, seed=seed, stream=f"P{k + 1}") for k, pt in enumerate(points)
    ]
    weights = np.asarray(config.weights)
    midpoint = np.sum([w * pt[0] for w, pt in zip(weights, points)], axis=0)
    problem = BarycenterProblem(samplers, weights, costs, seed=seed)
    return ExperimentSetup(
        problem=problem,
        ground_truth=DiracMixtureSampler(midpoint[None, :], seed=seed, stream="ground-truth"),
        midpoint=midpoint,
    )


_BUILDERS = {
    "twister": _twister,
    "gaussian-benchmark": _gaussian_benchmark,
    "dirac-sanity": _dirac_sanity,
}


def build_problem(config: ExperimentConfig) -> ExperimentSetup:
    """Build samplers, costs and oracles for ``config``.

    Raises:
        ConfigError: If the experiment name has no builder.
    """
    builder = _BUILDERS.get(config.experiment)
    if builder is None:
        raise ConfigError(f"unknown experiment: {config.experiment}", {"field": "experiment"})
    setup = builder(config, weak_costs(config, ground_cost_for(config)))
    logger.debug(
        "built %s problem K=%d D=%d cost=%s",
        config.experiment,
        setup.problem.K,
        setup.problem.dim,
        config.cost.family,
    )
    return setup
