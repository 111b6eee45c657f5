"""Final report and sample dumps of a trained run.

Evaluation draws come from streams forked off the training samplers
(``eval-P<k>``, ``eval-S<k>``, ``eval-ground-truth``), so evaluating a
state never advances the training streams and is reproducible on its own.
"""

from __future__ import annotations

import logging
from typing import Dict, List, Optional

import numpy as np

from ..distributions import Sampler, standard_normal_sampler
from ..gaussian_oracle import affine_transport_cost, total_variance
from ..metrics import (
    barycenter_energy_test,
    conditional_mean,
    l2_uvp,
    plan_energy_distance,
    transport_cost,
)
from ..schemas import ExperimentConfig, MetricReport
from ..solver import Delta1Budget, TrainState, estimate_delta1, quality_bound
from ..transport import AffinePlan, pushforward_pool, sample_plan
from .presets import ExperimentSetup

logger = logging.getLogger(__name__)


class EvalStreams:
    """Fresh evaluation samplers for one report."""

    def __init__(self, setup: ExperimentSetup, state: TrainState, tag: str = "eval") -> None:
        problem = setup.problem
        seed = problem.seed
        self.references: List[Sampler] = [
            s.fork(f"{tag}-P{label}") for s, label in zip(problem.samplers, problem.labels)
        ]
        self.noise: List[Optional[Sampler]] = [
            standard_normal_sampler(m.noise_dim, seed, f"{tag}-S{label}") if m.needs_noise else None
            for m, label in zip(state.models, problem.labels)
        ]
        self.ground_truth: Optional[Sampler] = (
            setup.ground_truth.fork(f"{tag}-ground-truth") if setup.ground_truth is not None else None
        )


def prior_direction(dim: int) -> np.ndarray:
    return np.ones(dim) / np.sqrt(dim)


def evaluate(state: TrainState, setup: ExperimentSetup, config: ExperimentConfig) -> MetricReport:
    """Compute every statistic that applies to the experiment."""
    problem = setup.problem
    ev = config.eval
    streams = EvalStreams(setup, state)
    report = MetricReport(experiment=config.experiment, seed=config.train.seed, epochs_completed=state.epoch)
    counts: Dict[str, int] = {}

    costs = [
        transport_cost(model, streams.references[k], problem.costs[k].ground, ev.n, 1, streams.noise[k])
        for k, model in enumerate(state.models)
    ]
    report.transport_cost = [c.half for c in costs]
    report.transport_cost_full = [c.full for c in costs]
    counts["transport_cost_n"] = ev.n

    pooled = pushforward_pool(state.models, streams.references, problem.weights, ev.n, streams.noise)
    mean = pooled.mean(axis=0)
    report.pooled_mean = mean.tolist()
    report.pooled_mean_norm = float(np.linalg.norm(mean))
    report.prior_projection = float(mean @ prior_direction(problem.dim))
    counts["pooled_n"] = ev.n

    if streams.ground_truth is not None:
        report.energy_statistic = barycenter_energy_test(
            state.models, streams.references, problem.weights, streams.ground_truth, ev.n, streams.noise
        )
        counts["energy_n"] = ev.n

    if setup.oracle is not None:
        oracle = setup.oracle
        var_q = total_variance(oracle.barycenter)
        report.l2_uvp = [
            l2_uvp(model, oracle.maps[k], streams.references[k], var_q, ev.uvp_samples, streams.noise[k], ev.conditional_draws)
            for k, model in enumerate(state.models)
        ]
        report.l2_uvp_weighted = float(np.dot(problem.weights, report.l2_uvp))
        report.oracle_transport_cost = [
            affine_transport_cost(ref, t) for ref, t in zip(oracle.references, oracle.maps)
        ]
        report.plan_energy = [
            plan_energy_distance(
                model, AffinePlan(oracle.maps[k]), streams.references[k], ev.n, ev.conditional_draws, streams.noise[k]
            )
            for k, model in enumerate(state.models)
        ]
        counts["uvp_n"] = ev.uvp_samples
        counts["conditional_draws"] = ev.conditional_draws
        counts["plan_energy_n"] = ev.n

    if setup.midpoint is not None:
        report.map_outputs = [
            conditional_mean(model, sampler.sample(1), streams.noise[k], ev.conditional_draws)[0].tolist()
            for k, (model, sampler) in enumerate(zip(state.models, streams.references))
        ]

    if ev.delta1:
        budget = Delta1Budget(
            steps=ev.delta1_steps,
            batch_size=ev.delta1_batch_size,
            lr=ev.delta1_lr,
            warm_start=ev.delta1_warm_start,
        )
        result = estimate_delta1(state, problem, budget, config.train)
        report.delta1 = result.value
        report.delta1_converged = result.converged
        report.quality_bound = quality_bound(result.value, problem.costs[0])
        counts["delta1_steps"] = result.steps
        counts["delta1_batch_size"] = ev.delta1_batch_size

    report.counts = counts
    logger.info("evaluated %s at epoch %d", config.experiment, state.epoch)
    return report


def sample_dumps(
    state: TrainState, setup: ExperimentSetup, rows: int
) -> Dict[str, np.ndarray]:
    """Plot-ready sample arrays keyed by file stem.

    ``input_<k>`` and ``pushforward_<k>`` are paired rows of ``P_k`` and the
    outputs of map ``k``; ``pooled`` is the implied barycenter sample and
    ``ground_truth`` a sample of the known barycenter.
    """
    problem = setup.problem
    streams = EvalStreams(setup, state, tag="dump")
    out: Dict[str, np.ndarray] = {}
    for k, (model, label) in enumerate(zip(state.models, problem.labels)):
        x, ys = sample_plan(model, streams.references[k], rows, 1, streams.noise[k])
        out[f"input_{label}"] = x
        out[f"pushforward_{label}"] = ys[:, 0, :]
    out["pooled"] = pushforward_pool(state.models, streams.references, problem.weights, rows, streams.noise)
    if streams.ground_truth is not None:
        out["ground_truth"] = streams.ground_truth.sample(rows)
    return out
