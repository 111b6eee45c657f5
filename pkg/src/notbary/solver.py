"""Stochastic ascent-descent on the congruent max-min barycenter objective.

For plan models ``T_k`` and congruent potentials ``f_k`` the objective is

    V(f, T) = sum_k l_k { E_x C_k(x, T_k(x, .)#S) - E_x E_s f_k(T_k(x, s)) }.

Each epoch performs one potential update followed by ``inner_steps`` map
updates, drawing fresh batches for every update:

- potentials maximize V, i.e. descend on ``V_f = sum_k l_k E f_k(T_k(x, s))``
  with the maps held constant
- maps minimize ``V_T = sum_k l_k V_{T_k}`` with the potentials held constant

`estimate_delta1` measures how far the current maps are from the inner
infimum for the current potentials.
"""

from __future__ import annotations

import copy
import logging
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from .costs import (
    ClassicalCost,
    EnergyCost,
    KLCost,
    WeakCostSpec,
    estimate_classical,
    estimate_energy_cost,
    estimate_kl_cost,
)
from .diffmath import AdamState, Node, adam_step, backward, frozen, init_adam, init_mlp
from .distributions import Sampler, standard_normal_sampler
from .errors import ContractError, DivergenceError
from .schemas import HistoryRecord, TrainConfig
from .transport import (
    DeterministicMap,
    GaussianModel,
    PlanModel,
    PotentialBank,
    StochasticMap,
    build_plan_model,
    check_weights,
)
from .utils import make_rng

logger = logging.getLogger(__name__)


@dataclass
class BarycenterProblem:
    """References, weights and costs of one barycenter problem.

    Attributes:
        samplers: Reference samplers ``P_k``.
        weights: Barycenter weights.
        costs: One weak cost per reference.
        noise: Auxiliary noise sampler per reference (``None`` entries get a
            standard normal on stream ``S<label>`` when a model needs noise).
        labels: Stream labels per reference; defaults to ``"1".."K"``.
        seed: Seed of the auxiliary streams created here.
    """

    samplers: List[Sampler]
    weights: np.ndarray
    costs: List[WeakCostSpec]
    noise: List[Optional[Sampler]] = field(default_factory=list)
    labels: List[str] = field(default_factory=list)
    seed: int = 0

    def __post_init__(self) -> None:
        self.weights = check_weights(self.weights)
        K = len(self.samplers)
        if K < 2:
            raise ContractError("a barycenter problem needs at least two references", {"K": K})
        if self.weights.size != K or len(self.costs) != K:
            raise ContractError(
                "samplers, weights and costs must have one entry per reference",
                {"samplers": K, "weights": int(self.weights.size), "costs": len(self.costs)},
            )
        dims = {s.dim for s in self.samplers}
        if len(dims) != 1:
            raise ContractError("reference samplers disagree in dimension", {"dims": sorted(dims)})
        if not self.labels:
            self.labels = [str(k + 1) for k in range(K)]
        if not self.noise:
            self.noise = [None] * K
        if len(self.labels) != K or len(self.noise) != K:
            raise ContractError("labels and noise samplers need one entry per reference")
        for k, cost in enumerate(self.costs):
            prior_dim = _prior_dim(cost)
            if prior_dim is not None and prior_dim != self.dim:
                raise ContractError("prior dimension differs from data dimension", {"k": k, "prior": prior_dim})

    @property
    def K(self) -> int:
        return len(self.samplers)

    @property
    def dim(self) -> int:
        return self.samplers[0].dim

    def noise_sampler(self, k: int, noise_dim: int) -> Sampler:
        if self.noise[k] is None:
            self.noise[k] = standard_normal_sampler(noise_dim, self.seed, f"S{self.labels[k]}")
        return self.noise[k]

    def prepare(self, models: Sequence[PlanModel]) -> None:
        """Create the noise stream of every noise-driven model up front."""
        for k, model in enumerate(models):
            if model.needs_noise:
                self.noise_sampler(k, model.noise_dim)

    def streams(self) -> Dict[str, Sampler]:
        """Every sampler the training loop draws from, keyed by role."""
        out: Dict[str, Sampler] = {}
        for k, label in enumerate(self.labels):
            out[f"P{label}"] = self.samplers[k]
            if self.noise[k] is not None:
                out[f"S{label}"] = self.noise[k]
            cost = self.costs[k]
            if isinstance(cost, EnergyCost):
                out[f"prior{label}"] = cost.prior
        return out

    def rng_states(self) -> Dict[str, Any]:
        return {name: s.get_state() for name, s in self.streams().items()}

    def set_rng_states(self, states: Dict[str, Any]) -> None:
        streams = self.streams()
        missing = sorted(set(states) - set(streams))
        if missing:
            raise ContractError("unknown random streams in saved state", {"streams": missing})
        for name, state in states.items():
            streams[name].set_state(state)


def _prior_dim(cost: WeakCostSpec) -> Optional[int]:
    if isinstance(cost, KLCost):
        return cost.prior.dim
    if isinstance(cost, EnergyCost):
        return cost.prior.dim
    return None


@dataclass
class TrainState:
    """Networks, optimizer moments and history of a training run."""

    models: List[PlanModel]
    bank: PotentialBank
    opt_f: AdamState
    opt_t: AdamState
    epoch: int = 0
    history: List[HistoryRecord] = field(default_factory=list)

    def map_parameters(self) -> List[Node]:
        return [p for model in self.models for p in model.parameters()]

    def potential_parameters(self) -> List[Node]:
        return self.bank.parameters()


@dataclass
class KBatch:
    """Inputs with their noise ``(n, m, D_s)`` and prior ``(n, m0, D)`` draws."""

    x: np.ndarray
    noise: Optional[np.ndarray] = None
    prior: Optional[np.ndarray] = None


EpochBatches = List[KBatch]


def init_state(problem: BarycenterProblem, config: TrainConfig) -> TrainState:
    """Fresh networks on streams ``init-T<label>`` and ``init-g<label>``."""
    models: List[PlanModel] = []
    nets = []
    for k, label in enumerate(problem.labels):
        rng = make_rng(config.seed, f"init-T{label}")
        model = build_plan_model(
            config.plan_kind, problem.dim, config.hidden_widths, rng, noise_dim=config.noise_dim
        )
        _check_model_cost(model, problem.costs[k], k)
        models.append(model)
        nets.append(init_mlp([problem.dim, *config.hidden_widths, 1], make_rng(config.seed, f"init-g{label}")))
    bank = PotentialBank(nets, problem.weights)
    problem.prepare(models)
    return TrainState(
        models=models,
        bank=bank,
        opt_f=init_adam(bank.parameters(), config.lr_f),
        opt_t=init_adam([p for m in models for p in m.parameters()], config.lr_t),
    )


def _check_model_cost(model: PlanModel, cost: WeakCostSpec, k: int) -> None:
    if isinstance(cost, KLCost) and not isinstance(model, GaussianModel):
        raise ContractError("KL cost needs a Gaussian plan model", {"k": k, "model": model.kind})


def draw_batches(
    problem: BarycenterProblem,
    models: Sequence[PlanModel],
    n: int,
    m: int,
    m0: int,
    samplers: Optional[Sequence[Sampler]] = None,
    noise: Optional[Sequence[Optional[Sampler]]] = None,
    priors: Optional[Sequence[Optional[Sampler]]] = None,
) -> EpochBatches:
    """Draw one batch per reference: inputs, noise for noise-driven models, prior draws for Energy costs.

    Alternative samplers (for evaluation streams) replace the problem's own
    when given.
    """
    batches = []
    for k in range(problem.K):
        model = models[k]
        x_sampler = samplers[k] if samplers is not None else problem.samplers[k]
        x = x_sampler.sample(n)
        s = None
        if model.needs_noise:
            ns = noise[k] if noise is not None and noise[k] is not None else problem.noise_sampler(k, model.noise_dim)
            s = ns.sample(n * m).reshape(n, m, model.noise_dim)
        y0 = None
        cost = problem.costs[k]
        if isinstance(cost, EnergyCost):
            ps = priors[k] if priors is not None and priors[k] is not None else cost.prior
            y0 = ps.sample(n * m0).reshape(n, m0, problem.dim)
        batches.append(KBatch(x, s, y0))
    return batches


@dataclass
class _Rollout:
    ys: Node
    mu: Optional[Node] = None
    sigma: Optional[Node] = None


def _rollout(model: PlanModel, batch: KBatch) -> _Rollout:
    if isinstance(model, GaussianModel):
        mu, sigma = model.moments(batch.x)
        n, d = mu.shape
        ys = mu.reshape(n, 1, d) + sigma.reshape(n, 1, d) * batch.noise
        return _Rollout(ys, mu, sigma)
    y = model.forward(batch.x, batch.noise)
    if batch.noise is None:
        y = y.reshape(y.shape[0], 1, y.shape[-1])
    return _Rollout(y)


def _cost_term(cost: WeakCostSpec, batch: KBatch, roll: _Rollout) -> Node:
    """Per-input weak cost estimate, shape ``(n,)``."""
    if isinstance(cost, ClassicalCost):
        return estimate_classical(cost.ground, batch.x, roll.ys)
    if isinstance(cost, KLCost):
        return estimate_kl_cost(cost.ground, batch.x, roll.mu, roll.sigma, batch.noise, cost.epsilon, cost.prior)
    if isinstance(cost, EnergyCost):
        ys = roll.ys
        if ys.shape[1] < 2:
            # a deterministic plan has zero within-batch spread at any draw count
            ys = ys.broadcast_to((ys.shape[0], 2, ys.shape[2]))
        return estimate_energy_cost(cost.ground, batch.x, ys, batch.prior, cost.gamma, cost.semimetric)
    raise ContractError("unknown weak cost", {"type": type(cost).__name__})


def _check_batches(batches: EpochBatches, K: int) -> None:
    if len(batches) != K or any(b.x.shape[0] == 0 for b in batches):
        raise ContractError("need one nonempty batch per reference", {"batches": len(batches), "K": K})


def estimate_Vf(state: TrainState, problem: BarycenterProblem, batches: EpochBatches) -> Node:
    """``sum_k l_k mean f_k(T_k(x, s))``; maps are constants in the graph.

    Raises:
        ContractError: On a missing or empty batch.
    """
    _check_batches(batches, problem.K)
    total: Optional[Node] = None
    with frozen(state.map_parameters()):
        for k, batch in enumerate(batches):
            ys = _rollout(state.models[k], batch).ys
            term = state.bank.potential_eval(k, ys).mean() * float(problem.weights[k])
            total = term if total is None else total + term
    assert total is not None
    return total


def estimate_Vt(state: TrainState, problem: BarycenterProblem, k: int, batches: EpochBatches) -> Node:
    """``mean_x { C_hat(x, T_k(x, S[x])) - mean_s f_k(T_k(x, s)) }``; potentials are constants.

    Raises:
        ContractError: On a bad index or batch, or from the cost estimators.
    """
    _check_batches(batches, problem.K)
    if not 0 <= k < problem.K:
        raise ContractError("reference index out of range", {"k": k, "K": problem.K})
    batch = batches[k]
    with frozen(state.potential_parameters()):
        roll = _rollout(state.models[k], batch)
        cost = _cost_term(problem.costs[k], batch, roll)
        f = state.bank.potential_eval(k, roll.ys)
        return (cost - f.mean(axis=1)).mean()


def _weighted(terms: Sequence[Node], weights: np.ndarray) -> Node:
    total = terms[0] * float(weights[0])
    for w, t in zip(weights[1:], terms[1:]):
        total = total + t * float(w)
    return total


def _finite_or_raise(value: float, epoch: int, term: str) -> None:
    if not np.isfinite(value):
        logger.error("non-finite %s at epoch %d", term, epoch)
        raise DivergenceError(f"non-finite {term}", {"epoch": epoch, "term": term})


def _step(params: List[Node], root: Node, opt: AdamState, epoch: int, term: str) -> None:
    grads = backward(root, params)
    try:
        adam_step(params, grads, opt)
    except DivergenceError as exc:
        logger.error("non-finite gradient of %s at epoch %d", term, epoch)
        raise DivergenceError(f"non-finite gradient of {term}", {"epoch": epoch, "term": term, **(exc.details or {})}) from exc


def train_epoch(state: TrainState, problem: BarycenterProblem, config: TrainConfig) -> HistoryRecord:
    """One potential update followed by ``inner_steps`` map updates.

    Raises:
        DivergenceError: If an objective or gradient becomes non-finite; the
            details name the epoch and the term.
    """
    epoch = state.epoch + 1
    start = time.perf_counter()
    n, m, m0 = config.batch_size, config.noise_batch_size, config.prior_batch_size

    batches = draw_batches(problem, state.models, n, m, m0)
    v_f = estimate_Vf(state, problem, batches)
    _finite_or_raise(v_f.item(), epoch, "v_f")
    theta = state.potential_parameters()
    _step(theta, v_f, state.opt_f, epoch, "v_f")

    phi = state.map_parameters()
    v_t_terms: List[Node] = []
    for _ in range(config.inner_steps):
        batches = draw_batches(problem, state.models, n, m, m0)
        v_t_terms = [estimate_Vt(state, problem, k, batches) for k in range(problem.K)]
        v_t = _weighted(v_t_terms, problem.weights)
        _finite_or_raise(v_t.item(), epoch, "v_t")
        if phi:
            _step(phi, v_t, state.opt_t, epoch, "v_t")

    record = HistoryRecord(
        epoch=epoch,
        v_f=v_f.item(),
        v_t=[t.item() for t in v_t_terms],
        wall_ms=(time.perf_counter() - start) * 1000.0,
    )
    state.epoch = epoch
    state.history.append(record)
    return record


def train(
    problem: BarycenterProblem,
    config: TrainConfig,
    state: Optional[TrainState] = None,
    *,
    epochs: Optional[int] = None,
    on_epoch: Optional[Callable[[TrainState], None]] = None,
) -> TrainState:
    """Run the training loop until ``config.epochs`` epochs are completed.

    Args:
        problem: The barycenter problem.
        config: Hyperparameters.
        state: A state to continue (for example from a checkpoint); a fresh
            one is initialized when omitted.
        epochs: Target epoch count overriding ``config.epochs``.
        on_epoch: Called with the state after every epoch.

    Returns:
        The trained state; ``history`` has one record per completed epoch.
    """
    if state is None:
        state = init_state(problem, config)
    target = config.epochs if epochs is None else epochs
    logger.debug("training K=%d D=%d from epoch %d to %d", problem.K, problem.dim, state.epoch, target)
    while state.epoch < target:
        record = train_epoch(state, problem, config)
        if record.epoch % config.log_every == 0 or record.epoch == target:
            logger.info(
                "epoch %d v_f=%.6g v_t=%.6g",
                record.epoch,
                record.v_f,
                float(np.dot(problem.weights, record.v_t)),
            )
        else:
            logger.debug("epoch %d v_f=%.6g v_t=%s", record.epoch, record.v_f, record.v_t)
        if on_epoch is not None:
            on_epoch(state)
    return state


# ---------------------------------------------------------------------------
# duality gap
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Delta1Budget:
    """Settings of the inner re-minimization behind the gap estimate.

    Attributes:
        steps: Adam steps on fresh batches.
        batch_size: Inputs per step and in the fixed evaluation batch.
        lr: Learning rate.
        warm_start: Start from copies of the current maps instead of fresh ones.
        plateau_window: Steps per window when judging convergence.
        plateau_tol: Relative change between windows regarded as a plateau.
        stream: Prefix of the random streams used by the estimate.
    """

    steps: int = 200
    batch_size: int = 1024
    lr: float = 1e-3
    warm_start: bool = False
    plateau_window: int = 20
    plateau_tol: float = 1e-3
    stream: str = "delta1"


@dataclass(frozen=True)
class Delta1Result:
    value: float
    v_current: float
    l_inner: float
    converged: bool
    steps: int


def _objective(
    models: Sequence[PlanModel], state: TrainState, problem: BarycenterProblem, batches: EpochBatches
) -> Node:
    trial = TrainState(models=list(models), bank=state.bank, opt_f=state.opt_f, opt_t=state.opt_t)
    return _weighted([estimate_Vt(trial, problem, k, batches) for k in range(problem.K)], problem.weights)


def _fresh_models(state: TrainState, problem: BarycenterProblem, stream: str) -> List[PlanModel]:
    fresh: List[PlanModel] = []
    for k, model in enumerate(state.models):
        rng = make_rng(problem.seed, f"{stream}-init{problem.labels[k]}")
        if isinstance(model, DeterministicMap):
            fresh.append(DeterministicMap(init_mlp(model.net.widths, rng)))
        elif isinstance(model, StochasticMap):
            fresh.append(StochasticMap(init_mlp(model.net.widths, rng), model.in_dim, model.noise_dim))
        elif isinstance(model, GaussianModel):
            mean_net = init_mlp(model.mean_net.widths, rng)
            scale_net = init_mlp(model.scale_net.widths, rng, output_activation="softplus")
            fresh.append(GaussianModel(mean_net, scale_net))
        else:
            fresh.append(copy.deepcopy(model))
    return fresh


def _plateaued(trace: Sequence[float], window: int, tol: float) -> bool:
    if window < 1 or len(trace) < 2 * window:
        return False
    last = float(np.mean(trace[-window:]))
    prev = float(np.mean(trace[-2 * window : -window]))
    return abs(last - prev) <= tol * max(1.0, abs(last))


def estimate_delta1(
    state: TrainState,
    problem: BarycenterProblem,
    budget: Delta1Budget = Delta1Budget(),
    config: Optional[TrainConfig] = None,
) -> Delta1Result:
    """Estimate ``delta1 = V(f, T) - inf_T' V(f, T')`` for the current potentials.

    Both terms are evaluated on one fixed batch drawn from forked streams,
    so the training streams are not advanced and a warm start with zero
    steps yields exactly 0. The infimum is estimated by the better of the
    current maps and the re-minimized ones, so the result is never negative.
    """
    m = config.noise_batch_size if config is not None else 4
    m0 = config.prior_batch_size if config is not None else 4
    prefix = budget.stream

    def forks(tag: str):
        samplers = [s.fork(f"{prefix}-{tag}-P{lab}") for s, lab in zip(problem.samplers, problem.labels)]
        noise = [
            standard_normal_sampler(model.noise_dim, problem.seed, f"{prefix}-{tag}-S{lab}") if model.needs_noise else None
            for model, lab in zip(state.models, problem.labels)
        ]
        priors = [
            c.prior.fork(f"{prefix}-{tag}-prior{lab}") if isinstance(c, EnergyCost) else None
            for c, lab in zip(problem.costs, problem.labels)
        ]
        return samplers, noise, priors

    eval_s, eval_n, eval_p = forks("eval")
    fixed = draw_batches(problem, state.models, budget.batch_size, m, m0, eval_s, eval_n, eval_p)
    with frozen(state.map_parameters()):
        v_current = _objective(state.models, state, problem, fixed).item()

    candidates = copy.deepcopy(state.models) if budget.warm_start else _fresh_models(state, problem, prefix)
    params = [p for model in candidates for p in model.parameters()]
    opt = init_adam(params, budget.lr)
    train_s, train_n, train_p = forks("train")
    trace: List[float] = []
    for step in range(budget.steps):
        batches = draw_batches(problem, candidates, budget.batch_size, m, m0, train_s, train_n, train_p)
        loss = _objective(candidates, state, problem, batches)
        _finite_or_raise(loss.item(), step + 1, "delta1 inner objective")
        trace.append(loss.item())
        if params:
            _step(params, loss, opt, step + 1, "delta1 inner objective")

    with frozen(params):
        l_candidate = _objective(candidates, state, problem, fixed).item()
    l_inner = min(l_candidate, v_current)
    converged = _plateaued(trace, budget.plateau_window, budget.plateau_tol)
    if not converged:
        logger.info("delta1 inner solve stopped after %d steps without a plateau", budget.steps)
    return Delta1Result(
        value=v_current - l_inner,
        v_current=v_current,
        l_inner=l_inner,
        converged=converged,
        steps=budget.steps,
    )


def quality_bound(delta1: float, cost: WeakCostSpec) -> Optional[float]:
    """Plan-error diagnostic implied by ``delta1`` alone.

    ``2 delta1 / gamma`` for Energy costs and ``delta1 / epsilon`` for KL
    costs; the full bound also contains the outer gap, which is not
    observable. Classical costs need a strong-convexity constant, so the
    result is ``None``.
    """
    if isinstance(cost, EnergyCost):
        return 2.0 * delta1 / cost.gamma
    if isinstance(cost, KLCost):
        return delta1 / cost.epsilon
    return None
