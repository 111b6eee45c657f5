"""Objective estimators, the ascent-descent loop and the duality-gap estimate."""

from __future__ import annotations

from typing import List, Optional

import numpy as np
import pytest

from notbary import solver
from notbary.costs import ClassicalCost, EnergyCost, KLCost, SqEuclidean, estimate_classical
from notbary.diffmath import MlpParams, backward, init_adam, parameter
from notbary.distributions import (
    DiracMixtureSampler,
    EmpiricalSampler,
    GaussianDist,
    GaussianSampler,
    Sampler,
)
from notbary.errors import ContractError, DivergenceError
from notbary.schemas import TrainConfig
from notbary.solver import (
    BarycenterProblem,
    Delta1Budget,
    KBatch,
    TrainState,
    estimate_delta1,
    estimate_Vf,
    estimate_Vt,
    init_state,
    quality_bound,
    train,
    train_epoch,
)
from notbary.transport import DeterministicMap, PotentialBank


def _linear(w: float, b: float = 0.0) -> MlpParams:
    return MlpParams([parameter(np.array([[w]]), "layer0.weight")], [parameter(np.array([b]), "layer0.bias")])


def _state(maps: List[float], gs: List[float], weights=(0.5, 0.5)) -> TrainState:
    models = [DeterministicMap(_linear(w)) for w in maps]
    bank = PotentialBank([_linear(g) for g in gs], list(weights))
    return TrainState(
        models=models,
        bank=bank,
        opt_f=init_adam(bank.parameters(), 1e-3),
        opt_t=init_adam([p for m in models for p in m.parameters()], 1e-3),
    )


def _dirac_problem(seed: int = 0, labels: Optional[List[str]] = None, points=(-1.0, 1.0)) -> BarycenterProblem:
    samplers: List[Sampler] = [
        DiracMixtureSampler(np.array([[p]]), seed=seed, stream=f"P{lab}")
        for p, lab in zip(points, labels or ["1", "2"])
    ]
    return BarycenterProblem(
        samplers, np.array([0.5, 0.5]), [ClassicalCost(SqEuclidean())] * 2, labels=labels or [], seed=seed
    )


def _normal_problem(seed: int = 0) -> BarycenterProblem:
    g = GaussianDist(np.zeros(1), np.eye(1))
    samplers: List[Sampler] = [GaussianSampler(g, seed, "P1"), GaussianSampler(g, seed, "P2")]
    return BarycenterProblem(samplers, np.array([0.5, 0.5]), [ClassicalCost(SqEuclidean())] * 2, seed=seed)


def _batches(*xs: List[float]) -> List[KBatch]:
    return [KBatch(np.array(x, dtype=float)[:, None]) for x in xs]


def test_vf_of_opposite_linear_potentials() -> None:
    # g1(y) = 2y, g2 = 0 give f1 = y, f2 = -y
    state = _state([1.0, 1.0], [2.0, 0.0])
    v_f = estimate_Vf(state, _dirac_problem(), _batches([1, 2, 3], [-1, -2, -3]))
    assert v_f.item() == pytest.approx(2.0)


def test_vf_is_zero_for_zero_potentials() -> None:
    state = _state([1.3, -0.7], [0.0, 0.0])
    v_f = estimate_Vf(state, _dirac_problem(), _batches([1, 2, 3], [4, 5]))
    assert v_f.item() == 0.0


def test_vt_is_cost_minus_potential() -> None:
    problem = _dirac_problem()
    identity = _state([1.0, 1.0], [0.0, 0.0])
    assert estimate_Vt(identity, problem, 0, _batches([1, 2, 3], [1])).item() == 0.0
    stretched = _state([2.0, 1.0], [0.0, 0.0])
    # 1/2 mean x^2 over {1, 2, 3}
    assert estimate_Vt(stretched, problem, 0, _batches([1, 2, 3], [1])).item() == pytest.approx(14.0 / 6.0)
    with_potential = _state([1.0, 1.0], [2.0, 0.0])
    assert estimate_Vt(with_potential, problem, 0, _batches([1, 2, 3], [1])).item() == pytest.approx(-2.0)


def test_vt_with_vanishing_potentials_is_the_weighted_cost() -> None:
    weights = (0.2, 0.3, 0.5)
    samplers: List[Sampler] = [
        DiracMixtureSampler(np.array([[p]]), seed=0, stream=f"P{k + 1}") for k, p in enumerate((-1.0, 0.0, 2.0))
    ]
    problem = BarycenterProblem(samplers, np.array(weights), [ClassicalCost(SqEuclidean())] * 3)
    maps = [1.5, -0.5, 0.25]
    state = _state(maps, [0.0, 0.0, 0.0], weights)
    batches = _batches([1, 2, 3], [-1, 0.5], [4, -2, 0, 7])

    total, expected = 0.0, 0.0
    for k, (w, lam) in enumerate(zip(maps, weights)):
        x = batches[k].x
        cost = estimate_classical(SqEuclidean(), x, (x * w)[:, None, :]).mean().item()
        v_t = estimate_Vt(state, problem, k, batches).item()
        assert v_t == cost
        total += lam * v_t
        expected += lam * cost
    assert total == expected


def test_epoch_phases_touch_only_their_own_player(monkeypatch: pytest.MonkeyPatch) -> None:
    problem = _dirac_problem(5)
    config = _tiny(inner_steps=3, hidden_widths=[16])
    state = init_state(problem, config)
    phases = []
    take_step = solver._step

    def recording_step(params, root, opt, epoch, term) -> None:
        maps = [p.value.copy() for p in state.map_parameters()]
        pots = [p.value.copy() for p in state.potential_parameters()]
        take_step(params, root, opt, epoch, term)
        maps_moved = any(not np.array_equal(a, p.value) for a, p in zip(maps, state.map_parameters()))
        pots_moved = any(not np.array_equal(a, p.value) for a, p in zip(pots, state.potential_parameters()))
        phases.append((term, maps_moved, pots_moved))

    monkeypatch.setattr(solver, "_step", recording_step)
    train_epoch(state, problem, config)
    assert phases[0] == ("v_f", False, True)
    assert phases[1:] == [("v_t", True, False)] * 3


def test_potentials_stay_congruent_every_epoch() -> None:
    problem = _dirac_problem(6)
    y = np.linspace(-4.0, 4.0, 401)[:, None]
    worst: List[float] = []

    def check(state: TrainState) -> None:
        fs = state.bank.potentials(y)
        total = sum(w * f.value for w, f in zip(state.bank.weights, fs))
        scale = max(1.0, max(float(np.max(np.abs(g.value))) for g in state.bank.g(y)))
        worst.append(float(np.max(np.abs(total))) / scale)

    train(problem, _tiny(epochs=6), on_epoch=check)
    assert len(worst) == 6
    assert max(worst) <= 1e-12


def test_estimators_freeze_the_other_player() -> None:
    problem = _dirac_problem()
    state = _state([1.5, 0.5], [2.0, -1.0])
    batches = _batches([1, 2], [3, 4])
    maps, pots = state.map_parameters(), state.potential_parameters()

    grads = backward(estimate_Vf(state, problem, batches), maps + pots)
    assert all(np.all(g == 0) for g in grads[: len(maps)])
    assert any(np.any(g != 0) for g in grads[len(maps) :])

    grads = backward(estimate_Vt(state, problem, 0, batches), maps + pots)
    assert all(np.all(g == 0) for g in grads[len(maps) :])
    assert any(np.any(g != 0) for g in grads[: len(maps)])
    assert all(p.requires_grad for p in maps + pots)


def test_estimators_reject_bad_batches_and_indices() -> None:
    problem = _dirac_problem()
    state = _state([1.0, 1.0], [0.0, 0.0])
    with pytest.raises(ContractError):
        estimate_Vf(state, problem, _batches([1.0]))
    with pytest.raises(ContractError):
        estimate_Vt(state, problem, 2, _batches([1.0], [1.0]))
    with pytest.raises(ContractError):
        estimate_Vf(state, problem, [KBatch(np.zeros((0, 1))), KBatch(np.ones((1, 1)))])


def test_problem_validation() -> None:
    one = [DiracMixtureSampler(np.array([[0.0]]), seed=0)]
    with pytest.raises(ContractError):
        BarycenterProblem(one, np.array([1.0]), [ClassicalCost(SqEuclidean())])
    mixed: List[Sampler] = [
        DiracMixtureSampler(np.array([[0.0]]), seed=0, stream="P1"),
        DiracMixtureSampler(np.array([[0.0, 1.0]]), seed=0, stream="P2"),
    ]
    with pytest.raises(ContractError):
        BarycenterProblem(mixed, np.array([0.5, 0.5]), [ClassicalCost(SqEuclidean())] * 2)
    with pytest.raises(ContractError):
        _dirac_problem().set_rng_states({"P9": {}})


def _tiny(**overrides) -> TrainConfig:
    base = dict(batch_size=8, inner_steps=2, epochs=3, hidden_widths=[4], seed=3, log_every=1)
    base.update(overrides)
    return TrainConfig(**base)


def test_training_is_deterministic() -> None:
    a = train(_dirac_problem(3), _tiny())
    b = train(_dirac_problem(3), _tiny())
    assert [(r.v_f, r.v_t) for r in a.history] == [(r.v_f, r.v_t) for r in b.history]
    assert [r.epoch for r in a.history] == [1, 2, 3]
    assert all(len(r.v_t) == 2 for r in a.history)


def test_relabeling_components_permutes_the_run() -> None:
    config = _tiny(epochs=2)
    forward = train(_dirac_problem(3, ["1", "2"]), config)
    mirrored = train(_dirac_problem(3, ["2", "1"], points=(1.0, -1.0)), config)
    for r, m in zip(forward.history, mirrored.history):
        assert r.v_f == pytest.approx(m.v_f, rel=1e-9, abs=1e-12)
        np.testing.assert_allclose(r.v_t, m.v_t[::-1], rtol=1e-9, atol=1e-12)


def test_train_continues_an_existing_state() -> None:
    problem = _dirac_problem(1)
    state = train(problem, _tiny(epochs=2))
    state = train(problem, _tiny(epochs=4), state)
    assert state.epoch == 4 and len(state.history) == 4


def test_non_finite_objective_raises_divergence() -> None:
    bad: List[Sampler] = [
        EmpiricalSampler(np.array([[np.nan]]), seed=0, stream="P1"),
        EmpiricalSampler(np.array([[1.0]]), seed=0, stream="P2"),
    ]
    problem = BarycenterProblem(bad, np.array([0.5, 0.5]), [ClassicalCost(SqEuclidean())] * 2)
    state = init_state(problem, _tiny())
    with pytest.raises(DivergenceError) as info:
        train_epoch(state, problem, _tiny())
    assert info.value.details["epoch"] == 1
    assert info.value.details["term"] == "v_f"


def test_regularized_families_train() -> None:
    prior = GaussianDist(np.array([5.0]), np.eye(1))
    g = GaussianDist(np.zeros(1), np.eye(1))
    kl = BarycenterProblem(
        [GaussianSampler(g, 0, "P1"), GaussianSampler(g, 0, "P2")],
        np.array([0.5, 0.5]),
        [KLCost(SqEuclidean(), 1.0, prior)] * 2,
    )
    state = train(kl, _tiny(plan_kind="gaussian"))
    assert np.all(np.isfinite([r.v_f for r in state.history]))
    assert "S1" in kl.streams()

    energy = BarycenterProblem(
        [GaussianSampler(g, 0, "P1"), GaussianSampler(g, 0, "P2")],
        np.array([0.5, 0.5]),
        [EnergyCost(SqEuclidean(), 1.0, GaussianSampler(prior, 0, f"prior{k}")) for k in (1, 2)],
    )
    state = train(energy, _tiny(plan_kind="stochastic", noise_batch_size=3))
    assert np.all(np.isfinite([v for r in state.history for v in r.v_t]))
    assert {"P1", "S1", "prior1", "P2", "S2", "prior2"} == set(energy.streams())


def test_kl_cost_needs_gaussian_plan_model() -> None:
    prior = GaussianDist(np.array([5.0]), np.eye(1))
    g = GaussianDist(np.zeros(1), np.eye(1))
    problem = BarycenterProblem(
        [GaussianSampler(g, 0, "P1"), GaussianSampler(g, 0, "P2")],
        np.array([0.5, 0.5]),
        [KLCost(SqEuclidean(), 1.0, prior)] * 2,
    )
    with pytest.raises(ContractError):
        init_state(problem, _tiny())


def test_delta1_is_zero_for_a_warm_start_without_steps() -> None:
    problem = _dirac_problem(2)
    state = train(problem, _tiny(epochs=2))
    before = problem.rng_states()
    result = estimate_delta1(state, problem, Delta1Budget(steps=0, batch_size=16, warm_start=True))
    assert result.value == 0.0
    assert problem.rng_states() == before


def test_delta1_detects_suboptimal_maps() -> None:
    problem = _normal_problem(0)
    budget = Delta1Budget(steps=20, batch_size=256, lr=1e-2, warm_start=True)
    exact = estimate_delta1(_state([1.0, 1.0], [0.0, 0.0]), problem, budget)
    assert exact.value == 0.0
    corrupted = estimate_delta1(_state([1.5, 1.5], [0.0, 0.0]), problem, budget)
    assert corrupted.value > 0.0
    assert corrupted.l_inner <= corrupted.v_current
    assert corrupted.steps == 20


def test_delta1_plateau_flag() -> None:
    problem = _normal_problem(1)
    budget = Delta1Budget(steps=60, batch_size=64, lr=1e-3, warm_start=True, plateau_window=20, plateau_tol=1e9)
    assert estimate_delta1(_state([1.0, 1.0], [0.0, 0.0]), problem, budget).converged
    short = Delta1Budget(steps=10, batch_size=64, warm_start=True, plateau_window=20)
    assert not estimate_delta1(_state([1.0, 1.0], [0.0, 0.0]), problem, short).converged


def test_quality_bound_by_family() -> None:
    prior = GaussianDist(np.zeros(1), np.eye(1))
    assert quality_bound(0.3, EnergyCost(SqEuclidean(), 2.0, GaussianSampler(prior, 0, "p"))) == pytest.approx(0.3)
    assert quality_bound(0.3, KLCost(SqEuclidean(), 0.5, prior)) == pytest.approx(0.6)
    assert quality_bound(0.3, ClassicalCost(SqEuclidean())) is None


@pytest.mark.slow
def test_identical_references_learn_near_identity_maps() -> None:
    from notbary.metrics import transport_cost

    problem = _normal_problem(4)
    config = TrainConfig(batch_size=256, inner_steps=3, epochs=1000, hidden_widths=[32, 32], seed=4, log_every=500)
    state = train(problem, config)
    for k, model in enumerate(state.models):
        sampler = problem.samplers[k].fork(f"check-P{k + 1}")
        assert transport_cost(model, sampler, SqEuclidean(), 4096).half <= 0.05
