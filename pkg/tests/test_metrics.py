"""Evaluation metrics against the Gaussian oracle."""

from __future__ import annotations

import numpy as np
import pytest

from notbary.costs import SqEuclidean
from notbary.distributions import GaussianDist, GaussianSampler, random_gaussian_instance, standard_normal_sampler
from notbary.errors import ContractError
from notbary.gaussian_oracle import AffineMap, barycenter_maps, fixed_point_barycenter, total_variance
from notbary.metrics import (
    barycenter_energy_test,
    conditional_mean,
    l2_uvp,
    plan_energy_distance,
    transport_cost,
)
from notbary.transport import AffinePlan, build_plan_model
from notbary.utils import make_rng

WEIGHTS = [0.25, 0.25, 0.5]


def _oracle(seed: int = 0):
    refs = random_gaussian_instance(2, 3, seed)
    bary = fixed_point_barycenter(refs, WEIGHTS)
    to_bary, _ = barycenter_maps(refs, bary)
    return refs, bary, to_bary


def test_oracle_map_has_zero_unexplained_variance() -> None:
    refs, bary, maps = _oracle()
    for k, (g, t) in enumerate(zip(refs, maps)):
        uvp = l2_uvp(AffinePlan(t), t, GaussianSampler(g, 0, f"P{k + 1}"), total_variance(bary), 2000)
        assert uvp <= 1e-10


def test_constant_map_explains_nothing() -> None:
    refs, bary, maps = _oracle(1)
    constant = AffinePlan(AffineMap(np.zeros((2, 2)), bary.mean))
    uvp = l2_uvp(constant, maps[0], GaussianSampler(refs[0], 1, "P1"), total_variance(bary), 40_000)
    assert uvp == pytest.approx(100.0, abs=5.0)


def test_l2_uvp_needs_positive_variance() -> None:
    refs, _, maps = _oracle()
    with pytest.raises(ContractError):
        l2_uvp(AffinePlan(maps[0]), maps[0], GaussianSampler(refs[0], 0, "P1"), 0.0, 10)


def test_transport_cost_of_a_unit_shift() -> None:
    shift = AffinePlan(AffineMap(np.eye(2), np.array([1.0, 0.0])))
    out = transport_cost(shift, standard_normal_sampler(2, seed=0, stream="P1"), SqEuclidean(), 500)
    assert out.half == pytest.approx(0.5)
    assert out.full == pytest.approx(1.0)
    assert out.stderr == pytest.approx(0.0, abs=1e-12)
    assert (out.n, out.m) == (500, 1)


def test_transport_cost_rejects_empty_batches() -> None:
    plan = AffinePlan(AffineMap.identity(2))
    with pytest.raises(ContractError):
        transport_cost(plan, standard_normal_sampler(2, seed=0), SqEuclidean(), 0)


def test_transport_cost_averages_noise_draws() -> None:
    model = build_plan_model("stochastic", 2, [4], make_rng(0, "tc"), noise_dim=2)
    out = transport_cost(
        model,
        standard_normal_sampler(2, seed=0, stream="P1"),
        SqEuclidean(),
        64,
        m=3,
        noise=standard_normal_sampler(2, seed=0, stream="S1"),
    )
    assert np.isfinite(out.half) and out.m == 3


def test_energy_test_is_small_for_oracle_maps() -> None:
    refs, bary, maps = _oracle(2)
    samplers = [GaussianSampler(g, 2, f"P{k + 1}") for k, g in enumerate(refs)]
    gt = GaussianSampler(bary, 2, "ground-truth")
    stat = barycenter_energy_test([AffinePlan(t) for t in maps], samplers, WEIGHTS, gt, 4000)
    assert abs(stat) < 0.05


def test_energy_test_detects_shifted_maps() -> None:
    refs, bary, maps = _oracle(3)
    samplers = [GaussianSampler(g, 3, f"P{k + 1}") for k, g in enumerate(refs)]
    gt = GaussianSampler(bary, 3, "ground-truth")
    shifted = [AffinePlan(AffineMap(t.A, t.b + np.array([5.0, 0.0]))) for t in maps]
    assert barycenter_energy_test(shifted, samplers, WEIGHTS, gt, 2000) > 1.0
    with pytest.raises(ContractError):
        barycenter_energy_test(shifted, samplers, WEIGHTS, gt, 1)


def test_plan_energy_between_identical_maps_is_zero() -> None:
    plan = AffinePlan(AffineMap(2.0 * np.eye(2), np.ones(2)))
    sampler = standard_normal_sampler(2, seed=0, stream="P1")
    assert plan_energy_distance(plan, plan, sampler, 600, 1) == 0.0


def test_plan_energy_of_a_point_shift() -> None:
    a = AffinePlan(AffineMap.identity(2))
    b = AffinePlan(AffineMap(np.eye(2), np.array([3.0, 4.0])))
    # two Diracs at distance 5: 2 * 5 - 0 - 0
    d = plan_energy_distance(a, b, standard_normal_sampler(2, seed=0), 300, 1)
    assert d == pytest.approx(10.0)


def test_plan_energy_needs_draws_for_stochastic_plans() -> None:
    model = build_plan_model("stochastic", 2, [4], make_rng(0, "pe"), noise_dim=2)
    plan = AffinePlan(AffineMap.identity(2))
    with pytest.raises(ContractError):
        plan_energy_distance(model, plan, standard_normal_sampler(2, seed=0), 10, 1)
    d = plan_energy_distance(
        model, plan, standard_normal_sampler(2, seed=0), 10, 4, noise_a=standard_normal_sampler(2, seed=0, stream="S1")
    )
    assert np.isfinite(d)


def test_conditional_mean_of_a_gaussian_model() -> None:
    model = build_plan_model("gaussian", 1, [4], make_rng(0, "cm"))
    x = np.linspace(-1.0, 1.0, 5)[:, None]
    mu, _ = model.moments(x)
    noise = standard_normal_sampler(1, seed=0, stream="S1")
    np.testing.assert_allclose(conditional_mean(model, x, noise, m=20_000), mu.value, atol=0.05)
    plan = AffinePlan(AffineMap(np.eye(1), np.array([2.0])))
    np.testing.assert_allclose(conditional_mean(plan, x), x + 2.0)


def test_gaussian_dist_of_oracle_is_barycenter() -> None:
    refs, bary, maps = _oracle(4)
    pushed = [t.pushforward(g) for t, g in zip(maps, refs)]
    for p in pushed:
        assert isinstance(p, GaussianDist)
        np.testing.assert_allclose(p.cov, bary.cov, atol=1e-7)
